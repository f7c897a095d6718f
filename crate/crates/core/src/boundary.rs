//! Transfer matrices and boundary laws.
//!
//! A transfer matrix absorbs an edge potential plus an equal share of each
//! endpoint's self-potential. A boundary law is a positive vector per
//! directed edge `(i, j)` over the states of `i`, solving
//!
//! ```text
//! l_(i,j)(x_i) ∝ prod_{k in ∂i \ j} sum_{x_k} Q_{k,i}(x_k, x_i) l_(k,i)(x_k)
//! ```
//!
//! Fixed points of LBP convert to boundary laws by
//! `l_(i,j) ∝ exp(-phi_i (|∂i| - 1) / |∂i|) prod_{k in ∂i \ j} m_(k,i)`.
//! Substituting this into the right-hand side above gives
//! `exp(-phi_i / |∂i|)` once per factor, `|∂i| - 1` factors in all, times
//! the LBP message update for every `m_(k,i)`; at a fixed point that is the
//! left-hand side again.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::JointTable;
use crate::lbp::{tv_distance, MessageSet};
use crate::model::{DirectedEdge, PairwiseModel};
use crate::numeric::{advance, normalize_in_place, normalize_log};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("message on {0:?} has a zero entry")]
    ZeroMessage(DirectedEdge),
    #[error("boundary law on {edge:?} is invalid: {reason}")]
    InvalidLaw { edge: DirectedEdge, reason: String },
    #[error("expected {expected} directed edges, got {found}")]
    WrongEdgeCount { expected: usize, found: usize },
    #[error("node set is empty or contains an unknown or repeated node")]
    InvalidNodeSet,
    #[error("node set is not connected in the model graph")]
    Disconnected,
    #[error("boundary node `{0}` has more than one neighbor inside the region")]
    AmbiguousBoundary(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// One matrix per model edge, row-major with rows indexed by the state of
/// the edge's `u` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrices {
    matrices: Vec<Vec<f64>>,
    cols: Vec<usize>,
    endpoints: Vec<(usize, usize)>,
}

impl TransferMatrices {
    /// `Q_{a,b}(x_a, x_b)` read in either orientation.
    pub fn q(&self, e: usize, from: usize, x_from: usize, x_to: usize) -> f64 {
        let (u, _) = self.endpoints[e];
        let (xu, xv) = if from == u {
            (x_from, x_to)
        } else {
            (x_to, x_from)
        };
        self.matrices[e][xu * self.cols[e] + xv]
    }

    /// Stored entries for edge `e` (rows indexed by `u`).
    pub fn matrix(&self, e: usize) -> &[f64] {
        &self.matrices[e]
    }
}

pub fn transfer_matrices(model: &PairwiseModel) -> TransferMatrices {
    let mut matrices = Vec::with_capacity(model.num_edges());
    let mut cols = Vec::with_capacity(model.num_edges());
    let mut endpoints = Vec::with_capacity(model.num_edges());
    for edge in model.edges() {
        let (u, v) = (edge.u, edge.v);
        let (du, dv) = (model.degree(u) as f64, model.degree(v) as f64);
        let (pu, pv) = (model.self_potential(u), model.self_potential(v));
        let mut q = Vec::with_capacity(pu.len() * pv.len());
        for (x, a) in pu.iter().enumerate() {
            for (y, b) in pv.iter().enumerate() {
                q.push((-(edge.energy(x, y) + a / du + b / dv)).exp());
            }
        }
        matrices.push(q);
        cols.push(pv.len());
        endpoints.push((u, v));
    }
    TransferMatrices {
        matrices,
        cols,
        endpoints,
    }
}

/// A boundary law stored in its sum-to-one representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLaw {
    /// Per directed edge `(i, j)` in canonical order, a vector over states of `i`.
    values: Vec<Vec<f64>>,
}

impl BoundaryLaw {
    /// Normalizes each positive vector; any positive scaling gives the same law.
    pub fn from_unnormalized(
        model: &PairwiseModel,
        mut values: Vec<Vec<f64>>,
    ) -> Result<Self, BoundaryError> {
        if values.len() != model.num_directed_edges() {
            return Err(BoundaryError::WrongEdgeCount {
                expected: model.num_directed_edges(),
                found: values.len(),
            });
        }
        for (d, v) in model.directed_edges().zip(values.iter_mut()) {
            let invalid = |reason: &str| BoundaryError::InvalidLaw {
                edge: d,
                reason: reason.to_owned(),
            };
            if v.len() != model.states(d.from) {
                return Err(invalid("length differs from the sender's state count"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(invalid("entries must be finite and strictly positive"));
            }
            normalize_in_place(v);
        }
        Ok(Self { values })
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.values[index]
    }

    pub fn law(&self, model: &PairwiseModel, from: usize, to: usize) -> Option<&[f64]> {
        model
            .directed_index(from, to)
            .map(|i| self.values[i].as_slice())
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

fn incoming_index(model: &PairwiseModel, k: usize, e: usize) -> usize {
    if model.edge(e).u == k {
        2 * e
    } else {
        2 * e + 1
    }
}

/// Converts an LBP fixed point to the corresponding boundary law.
pub fn messages_to_boundary_law(
    model: &PairwiseModel,
    msgs: &MessageSet,
) -> Result<BoundaryLaw, BoundaryError> {
    let mut values = Vec::with_capacity(model.num_directed_edges());
    for d in model.directed_edges() {
        let (i, j) = (d.from, d.to);
        let deg = model.degree(i) as f64;
        let share = (deg - 1.0) / deg;
        let mut log_l: Vec<f64> = model.self_potential(i).iter().map(|p| -p * share).collect();
        for &(k, e) in model.neighbors(i) {
            if k == j {
                continue;
            }
            let m = msgs.get(incoming_index(model, k, e));
            if m.iter().any(|&x| x.is_nan() || x <= 0.0) {
                return Err(BoundaryError::ZeroMessage(DirectedEdge { from: k, to: i }));
            }
            for (l, x) in log_l.iter_mut().zip(m) {
                *l += x.ln();
            }
        }
        let l = normalize_log(&log_l).ok_or_else(|| {
            BoundaryError::NumericalFailure(format!(
                "law on {} -> {}",
                model.node_id(i),
                model.node_id(j)
            ))
        })?;
        values.push(l);
    }
    Ok(BoundaryLaw { values })
}

/// Normalized right-hand side of the boundary-law equation for `(i, j)`.
fn law_update(
    model: &PairwiseModel,
    q: &TransferMatrices,
    law: &BoundaryLaw,
    d: DirectedEdge,
) -> Option<Vec<f64>> {
    let (i, j) = (d.from, d.to);
    let mut log_rhs = vec![0.0; model.states(i)];
    for &(k, e) in model.neighbors(i) {
        if k == j {
            continue;
        }
        let l_ki = law.get(incoming_index(model, k, e));
        for (xi, acc) in log_rhs.iter_mut().enumerate() {
            let s: f64 = l_ki
                .iter()
                .enumerate()
                .map(|(xk, &l)| q.q(e, k, xk, xi) * l)
                .sum();
            *acc += s.ln();
        }
    }
    normalize_log(&log_rhs)
}

/// Largest TV distance between a stored law vector and the normalized
/// right-hand side of its fixed-point equation. Zero exactly for a boundary law.
pub fn boundary_law_residual(model: &PairwiseModel, law: &BoundaryLaw) -> f64 {
    let q = transfer_matrices(model);
    model
        .directed_edges()
        .enumerate()
        .map(|(idx, d)| match law_update(model, &q, law, d) {
            Some(rhs) => tv_distance(law.get(idx), &rhs).expect("lengths agree"),
            None => 1.0,
        })
        .fold(0.0, f64::max)
}

fn is_connected(model: &PairwiseModel, region: &[usize], inside: &[bool]) -> bool {
    let mut seen = vec![false; model.num_nodes()];
    let mut stack = vec![region[0]];
    seen[region[0]] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &(j, _) in model.neighbors(i) {
            if inside[j] && !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == region.len()
}

/// Marginal on the region plus its outer boundary under the Markov chain
/// defined by `law`:
///
/// `mu ∝ prod_{k in ∂Λ} l_(k, k_Λ)(x_k) · prod_{edges touching Λ} Q(x_i, x_j)`.
///
/// Nodes of the region without any edge contribute `exp(-phi_i)` directly,
/// since no transfer matrix carries their self-potential. The output table
/// lists the region's nodes in the given order followed by the boundary in
/// increasing index order. Each boundary node must have exactly one neighbor
/// in the region, which always holds on tree-shaped models.
pub fn chain_marginal(
    model: &PairwiseModel,
    law: &BoundaryLaw,
    region: &[usize],
) -> Result<JointTable, BoundaryError> {
    let n = model.num_nodes();
    if region.is_empty() || region.iter().any(|&i| i >= n) {
        return Err(BoundaryError::InvalidNodeSet);
    }
    let mut inside = vec![false; n];
    for &i in region {
        if std::mem::replace(&mut inside[i], true) {
            return Err(BoundaryError::InvalidNodeSet);
        }
    }
    if !is_connected(model, region, &inside) {
        return Err(BoundaryError::Disconnected);
    }

    let mut boundary: Vec<(usize, usize)> = Vec::new();
    for k in (0..n).filter(|&k| !inside[k]) {
        let links: Vec<_> = model
            .neighbors(k)
            .iter()
            .filter(|(j, _)| inside[*j])
            .collect();
        match links.as_slice() {
            [] => {}
            [(j, _)] => boundary.push((k, *j)),
            _ => {
                return Err(BoundaryError::AmbiguousBoundary(
                    model.node_id(k).to_owned(),
                ))
            }
        }
    }

    let nodes: Vec<usize> = region
        .iter()
        .copied()
        .chain(boundary.iter().map(|&(k, _)| k))
        .collect();
    let mut pos = vec![usize::MAX; n];
    for (p, &i) in nodes.iter().enumerate() {
        pos[i] = p;
    }
    let shape: Vec<usize> = nodes.iter().map(|&i| model.states(i)).collect();
    let touching: Vec<usize> = (0..model.num_edges())
        .filter(|&e| inside[model.edge(e).u] || inside[model.edge(e).v])
        .collect();
    let laws: Vec<usize> = boundary
        .iter()
        .map(|&(k, j)| {
            model
                .directed_index(k, j)
                .expect("boundary link is an edge")
        })
        .collect();
    let isolated: Vec<usize> = region
        .iter()
        .copied()
        .filter(|&i| model.degree(i) == 0)
        .collect();
    let q = transfer_matrices(model);

    let mut log_w = Vec::with_capacity(shape.iter().product());
    let mut omega = vec![0; nodes.len()];
    loop {
        let mut w = 0.0;
        for (&(k, _), &li) in boundary.iter().zip(&laws) {
            w += law.get(li)[omega[pos[k]]].ln();
        }
        for &e in &touching {
            let edge = model.edge(e);
            w += q.q(e, edge.u, omega[pos[edge.u]], omega[pos[edge.v]]).ln();
        }
        for &i in &isolated {
            w -= model.self_potential(i)[omega[pos[i]]];
        }
        log_w.push(w);
        if !advance(&mut omega, &shape) {
            break;
        }
    }
    let probs = normalize_log(&log_w)
        .ok_or_else(|| BoundaryError::NumericalFailure("chain marginal".into()))?;
    Ok(JointTable {
        nodes,
        shape,
        probs,
    })
}
