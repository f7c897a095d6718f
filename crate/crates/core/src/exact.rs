//! Brute-force oracle: partition function, marginals, conditional Gibbs
//! distributions with boundary, and DLR residuals.
//!
//! Every routine here enumerates configurations explicitly. The reference
//! measure is the uniform probability measure on each state space, so an
//! all-zero model has log-partition 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PairwiseModel, PartialConfiguration};
use crate::numeric::{advance, log_sum_exp};

/// Default limit on the number of enumerated configurations.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("enumeration needs {count} configurations, cap is {cap}")]
    TooLarge { count: u128, cap: u128 },
    #[error("unknown node index {0}")]
    UnknownNode(usize),
    #[error("node set must be non-empty")]
    EmptySet,
    #[error("node {0} appears more than once in the node set")]
    RepeatedNode(usize),
    #[error("boundary value missing for node `{0}`")]
    MissingBoundary(String),
    #[error("boundary state {state} out of range for node `{id}`")]
    BoundaryOutOfRange { id: String, state: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A distribution over the joint states of an ordered node list.
///
/// `probs` is row-major over `shape`, the first node most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub nodes: Vec<usize>,
    pub shape: Vec<usize>,
    pub probs: Vec<f64>,
}

impl JointTable {
    pub fn index_of(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&x, &k)| acc * k + x)
    }

    pub fn prob(&self, states: &[usize]) -> f64 {
        self.probs[self.index_of(states)]
    }

    /// Sums out every node not in `keep`. `keep` must be a subset of `nodes`.
    pub fn marginalize(&self, keep: &[usize]) -> JointTable {
        let pos: Vec<usize> = keep
            .iter()
            .map(|n| {
                self.nodes
                    .iter()
                    .position(|m| m == n)
                    .expect("kept node must belong to the table")
            })
            .collect();
        let shape: Vec<usize> = pos.iter().map(|&p| self.shape[p]).collect();
        let mut out = JointTable {
            nodes: keep.to_vec(),
            probs: vec![0.0; shape.iter().product()],
            shape,
        };
        let mut state = vec![0; self.nodes.len()];
        let mut sub = vec![0; keep.len()];
        for &p in &self.probs {
            for (s, &q) in sub.iter_mut().zip(&pos) {
                *s = state[q];
            }
            let idx = out.index_of(&sub);
            out.probs[idx] += p;
            advance(&mut state, &self.shape);
        }
        out
    }
}

fn check_cap(count: u128, cap: u128) -> Result<(), ExactError> {
    if count > cap {
        Err(ExactError::TooLarge { count, cap })
    } else {
        Ok(())
    }
}

fn check_node_set(model: &PairwiseModel, nodes: &[usize]) -> Result<(), ExactError> {
    if nodes.is_empty() {
        return Err(ExactError::EmptySet);
    }
    let mut seen = vec![false; model.num_nodes()];
    for &n in nodes {
        if n >= model.num_nodes() {
            return Err(ExactError::UnknownNode(n));
        }
        if std::mem::replace(&mut seen[n], true) {
            return Err(ExactError::RepeatedNode(n));
        }
    }
    Ok(())
}

/// The finite Gibbs measure of a model, held as one probability per joint
/// configuration (row-major over node order).
#[derive(Debug, Clone)]
pub struct ExactDistribution<'a> {
    model: &'a PairwiseModel,
    log_partition: f64,
    probs: Vec<f64>,
}

impl<'a> ExactDistribution<'a> {
    pub fn new(model: &'a PairwiseModel, cap: u128) -> Result<Self, ExactError> {
        check_cap(model.configuration_count(), cap)?;
        let radix: Vec<usize> = (0..model.num_nodes()).map(|i| model.states(i)).collect();
        let count: usize = radix.iter().product();
        let mut log_w = Vec::with_capacity(count);
        let mut omega = vec![0; radix.len()];
        loop {
            log_w.push(-model.energy_unchecked(&omega));
            if !advance(&mut omega, &radix) {
                break;
            }
        }
        let lse = log_sum_exp(&log_w);
        let log_lambda: f64 = radix.iter().map(|&k| -(k as f64).ln()).sum();
        let probs = log_w.iter().map(|&w| (w - lse).exp()).collect();
        Ok(Self {
            model,
            log_partition: lse + log_lambda,
            probs,
        })
    }

    pub fn model(&self) -> &PairwiseModel {
        self.model
    }

    /// `ln Z` with the uniform probability reference measure.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Probabilities of every joint configuration, row-major over node order.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, omega: &crate::model::Configuration) -> Result<f64, ExactError> {
        self.model.check_configuration(omega)?;
        Ok(self.probs[self.full_table_index(&omega.0)])
    }

    fn full_table_index(&self, omega: &[usize]) -> usize {
        omega
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &x)| acc * self.model.states(i) + x)
    }

    pub fn marginal(&self, nodes: &[usize]) -> Result<JointTable, ExactError> {
        check_node_set(self.model, nodes)?;
        let full = JointTable {
            nodes: (0..self.model.num_nodes()).collect(),
            shape: (0..self.model.num_nodes())
                .map(|i| self.model.states(i))
                .collect(),
            probs: self.probs.clone(),
        };
        Ok(full.marginalize(nodes))
    }

    /// Single-node marginals for every node.
    pub fn node_marginals(&self) -> Vec<Vec<f64>> {
        (0..self.model.num_nodes())
            .map(|i| self.marginal(&[i]).expect("node index is valid").probs)
            .collect()
    }
}

pub fn log_partition(model: &PairwiseModel) -> Result<f64, ExactError> {
    Ok(ExactDistribution::new(model, DEFAULT_ENUMERATION_CAP)?.log_partition())
}

/// Exact marginal on `nodes`, in the given order.
pub fn marginal(model: &PairwiseModel, nodes: &[usize]) -> Result<JointTable, ExactError> {
    ExactDistribution::new(model, DEFAULT_ENUMERATION_CAP)?.marginal(nodes)
}

/// Log-weights `-H_region(zeta, omega)` over all `zeta` in the region, with
/// the outside read from `outside(node)`.
fn region_log_weights(
    model: &PairwiseModel,
    region: &[usize],
    in_region: &[Option<usize>],
    outside: impl Fn(usize) -> usize,
) -> Vec<f64> {
    let radix: Vec<usize> = region.iter().map(|&i| model.states(i)).collect();
    let touching: Vec<usize> = (0..model.num_edges())
        .filter(|&e| {
            let edge = model.edge(e);
            in_region[edge.u].is_some() || in_region[edge.v].is_some()
        })
        .collect();
    let value = |zeta: &[usize], n: usize| match in_region[n] {
        Some(p) => zeta[p],
        None => outside(n),
    };
    let mut out = Vec::with_capacity(radix.iter().product());
    let mut zeta = vec![0; region.len()];
    loop {
        let mut h: f64 = region
            .iter()
            .zip(&zeta)
            .map(|(&i, &x)| model.self_potential(i)[x])
            .sum();
        for &e in &touching {
            let edge = model.edge(e);
            h += edge.energy(value(&zeta, edge.u), value(&zeta, edge.v));
        }
        out.push(-h);
        if !advance(&mut zeta, &radix) {
            break;
        }
    }
    out
}

fn position_map(model: &PairwiseModel, region: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; model.num_nodes()];
    for (p, &n) in region.iter().enumerate() {
        map[n] = Some(p);
    }
    map
}

fn softmax(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|&w| (w - lse).exp()).collect()
}

/// Gibbs distribution on `region` given boundary values.
///
/// Every potential touching the region enters the energy; edges that cross
/// into the outside read the boundary value. `boundary` must cover the outer
/// boundary of the region; entries for other nodes are ignored.
pub fn conditional_gibbs(
    model: &PairwiseModel,
    region: &[usize],
    boundary: &PartialConfiguration,
) -> Result<JointTable, ExactError> {
    check_node_set(model, region)?;
    let shape: Vec<usize> = region.iter().map(|&i| model.states(i)).collect();
    check_cap(
        shape.iter().map(|&k| k as u128).product(),
        DEFAULT_ENUMERATION_CAP,
    )?;
    let in_region = position_map(model, region);
    for &i in region {
        for &(j, _) in model.neighbors(i) {
            if in_region[j].is_some() {
                continue;
            }
            match boundary.get(&j) {
                None => return Err(ExactError::MissingBoundary(model.node_id(j).to_owned())),
                Some(&x) if x >= model.states(j) => {
                    return Err(ExactError::BoundaryOutOfRange {
                        id: model.node_id(j).to_owned(),
                        state: x,
                    })
                }
                Some(_) => {}
            }
        }
    }
    let log_w = region_log_weights(model, region, &in_region, |n| boundary[&n]);
    Ok(JointTable {
        nodes: region.to_vec(),
        shape,
        probs: softmax(&log_w),
    })
}

/// Largest violation of `mu gamma_region = mu` over a cylinder basis: every
/// single-node value event plus every configuration of the region.
pub fn dlr_residual(model: &PairwiseModel, region: &[usize]) -> Result<f64, ExactError> {
    check_node_set(model, region)?;
    let region_count: u128 = region.iter().map(|&i| model.states(i) as u128).product();
    let total = model.configuration_count();
    check_cap(total.saturating_mul(region_count), DEFAULT_ENUMERATION_CAP)?;

    let mu = ExactDistribution::new(model, DEFAULT_ENUMERATION_CAP)?;
    let n = model.num_nodes();
    let radix: Vec<usize> = (0..n).map(|i| model.states(i)).collect();
    let region_shape: Vec<usize> = region.iter().map(|&i| model.states(i)).collect();
    let in_region = position_map(model, region);

    let mut lhs_single: Vec<Vec<f64>> = radix.iter().map(|&k| vec![0.0; k]).collect();
    let mut lhs_region = vec![0.0; region_count as usize];
    let mut omega = vec![0; n];
    for &p_omega in mu.probabilities() {
        let log_w = region_log_weights(model, region, &in_region, |j| omega[j]);
        let gamma = softmax(&log_w);
        let mut zeta = vec![0; region.len()];
        for &g in &gamma {
            let w = p_omega * g;
            for i in 0..n {
                let x = in_region[i].map_or(omega[i], |p| zeta[p]);
                lhs_single[i][x] += w;
            }
            advance(&mut zeta, &region_shape);
        }
        for (acc, g) in lhs_region.iter_mut().zip(&gamma) {
            *acc += p_omega * g;
        }
        advance(&mut omega, &radix);
    }

    let mut worst: f64 = 0.0;
    for (i, row) in lhs_single.iter().enumerate() {
        let rhs = mu.marginal(&[i])?;
        for (a, b) in row.iter().zip(&rhs.probs) {
            worst = worst.max((a - b).abs());
        }
    }
    let rhs = mu.marginal(region)?;
    for (a, b) in lhs_region.iter().zip(&rhs.probs) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}
