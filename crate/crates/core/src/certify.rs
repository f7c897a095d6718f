//! Dobrushin uniqueness certificate and the convergence-rate constant.
//!
//! For a pairwise model the per-node Dobrushin sum is the total oscillation of
//! the edge potentials at that node; self-potentials have weight zero. A model
//! whose largest sum is strictly below 2 has a unique Gibbs measure on its
//! computation tree, and LBP converges from every initialization.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctree::{self, CtreeError};
use crate::lbp::{self, LbpError, MessageSet, RunOptions, Status};
use crate::model::{oscillation, PairwiseModel};

pub const DOBRUSHIN_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSum {
    pub node: String,
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub node_sums: Vec<NodeSum>,
    pub max_sum: f64,
    pub certified: bool,
    /// `e^2` times `max_sum`.
    pub rate_constant: f64,
    pub rate_bound_applicable: bool,
    /// `1 / (1 - c)`, present only when `c < 1`.
    pub rate_prefactor: Option<f64>,
}

impl Certificate {
    /// Plain-text table: node, sum, margin to the threshold.
    pub fn to_table(&self) -> String {
        let width = self
            .node_sums
            .iter()
            .map(|n| n.node.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", "node", "sum", "margin");
        for n in &self.node_sums {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12}  {:>12}",
                n.node,
                format_sig(n.sum),
                format_sig(DOBRUSHIN_THRESHOLD - n.sum)
            );
        }
        let _ = writeln!(out, "max sum: {}", format_sig(self.max_sum));
        let _ = writeln!(out, "certified: {}", self.certified);
        let _ = writeln!(out, "rate constant c: {}", format_sig(self.rate_constant));
        match self.rate_prefactor {
            Some(k) => {
                let _ = writeln!(out, "rate prefactor k: {}", format_sig(k));
            }
            None => {
                let _ = writeln!(out, "rate prefactor k: n/a (bound requires c < 1)");
            }
        }
        out
    }
}

/// Six significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Per-node sums of edge-potential oscillations.
pub fn dobrushin_sums(model: &PairwiseModel) -> Vec<f64> {
    let deltas: Vec<f64> = model
        .edges()
        .iter()
        .map(|e| oscillation(e.entries()))
        .collect();
    (0..model.num_nodes())
        .map(|i| model.neighbors(i).iter().map(|&(_, e)| deltas[e]).sum())
        .collect()
}

/// `(c, k)` with `c = e^2 · max_sum` and `k = 1 / (1 - c)` when `c < 1`.
pub fn rate_constant(model: &PairwiseModel) -> (f64, Option<f64>) {
    let max_sum = dobrushin_sums(model).into_iter().fold(0.0, f64::max);
    rate_from_max_sum(max_sum)
}

fn rate_from_max_sum(max_sum: f64) -> (f64, Option<f64>) {
    let c = std::f64::consts::E.powi(2) * max_sum;
    (c, (c < 1.0).then(|| 1.0 / (1.0 - c)))
}

pub fn dobrushin_certificate(model: &PairwiseModel) -> Certificate {
    let sums = dobrushin_sums(model);
    let max_sum = sums.iter().copied().fold(0.0, f64::max);
    let (c, k) = rate_from_max_sum(max_sum);
    Certificate {
        node_sums: sums
            .into_iter()
            .enumerate()
            .map(|(i, sum)| NodeSum {
                node: model.node_id(i).to_owned(),
                sum,
            })
            .collect(),
        max_sum,
        certified: max_sum < DOBRUSHIN_THRESHOLD,
        rate_constant: c,
        rate_bound_applicable: k.is_some(),
        rate_prefactor: k,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("LBP did not converge ({status}) so there is no limit belief to compare against")]
    NotConverged { status: Status },
    #[error(transparent)]
    Lbp(#[from] LbpError),
    #[error(transparent)]
    Ctree(#[from] CtreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub depth: usize,
    /// Max-norm gap between the depth-`depth` tree root marginal and the
    /// limit belief at the root.
    pub gap: f64,
}

/// Tolerance used for the reference LBP limit in [`empirical_rate`].
pub const RATE_REFERENCE_TOLERANCE: f64 = 1e-15;

/// Root-marginal gaps between depth-`n` computation trees (uniform
/// initialization) and the LBP limit belief at `root`.
///
/// The limit belief stands in for the infinite-tree marginal; it is a proxy,
/// not the same object.
pub fn empirical_rate(
    model: &PairwiseModel,
    root: usize,
    depths: &[usize],
) -> Result<Vec<RateSample>, RateError> {
    let uniform = MessageSet::uniform(model);
    let limit = lbp::run(
        model,
        uniform.clone(),
        &RunOptions::new(RATE_REFERENCE_TOLERANCE, lbp::DEFAULT_MAX_ITERS),
    )?;
    if limit.status != Status::Converged {
        return Err(RateError::NotConverged {
            status: limit.status,
        });
    }
    let target = lbp::belief(model, &limit.messages, root)?;
    depths
        .iter()
        .map(|&depth| {
            let tree = ctree::build(model, root, depth, ctree::DEFAULT_TREE_CAP)?;
            let lifted = ctree::lift_potentials(&tree, model, &uniform)?;
            let marginal = ctree::tree_root_marginal(&lifted)?;
            let gap = marginal
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(RateSample { depth, gap })
        })
        .collect()
}
