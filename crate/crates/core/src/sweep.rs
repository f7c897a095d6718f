//! Coupling sweeps over Ising grids: certificate versus observed LBP behavior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::dobrushin_certificate;
use crate::exact::{ExactDistribution, DEFAULT_ENUMERATION_CAP};
use crate::lbp::{self, LbpError, MessageSet, RunOptions, Status};
use crate::model::make_ising_grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Lbp(#[from] LbpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSweep {
    pub rows: usize,
    pub cols: usize,
    pub j_min: f64,
    pub j_max: f64,
    pub steps: usize,
    pub field: f64,
    pub run: RunOptions,
    pub restarts: usize,
    pub seed: u64,
}

/// One CSV row; field names are the column headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "J")]
    pub coupling: f64,
    #[serde(rename = "dobrushin-max-sum")]
    pub dobrushin_max_sum: f64,
    pub certified: bool,
    #[serde(rename = "lbp-status")]
    pub lbp_status: Status,
    pub iterations: usize,
    #[serde(rename = "num-fixed-point-clusters")]
    pub num_fixed_point_clusters: usize,
    /// Empty when the grid is too large for the exact oracle.
    #[serde(rename = "max-belief-error-vs-exact")]
    pub max_belief_error_vs_exact: Option<f64>,
}

impl GridSweep {
    /// Couplings, evenly spaced from `j_min` to `j_max` inclusive.
    pub fn couplings(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.j_min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| (self.j_min * (last - k as f64) + self.j_max * k as f64) / last)
            .collect()
    }

    fn check(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::InvalidParameters(m.to_owned()));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be at least 1");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.j_min.is_finite() && self.j_max.is_finite() && self.field.is_finite()) {
            return bad("couplings and field must be finite");
        }
        if self.j_min > self.j_max {
            return bad("j-min must not exceed j-max");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }

    /// Rows in increasing coupling order.
    pub fn run(&self) -> Result<Vec<SweepRow>, SweepError> {
        self.check()?;
        self.couplings()
            .into_iter()
            .map(|j| {
                let model = make_ising_grid(self.rows, self.cols, j, self.field);
                let cert = dobrushin_certificate(&model);
                let report = lbp::run(&model, MessageSet::uniform(&model), &self.run)?;
                let restarts = lbp::multi_restart(&model, self.restarts, self.seed, &self.run)?;
                let error = ExactDistribution::new(&model, DEFAULT_ENUMERATION_CAP)
                    .ok()
                    .map(|mu| {
                        mu.node_marginals()
                            .iter()
                            .zip(&report.beliefs.0)
                            .flat_map(|(p, b)| p.iter().zip(b).map(|(x, y)| (x - y).abs()))
                            .fold(0.0, f64::max)
                    });
                Ok(SweepRow {
                    coupling: j,
                    dobrushin_max_sum: cert.max_sum,
                    certified: cert.certified,
                    lbp_status: report.status,
                    iterations: report.iterations,
                    num_fixed_point_clusters: restarts.num_clusters,
                    max_belief_error_vs_exact: error,
                })
            })
            .collect()
    }
}

impl Default for GridSweep {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            j_min: 0.0,
            j_max: 0.6,
            steps: 13,
            field: 0.0,
            run: RunOptions::default(),
            restarts: 20,
            seed: 0,
        }
    }
}
