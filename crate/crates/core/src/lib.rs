//! Loopy belief propagation on finite pairwise Gibbs models.
//!
//! - [`model`]: validated pairwise models and standard generators.
//! - [`exact`]: brute-force partition functions, marginals and conditional
//!   Gibbs distributions; the oracle for everything else.
//! - [`lbp`]: the synchronous message-passing engine.
//! - [`ctree`]: non-backtracking computation trees and the check that LBP
//!   after `n` rounds is exact BP on the depth-`n` tree.
//! - [`boundary`]: transfer matrices, boundary laws and the Markov chains
//!   they define.
//! - [`certify`]: the Dobrushin certificate and rate constant.
//! - [`sweep`]: Ising-grid coupling sweeps.

pub mod boundary;
pub mod certify;
pub mod ctree;
pub mod exact;
pub mod lbp;
pub mod model;
mod numeric;
pub mod sweep;

pub use boundary::{BoundaryError, BoundaryLaw, TransferMatrices};
pub use certify::{Certificate, RateError, RateSample};
pub use ctree::{ComputationTree, CtreeError, Equivalence, LiftedTree};
pub use exact::{ExactDistribution, ExactError, JointTable};
pub use lbp::{
    BeliefSet, ConvergenceReport, InitMode, LbpError, MessageSet, MultiRestartReport, RunOptions,
    Status,
};
pub use model::{
    Configuration, DirectedEdge, ModelError, ModelSpec, PairwiseModel, PartialConfiguration,
};
pub use sweep::{GridSweep, SweepError, SweepRow};
