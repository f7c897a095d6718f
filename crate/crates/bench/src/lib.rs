//! Fixtures shared by the criterion benchmarks.

use lbp_core::model::{make_ising_cycle, make_ising_grid, make_random_model};
use lbp_core::PairwiseModel;

/// Square Ising grids used for message-passing throughput.
pub fn grids() -> Vec<(String, PairwiseModel)> {
    [4, 8, 16, 32]
        .into_iter()
        .map(|n| (format!("grid{n}x{n}"), make_ising_grid(n, n, 0.2, 0.1)))
        .collect()
}

/// Small models within the brute-force oracle's reach.
pub fn oracle_models() -> Vec<(String, PairwiseModel)> {
    vec![
        ("grid3x3".into(), make_ising_grid(3, 3, 0.3, 0.1)),
        ("grid4x4".into(), make_ising_grid(4, 4, 0.3, 0.1)),
        ("random10".into(), make_random_model(10, 0.4, 3, 1.0, 7)),
    ]
}

pub fn triangle() -> PairwiseModel {
    make_ising_cycle(3, 0.5, 0.2)
}
