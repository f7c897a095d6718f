//! Synchronous loopy belief propagation.
//!
//! One message per directed edge, a probability vector over the receiver's
//! states. Updates are computed in log-domain with a max shift and then
//! normalized, so every stored message sums to one.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DirectedEdge, PairwiseModel};
use crate::numeric::{log_sum_exp, normalize_log};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Number of past rounds searched for a periodic revisit.
pub const DEFAULT_PERIOD_WINDOW: usize = 16;
/// A revisit only counts as oscillation while the successive-round residual
/// stays at least this many tolerances large.
pub const OSCILLATION_RESIDUAL_FACTOR: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LbpError {
    #[error("malformed message on {edge:?}: {reason}")]
    MalformedMessage { edge: DirectedEdge, reason: String },
    #[error("expected {expected} messages, got {found}")]
    WrongMessageCount { expected: usize, found: usize },
    #[error("no edge between nodes {0} and {1}")]
    NoSuchEdge(usize, usize),
    #[error("numerical failure: zero normalizer for {0}")]
    NumericalFailure(String),
    #[error("probability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
}

/// The LBP state: one normalized message per directed edge, in the model's
/// canonical directed-edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSet {
    values: Vec<Vec<f64>>,
}

/// How to initialize messages.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// All-ones messages after normalization.
    Uniform,
    /// Strictly positive random messages, deterministic per seed.
    Random { seed: u64 },
    /// One distribution per directed edge in canonical order.
    Explicit(Vec<Vec<f64>>),
}

fn check_distribution(values: &[f64], len: usize) -> Result<(), String> {
    if values.len() != len {
        return Err(format!(
            "length {} but receiver has {len} states",
            values.len()
        ));
    }
    if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("entries must be finite and nonnegative".into());
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("entries sum to {total}, not 1"));
    }
    Ok(())
}

impl MessageSet {
    pub fn uniform(model: &PairwiseModel) -> Self {
        let values = model
            .directed_edges()
            .map(|d| {
                let k = model.states(d.to);
                vec![1.0 / k as f64; k]
            })
            .collect();
        Self { values }
    }

    pub fn random(model: &PairwiseModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = model
            .directed_edges()
            .map(|d| {
                let mut v: Vec<f64> = (0..model.states(d.to))
                    .map(|_| rng.random_range(-2.5f64..2.5).exp())
                    .collect();
                let total: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= total);
                v
            })
            .collect();
        Self { values }
    }

    pub fn from_values(model: &PairwiseModel, values: Vec<Vec<f64>>) -> Result<Self, LbpError> {
        if values.len() != model.num_directed_edges() {
            return Err(LbpError::WrongMessageCount {
                expected: model.num_directed_edges(),
                found: values.len(),
            });
        }
        for (d, v) in model.directed_edges().zip(&values) {
            check_distribution(v, model.states(d.to))
                .map_err(|reason| LbpError::MalformedMessage { edge: d, reason })?;
        }
        Ok(Self { values })
    }

    /// Replaces the message on `from -> to`, stored verbatim.
    pub fn set(
        &mut self,
        model: &PairwiseModel,
        from: usize,
        to: usize,
        values: Vec<f64>,
    ) -> Result<(), LbpError> {
        let idx = model
            .directed_index(from, to)
            .ok_or(LbpError::NoSuchEdge(from, to))?;
        check_distribution(&values, model.states(to)).map_err(|reason| {
            LbpError::MalformedMessage {
                edge: DirectedEdge { from, to },
                reason,
            }
        })?;
        self.values[idx] = values;
        Ok(())
    }

    /// Message on `from -> to`, if that edge exists.
    pub fn message(&self, model: &PairwiseModel, from: usize, to: usize) -> Option<&[f64]> {
        model
            .directed_index(from, to)
            .map(|i| self.values[i].as_slice())
    }

    /// Message by canonical directed-edge index.
    pub fn get(&self, index: usize) -> &[f64] {
        &self.values[index]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn init_messages(model: &PairwiseModel, mode: InitMode) -> Result<MessageSet, LbpError> {
    match mode {
        InitMode::Uniform => Ok(MessageSet::uniform(model)),
        InitMode::Random { seed } => Ok(MessageSet::random(model, seed)),
        InitMode::Explicit(values) => MessageSet::from_values(model, values),
    }
}

fn ln_message(m: &[f64], x: usize) -> f64 {
    m[x].ln()
}

/// One fully synchronous round: every directed edge is recomputed from `msgs`.
pub fn update_round(model: &PairwiseModel, msgs: &MessageSet) -> Result<MessageSet, LbpError> {
    let mut out = Vec::with_capacity(msgs.len());
    for (idx, d) in model.directed_edges().enumerate() {
        let (i, j) = (d.from, d.to);
        let edge = model.edge(idx / 2);
        let phi_i = model.self_potential(i);
        let ki = phi_i.len();
        // log of exp(-phi_i) times the incoming product excluding j
        let mut local: Vec<f64> = phi_i.iter().map(|p| -p).collect();
        for &(k, e) in model.neighbors(i) {
            if k == j {
                continue;
            }
            let incoming = msgs.get(if model.edge(e).u == k {
                2 * e
            } else {
                2 * e + 1
            });
            for (x, l) in local.iter_mut().enumerate() {
                *l += ln_message(incoming, x);
            }
        }
        let mut terms = vec![0.0; ki];
        let log_out: Vec<f64> = (0..model.states(j))
            .map(|y| {
                for (x, t) in terms.iter_mut().enumerate() {
                    *t = local[x] - edge.energy_from(i, x, y);
                }
                log_sum_exp(&terms)
            })
            .collect();
        let m = normalize_log(&log_out).ok_or_else(|| {
            LbpError::NumericalFailure(format!(
                "message {} -> {}",
                model.node_id(i),
                model.node_id(j)
            ))
        })?;
        out.push(m);
    }
    Ok(MessageSet { values: out })
}

/// Per-node beliefs, each normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet(pub Vec<Vec<f64>>);

impl BeliefSet {
    pub fn node(&self, i: usize) -> &[f64] {
        &self.0[i]
    }
}

/// Belief at a single node.
pub fn belief(model: &PairwiseModel, msgs: &MessageSet, i: usize) -> Result<Vec<f64>, LbpError> {
    let mut log_b: Vec<f64> = model.self_potential(i).iter().map(|p| -p).collect();
    for &(k, e) in model.neighbors(i) {
        let incoming = msgs.get(if model.edge(e).u == k {
            2 * e
        } else {
            2 * e + 1
        });
        for (x, l) in log_b.iter_mut().enumerate() {
            *l += ln_message(incoming, x);
        }
    }
    normalize_log(&log_b)
        .ok_or_else(|| LbpError::NumericalFailure(format!("belief at {}", model.node_id(i))))
}

pub fn beliefs(model: &PairwiseModel, msgs: &MessageSet) -> Result<BeliefSet, LbpError> {
    (0..model.num_nodes())
        .map(|i| belief(model, msgs, i))
        .collect::<Result<_, _>>()
        .map(BeliefSet)
}

/// Half the L1 distance between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, LbpError> {
    if p.len() != q.len() {
        return Err(LbpError::LengthMismatch(p.len(), q.len()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Largest TV distance between corresponding messages of two sets over the
/// same model.
pub fn max_message_tv(a: &MessageSet, b: &MessageSet) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(p, q)| tv_distance(p, q).expect("message sets share a model"))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    Oscillating,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max-iterations",
            Status::Oscillating => "oscillating",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub period_window: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
            period_window: DEFAULT_PERIOD_WINDOW,
        }
    }
}

impl RunOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: Status,
    pub iterations: usize,
    /// Max TV over directed edges between the last two rounds.
    pub final_residual: f64,
    pub residual_trace: Vec<f64>,
    pub detected_period: Option<usize>,
    pub messages: MessageSet,
    pub beliefs: BeliefSet,
}

/// Iterates [`update_round`] until the successive-round residual drops to
/// `tol`, a periodic orbit is detected, or `max_iters` rounds have run.
///
/// Period `p` is declared once, for `p` consecutive rounds, each round lies
/// within `tol` of the round `p` steps earlier while the successive residual
/// stays above `OSCILLATION_RESIDUAL_FACTOR * tol`. The smallest such `p` in
/// `2..=period_window` wins.
pub fn run(
    model: &PairwiseModel,
    init: MessageSet,
    opts: &RunOptions,
) -> Result<ConvergenceReport, LbpError> {
    if opts.tol.is_nan() || opts.tol <= 0.0 || opts.max_iters == 0 {
        return Err(LbpError::InvalidOptions(format!(
            "tol must be positive and max_iters at least 1 (got {}, {})",
            opts.tol, opts.max_iters
        )));
    }
    let window = opts.period_window.max(1);
    // history[0] is the current round, history[p] the round p steps back
    let mut history: VecDeque<MessageSet> = VecDeque::with_capacity(window + 1);
    history.push_front(init);
    let mut streak = vec![0usize; window + 1];
    let mut trace = Vec::new();
    let mut status = Status::MaxIterations;
    let mut period = None;

    for _ in 0..opts.max_iters {
        let next = update_round(model, &history[0])?;
        let residual = max_message_tv(&next, &history[0]);
        trace.push(residual);
        history.push_front(next);
        history.truncate(window + 1);

        if residual <= opts.tol {
            status = Status::Converged;
            break;
        }
        let away = residual > OSCILLATION_RESIDUAL_FACTOR * opts.tol;
        for p in 2..=window {
            let revisit =
                away && history.len() > p && max_message_tv(&history[0], &history[p]) <= opts.tol;
            streak[p] = if revisit { streak[p] + 1 } else { 0 };
        }
        if let Some(p) = (2..=window).find(|&p| streak[p] >= p) {
            status = Status::Oscillating;
            period = Some(p);
            break;
        }
    }

    let messages = history
        .pop_front()
        .expect("history holds the current round");
    let beliefs = beliefs(model, &messages)?;
    Ok(ConvergenceReport {
        status,
        iterations: trace.len(),
        final_residual: trace.last().copied().unwrap_or(0.0),
        residual_trace: trace,
        detected_period: period,
        messages,
        beliefs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRun {
    pub seed: u64,
    pub report: ConvergenceReport,
    /// Fixed-point cluster, for converged runs only.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRestartReport {
    pub runs: Vec<RestartRun>,
    /// Number of distinct fixed points among converged runs.
    pub num_clusters: usize,
    pub cluster_threshold: f64,
}

impl MultiRestartReport {
    pub fn all_converged(&self) -> bool {
        self.runs
            .iter()
            .all(|r| r.report.status == Status::Converged)
    }

    pub fn count(&self, status: Status) -> usize {
        self.runs
            .iter()
            .filter(|r| r.report.status == status)
            .count()
    }
}

/// Runs LBP from `num_restarts` seeded random initializations and groups the
/// converged limits. Two limits share a cluster when every message is within
/// TV `10 * tol` of the cluster's first member.
pub fn multi_restart(
    model: &PairwiseModel,
    num_restarts: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<MultiRestartReport, LbpError> {
    if num_restarts == 0 {
        return Err(LbpError::InvalidOptions(
            "num_restarts must be at least 1".into(),
        ));
    }
    let threshold = 10.0 * opts.tol;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut representatives: Vec<MessageSet> = Vec::new();
    let mut runs = Vec::with_capacity(num_restarts);
    for _ in 0..num_restarts {
        let run_seed: u64 = seeds.random();
        let report = run(model, MessageSet::random(model, run_seed), opts)?;
        let cluster = (report.status == Status::Converged).then(|| {
            match representatives
                .iter()
                .position(|r| max_message_tv(r, &report.messages) <= threshold)
            {
                Some(c) => c,
                None => {
                    representatives.push(report.messages.clone());
                    representatives.len() - 1
                }
            }
        });
        runs.push(RestartRun {
            seed: run_seed,
            report,
            cluster,
        });
    }
    Ok(MultiRestartReport {
        runs,
        num_clusters: representatives.len(),
        cluster_threshold: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_ising_cycle, make_ising_grid, make_random_model, validate, EdgeSpec, ModelSpec,
        NodeSpec,
    };
    use std::f64::consts::LN_2;

    fn eq_chain(n: usize) -> PairwiseModel {
        let ids: Vec<String> = (0..n)
            .map(|i| ((b'a' + i as u8) as char).to_string())
            .collect();
        validate(&ModelSpec {
            nodes: ids
                .iter()
                .map(|id| NodeSpec {
                    id: id.clone(),
                    states: 2,
                    phi: vec![0.0; 2],
                })
                .collect(),
            edges: ids
                .windows(2)
                .map(|w| EdgeSpec {
                    u: w[0].clone(),
                    v: w[1].clone(),
                    phi: vec![vec![-LN_2, 0.0], vec![0.0, -LN_2]],
                })
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn init_modes() {
        let m = make_random_model(5, 0.7, 3, 1.0, 3);
        let u = init_messages(&m, InitMode::Uniform).unwrap();
        for (d, v) in m.directed_edges().zip(u.values()) {
            let k = m.states(d.to) as f64;
            assert!(v.iter().all(|&x| x == 1.0 / k));
        }
        let a = init_messages(&m, InitMode::Random { seed: 4 }).unwrap();
        let b = init_messages(&m, InitMode::Random { seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().flatten().all(|&x| x > 0.0));

        let chain = eq_chain(2);
        let mut msgs = MessageSet::uniform(&chain);
        msgs.set(&chain, 0, 1, vec![0.3, 0.7]).unwrap();
        assert_eq!(msgs.message(&chain, 0, 1).unwrap(), &[0.3, 0.7]);
        assert!(matches!(
            msgs.set(&chain, 0, 1, vec![0.3, 0.6]),
            Err(LbpError::MalformedMessage { .. })
        ));
        assert!(matches!(
            init_messages(&chain, InitMode::Explicit(vec![vec![0.5, 0.5]])),
            Err(LbpError::WrongMessageCount {
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            init_messages(&chain, InitMode::Explicit(vec![vec![1.0], vec![0.5, 0.5]])),
            Err(LbpError::MalformedMessage { .. })
        ));
    }

    #[test]
    fn symmetric_updates_stay_uniform() {
        let zero = make_random_model(6, 0.6, 3, 0.0, 1);
        let u = MessageSet::uniform(&zero);
        assert_eq!(update_round(&zero, &u).unwrap(), u);

        let pair = eq_chain(2);
        let out = update_round(&pair, &MessageSet::uniform(&pair)).unwrap();
        assert!(out
            .values()
            .iter()
            .flatten()
            .all(|x| (x - 0.5).abs() < 1e-15));

        let chain = eq_chain(3);
        let r1 = update_round(&chain, &MessageSet::uniform(&chain)).unwrap();
        let r2 = update_round(&chain, &r1).unwrap();
        assert!(r2
            .message(&chain, 1, 2)
            .unwrap()
            .iter()
            .all(|x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_update() {
        // m_(a,b)(y) ∝ sum_x exp(ln2·[x=y]) m_(c,a)(x) with m_(c,a) = [0.3, 0.7]:
        // y=0: 2·0.3 + 0.7 = 1.3, y=1: 0.3 + 2·0.7 = 1.7
        let chain = eq_chain(3);
        let mut msgs = MessageSet::uniform(&chain);
        msgs.set(&chain, 0, 1, vec![0.3, 0.7]).unwrap();
        let out = update_round(&chain, &msgs).unwrap();
        let m = out.message(&chain, 1, 2).unwrap();
        assert!((m[0] - 1.3 / 3.0).abs() < 1e-15);
        assert!((m[1] - 1.7 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn belief_examples() {
        let zero = make_random_model(4, 0.8, 2, 0.0, 2);
        let b = beliefs(&zero, &MessageSet::uniform(&zero)).unwrap();
        assert!(b.0.iter().flatten().all(|&x| x == 0.5));

        let single = validate(&ModelSpec {
            nodes: vec![NodeSpec {
                id: "a".into(),
                states: 2,
                phi: vec![0.0, LN_2],
            }],
            edges: vec![],
        })
        .unwrap();
        let b = beliefs(&single, &MessageSet::uniform(&single)).unwrap();
        assert!((b.node(0)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.node(0)[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(LbpError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn zero_potential_loopy_converges_in_one_round() {
        let m = make_random_model(6, 0.8, 3, 0.0, 7);
        let r = run(&m, MessageSet::uniform(&m), &RunOptions::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_residual, 0.0);
    }

    #[test]
    fn certified_grid_converges() {
        let g = make_ising_grid(3, 3, 0.2, 0.0);
        let r = run(&g, MessageSet::uniform(&g), &RunOptions::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!(r.final_residual <= 1e-10);
        assert!(r.detected_period.is_none());
    }

    #[test]
    fn zero_normalizer_is_reported() {
        let chain = eq_chain(3);
        let mut msgs = MessageSet::uniform(&chain);
        msgs.set(&chain, 0, 1, vec![1.0, 0.0]).unwrap();
        msgs.set(&chain, 2, 1, vec![0.0, 1.0]).unwrap();
        // b's belief multiplies [1,0] by [0,1]
        assert!(matches!(
            beliefs(&chain, &msgs),
            Err(LbpError::NumericalFailure(_))
        ));
    }

    #[test]
    fn invalid_options() {
        let m = make_ising_cycle(3, 0.1, 0.0);
        let init = MessageSet::uniform(&m);
        assert!(run(&m, init.clone(), &RunOptions::new(0.0, 10)).is_err());
        assert!(run(&m, init, &RunOptions::new(1e-8, 0)).is_err());
        assert!(multi_restart(&m, 0, 1, &RunOptions::default()).is_err());
    }

    #[test]
    fn update_is_pure() {
        let m = make_random_model(7, 0.5, 4, 2.0, 13);
        let init = MessageSet::random(&m, 5);
        let a = update_round(&m, &init).unwrap();
        let b = update_round(&m, &init).unwrap();
        assert_eq!(a, b);
    }
}
