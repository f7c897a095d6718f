//! End-to-end acceptance checks. Each test prints a single PASS/FAIL line;
//! run with `--nocapture` to see them.

use std::sync::OnceLock;

use lbp_core::boundary::{boundary_law_residual, chain_marginal, messages_to_boundary_law};
use lbp_core::certify::{dobrushin_certificate, empirical_rate, rate_constant};
use lbp_core::ctree::equivalence_check;
use lbp_core::exact::{dlr_residual, marginal, ExactDistribution, DEFAULT_ENUMERATION_CAP};
use lbp_core::lbp::{max_message_tv, multi_restart, run, RunOptions};
use lbp_core::model::{
    make_ising, make_ising_cycle, make_ising_grid, make_random_model, make_random_tree,
};
use lbp_core::sweep::GridSweep;
use lbp_core::{MessageSet, PairwiseModel, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, failures: &[String], detail: &str) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {id} [{name}]: {verdict} ({detail})");
    for f in failures.iter().take(10) {
        println!("    {f}");
    }
    assert!(
        failures.is_empty(),
        "criterion {id} failed: {} violations",
        failures.len()
    );
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Fixed points kept for the boundary-law check.
struct FixedPoint {
    label: String,
    model: PairwiseModel,
    messages: MessageSet,
}

struct TreeCase {
    seed: u64,
    model: PairwiseModel,
    limits: Vec<(Status, MessageSet)>,
    belief_error: f64,
}

const TREE_MODELS: u64 = 120;
const TREE_INITS: u64 = 5;

fn tree_cases() -> &'static Vec<TreeCase> {
    static CASES: OnceLock<Vec<TreeCase>> = OnceLock::new();
    CASES.get_or_init(|| {
        let opts = RunOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x7ee5);
        (0..TREE_MODELS)
            .map(|seed| {
                let n = rng.random_range(2..=12);
                let states = rng.random_range(2..=4);
                let scale = rng.random_range(0.1..=3.0);
                let model = make_random_tree(n, states, scale, seed);
                let exact = ExactDistribution::new(&model, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .node_marginals();
                let mut belief_error: f64 = 0.0;
                let limits = (0..TREE_INITS)
                    .map(|k| {
                        let init = MessageSet::random(&model, seed * 1000 + k);
                        let r = run(&model, init, &opts).unwrap();
                        for (b, e) in r.beliefs.0.iter().zip(&exact) {
                            belief_error = belief_error.max(max_abs(b, e));
                        }
                        (r.status, r.messages)
                    })
                    .collect();
                TreeCase {
                    seed,
                    model,
                    limits,
                    belief_error,
                }
            })
            .collect()
    })
}

struct CertifiedCase {
    seed: u64,
    statuses: Vec<Status>,
    clusters: usize,
    fixed_points: Vec<FixedPoint>,
}

const CERTIFIED_MODELS: usize = 200;
const RESTARTS: usize = 20;

fn certified_cases() -> &'static Vec<CertifiedCase> {
    static CASES: OnceLock<Vec<CertifiedCase>> = OnceLock::new();
    CASES.get_or_init(|| {
        let opts = RunOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xd0b5);
        let mut cases = Vec::new();
        let mut seed = 0u64;
        while cases.len() < CERTIFIED_MODELS {
            seed += 1;
            let n = rng.random_range(3..=8);
            let p = rng.random_range(0.3..=0.9);
            let states = rng.random_range(2..=4);
            let scale = rng.random_range(0.05..=0.6);
            let model = make_random_model(n, p, states, scale, seed);
            if model.num_edges() < model.num_nodes() || !dobrushin_certificate(&model).certified {
                continue;
            }
            let uniform = run(&model, MessageSet::uniform(&model), &opts).unwrap();
            let multi = multi_restart(&model, RESTARTS, seed, &opts).unwrap();
            let mut statuses = vec![uniform.status];
            let mut fixed_points = Vec::new();
            if uniform.status == Status::Converged {
                fixed_points.push(FixedPoint {
                    label: format!("certified seed {seed} uniform"),
                    model: model.clone(),
                    messages: uniform.messages,
                });
            }
            for r in multi.runs {
                statuses.push(r.report.status);
                if r.report.status == Status::Converged {
                    fixed_points.push(FixedPoint {
                        label: format!("certified seed {seed} restart {}", r.seed),
                        model: model.clone(),
                        messages: r.report.messages,
                    });
                }
            }
            cases.push(CertifiedCase {
                seed,
                statuses,
                clusters: multi.num_clusters,
                fixed_points,
            });
        }
        cases
    })
}

#[test]
fn criterion_1_tree_exactness() {
    let mut failures = Vec::new();
    let mut worst_spread: f64 = 0.0;
    let mut worst_belief: f64 = 0.0;
    for case in tree_cases() {
        for (k, (status, _)) in case.limits.iter().enumerate() {
            if *status != Status::Converged {
                failures.push(format!("tree seed {} init {k}: {status}", case.seed));
            }
        }
        let first = &case.limits[0].1;
        for (_, other) in &case.limits[1..] {
            let spread = max_message_tv(first, other);
            worst_spread = worst_spread.max(spread);
            if spread >= 1e-9 {
                failures.push(format!(
                    "tree seed {}: limits differ by TV {spread:e}",
                    case.seed
                ));
            }
        }
        worst_belief = worst_belief.max(case.belief_error);
        if case.belief_error >= 1e-9 {
            failures.push(format!(
                "tree seed {}: belief error {:e}",
                case.seed, case.belief_error
            ));
        }
    }
    report(
        1,
        "tree exactness",
        &failures,
        &format!(
            "{TREE_MODELS} trees x {TREE_INITS} inits, max limit TV {worst_spread:.2e}, \
             max belief error {worst_belief:.2e}"
        ),
    );
}

#[test]
fn criterion_2_computation_tree_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc7ee);
    let mut failures = Vec::new();
    let mut models = 0;
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0u64;
    while models < 100 {
        seed += 1;
        let n = rng.random_range(3..=8);
        let p = rng.random_range(0.3..=0.8);
        let states = rng.random_range(2..=3);
        let scale = rng.random_range(0.1..=2.5);
        let model = make_random_model(n, p, states, scale, seed);
        if model.num_edges() < model.num_nodes() {
            continue;
        }
        models += 1;
        let inits = [
            MessageSet::random(&model, seed),
            MessageSet::random(&model, seed + 10_000),
        ];
        for root in 0..model.num_nodes() {
            for depth in 0..=5 {
                for init in &inits {
                    let eq = equivalence_check(&model, root, depth, init).unwrap();
                    checks += 1;
                    worst = worst.max(eq.gap);
                    if eq.gap.is_nan() || eq.gap >= 1e-9 {
                        failures.push(format!(
                            "seed {seed} root {root} depth {depth}: gap {:e}",
                            eq.gap
                        ));
                    }
                }
            }
        }
    }
    report(
        2,
        "computation-tree equivalence",
        &failures,
        &format!("{models} loopy models, {checks} checks, max gap {worst:.2e}"),
    );
}

#[test]
fn criterion_3_dobrushin_soundness() {
    let mut failures = Vec::new();
    let mut runs = 0;
    for case in certified_cases() {
        runs += case.statuses.len();
        for (k, status) in case.statuses.iter().enumerate() {
            if *status != Status::Converged {
                failures.push(format!("certified seed {} run {k}: {status}", case.seed));
            }
        }
        if case.clusters != 1 {
            failures.push(format!(
                "certified seed {}: {} clusters",
                case.seed, case.clusters
            ));
        }
    }
    report(
        3,
        "Dobrushin soundness",
        &failures,
        &format!(
            "{} certified models, {runs} runs, {RESTARTS} restarts each",
            certified_cases().len()
        ),
    );
}

#[test]
fn criterion_4_certificate_arithmetic() {
    let mut failures = Vec::new();
    let below = f64::from_bits(0.25f64.to_bits() - 1);
    let mut couplings = vec![0.0, 0.05, 0.1, 0.2, below, 0.25, 0.3, 0.6, 1.0];
    couplings.extend(couplings.clone().iter().map(|j| -j));
    for &j in &couplings {
        let cert = dobrushin_certificate(&make_ising_grid(3, 3, j, 0.3));
        let expected = 8.0 * j.abs();
        if (cert.max_sum - expected).abs() > 4.0 * f64::EPSILON * expected.max(1.0) {
            failures.push(format!("J = {j}: max sum {} != 8|J|", cert.max_sum));
        }
        if cert.certified != (j.abs() < 0.25) {
            failures.push(format!("J = {j}: certified = {}", cert.certified));
        }
    }

    let sweep = GridSweep::default();
    let rows = sweep.run().unwrap();
    let flip = rows.iter().position(|r| !r.certified);
    if flip.map(|k| rows[k].coupling) != Some(0.25) {
        failures.push(format!("sweep flips at {flip:?}"));
    }
    for r in &rows {
        if r.certified != (r.coupling < 0.25) {
            failures.push(format!(
                "sweep row J = {}: certified = {}",
                r.coupling, r.certified
            ));
        }
        if r.certified && (r.lbp_status != Status::Converged || r.num_fixed_point_clusters != 1) {
            failures.push(format!(
                "sweep row J = {}: {} with {} clusters",
                r.coupling, r.lbp_status, r.num_fixed_point_clusters
            ));
        }
    }
    if !matches!(rows[0].max_belief_error_vs_exact, Some(e) if e < 1e-12) {
        failures.push("J = 0 row disagrees with exact".into());
    }
    report(
        4,
        "certificate arithmetic",
        &failures,
        &format!(
            "{} couplings, sweep of {} rows flips at J = {}",
            couplings.len(),
            rows.len(),
            flip.map_or("nowhere".to_string(), |k| rows[k].coupling.to_string())
        ),
    );
}

fn random_connected_region(model: &PairwiseModel, rng: &mut ChaCha8Rng, size: usize) -> Vec<usize> {
    let mut region = vec![rng.random_range(0..model.num_nodes())];
    while region.len() < size {
        let frontier: Vec<usize> = region
            .iter()
            .flat_map(|&i| model.neighbors(i).iter().map(|&(j, _)| j))
            .filter(|j| !region.contains(j))
            .collect();
        if frontier.is_empty() {
            break;
        }
        region.push(frontier[rng.random_range(0..frontier.len())]);
    }
    region
}

#[test]
fn criterion_5_boundary_law_correspondence() {
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let trees = tree_cases().iter().flat_map(|c| {
        c.limits
            .iter()
            .enumerate()
            .map(move |(k, (_, m))| FixedPoint {
                label: format!("tree seed {} init {k}", c.seed),
                model: c.model.clone(),
                messages: m.clone(),
            })
    });
    let certified = certified_cases().iter().flat_map(|c| {
        c.fixed_points.iter().map(|f| FixedPoint {
            label: f.label.clone(),
            model: f.model.clone(),
            messages: f.messages.clone(),
        })
    });
    for fp in trees.chain(certified) {
        let law = messages_to_boundary_law(&fp.model, &fp.messages).unwrap();
        let residual = boundary_law_residual(&fp.model, &law);
        checked += 1;
        worst = worst.max(residual);
        if residual.is_nan() || residual >= 1e-8 {
            failures.push(format!("{}: residual {residual:e}", fp.label));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xc4a1);
    let mut regions = 0;
    let mut worst_chain: f64 = 0.0;
    for case in tree_cases() {
        let law = messages_to_boundary_law(&case.model, &case.limits[0].1).unwrap();
        for _ in 0..3 {
            let size = rng.random_range(1..=case.model.num_nodes().min(4));
            let region = random_connected_region(&case.model, &mut rng, size);
            let table = chain_marginal(&case.model, &law, &region).unwrap();
            let exact = marginal(&case.model, &table.nodes).unwrap();
            let err = max_abs(&table.probs, &exact.probs);
            regions += 1;
            worst_chain = worst_chain.max(err);
            if err.is_nan() || err >= 1e-9 {
                failures.push(format!(
                    "tree seed {} region {region:?}: chain marginal error {err:e}",
                    case.seed
                ));
            }
        }
    }
    report(
        5,
        "boundary-law correspondence",
        &failures,
        &format!(
            "{checked} fixed points, max residual {worst:.2e}; {regions} tree regions, \
             max chain error {worst_chain:.2e}"
        ),
    );
}

#[test]
fn criterion_6_dlr_self_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1e);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let pairs = 120;
    for seed in 0..pairs {
        let n = rng.random_range(2..=10);
        let p = rng.random_range(0.2..=0.8);
        let scale = rng.random_range(0.1..=2.0);
        let model = make_random_model(n, p, 2, scale, seed);
        let size = rng.random_range(1..=n.min(3));
        let mut nodes: Vec<usize> = (0..n).collect();
        let region: Vec<usize> = (0..size)
            .map(|_| nodes.swap_remove(rng.random_range(0..nodes.len())))
            .collect();
        let r = dlr_residual(&model, &region).unwrap();
        worst = worst.max(r);
        if r.is_nan() || r >= 1e-12 {
            failures.push(format!("seed {seed} region {region:?}: residual {r:e}"));
        }
    }
    report(
        6,
        "DLR self-consistency",
        &failures,
        &format!("{pairs} (model, region) pairs, max residual {worst:.2e}"),
    );
}

/// Gaps at or below this are rounding noise and exempt from the
/// strict-decrease check.
const RATE_FLOOR: f64 = 1e-13;

#[test]
fn criterion_7_rate_behavior() {
    let k4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let models = vec![
        ("triangle J=0.03 h=0.5", make_ising_cycle(3, 0.03, 0.5)),
        ("4-cycle J=0.03 h=0.3", make_ising_cycle(4, 0.03, 0.3)),
        ("5-cycle J=-0.03 h=0.3", make_ising_cycle(5, -0.03, 0.3)),
        ("6-cycle J=0.025 h=0.25", make_ising_cycle(6, 0.025, 0.25)),
        ("K4 J=0.02 h=0.4", make_ising(4, &k4, 0.02, 0.4).unwrap()),
        ("K4 J=-0.02 h=0.4", make_ising(4, &k4, -0.02, 0.4).unwrap()),
        ("2x2 grid J=0.03 h=0.2", make_ising_grid(2, 2, 0.03, 0.2)),
        ("2x2 grid J=-0.03 h=0.2", make_ising_grid(2, 2, -0.03, 0.2)),
        ("2x3 grid J=0.02 h=0.3", make_ising_grid(2, 3, 0.02, 0.3)),
        ("3x3 grid J=0.016 h=0.3", make_ising_grid(3, 3, 0.016, 0.3)),
    ];
    let depths: Vec<usize> = (0..=8).collect();
    let mut failures = Vec::new();
    let mut bound_violations = Vec::new();
    for (name, model) in &models {
        let (c, k) = rate_constant(model);
        let Some(k) = k else {
            failures.push(format!("{name}: c = {c} is not below 1"));
            continue;
        };
        let samples = empirical_rate(model, 0, &depths).unwrap();
        for w in samples.windows(2) {
            let (a, b) = (w[0].gap, w[1].gap);
            if !(b < a || (a <= RATE_FLOOR && b <= RATE_FLOOR)) {
                failures.push(format!(
                    "{name}: gap({}) = {b:e} does not decrease from gap({}) = {a:e}",
                    w[1].depth, w[0].depth
                ));
            }
        }
        for s in &samples {
            let bound = k * (-(s.depth as f64)).exp();
            if s.gap > bound {
                bound_violations.push(format!(
                    "{name}: gap({}) = {:e} > k e^-n = {bound:e}",
                    s.depth, s.gap
                ));
            }
        }
    }
    let note = if bound_violations.is_empty() {
        "k e^-n bound held at every depth".to_string()
    } else {
        format!(
            "k e^-n bound exceeded at {} depths (informational)",
            bound_violations.len()
        )
    };
    for v in &bound_violations {
        println!("    informational: {v}");
    }
    report(
        7,
        "rate behavior",
        &failures,
        &format!("{} models with c < 1, depths 0..=8; {note}", models.len()),
    );
}

#[test]
fn criterion_8_non_certified_reporting() {
    let opts = RunOptions::default();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    let k4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let cases = [
        ("triangle J=-2", make_ising_cycle(3, -2.0, 0.0), false),
        (
            "K4 J=-2 h=0.5",
            make_ising(4, &k4, -2.0, 0.5).unwrap(),
            true,
        ),
    ];
    for (name, model, must_fail_to_settle) in &cases {
        if dobrushin_certificate(model).certified {
            failures.push(format!("{name} should not be certified"));
        }
        let single = run(model, MessageSet::uniform(model), &opts).unwrap();
        let multi = multi_restart(model, RESTARTS, 1, &opts).unwrap();
        let oscillating = multi.count(Status::Oscillating);
        if single.status == Status::Oscillating && single.detected_period.is_none() {
            failures.push(format!("{name}: oscillation without a period"));
        }
        if single.beliefs.0.iter().flatten().any(|p| !p.is_finite()) {
            failures.push(format!("{name}: non-finite beliefs"));
        }
        let settled =
            single.status == Status::Converged && multi.all_converged() && multi.num_clusters == 1;
        if *must_fail_to_settle && settled {
            failures.push(format!("{name}: expected oscillation or several clusters"));
        }
        lines.push(format!(
            "{name}: uniform {} after {} rounds (period {:?}), restarts {} converged / {oscillating} oscillating, {} clusters",
            single.status,
            single.iterations,
            single.detected_period,
            multi.count(Status::Converged),
            multi.num_clusters
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    report(
        8,
        "non-certified reporting",
        &failures,
        "frustrated triangle and K4",
    );
}
