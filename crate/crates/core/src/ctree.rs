//! Non-backtracking computation trees.
//!
//! The depth-`n` tree rooted at `s` has one node per non-backtracking walk of
//! length at most `n` starting at `s`. With potentials lifted from the model,
//! and the initial messages folded into leaf self-potentials, exact BP on
//! this finite tree reproduces the root belief after `n` synchronous LBP
//! rounds.

use std::fmt::Write as _;

use thiserror::Error;

use crate::lbp::{self, LbpError, MessageSet};
use crate::model::{DirectedEdge, PairwiseModel};
use crate::numeric::{advance, log_sum_exp, normalize_log};

pub const DEFAULT_TREE_CAP: usize = 1_000_000;
/// Lifted trees with at most this many joint configurations are also
/// evaluated by brute force.
pub const BRUTE_FORCE_CAP: u128 = 1 << 20;
/// Largest TV gap accepted by [`equivalence_check`].
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtreeError {
    #[error("computation tree exceeds the cap of {cap} nodes")]
    TooLarge { cap: usize },
    #[error("unknown root node index {0}")]
    UnknownRoot(usize),
    #[error("initial message on {0:?} has a zero entry; boundary potentials need strictly positive messages")]
    ZeroInitialMessage(DirectedEdge),
    #[error("lifted tree has {count} configurations, brute force cap is {cap}")]
    TooManyConfigurations { count: u128, cap: u128 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Lbp(#[from] LbpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Node of the original model this tree node maps to.
    pub original: usize,
    pub parent: Option<usize>,
    /// Model edge joining this node to its parent.
    pub parent_edge: Option<usize>,
    pub level: usize,
    pub children: Vec<usize>,
}

/// Topology of a computation tree. Nodes are stored in breadth-first order,
/// so every parent precedes its children and index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationTree {
    nodes: Vec<TreeNode>,
    depth: usize,
}

impl ComputationTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root(&self) -> usize {
        self.nodes[0].original
    }

    /// The map from tree nodes to model nodes.
    pub fn gamma(&self, t: usize) -> usize {
        self.nodes[t].original
    }

    /// Tree nodes at distance exactly `depth` from the root.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&t| self.nodes[t].level == self.depth)
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.depth + 1];
        for n in &self.nodes {
            sizes[n.level] += 1;
        }
        sizes
    }

    /// The walk in the model that names tree node `t`, root first.
    pub fn walk(&self, t: usize) -> Vec<usize> {
        let mut path = vec![self.nodes[t].original];
        let mut cur = t;
        while let Some(p) = self.nodes[cur].parent {
            path.push(self.nodes[p].original);
            cur = p;
        }
        path.reverse();
        path
    }

    /// DOT rendering with every tree node labeled by its model node id.
    pub fn to_dot(&self, model: &PairwiseModel) -> String {
        let mut out = String::from("graph computation_tree {\n");
        for (t, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  t{t} [label=\"{}\"];", model.node_id(n.original));
        }
        for (t, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                let _ = writeln!(out, "  t{p} -- t{t};");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Unrolls `model` from `root` into its depth-`depth` non-backtracking tree.
pub fn build(
    model: &PairwiseModel,
    root: usize,
    depth: usize,
    cap: usize,
) -> Result<ComputationTree, CtreeError> {
    if root >= model.num_nodes() {
        return Err(CtreeError::UnknownRoot(root));
    }
    let mut nodes = vec![TreeNode {
        original: root,
        parent: None,
        parent_edge: None,
        level: 0,
        children: Vec::new(),
    }];
    let mut frontier = 0..1;
    for level in 1..=depth {
        let start = nodes.len();
        for t in frontier.clone() {
            let here = nodes[t].original;
            let back = nodes[t].parent.map(|p| nodes[p].original);
            for &(next, e) in model.neighbors(here) {
                if Some(next) == back {
                    continue;
                }
                if nodes.len() >= cap {
                    return Err(CtreeError::TooLarge { cap });
                }
                let child = nodes.len();
                nodes.push(TreeNode {
                    original: next,
                    parent: Some(t),
                    parent_edge: Some(e),
                    level,
                    children: Vec::new(),
                });
                nodes[t].children.push(child);
            }
        }
        frontier = start..nodes.len();
    }
    Ok(ComputationTree { nodes, depth })
}

/// A computation tree carrying its own potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTree {
    pub tree: ComputationTree,
    /// Per tree node, including boundary terms on the leaves.
    pub self_potentials: Vec<Vec<f64>>,
    /// Per non-root tree node: the edge potential to its parent, row-major
    /// with rows indexed by the parent's state.
    pub edge_potentials: Vec<Option<Vec<f64>>>,
}

/// `-sum_{k in ∂i \ exclude} ln m0_(k,i)`.
fn boundary_term(
    model: &PairwiseModel,
    init: &MessageSet,
    i: usize,
    exclude: Option<usize>,
) -> Result<Vec<f64>, CtreeError> {
    let mut term = vec![0.0; model.states(i)];
    for &(k, e) in model.neighbors(i) {
        if Some(k) == exclude {
            continue;
        }
        let idx = if model.edge(e).u == k {
            2 * e
        } else {
            2 * e + 1
        };
        let m = init.get(idx);
        if m.iter().any(|&x| x.is_nan() || x <= 0.0) {
            return Err(CtreeError::ZeroInitialMessage(DirectedEdge {
                from: k,
                to: i,
            }));
        }
        for (t, &x) in term.iter_mut().zip(m) {
            *t -= x.ln();
        }
    }
    Ok(term)
}

/// Copies model potentials onto the tree and adds boundary self-potentials
/// built from the initial messages to the leaves. A depth-0 root receives
/// the boundary term over all of its neighbors.
pub fn lift_potentials(
    tree: &ComputationTree,
    model: &PairwiseModel,
    init: &MessageSet,
) -> Result<LiftedTree, CtreeError> {
    if init.len() != model.num_directed_edges() {
        return Err(LbpError::WrongMessageCount {
            expected: model.num_directed_edges(),
            found: init.len(),
        }
        .into());
    }
    let mut self_potentials = Vec::with_capacity(tree.len());
    let mut edge_potentials = Vec::with_capacity(tree.len());
    for n in tree.nodes() {
        let mut phi = model.self_potential(n.original).to_vec();
        if n.level == tree.depth() {
            let parent = n.parent.map(|p| tree.gamma(p));
            let term = boundary_term(model, init, n.original, parent)?;
            phi.iter_mut().zip(term).for_each(|(a, b)| *a += b);
        }
        self_potentials.push(phi);

        edge_potentials.push(n.parent.zip(n.parent_edge).map(|(p, e)| {
            let edge = model.edge(e);
            let from = tree.gamma(p);
            let (kp, kc) = (model.states(from), model.states(n.original));
            let mut psi = Vec::with_capacity(kp * kc);
            for x in 0..kp {
                for y in 0..kc {
                    psi.push(edge.energy_from(from, x, y));
                }
            }
            psi
        }));
    }
    Ok(LiftedTree {
        tree: tree.clone(),
        self_potentials,
        edge_potentials,
    })
}

/// Exact root marginal of the lifted tree by a single leaves-to-root sweep.
pub fn tree_root_marginal(lifted: &LiftedTree) -> Result<Vec<f64>, CtreeError> {
    let nodes = lifted.tree.nodes();
    let mut acc: Vec<Vec<f64>> = lifted
        .self_potentials
        .iter()
        .map(|phi| phi.iter().map(|p| -p).collect())
        .collect();
    for t in (1..nodes.len()).rev() {
        let parent = nodes[t].parent.expect("non-root node has a parent");
        let psi = lifted.edge_potentials[t]
            .as_ref()
            .expect("non-root node has an edge potential");
        let kc = acc[t].len();
        let mut terms = vec![0.0; kc];
        let up: Vec<f64> = (0..acc[parent].len())
            .map(|y| {
                for (x, term) in terms.iter_mut().enumerate() {
                    *term = acc[t][x] - psi[y * kc + x];
                }
                log_sum_exp(&terms)
            })
            .collect();
        let shift = log_sum_exp(&up);
        if !shift.is_finite() {
            return Err(CtreeError::NumericalFailure(format!(
                "upward message from tree node {t}"
            )));
        }
        for (a, u) in acc[parent].iter_mut().zip(up) {
            *a += u - shift;
        }
    }
    normalize_log(&acc[0]).ok_or_else(|| CtreeError::NumericalFailure("root marginal".into()))
}

/// Root marginal by enumerating every joint configuration of the lifted tree.
pub fn tree_root_marginal_brute(lifted: &LiftedTree, cap: u128) -> Result<Vec<f64>, CtreeError> {
    let nodes = lifted.tree.nodes();
    let radix: Vec<usize> = lifted.self_potentials.iter().map(Vec::len).collect();
    let count = radix
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(CtreeError::TooManyConfigurations { count, cap });
    }
    let mut per_root: Vec<Vec<f64>> = vec![Vec::new(); radix[0]];
    let mut omega = vec![0; radix.len()];
    loop {
        let mut h = 0.0;
        for (t, n) in nodes.iter().enumerate() {
            h += lifted.self_potentials[t][omega[t]];
            if let (Some(p), Some(psi)) = (n.parent, &lifted.edge_potentials[t]) {
                h += psi[omega[p] * radix[t] + omega[t]];
            }
        }
        per_root[omega[0]].push(-h);
        if !advance(&mut omega, &radix) {
            break;
        }
    }
    let log_m: Vec<f64> = per_root.iter().map(|w| log_sum_exp(w)).collect();
    normalize_log(&log_m).ok_or_else(|| CtreeError::NumericalFailure("root marginal".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    /// Root belief after `depth` synchronous LBP rounds.
    pub lbp_belief: Vec<f64>,
    /// Exact root marginal of the lifted depth-`depth` tree.
    pub tree_marginal: Vec<f64>,
    pub gap: f64,
    pub pass: bool,
}

/// Compares the LBP belief at `root` after `depth` rounds from `init` with the
/// exact root marginal of the lifted computation tree built from `init`.
pub fn equivalence_check(
    model: &PairwiseModel,
    root: usize,
    depth: usize,
    init: &MessageSet,
) -> Result<Equivalence, CtreeError> {
    equivalence_check_with_cap(model, root, depth, init, DEFAULT_TREE_CAP)
}

pub fn equivalence_check_with_cap(
    model: &PairwiseModel,
    root: usize,
    depth: usize,
    init: &MessageSet,
    cap: usize,
) -> Result<Equivalence, CtreeError> {
    let tree = build(model, root, depth, cap)?;
    let lifted = lift_potentials(&tree, model, init)?;
    let tree_marginal = tree_root_marginal(&lifted)?;

    let mut msgs = init.clone();
    for _ in 0..depth {
        msgs = lbp::update_round(model, &msgs)?;
    }
    let lbp_belief = lbp::belief(model, &msgs, root)?;
    let gap = lbp::tv_distance(&lbp_belief, &tree_marginal)?;
    Ok(Equivalence {
        lbp_belief,
        tree_marginal,
        gap,
        pass: gap <= EQUIVALENCE_TOLERANCE,
    })
}
