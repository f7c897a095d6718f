//! Pairwise Gibbs models: node state spaces, self-potentials and edge potentials.
//!
//! Potentials are stored as energies. The measure of a configuration is
//! proportional to `exp(-H)` times the uniform probability reference measure,
//! so every consumer exponentiates on its own (usually in log-domain).

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{id}` has {states} states, at least 2 are required")]
    TooFewStates { id: String, states: usize },
    #[error("edge references unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge between `{0}` and `{1}`")]
    DuplicateEdge(String, String),
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("non-finite potential entry in {0}")]
    NonFinite(String),
    #[error("configuration covers {found} nodes, model has {expected}")]
    IncompleteConfiguration { expected: usize, found: usize },
    #[error("state {state} out of range for node `{id}` with {states} states")]
    StateOutOfRange {
        id: String,
        state: usize,
        states: usize,
    },
}

/// Raw node record as it appears in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub states: usize,
    pub phi: Vec<f64>,
}

/// Raw edge record; `phi` is row-indexed by the state of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub u: String,
    pub v: String,
    pub phi: Vec<Vec<f64>>,
}

/// Unvalidated model description. This is the on-disk JSON schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    id: String,
    phi: Vec<f64>,
}

/// An edge potential `phi[x_u * k_v + x_v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    phi: Vec<f64>,
    cols: usize,
}

impl Edge {
    /// Energy with `x_u` the state of `u` and `x_v` the state of `v`.
    #[inline]
    pub fn energy(&self, x_u: usize, x_v: usize) -> f64 {
        self.phi[x_u * self.cols + x_v]
    }

    /// Energy read from the point of view of `from`, which must be an endpoint.
    #[inline]
    pub fn energy_from(&self, from: usize, x_from: usize, x_other: usize) -> f64 {
        if from == self.u {
            self.energy(x_from, x_other)
        } else {
            debug_assert_eq!(from, self.v);
            self.energy(x_other, x_from)
        }
    }

    pub fn other(&self, node: usize) -> usize {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }

    /// Row-major entries, rows indexed by the state of `u`.
    pub fn entries(&self) -> &[f64] {
        &self.phi
    }
}

/// A directed edge `from -> to`. Messages on it live on the states of `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: usize,
    pub to: usize,
}

/// Assignment of a state index to every node of a model, indexed by node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration(pub Vec<usize>);

/// Assignment over a subset of nodes, keyed by node index.
pub type PartialConfiguration = BTreeMap<usize, usize>;

/// A validated pairwise model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
    /// Per node: `(neighbor, edge index)` in edge insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Checks every model invariant and builds the internal representation.
pub fn validate(spec: &ModelSpec) -> Result<PairwiseModel, ModelError> {
    let mut index = HashMap::with_capacity(spec.nodes.len());
    let mut nodes = Vec::with_capacity(spec.nodes.len());
    for (i, n) in spec.nodes.iter().enumerate() {
        if index.insert(n.id.clone(), i).is_some() {
            return Err(ModelError::DuplicateNode(n.id.clone()));
        }
        if n.states < 2 {
            return Err(ModelError::TooFewStates {
                id: n.id.clone(),
                states: n.states,
            });
        }
        if n.phi.len() != n.states {
            return Err(ModelError::ShapeMismatch {
                what: format!("self-potential of `{}`", n.id),
                expected: n.states.to_string(),
                found: n.phi.len().to_string(),
            });
        }
        if n.phi.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "self-potential of `{}`",
                n.id
            )));
        }
        nodes.push(Node {
            id: n.id.clone(),
            phi: n.phi.clone(),
        });
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    let mut seen = HashMap::new();
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        let u = *index
            .get(&e.u)
            .ok_or_else(|| ModelError::UnknownNode(e.u.clone()))?;
        let v = *index
            .get(&e.v)
            .ok_or_else(|| ModelError::UnknownNode(e.v.clone()))?;
        if u == v {
            return Err(ModelError::SelfLoop(e.u.clone()));
        }
        if seen.insert((u.min(v), u.max(v)), ()).is_some() {
            return Err(ModelError::DuplicateEdge(e.u.clone(), e.v.clone()));
        }
        let (ku, kv) = (spec.nodes[u].states, spec.nodes[v].states);
        let rows = e.phi.len();
        let bad_row = e.phi.iter().find(|r| r.len() != kv);
        if rows != ku || bad_row.is_some() {
            let cols = bad_row.map_or(kv, Vec::len);
            return Err(ModelError::ShapeMismatch {
                what: format!("edge potential `{}`-`{}`", e.u, e.v),
                expected: format!("{ku}x{kv}"),
                found: format!("{rows}x{cols}"),
            });
        }
        let phi: Vec<f64> = e.phi.iter().flatten().copied().collect();
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "edge potential `{}`-`{}`",
                e.u, e.v
            )));
        }
        let idx = edges.len();
        adjacency[u].push((v, idx));
        adjacency[v].push((u, idx));
        edges.push(Edge {
            u,
            v,
            phi,
            cols: kv,
        });
    }

    Ok(PairwiseModel {
        nodes,
        edges,
        index,
        adjacency,
    })
}

impl PairwiseModel {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn states(&self, node: usize) -> usize {
        self.nodes[node].phi.len()
    }

    pub fn node_id(&self, node: usize) -> &str {
        &self.nodes[node].id
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn self_potential(&self, node: usize) -> &[f64] {
        &self.nodes[node].phi
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// `(neighbor, edge index)` pairs of `node`.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, e)| e)
    }

    /// Directed edges in canonical order: for edge `e`, index `2e` is `u -> v`
    /// and `2e + 1` is `v -> u`.
    pub fn directed_edges(&self) -> impl Iterator<Item = DirectedEdge> + '_ {
        self.edges.iter().flat_map(|e| {
            [
                DirectedEdge { from: e.u, to: e.v },
                DirectedEdge { from: e.v, to: e.u },
            ]
        })
    }

    pub fn num_directed_edges(&self) -> usize {
        2 * self.edges.len()
    }

    /// Index of a directed edge in canonical order.
    pub fn directed_index(&self, from: usize, to: usize) -> Option<usize> {
        let e = self.edge_between(from, to)?;
        Some(if self.edges[e].u == from {
            2 * e
        } else {
            2 * e + 1
        })
    }

    pub fn directed_edge(&self, index: usize) -> DirectedEdge {
        let e = &self.edges[index / 2];
        if index.is_multiple_of(2) {
            DirectedEdge { from: e.u, to: e.v }
        } else {
            DirectedEdge { from: e.v, to: e.u }
        }
    }

    /// Total number of joint configurations, saturating at `u128::MAX`.
    pub fn configuration_count(&self) -> u128 {
        self.nodes
            .iter()
            .try_fold(1u128, |acc, n| acc.checked_mul(n.phi.len() as u128))
            .unwrap_or(u128::MAX)
    }

    /// Back to the file representation.
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.id.clone(),
                    states: n.phi.len(),
                    phi: n.phi.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    u: self.nodes[e.u].id.clone(),
                    v: self.nodes[e.v].id.clone(),
                    phi: e.phi.chunks(e.cols).map(<[f64]>::to_vec).collect(),
                })
                .collect(),
        }
    }

    pub(crate) fn check_configuration(&self, omega: &Configuration) -> Result<(), ModelError> {
        if omega.0.len() != self.nodes.len() {
            return Err(ModelError::IncompleteConfiguration {
                expected: self.nodes.len(),
                found: omega.0.len(),
            });
        }
        for (i, &x) in omega.0.iter().enumerate() {
            if x >= self.states(i) {
                return Err(ModelError::StateOutOfRange {
                    id: self.nodes[i].id.clone(),
                    state: x,
                    states: self.states(i),
                });
            }
        }
        Ok(())
    }

    /// Energy without range checks; used by enumeration loops.
    pub(crate) fn energy_unchecked(&self, omega: &[usize]) -> f64 {
        let self_part: f64 = self.nodes.iter().zip(omega).map(|(n, &x)| n.phi[x]).sum();
        let edge_part: f64 = self
            .edges
            .iter()
            .map(|e| e.energy(omega[e.u], omega[e.v]))
            .sum();
        self_part + edge_part
    }
}

/// `H(omega) = sum_i phi_i(omega_i) + sum_{i,j} phi_ij(omega_i, omega_j)`.
pub fn energy(model: &PairwiseModel, omega: &Configuration) -> Result<f64, ModelError> {
    model.check_configuration(omega)?;
    Ok(model.energy_unchecked(&omega.0))
}

/// `sup f - inf f` over the entries of a potential.
pub fn oscillation(potential: &[f64]) -> f64 {
    let (lo, hi) = potential
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if potential.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn spin(x: usize) -> f64 {
    if x == 0 {
        -1.0
    } else {
        1.0
    }
}

fn ising_spec(ids: Vec<String>, pairs: &[(usize, usize)], coupling: f64, field: f64) -> ModelSpec {
    let nodes = ids
        .iter()
        .map(|id| NodeSpec {
            id: id.clone(),
            states: 2,
            phi: (0..2).map(|x| -field * spin(x)).collect(),
        })
        .collect();
    let edges = pairs
        .iter()
        .map(|&(a, b)| EdgeSpec {
            u: ids[a].clone(),
            v: ids[b].clone(),
            phi: (0..2)
                .map(|x| (0..2).map(|y| -coupling * spin(x) * spin(y)).collect())
                .collect(),
        })
        .collect();
    ModelSpec { nodes, edges }
}

/// Ising model on an arbitrary simple graph with nodes `0..num_nodes`.
///
/// State 0 is spin -1, state 1 is spin +1. Node ids are the decimal indices.
pub fn make_ising(
    num_nodes: usize,
    pairs: &[(usize, usize)],
    coupling: f64,
    field: f64,
) -> Result<PairwiseModel, ModelError> {
    let ids = (0..num_nodes).map(|i| i.to_string()).collect();
    validate(&ising_spec(ids, pairs, coupling, field))
}

/// Ising model on a `rows x cols` grid with 4-neighbor edges.
///
/// Node ids are `r{row}c{col}`; nodes are numbered row-major.
pub fn make_ising_grid(rows: usize, cols: usize, coupling: f64, field: f64) -> PairwiseModel {
    assert!(
        rows >= 1 && cols >= 1,
        "grid needs at least one row and column"
    );
    let ids = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| format!("r{r}c{c}")))
        .collect();
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                pairs.push((i, i + 1));
            }
            if r + 1 < rows {
                pairs.push((i, i + cols));
            }
        }
    }
    validate(&ising_spec(ids, &pairs, coupling, field)).expect("grid construction is well-formed")
}

/// Ising model on a cycle of `n >= 3` nodes.
pub fn make_ising_cycle(n: usize, coupling: f64, field: f64) -> PairwiseModel {
    assert!(n >= 3, "a cycle needs at least three nodes");
    let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    make_ising(n, &pairs, coupling, field).expect("cycle construction is well-formed")
}

fn random_spec(
    rng: &mut ChaCha8Rng,
    num_nodes: usize,
    pairs: &[(usize, usize)],
    max_states: usize,
    scale: f64,
) -> ModelSpec {
    let draw = |rng: &mut ChaCha8Rng| {
        if scale == 0.0 {
            0.0
        } else {
            rng.random_range(-scale..=scale)
        }
    };
    let states: Vec<usize> = (0..num_nodes)
        .map(|_| rng.random_range(2..=max_states))
        .collect();
    let nodes = (0..num_nodes)
        .map(|i| NodeSpec {
            id: format!("x{i}"),
            states: states[i],
            phi: (0..states[i]).map(|_| draw(rng)).collect(),
        })
        .collect();
    let edges = pairs
        .iter()
        .map(|&(a, b)| EdgeSpec {
            u: format!("x{a}"),
            v: format!("x{b}"),
            phi: (0..states[a])
                .map(|_| (0..states[b]).map(|_| draw(rng)).collect())
                .collect(),
        })
        .collect();
    ModelSpec { nodes, edges }
}

/// Erdős–Rényi topology with potentials drawn uniformly from `[-scale, scale]`.
///
/// State counts are uniform in `2..=max_states`. Deterministic given `seed`.
pub fn make_random_model(
    num_nodes: usize,
    edge_probability: f64,
    max_states: usize,
    scale: f64,
    seed: u64,
) -> PairwiseModel {
    assert!((0.0..=1.0).contains(&edge_probability));
    assert!(max_states >= 2 && scale >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..num_nodes {
        for b in a + 1..num_nodes {
            if rng.random_bool(edge_probability) {
                pairs.push((a, b));
            }
        }
    }
    validate(&random_spec(&mut rng, num_nodes, &pairs, max_states, scale))
        .expect("random construction is well-formed")
}

/// Uniformly random recursive tree (node `i > 0` attaches to a random earlier
/// node) with random potentials as in [`make_random_model`].
pub fn make_random_tree(
    num_nodes: usize,
    max_states: usize,
    scale: f64,
    seed: u64,
) -> PairwiseModel {
    assert!(num_nodes >= 1 && max_states >= 2 && scale >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (1..num_nodes)
        .map(|i| (rng.random_range(0..i), i))
        .collect();
    validate(&random_spec(&mut rng, num_nodes, &pairs, max_states, scale))
        .expect("random construction is well-formed")
}
