//! Thermal networks as weighted undirected graphs.
//!
//! Nodes carry a thermal capacitance (finite, or infinite for boundary nodes
//! such as the outdoor air) and edges carry a thermal resistance. The
//! continuous-time dynamics of node `i` are
//!
//! ```text
//! dT_i/dt = sum_j (T_j - T_i) / (R_ij C_i) + b_i / C_i
//! ```
//!
//! so only the products `R_ij C_i` are identifiable from temperature data.
//! [`minimal_parameter_set`] picks an independent subset of those products;
//! products on closed cycles through finite nodes are redundant and are
//! reconstructed from the others by walking around the cycle.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid network: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("missing RC product for node {node} on edge {edge}")]
    MissingProduct { node: usize, edge: usize },
    #[error("zero denominator reconstructing RC product of node {node} on edge {edge}")]
    ZeroDenominator { node: usize, edge: usize },
    #[error("expected {expected} estimated values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Capacitance {
    Finite(f64),
    Infinite,
}

impl Capacitance {
    pub fn is_finite(&self) -> bool {
        matches!(self, Capacitance::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Capacitance::Finite(c) => Some(c),
            Capacitance::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub capacitance: Capacitance,
}

/// Undirected edge, endpoints stored with `a < b` (unless it is a self-loop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub resistance: f64,
}

impl Edge {
    /// The endpoint opposite `node`.
    pub fn other(&self, node: usize) -> usize {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, node: usize) -> bool {
        self.a == node || self.b == node
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveResistance { edge: usize },
    NonPositiveCapacitance { node: usize },
    SelfLoop { edge: usize },
    ExternalExternalEdge { edge: usize },
    DuplicateEdge { edge: usize },
    UnknownNode { edge: usize },
    DisconnectedFiniteSubgraph,
    NoFiniteNodes,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveResistance { edge } => {
                write!(f, "non-positive resistance on edge {edge}")
            }
            Violation::NonPositiveCapacitance { node } => {
                write!(f, "non-positive capacitance on node {node}")
            }
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::ExternalExternalEdge { edge } => {
                write!(f, "external-external edge {edge} must be pruned")
            }
            Violation::DuplicateEdge { edge } => write!(f, "edge {edge} duplicates an earlier edge"),
            Violation::UnknownNode { edge } => write!(f, "edge {edge} references an unknown node"),
            Violation::DisconnectedFiniteSubgraph => {
                write!(f, "finite-capacitance subgraph is disconnected")
            }
            Violation::NoFiniteNodes => write!(f, "network has no finite-capacitance node"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermalNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl ThermalNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, capacitance: Capacitance) -> usize {
        self.nodes.push(Node {
            name: name.into(),
            capacitance,
        });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, i: usize, j: usize, resistance: f64) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.edges.push(Edge { a, b, resistance });
        self.edges.len() - 1
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_finite(&self, node: usize) -> bool {
        self.nodes[node].capacitance.is_finite()
    }

    /// Finite-capacitance node indices in ascending order.
    pub fn finite_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_finite(i)).collect()
    }

    pub fn external_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.is_finite(i)).collect()
    }

    /// Edges incident to `node`, sorted by the opposite endpoint.
    pub fn incident(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.edges.len())
            .filter(|&e| self.edges[e].touches(node))
            .collect();
        out.sort_by_key(|&e| (self.edges[e].other(node), e));
        out
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// The true `R_ij C_i` product for every finite node and incident edge.
    pub fn rc_products(&self) -> BTreeMap<RcProduct, f64> {
        let mut out = BTreeMap::new();
        for i in self.finite_nodes() {
            let c = self.nodes[i].capacitance.value().unwrap_or(f64::INFINITY);
            for e in self.incident(i) {
                out.insert(RcProduct { node: i, edge: e }, self.edges[e].resistance * c);
            }
        }
        out
    }
}

pub fn validate_network(net: &ThermalNetwork) -> ValidationReport {
    let mut violations = Vec::new();
    let n = net.nodes.len();
    for (i, node) in net.nodes.iter().enumerate() {
        if let Capacitance::Finite(c) = node.capacitance {
            if !(c > 0.0) || !c.is_finite() {
                violations.push(Violation::NonPositiveCapacitance { node: i });
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (e, edge) in net.edges.iter().enumerate() {
        if edge.a >= n || edge.b >= n {
            violations.push(Violation::UnknownNode { edge: e });
            continue;
        }
        if !(edge.resistance > 0.0) || !edge.resistance.is_finite() {
            violations.push(Violation::NonPositiveResistance { edge: e });
        }
        if edge.a == edge.b {
            violations.push(Violation::SelfLoop { edge: e });
        }
        if !net.is_finite(edge.a) && !net.is_finite(edge.b) {
            violations.push(Violation::ExternalExternalEdge { edge: e });
        }
        if !seen.insert((edge.a, edge.b)) {
            violations.push(Violation::DuplicateEdge { edge: e });
        }
    }
    let finite = net.finite_nodes();
    if finite.is_empty() {
        violations.push(Violation::NoFiniteNodes);
    } else if finite_components(net).len() > 1 {
        violations.push(Violation::DisconnectedFiniteSubgraph);
    }
    ValidationReport { violations }
}

fn require_valid(net: &ThermalNetwork) -> Result<(), GraphError> {
    let report = validate_network(net);
    if report.is_valid() {
        Ok(())
    } else {
        Err(GraphError::Invalid(report.violations))
    }
}

/// Edges with both endpoints finite and distinct.
fn is_finite_edge(net: &ThermalNetwork, e: usize) -> bool {
    let edge = &net.edges[e];
    edge.a != edge.b && net.is_finite(edge.a) && net.is_finite(edge.b)
}

fn finite_components(net: &ThermalNetwork) -> Vec<Vec<usize>> {
    let n = net.nodes.len();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in net.finite_nodes() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for (e, edge) in net.edges.iter().enumerate() {
                if !edge.touches(u) || edge.a >= n || edge.b >= n || !is_finite_edge(net, e) {
                    continue;
                }
                let v = edge.other(u);
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Assemble the continuous-time system matrix `A` (units 1/time) from one
/// `R_ij C_i` product per finite node and incident edge. Rows of external
/// nodes are identically zero.
pub fn build_system_matrix(
    net: &ThermalNetwork,
    values: &BTreeMap<RcProduct, f64>,
) -> Result<DMatrix<f64>, GraphError> {
    require_valid(net)?;
    let n = net.node_count();
    let mut a = DMatrix::zeros(n, n);
    for i in net.finite_nodes() {
        let mut diag = 0.0;
        for e in net.incident(i) {
            let rc = values
                .get(&RcProduct { node: i, edge: e })
                .copied()
                .ok_or(GraphError::MissingProduct { node: i, edge: e })?;
            let j = net.edges[e].other(i);
            let rate = 1.0 / rc;
            a[(i, j)] += rate;
            diag += rate;
        }
        a[(i, i)] = -diag;
    }
    Ok(a)
}

/// The directed product `R_edge * C_node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RcProduct {
    pub node: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// Estimate `R C` directly; the rate is `1 / p`.
    Rc,
    /// Estimate `1 / (R C)`; the rate is `p`.
    RcReciprocal,
}

impl Representation {
    /// Heat-exchange rate (1/time) implied by a parameter value.
    #[inline]
    pub fn rate(self, p: f64) -> f64 {
        match self {
            Representation::Rc => 1.0 / p,
            Representation::RcReciprocal => p,
        }
    }

    /// `d rate / d p`.
    #[inline]
    pub fn rate_derivative(self, p: f64) -> f64 {
        match self {
            Representation::Rc => -1.0 / (p * p),
            Representation::RcReciprocal => 1.0,
        }
    }

    /// Parameter value for a given `R C` product.
    pub fn from_rc(self, rc: f64) -> f64 {
        match self {
            Representation::Rc => rc,
            Representation::RcReciprocal => 1.0 / rc,
        }
    }

    pub fn to_rc(self, p: f64) -> f64 {
        self.from_rc(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminatedProduct {
    pub target: RcProduct,
    /// Node sequence around the cycle, starting at `target.node`.
    pub cycle: Vec<usize>,
    /// Indices into [`ParameterMap::estimated`].
    pub numerator: Vec<usize>,
    pub denominator: Vec<usize>,
}

/// Where a directed product's value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Estimated(usize),
    Eliminated(usize),
}

/// One directed heat path `neighbor -> node` and the parameter that governs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedPath {
    pub node: usize,
    pub neighbor: usize,
    pub edge: usize,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterMap {
    pub estimated: Vec<RcProduct>,
    pub eliminated: Vec<EliminatedProduct>,
    pub representation: Representation,
    paths: Vec<DirectedPath>,
}

impl ParameterMap {
    /// Build a map from explicit lists. `paths` is derived from the network.
    pub fn from_parts(
        net: &ThermalNetwork,
        estimated: Vec<RcProduct>,
        eliminated: Vec<EliminatedProduct>,
        representation: Representation,
    ) -> Result<Self, GraphError> {
        let mut paths = Vec::new();
        for i in net.finite_nodes() {
            for e in net.incident(i) {
                let key = RcProduct { node: i, edge: e };
                let source = if let Some(k) = estimated.iter().position(|p| *p == key) {
                    Source::Estimated(k)
                } else if let Some(k) = eliminated.iter().position(|p| p.target == key) {
                    Source::Eliminated(k)
                } else {
                    return Err(GraphError::MissingProduct { node: i, edge: e });
                };
                paths.push(DirectedPath {
                    node: i,
                    neighbor: net.edges[e].other(i),
                    edge: e,
                    source,
                });
            }
        }
        Ok(Self {
            estimated,
            eliminated,
            representation,
            paths,
        })
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn len(&self) -> usize {
        self.estimated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimated.is_empty()
    }

    pub fn paths(&self) -> &[DirectedPath] {
        &self.paths
    }

    /// Estimated parameter values (in this map's representation) for a
    /// network's true resistances and capacitances.
    pub fn true_values(&self, net: &ThermalNetwork) -> Vec<f64> {
        let rc = net.rc_products();
        self.estimated
            .iter()
            .map(|p| self.representation.from_rc(rc[p]))
            .collect()
    }

    /// Values of every directed product (estimated followed by reconstructed),
    /// keyed by product.
    pub fn full_values(&self, estimated_values: &[f64]) -> Result<BTreeMap<RcProduct, f64>, GraphError> {
        let rec = reconstruct_eliminated(self, estimated_values)?;
        let mut out = BTreeMap::new();
        for (p, v) in self.estimated.iter().zip(estimated_values) {
            out.insert(*p, *v);
        }
        for (el, v) in self.eliminated.iter().zip(rec) {
            out.insert(el.target, v);
        }
        Ok(out)
    }
}

/// Choose an independent set of `R C` products.
///
/// A breadth-first spanning tree of the finite subgraph is built from the root
/// that minimises total fundamental-cycle length (ties go to the lowest root
/// id, neighbours are visited in ascending id order). Each non-tree edge
/// `{i, j}` with `i < j` closes exactly one fundamental cycle; its product
/// `R_ij C_i` is eliminated and reconstructed around that cycle.
pub fn minimal_parameter_set(net: &ThermalNetwork) -> Result<ParameterMap, GraphError> {
    require_valid(net)?;
    let n = net.node_count();

    // adjacency over the finite subgraph, neighbours ascending
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, edge) in net.edges.iter().enumerate() {
        if is_finite_edge(net, e) {
            adj[edge.a].push((edge.b, e));
            adj[edge.b].push((edge.a, e));
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    let mut eliminated = Vec::new();
    for component in finite_components(net) {
        let mut best: Option<(usize, SpanningTree)> = None;
        for &root in &component {
            let tree = SpanningTree::bfs(root, &adj, n);
            let cost: usize = tree
                .non_tree_edges(net, &component)
                .iter()
                .map(|&e| tree.path(net.edges[e].a, net.edges[e].b).len())
                .sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, tree));
            }
        }
        let Some((_, tree)) = best else { continue };
        for e in tree.non_tree_edges(net, &component) {
            let (i, j) = (net.edges[e].a, net.edges[e].b);
            // cycle i -> j -> ... -> i, returning along the tree
            let mut cycle = vec![i];
            cycle.extend(tree.path(j, i).into_iter().take_while(|&v| v != i));
            eliminated.push((RcProduct { node: i, edge: e }, cycle));
        }
    }

    let eliminated_keys: Vec<RcProduct> = eliminated.iter().map(|(t, _)| *t).collect();
    let mut estimated = Vec::new();
    for i in net.finite_nodes() {
        for e in net.incident(i) {
            let key = RcProduct { node: i, edge: e };
            if !eliminated_keys.contains(&key) {
                estimated.push(key);
            }
        }
    }
    estimated.sort_unstable();

    let index_of = |node: usize, edge: usize| -> usize {
        estimated
            .iter()
            .position(|p| p.node == node && p.edge == edge)
            .expect("cycle products are estimated by construction")
    };
    let edge_between = |u: usize, v: usize| -> usize {
        adj[u]
            .iter()
            .find(|(w, _)| *w == v)
            .map(|(_, e)| *e)
            .expect("consecutive cycle nodes are adjacent")
    };

    let mut out = Vec::new();
    for (target, cycle) in eliminated {
        // Around a cycle v0 -> v1 -> ... -> v0 the identity
        //   prod_k R_{e_k} C_{v_k} = prod_k R_{e_k} C_{v_{k+1}}
        // holds. The target is the k = 0 factor on the left.
        let m = cycle.len();
        let mut numerator = Vec::with_capacity(m);
        let mut denominator = Vec::with_capacity(m - 1);
        for k in 0..m {
            let from = cycle[k];
            let to = cycle[(k + 1) % m];
            let e = if k == 0 { target.edge } else { edge_between(from, to) };
            numerator.push(index_of(to, e));
            if k > 0 {
                denominator.push(index_of(from, e));
            }
        }
        out.push(EliminatedProduct {
            target,
            cycle,
            numerator,
            denominator,
        });
    }
    out.sort_by_key(|p| p.target);

    ParameterMap::from_parts(net, estimated, out, Representation::Rc)
}

struct SpanningTree {
    parent: Vec<Option<(usize, usize)>>,
    depth: Vec<usize>,
    tree_edges: Vec<bool>,
}

impl SpanningTree {
    fn bfs(root: usize, adj: &[Vec<(usize, usize)>], n: usize) -> Self {
        let mut parent = vec![None; n];
        let mut depth = vec![usize::MAX; n];
        let mut tree_edges = vec![false; adj.iter().flatten().map(|(_, e)| e + 1).max().unwrap_or(0)];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((u, e));
                    tree_edges[e] = true;
                    queue.push_back(v);
                }
            }
        }
        Self {
            parent,
            depth,
            tree_edges,
        }
    }

    fn non_tree_edges(&self, net: &ThermalNetwork, component: &[usize]) -> Vec<usize> {
        (0..net.edges.len())
            .filter(|&e| {
                is_finite_edge(net, e)
                    && component.binary_search(&net.edges[e].a).is_ok()
                    && !self.tree_edges.get(e).copied().unwrap_or(false)
            })
            .collect()
    }

    /// Tree path from `u` to `v`, inclusive of both ends.
    fn path(&self, u: usize, v: usize) -> Vec<usize> {
        let (mut a, mut b) = (u, v);
        let mut up = vec![a];
        let mut down = vec![b];
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a].expect("non-root has parent").0;
                up.push(a);
            } else {
                b = self.parent[b].expect("non-root has parent").0;
                down.push(b);
            }
        }
        down.pop();
        up.extend(down.into_iter().rev());
        up
    }
}

/// Values of the eliminated products: each is the product of its numerator
/// entries divided by the product of its denominator entries. The formula is
/// the same in either representation.
pub fn reconstruct_eliminated(pm: &ParameterMap, estimated_values: &[f64]) -> Result<Vec<f64>, GraphError> {
    if estimated_values.len() != pm.estimated.len() {
        return Err(GraphError::LengthMismatch {
            expected: pm.estimated.len(),
            got: estimated_values.len(),
        });
    }
    pm.eliminated
        .iter()
        .map(|el| {
            let num: f64 = el.numerator.iter().map(|&k| estimated_values[k]).product();
            let den: f64 = el.denominator.iter().map(|&k| estimated_values[k]).product();
            if den == 0.0 {
                Err(GraphError::ZeroDenominator {
                    node: el.target.node,
                    edge: el.target.edge,
                })
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

/// Reference networks.
pub mod presets {
    use super::{Capacitance, ThermalNetwork};

    /// Two finite nodes joined by one resistance.
    pub fn pair(r12: f64, c1: f64, c2: Capacitance) -> ThermalNetwork {
        let mut net = ThermalNetwork::new();
        let a = net.add_node("1", Capacitance::Finite(c1));
        let b = net.add_node("2", c2);
        net.add_edge(a, b, r12);
        net
    }

    /// Three finite nodes in a single loop.
    pub fn triangle(r12: f64, r23: f64, r13: f64, c: [f64; 3]) -> ThermalNetwork {
        let mut net = ThermalNetwork::new();
        for (k, ck) in c.iter().enumerate() {
            net.add_node(format!("{}", k + 1), Capacitance::Finite(*ck));
        }
        net.add_edge(0, 1, r12);
        net.add_edge(1, 2, r23);
        net.add_edge(0, 2, r13);
        net
    }

    /// Zone names of [`five_room`], in node order.
    pub const FIVE_ROOM_ZONES: [&str; 5] = ["north", "east", "south", "west", "center"];

    /// Five rooms around a central room plus one external node.
    ///
    /// Every room touches the outside; the centre room touches the four
    /// perimeter rooms, and each perimeter room touches its two neighbours.
    /// 13 resistances, 5 finite capacitances. Time unit is minutes, so each
    /// `R C` product is a time constant in minutes.
    pub fn five_room() -> ThermalNetwork {
        let c = [1.2, 1.5, 1.0, 1.8, 2.4];
        let mut net = ThermalNetwork::new();
        for (name, ck) in FIVE_ROOM_ZONES.iter().zip(c) {
            net.add_node(*name, Capacitance::Finite(ck));
        }
        let ext = net.add_node("ext", Capacitance::Infinite);
        let (n, e, s, w, ctr) = (0, 1, 2, 3, 4);
        // envelope
        net.add_edge(n, ext, 400.0);
        net.add_edge(e, ext, 300.0);
        net.add_edge(s, ext, 450.0);
        net.add_edge(w, ext, 250.0);
        net.add_edge(ctr, ext, 700.0);
        // centre to perimeter
        net.add_edge(ctr, n, 350.0);
        net.add_edge(ctr, e, 500.0);
        net.add_edge(ctr, s, 300.0);
        net.add_edge(ctr, w, 450.0);
        // perimeter ring
        net.add_edge(n, e, 800.0);
        net.add_edge(e, s, 600.0);
        net.add_edge(s, w, 900.0);
        net.add_edge(w, n, 700.0);
        net
    }
}
