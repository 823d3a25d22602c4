//! Network structure: nodes with roles, canonically oriented edges, flow
//! states, and the residuals of the physical laws.
//!
//! Nodes are dense indices `0..n` wrapped in [`NodeId`] and carry one of
//! three roles: sources inject a known flow, terminals hold a known
//! potential and absorb whatever arrives, internal customers withdraw an
//! uncertain flow. Each physical pipe is stored once on the canonical
//! orientation `a < b`; the flow on the opposite orientation is the
//! negation, and the opposite law is the [`Reversed`] view `-f(-x)`.
//!
//! A [`FlowState`] bundles edge flows `phi`, nodal potentials `pi`, and
//! nodal productions `q`. Two residuals measure how physical a state is:
//! conservation (net inflow plus production, per node) and potential drop
//! (`pi_b - pi_a + f(phi)` per edge). Around any directed cycle the drops
//! telescope, so the cycle sum of `f` over a consistent state vanishes;
//! [`Network::cycle_residual`] measures that and
//! [`Network::fundamental_cycles`] provides a basis to measure it on.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dissipation::{DissipationFunction, Reversed};

/// Dense node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`Network::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    /// Injects a known production `q >= 0` decided by the operator.
    Source,
    /// Withdraws an uncertain amount inside a scenario box.
    Internal,
    /// Holds a known potential; production follows from conservation.
    Terminal,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NodeRole::Source => "source",
            NodeRole::Internal => "internal",
            NodeRole::Terminal => "terminal",
        };
        f.write_str(name)
    }
}

/// One pipe, stored on the canonical orientation `a < b`.
#[derive(Debug, Clone)]
pub struct Edge {
    a: usize,
    b: usize,
    law: Arc<dyn DissipationFunction>,
}

impl Edge {
    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (NodeId(self.a), NodeId(self.b))
    }

    pub fn law(&self) -> &Arc<dyn DissipationFunction> {
        &self.law
    }
}

/// Structural errors that make an operation impossible to even attempt.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node index {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("no edge between nodes {from} and {to}")]
    NoSuchEdge { from: NodeId, to: NodeId },
    #[error("not a cycle: {reason}")]
    NotACycle { reason: String },
}

/// Structural problems found by [`Network::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// No node carries this role.
    EmptyRole(NodeRole),
    /// Nodes unreachable from node 0.
    Disconnected { unreachable: Vec<NodeId> },
    /// Potential box is reversed or not a number.
    BadPotentialBounds { node: NodeId, lo: f64, hi: f64 },
    /// Edge with both endpoints equal.
    SelfLoop { edge: EdgeId },
    /// Second edge on an already used canonical pair.
    DuplicateEdge { edge: EdgeId },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::EmptyRole(role) => write!(f, "no {role} node in the network"),
            ValidationIssue::Disconnected { unreachable } => {
                write!(f, "graph is not connected; unreachable nodes: ")?;
                for (k, node) in unreachable.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{node}")?;
                }
                Ok(())
            }
            ValidationIssue::BadPotentialBounds { node, lo, hi } => {
                write!(f, "node {node} has invalid potential bounds [{lo}, {hi}]")
            }
            ValidationIssue::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            ValidationIssue::DuplicateEdge { edge } => {
                write!(f, "edge {edge} duplicates an existing canonical pair")
            }
        }
    }
}

/// Everything wrong with a network's structure; empty means admissible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("network admissible");
        }
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// A dissipative flow network.
#[derive(Debug, Clone)]
pub struct Network {
    roles: Vec<NodeRole>,
    bounds: Vec<(f64, f64)>,
    edges: Vec<Edge>,
    /// Per node: (edge index, neighbor), sorted by neighbor id.
    adjacency: Vec<Vec<(usize, usize)>>,
    sources: Vec<NodeId>,
    internals: Vec<NodeId>,
    terminals: Vec<NodeId>,
    non_terminals: Vec<NodeId>,
    compressors: Vec<EdgeId>,
}

impl Network {
    /// Builds a network with unbounded potentials. Edges given against the
    /// canonical orientation are flipped and their law wrapped in
    /// [`Reversed`]; self-loops are kept as given so [`Network::validate`]
    /// can report them.
    pub fn new(
        roles: Vec<NodeRole>,
        edges: Vec<(usize, usize, Arc<dyn DissipationFunction>)>,
    ) -> Result<Self, CoreError> {
        let n = roles.len();
        let mut canonical = Vec::with_capacity(edges.len());
        for (a, b, law) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(CoreError::NodeOutOfRange { node, nodes: n });
                }
            }
            let edge = if a <= b {
                Edge { a, b, law }
            } else {
                Edge {
                    a: b,
                    b: a,
                    law: Arc::new(Reversed(law)),
                }
            };
            canonical.push(edge);
        }

        let mut adjacency = vec![Vec::new(); n];
        for (idx, edge) in canonical.iter().enumerate() {
            adjacency[edge.a].push((idx, edge.b));
            if edge.a != edge.b {
                adjacency[edge.b].push((idx, edge.a));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(edge, other)| (other, edge));
        }

        let mut sources = Vec::new();
        let mut internals = Vec::new();
        let mut terminals = Vec::new();
        let mut non_terminals = Vec::new();
        for (i, role) in roles.iter().enumerate() {
            match role {
                NodeRole::Source => sources.push(NodeId(i)),
                NodeRole::Internal => internals.push(NodeId(i)),
                NodeRole::Terminal => terminals.push(NodeId(i)),
            }
            if *role != NodeRole::Terminal {
                non_terminals.push(NodeId(i));
            }
        }
        let compressors = canonical
            .iter()
            .enumerate()
            .filter(|(_, e)| e.law.compression_box().is_some())
            .map(|(i, _)| EdgeId(i))
            .collect();

        Ok(Network {
            roles,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            edges: canonical,
            adjacency,
            sources,
            internals,
            terminals,
            non_terminals,
            compressors,
        })
    }

    /// Replaces the per-node potential boxes.
    pub fn with_potential_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self, CoreError> {
        if bounds.len() != self.roles.len() {
            return Err(CoreError::DimensionMismatch {
                what: "potential bounds",
                expected: self.roles.len(),
                got: bounds.len(),
            });
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// The same network with compressor offsets replaced; `settings` aligns
    /// with [`Network::compressors`].
    pub fn with_compression(&self, settings: &[f64]) -> Result<Self, CoreError> {
        if settings.len() != self.compressors.len() {
            return Err(CoreError::DimensionMismatch {
                what: "compression settings",
                expected: self.compressors.len(),
                got: settings.len(),
            });
        }
        let mut net = self.clone();
        for (&EdgeId(idx), &b) in self.compressors.iter().zip(settings) {
            let law = net.edges[idx]
                .law
                .with_compression(b)
                .expect("compressor list only holds edges with a compression box");
            net.edges[idx].law = law;
        }
        Ok(net)
    }

    pub fn n_nodes(&self) -> usize {
        self.roles.len()
    }

    pub fn role(&self, node: NodeId) -> NodeRole {
        self.roles[node.0]
    }

    pub fn potential_bounds(&self, node: NodeId) -> (f64, f64) {
        self.bounds[node.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of a node as (edge id, neighbor), ascending by neighbor.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = (EdgeId, NodeId)> + '_ {
        self.adjacency[node.0]
            .iter()
            .map(|&(edge, other)| (EdgeId(edge), NodeId(other)))
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.sources
    }

    pub fn internals(&self) -> &[NodeId] {
        &self.internals
    }

    pub fn terminals(&self) -> &[NodeId] {
        &self.terminals
    }

    /// Sources and internal nodes, ascending: the nodes whose potential the
    /// solver determines.
    pub fn non_terminals(&self) -> &[NodeId] {
        &self.non_terminals
    }

    /// Edges hosting an adjustable compressor, ascending.
    pub fn compressors(&self) -> &[EdgeId] {
        &self.compressors
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        // Terminals anchor the potentials and sources feed the flows;
        // internal customers are optional.
        for (role, list) in [
            (NodeRole::Source, &self.sources),
            (NodeRole::Terminal, &self.terminals),
        ] {
            if list.is_empty() {
                issues.push(ValidationIssue::EmptyRole(role));
            }
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                issues.push(ValidationIssue::BadPotentialBounds {
                    node: NodeId(i),
                    lo,
                    hi,
                });
            }
        }
        let mut seen = HashMap::new();
        for (idx, edge) in self.edges.iter().enumerate() {
            if edge.a == edge.b {
                issues.push(ValidationIssue::SelfLoop { edge: EdgeId(idx) });
                continue;
            }
            if seen.insert((edge.a, edge.b), idx).is_some() {
                issues.push(ValidationIssue::DuplicateEdge { edge: EdgeId(idx) });
            }
        }
        if !self.roles.is_empty() {
            let mut reached = vec![false; self.n_nodes()];
            let mut stack = vec![0usize];
            reached[0] = true;
            while let Some(i) = stack.pop() {
                for &(_, other) in &self.adjacency[i] {
                    if !reached[other] {
                        reached[other] = true;
                        stack.push(other);
                    }
                }
            }
            let unreachable: Vec<NodeId> = reached
                .iter()
                .enumerate()
                .filter(|(_, &r)| !r)
                .map(|(i, _)| NodeId(i))
                .collect();
            if !unreachable.is_empty() {
                issues.push(ValidationIssue::Disconnected { unreachable });
            }
        }
        ValidationReport { issues }
    }

    /// Conservation and potential-drop residuals of a state.
    pub fn residuals(&self, state: &FlowState) -> Result<Residuals, CoreError> {
        state.check_dimensions(self)?;
        let mut conservation = state.q.clone();
        let mut potential_drop = Vec::with_capacity(self.edges.len());
        for (edge, &phi) in self.edges.iter().zip(&state.phi) {
            // phi flows a -> b: it leaves a and arrives at b.
            conservation[edge.b] += phi;
            conservation[edge.a] -= phi;
            potential_drop.push(state.pi[edge.b] - state.pi[edge.a] + edge.law.eval(phi));
        }
        Ok(Residuals {
            conservation,
            potential_drop,
        })
    }

    /// Sum of `f` along a directed cycle given as a node sequence with
    /// `first == last`; zero on any state satisfying the potential-drop law.
    pub fn cycle_residual(&self, state: &FlowState, cycle: &[NodeId]) -> Result<f64, CoreError> {
        state.check_dimensions(self)?;
        if cycle.len() < 3 {
            return Err(CoreError::NotACycle {
                reason: format!("sequence of {} nodes is too short", cycle.len()),
            });
        }
        if cycle.first() != cycle.last() {
            return Err(CoreError::NotACycle {
                reason: "sequence does not return to its starting node".into(),
            });
        }
        let mut sum = 0.0;
        for pair in cycle.windows(2) {
            let (x, y) = (pair[0], pair[1]);
            let edge_id = self.edge_between(x, y)?;
            let edge = &self.edges[edge_id.0];
            let phi = state.phi[edge_id.0];
            // f_xy(phi_xy) on the canonical edge, or its reversed view.
            sum += if edge.a == x.0 {
                edge.law.eval(phi)
            } else {
                -edge.law.eval(phi)
            };
        }
        Ok(sum)
    }

    /// A fundamental cycle basis from a spanning forest: one directed cycle
    /// per non-tree edge. Self-loops are skipped (they are invalid anyway).
    pub fn fundamental_cycles(&self) -> Vec<Vec<NodeId>> {
        let n = self.n_nodes();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut depth = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut tree_edges = vec![false; self.edges.len()];
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(i) = queue.pop_front() {
                for &(edge, other) in &self.adjacency[i] {
                    if !visited[other] {
                        visited[other] = true;
                        parent[other] = Some(i);
                        depth[other] = depth[i] + 1;
                        tree_edges[edge] = true;
                        queue.push_back(other);
                    }
                }
            }
        }

        let mut cycles = Vec::new();
        for (idx, edge) in self.edges.iter().enumerate() {
            if tree_edges[idx] || edge.a == edge.b {
                continue;
            }
            // Climb both endpoints to their common ancestor.
            let (mut x, mut y) = (edge.a, edge.b);
            let mut left = vec![x];
            let mut right = vec![y];
            while depth[x] > depth[y] {
                x = parent[x].expect("deeper node has a parent");
                left.push(x);
            }
            while depth[y] > depth[x] {
                y = parent[y].expect("deeper node has a parent");
                right.push(y);
            }
            while x != y {
                x = parent[x].expect("distinct nodes at equal depth have parents");
                y = parent[y].expect("distinct nodes at equal depth have parents");
                left.push(x);
                right.push(y);
            }
            // left ends at the ancestor; append the right branch downward.
            let mut cycle: Vec<NodeId> = left.into_iter().map(NodeId).collect();
            right.pop();
            while let Some(node) = right.pop() {
                cycle.push(NodeId(node));
            }
            cycle.push(NodeId(edge.a));
            cycles.push(cycle);
        }
        cycles
    }

    fn edge_between(&self, x: NodeId, y: NodeId) -> Result<EdgeId, CoreError> {
        self.adjacency
            .get(x.0)
            .ok_or(CoreError::NodeOutOfRange {
                node: x.0,
                nodes: self.n_nodes(),
            })?
            .iter()
            .find(|&&(_, other)| other == y.0)
            .map(|&(edge, _)| EdgeId(edge))
            .ok_or(CoreError::NoSuchEdge { from: x, to: y })
    }
}

/// Edge flows, nodal potentials, and nodal productions.
///
/// `phi[e]` is the flow on edge `e` in its canonical orientation; the flow
/// seen from the other side is the negation (see [`FlowState::flow`]).
/// On a full steady state the productions balance: `sum q = 0` to round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub q: Vec<f64>,
}

impl FlowState {
    /// Flow from `from` to `to`; negated when queried against the canonical
    /// orientation, so antisymmetry holds structurally.
    pub fn flow(&self, net: &Network, from: NodeId, to: NodeId) -> Result<f64, CoreError> {
        let edge_id = net.edge_between(from, to)?;
        let edge = &net.edges[edge_id.0];
        let phi = self.phi[edge_id.0];
        Ok(if edge.a == from.0 { phi } else { -phi })
    }

    /// Potentials on sources and internal nodes, ascending by node.
    pub fn free_potentials(&self, net: &Network) -> Vec<(NodeId, f64)> {
        net.non_terminals()
            .iter()
            .map(|&node| (node, self.pi[node.0]))
            .collect()
    }

    /// Productions absorbed at terminals, ascending by node.
    pub fn terminal_productions(&self, net: &Network) -> Vec<(NodeId, f64)> {
        net.terminals()
            .iter()
            .map(|&node| (node, self.q[node.0]))
            .collect()
    }

    /// Sum of all productions; zero to round-off on a steady state.
    pub fn balance(&self) -> f64 {
        self.q.iter().sum()
    }

    fn check_dimensions(&self, net: &Network) -> Result<(), CoreError> {
        if self.phi.len() != net.edges.len() {
            return Err(CoreError::DimensionMismatch {
                what: "edge flows",
                expected: net.edges.len(),
                got: self.phi.len(),
            });
        }
        for (what, len) in [("potentials", self.pi.len()), ("productions", self.q.len())] {
            if len != net.n_nodes() {
                return Err(CoreError::DimensionMismatch {
                    what,
                    expected: net.n_nodes(),
                    got: len,
                });
            }
        }
        Ok(())
    }
}

/// Residuals of the two physical laws for one state.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// Per node: net inflow plus production.
    pub conservation: Vec<f64>,
    /// Per canonical edge: `pi_b - pi_a + f(phi)`.
    pub potential_drop: Vec<f64>,
}

impl Residuals {
    pub fn max_conservation(&self) -> f64 {
        self.conservation.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_potential_drop(&self) -> f64 {
        self.potential_drop.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}
