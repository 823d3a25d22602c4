//! Constructive flow-dominance witnesses between two ordered states.
//!
//! Given two conservation-satisfying states on the same network whose
//! productions are ordered outside the terminals, there is a
//! non-intersecting path from some terminal to any chosen node along
//! which the lower state's flows dominate the higher state's, edge by
//! edge in path direction, strictly so when the target's production
//! actually differs. [`aquarius_path`] extracts that path by layered
//! breadth-first search and packages it as a certificate that
//! [`verify_certificate`] re-checks from the raw states alone, without
//! trusting the construction.

use crate::network::{FlowState, Network, NodeId};
use crate::oracle::OracleError;

/// Relative tolerance under which two flows count as numerically equal.
fn flow_tolerance(a: f64, b: f64) -> f64 {
    1e-10 * 1.0_f64.max(a.abs()).max(b.abs())
}

/// One path edge with both states' flows oriented `from -> to`, i.e. from
/// the terminal side toward the target.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// Flow in the lower-production state; dominates `flow`.
    pub flow_star: f64,
    /// Flow in the higher-production state.
    pub flow: f64,
}

/// A checkable witness: a simple path from a terminal to `target` whose
/// edges all satisfy `flow_star >= flow` (strictly when `strict`).
#[derive(Debug, Clone, PartialEq)]
pub struct AquariusCertificate {
    pub target: NodeId,
    /// Node sequence starting at a terminal and ending at `target`.
    pub path: Vec<NodeId>,
    pub edges: Vec<CertificateEdge>,
    pub strict: bool,
}

fn oriented_flow(net: &Network, state: &FlowState, edge: usize, tail: NodeId) -> f64 {
    let (a, _) = net.edges()[edge].endpoints();
    if a == tail {
        state.phi[edge]
    } else {
        -state.phi[edge]
    }
}

fn check_conserved(
    net: &Network,
    state: &FlowState,
    which: &'static str,
) -> Result<(), OracleError> {
    let residuals = net.residuals(state)?;
    let scale: f64 = state.q.iter().fold(1.0, |m, q| m.max(q.abs()));
    let worst = residuals.max_conservation();
    if !(worst <= 1e-6 * scale) {
        return Err(OracleError::NotConserved { which, residual: worst });
    }
    Ok(())
}

/// Builds the dominance path from `target` back to the terminal set.
///
/// `state_a` must carry productions at least those of `state_b` on every
/// node outside `terminals` (so `state_b` is the starred, dominating
/// side). Layers grow from the target: a node joins the next layer when
/// some edge toward the current layer carries strictly more flow in
/// `state_b` than in `state_a` (at least as much, in the non-strict mode
/// used when the target's production does not differ beyond tolerance).
/// Neighbors are scanned in ascending node id, so the result is
/// reproducible. The search reaching no terminal means the flow
/// differences around the frontier sit below tolerance, reported as
/// [`OracleError::DegenerateFlows`].
pub fn aquarius_path(
    net: &Network,
    state_a: &FlowState,
    state_b: &FlowState,
    terminals: &[NodeId],
    target: NodeId,
) -> Result<AquariusCertificate, OracleError> {
    let n = net.n_nodes();
    if target.0 >= n {
        return Err(OracleError::Core(crate::network::CoreError::NodeOutOfRange {
            node: target.0,
            nodes: n,
        }));
    }
    let mut is_terminal = vec![false; n];
    for &t in terminals {
        if t.0 >= n {
            return Err(OracleError::Core(crate::network::CoreError::NodeOutOfRange {
                node: t.0,
                nodes: n,
            }));
        }
        is_terminal[t.0] = true;
    }
    if is_terminal[target.0] {
        return Err(OracleError::TargetIsTerminal { node: target });
    }
    check_conserved(net, state_a, "first")?;
    check_conserved(net, state_b, "second")?;
    for i in 0..n {
        if is_terminal[i] {
            continue;
        }
        let (qa, qb) = (state_a.q[i], state_b.q[i]);
        if qa < qb - flow_tolerance(qa, qb) {
            return Err(OracleError::ProductionNotOrdered {
                node: NodeId(i),
                q_a: qa,
                q_b: qb,
            });
        }
    }

    let strict = {
        let (qa, qb) = (state_a.q[target.0], state_b.q[target.0]);
        qa - qb > flow_tolerance(qa, qb)
    };

    // Layered growth from the target; parents point back toward it, so
    // back-tracing from the first terminal reached walks the path in
    // certificate order already.
    let mut in_layers = vec![false; n];
    let mut parent: Vec<Option<(NodeId, usize)>> = vec![None; n];
    in_layers[target.0] = true;
    let mut frontier = vec![target];
    let reached = 'search: loop {
        let mut next: Vec<NodeId> = Vec::new();
        for &i in &frontier {
            for (edge, j) in net.neighbors(i) {
                if in_layers[j.0] {
                    continue;
                }
                let toward_layer_b = oriented_flow(net, state_b, edge.0, j);
                let toward_layer_a = oriented_flow(net, state_a, edge.0, j);
                let diff = toward_layer_b - toward_layer_a;
                let tol = flow_tolerance(toward_layer_b, toward_layer_a);
                let qualifies = if strict { diff > tol } else { diff >= -tol };
                if qualifies {
                    in_layers[j.0] = true;
                    parent[j.0] = Some((i, edge.0));
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            return Err(OracleError::DegenerateFlows { target });
        }
        next.sort_unstable_by_key(|node| node.0);
        for &node in &next {
            if is_terminal[node.0] {
                break 'search node;
            }
        }
        frontier = next;
    };

    let mut path = Vec::new();
    let mut edges = Vec::new();
    let mut here = reached;
    path.push(here);
    while let Some((toward_target, edge)) = parent[here.0] {
        edges.push(CertificateEdge {
            from: here,
            to: toward_target,
            flow_star: oriented_flow(net, state_b, edge, here),
            flow: oriented_flow(net, state_a, edge, here),
        });
        here = toward_target;
        path.push(here);
    }
    Ok(AquariusCertificate {
        target,
        path,
        edges,
        strict,
    })
}

/// Re-checks a certificate against the raw states: simple terminal-to-
/// target path over real edges, recorded flows matching the states, and
/// edgewise dominance (strict exactly when the target's productions
/// differ beyond tolerance).
pub fn verify_certificate(
    net: &Network,
    certificate: &AquariusCertificate,
    state_a: &FlowState,
    state_b: &FlowState,
    terminals: &[NodeId],
) -> Result<(), OracleError> {
    let reject = |reason: String| Err(OracleError::BadCertificate { reason });
    let path = &certificate.path;
    if path.len() < 2 {
        return reject(format!("path has {} nodes, need at least 2", path.len()));
    }
    if certificate.edges.len() + 1 != path.len() {
        return reject("edge list does not match the path length".into());
    }
    if !terminals.contains(&path[0]) {
        return reject(format!("path starts at non-terminal node {}", path[0]));
    }
    if *path.last().unwrap() != certificate.target {
        return reject(format!("path ends at {}, not the target", path.last().unwrap()));
    }
    let mut seen = vec![false; net.n_nodes()];
    for &node in path {
        if seen[node.0] {
            return reject(format!("path visits node {node} twice"));
        }
        seen[node.0] = true;
    }

    let expected_strict = {
        let (qa, qb) = (state_a.q[certificate.target.0], state_b.q[certificate.target.0]);
        qa - qb > flow_tolerance(qa, qb)
    };
    if certificate.strict != expected_strict {
        return reject(format!(
            "strict flag is {}, but the target productions require {}",
            certificate.strict, expected_strict
        ));
    }

    for (k, edge) in certificate.edges.iter().enumerate() {
        if edge.from != path[k] || edge.to != path[k + 1] {
            return reject(format!("edge {k} does not connect path nodes {k} and {}", k + 1));
        }
        let Some(edge_index) = net
            .neighbors(edge.from)
            .find(|&(_, other)| other == edge.to)
            .map(|(e, _)| e.0)
        else {
            return reject(format!("no edge between {} and {}", edge.from, edge.to));
        };
        let star = oriented_flow(net, state_b, edge_index, edge.from);
        let plain = oriented_flow(net, state_a, edge_index, edge.from);
        let scale = flow_tolerance(star, plain).max(1e-9);
        if (edge.flow_star - star).abs() > scale || (edge.flow - plain).abs() > scale {
            return reject(format!(
                "edge {} -> {} records ({}, {}) but the states carry ({star}, {plain})",
                edge.from, edge.to, edge.flow_star, edge.flow
            ));
        }
        let tol = flow_tolerance(star, plain);
        let holds = if certificate.strict {
            star - plain > tol
        } else {
            star - plain >= -tol
        };
        if !holds {
            return reject(format!(
                "edge {} -> {} fails dominance: {star} vs {plain}",
                edge.from, edge.to
            ));
        }
    }
    Ok(())
}
