//! Pairwise solves certifying the monotone couplings.
//!
//! Raising productions anywhere outside the terminals (and not lowering
//! any terminal potential) can only raise potentials on the free nodes;
//! with terminal potentials held fixed it can only deepen the terminal
//! productions. [`monotonicity_check`] takes an ordered boundary pair,
//! solves both sides, and reports the componentwise margins, flagging any
//! that land below `-tol`.

use crate::network::{Network, NodeId};
use crate::oracle::OracleError;
use crate::par;
use crate::solver::{solve_steady_state, BoundaryData, SolverOptions};

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// Per free node: potential in the higher state minus the lower.
    pub potential_margin: Vec<(NodeId, f64)>,
    /// Per terminal: production in the lower state minus the higher;
    /// populated only when the terminal potentials coincide exactly.
    pub production_margin: Option<Vec<(NodeId, f64)>>,
    /// Entries of the margins above that fall below `-tol`.
    pub violations: Vec<(NodeId, f64)>,
    pub holds: bool,
}

/// Solves both boundaries and checks that the ordering carries through:
/// `pi_a >= pi_b - tol` on the free nodes, and `q_a <= q_b + tol` on the
/// terminals when both boundaries pin the same terminal potentials.
///
/// Preconditions (rejected, not fudged): `q_a >= q_b` componentwise on
/// sources and internals, and `pi_a >= pi_b` on terminals.
pub fn monotonicity_check(
    net: &Network,
    boundary_a: &BoundaryData,
    boundary_b: &BoundaryData,
    options: &SolverOptions,
    tol: f64,
) -> Result<MonotonicityReport, OracleError> {
    for (nodes, a, b) in [
        (net.sources(), &boundary_a.q_source, &boundary_b.q_source),
        (net.internals(), &boundary_a.q_internal, &boundary_b.q_internal),
    ] {
        for (&node, (&qa, &qb)) in nodes.iter().zip(a.iter().zip(b.iter())) {
            if qa < qb {
                return Err(OracleError::ProductionNotOrdered { node, q_a: qa, q_b: qb });
            }
        }
    }
    for (&node, (&pa, &pb)) in net
        .terminals()
        .iter()
        .zip(boundary_a.pi_terminal.iter().zip(&boundary_b.pi_terminal))
    {
        if pa < pb {
            return Err(OracleError::PotentialNotOrdered { node, pi_a: pa, pi_b: pb });
        }
    }

    let (state_a, state_b) = {
        let (ra, rb) = par::join(
            || solve_steady_state(net, boundary_a, options),
            || solve_steady_state(net, boundary_b, options),
        );
        (ra?, rb?)
    };

    let mut violations = Vec::new();
    let potential_margin: Vec<(NodeId, f64)> = net
        .non_terminals()
        .iter()
        .map(|&u| (u, state_a.pi[u.0] - state_b.pi[u.0]))
        .collect();
    for &(node, margin) in &potential_margin {
        if margin < -tol {
            violations.push((node, margin));
        }
    }

    let equal_terminals = boundary_a.pi_terminal == boundary_b.pi_terminal;
    let production_margin = equal_terminals.then(|| {
        net.terminals()
            .iter()
            .map(|&t| (t, state_b.q[t.0] - state_a.q[t.0]))
            .collect::<Vec<_>>()
    });
    if let Some(margins) = &production_margin {
        for &(node, margin) in margins {
            if margin < -tol {
                violations.push((node, margin));
            }
        }
    }

    Ok(MonotonicityReport {
        potential_margin,
        production_margin,
        holds: violations.is_empty(),
        violations,
    })
}
