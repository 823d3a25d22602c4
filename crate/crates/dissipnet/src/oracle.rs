//! Independent brute-force certifiers for the closed-form machinery.
//!
//! Nothing in here trusts the two-corner shortcut or the solver beyond a
//! single steady solve. Scenario sweeps enumerate a whole withdrawal grid
//! and locate extrema by inspection; path extraction re-derives the
//! flow-dominance witness between two ordered states edge by edge;
//! monotonicity checks solve boundary pairs and compare componentwise.
//! The point is redundancy: fast code elsewhere is accepted only when it
//! agrees with the slow enumeration here.

mod generate;
mod monotone;
mod path;
mod sweep;

use thiserror::Error;

use crate::network::{CoreError, NodeId};
use crate::robust::RobustError;
use crate::solver::SolveError;

pub use generate::{random_boundary, random_network, random_ordered_pair, GeneratorConfig};
pub use monotone::{monotonicity_check, MonotonicityReport};
pub use path::{aquarius_path, verify_certificate, AquariusCertificate, CertificateEdge};
pub use sweep::{scenario_sweep, ScenarioOutcome, SweepResult, DEFAULT_SWEEP_BUDGET};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("resolution must be at least 2, got {got}")]
    ResolutionTooSmall { got: usize },
    #[error("sweep of {points} scenarios exceeds the budget of {budget} solves")]
    BudgetExceeded { points: usize, budget: usize },
    #[error("no sweep scenario converged, extrema are undefined")]
    NothingConverged,
    #[error("target node {node} is a terminal")]
    TargetIsTerminal { node: NodeId },
    #[error("productions are not ordered at node {node}: {q_a} < {q_b}")]
    ProductionNotOrdered { node: NodeId, q_a: f64, q_b: f64 },
    #[error("terminal potentials are not ordered at node {node}: {pi_a} < {pi_b}")]
    PotentialNotOrdered { node: NodeId, pi_a: f64, pi_b: f64 },
    #[error("{which} state violates flow conservation, worst residual {residual:.3e}")]
    NotConserved { which: &'static str, residual: f64 },
    #[error(
        "layer search from node {target} stalled before reaching a terminal: \
         all outgoing flow differences sit below tolerance"
    )]
    DegenerateFlows { target: NodeId },
    #[error("certificate rejected: {reason}")]
    BadCertificate { reason: String },
    #[error("generator misconfigured: {reason}")]
    BadGenerator { reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error("steady solve failed inside an oracle run: {0}")]
    Solver(#[from] SolveError),
}
