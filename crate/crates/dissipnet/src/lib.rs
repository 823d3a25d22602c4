//! Steady states and robust operation of dissipative flow networks.
//!
//! A dissipative flow network moves a commodity through edges that lose
//! potential monotonically with throughput: gas pipelines losing pressure,
//! resistive circuits losing voltage, water mains losing head. This crate
//! computes steady states of such networks by minimizing a convex nodal
//! energy, and exploits the monotone dependence of the steady state on
//! injections to answer robust operational questions (worst-case cost,
//! feasibility under demand uncertainty) from two extreme scenarios instead
//! of an exhaustive scan.
//!
//! The crate is organized around five modules:
//!
//! * [`network`]: graph structure, node roles, flow states, residuals.
//! * [`dissipation`]: edge laws (the gas pipe law ships; the trait admits
//!   user-defined laws such as linear resistors).
//! * [`solver`]: convex energy minimization by damped Newton iteration.
//! * [`robust`]: two-corner feasibility, worst-case cost, and derivative-free
//!   search over operating points.
//! * [`oracle`]: brute-force scenario sweeps, monotonicity checks, and flow
//!   rerouting certificates used to certify the fast paths above.
//!
//! With the default `parallel` feature, scenario sweeps and candidate
//! evaluations fan out over a rayon pool; without it every loop runs
//! sequentially with identical results.
//!
//! # Example
//!
//! A three-node chain, solved once and then checked over its whole
//! withdrawal box from the two corner scenarios:
//!
//! ```
//! use std::sync::Arc;
//! use dissipnet::robust::robust_feasibility;
//! use dissipnet::{
//!     solve_steady_state, BoundaryData, CostModel, DissipationFunction, GasPipe,
//!     Network, NodeRole, OperatingPoint, ScenarioBox, SolverOptions,
//! };
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let pipe = |c: f64| -> Arc<dyn DissipationFunction> { Arc::new(GasPipe::new(c).unwrap()) };
//! let net = Network::new(
//!     vec![NodeRole::Source, NodeRole::Internal, NodeRole::Terminal],
//!     vec![(0, 1, pipe(1.0)), (1, 2, pipe(1.0))],
//! )?
//! .with_potential_bounds(vec![
//!     (f64::NEG_INFINITY, 4.0),
//!     (f64::NEG_INFINITY, f64::INFINITY),
//!     (f64::NEG_INFINITY, f64::INFINITY),
//! ])?;
//!
//! // One scenario, solved directly.
//! let state = solve_steady_state(
//!     &net,
//!     &BoundaryData {
//!         q_source: vec![1.0],
//!         q_internal: vec![0.0],
//!         pi_terminal: vec![1.0],
//!     },
//!     &SolverOptions::default(),
//! )?;
//! assert!((state.pi[0] - 3.0).abs() < 1e-9);
//!
//! // Feasibility over the whole withdrawal box, from its two corners.
//! let scenarios = ScenarioBox::new(vec![-0.5], vec![0.0])?;
//! let op = OperatingPoint {
//!     q_source: vec![1.0],
//!     pi_terminal: vec![1.0],
//!     compression: vec![],
//! };
//! let cost = CostModel::affine(vec![1.0], vec![2.0])?;
//! let verdict = robust_feasibility(&net, &scenarios, &op, &cost, &SolverOptions::default())?;
//! assert!(verdict.feasible);
//! assert!((verdict.worst_cost - 3.0).abs() < 1e-9);
//! # Ok(())
//! # }
//! ```

pub mod dissipation;
pub mod network;
pub mod oracle;
mod par;
pub mod robust;
pub mod solver;

pub use dissipation::{DissipationFunction, GasPipe, LinearResistor, Reversed};
pub use network::{FlowState, Network, NodeId, NodeRole, ValidationReport};
pub use robust::{CostModel, OperatingPoint, RobustVerdict, ScenarioBox};
pub use solver::{solve_steady_state, BoundaryData, SolverOptions};
