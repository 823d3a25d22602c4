//! Steady states by convex energy minimization.
//!
//! With terminal potentials fixed, the steady state of a dissipative
//! network is the unique minimizer over the remaining potentials of
//!
//! ```text
//! E(pi) = sum over edges of Psi(pi_a - pi_b) - sum over free nodes of pi_i * q_i
//! ```
//!
//! where `Psi` is the convex primitive of the inverse dissipation law and
//! "free" means sources and internal nodes. The gradient of `E` at a free
//! node equals the negated conservation residual there (net inflow plus
//! production), so stationarity is exactly flow conservation, and the
//! Hessian is the graph Laplacian weighted by the slopes of the inverse
//! laws. [`solve_steady_state`] runs a damped Newton iteration on that
//! structure: dense factorization of the reduced Laplacian, Armijo
//! backtracking on the energy, steepest descent as a fallback, and a couple
//! of full Newton polish steps once the tolerance is met so the returned
//! state sits at the quadratic-convergence floor rather than just under the
//! tolerance.
//!
//! The slope of the inverse gas law is unbounded at the zero-flow drop, so
//! Hessian weights are clamped at [`SolverOptions::derivative_cap`]. Newton
//! steps near such points start tiny and grow geometrically, which costs a
//! handful of extra iterations and nothing else.
//!
//! Potential boxes are not enforced here; feasibility against bounds is a
//! question for [`crate::robust`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::{CoreError, FlowState, Network, ValidationReport};

/// Hard cap on free nodes for the dense Newton factorization.
pub const MAX_DENSE_NODES: usize = 2000;

/// Known boundary data: source productions, internal withdrawals, terminal
/// potentials. Each vector aligns with the corresponding ascending role
/// list on the network ([`Network::sources`], [`Network::internals`],
/// [`Network::terminals`]).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub q_source: Vec<f64>,
    pub q_internal: Vec<f64>,
    pub pi_terminal: Vec<f64>,
}

impl BoundaryData {
    /// Productions indexed by node, zero at terminals.
    pub fn injections(&self, net: &Network) -> Vec<f64> {
        let mut q = vec![0.0; net.n_nodes()];
        for (&node, &value) in net.sources().iter().zip(&self.q_source) {
            q[node.0] = value;
        }
        for (&node, &value) in net.internals().iter().zip(&self.q_internal) {
            q[node.0] = value;
        }
        q
    }

    /// Scale for convergence tolerances: `max(1, max |q|)`.
    pub fn flow_scale(&self) -> f64 {
        self.q_source
            .iter()
            .chain(&self.q_internal)
            .fold(1.0f64, |m, q| m.max(q.abs()))
    }

    fn check(&self, net: &Network) -> Result<(), SolveError> {
        for (what, got, expected) in [
            ("source productions", self.q_source.len(), net.sources().len()),
            ("internal withdrawals", self.q_internal.len(), net.internals().len()),
            ("terminal potentials", self.pi_terminal.len(), net.terminals().len()),
        ] {
            if got != expected {
                return Err(SolveError::Boundary(CoreError::DimensionMismatch {
                    what,
                    expected,
                    got,
                }));
            }
        }
        if let Some(bad) = self
            .q_source
            .iter()
            .chain(&self.q_internal)
            .chain(&self.pi_terminal)
            .find(|v| !v.is_finite())
        {
            return Err(SolveError::NonFinite {
                what: format!("boundary value {bad}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the gradient max-norm; `None` means
    /// `1e-9 * max(1, max |q|)`.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Clamp for inverse-law slopes in the Hessian.
    pub derivative_cap: f64,
    /// Starting potentials on the free nodes (ascending node order);
    /// `None` starts every free node at the mean terminal potential.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: None,
            max_iterations: 200,
            derivative_cap: 1e8,
            initial: None,
        }
    }
}

impl SolverOptions {
    pub fn resolved_tolerance(&self, boundary: &BoundaryData) -> f64 {
        self.tolerance.unwrap_or(1e-9 * boundary.flow_scale())
    }
}

/// Energy and its gradient over the free potentials.
///
/// The gradient entry for a free node equals the negated conservation
/// residual (net inflow plus production) at that node, in flow units.
#[derive(Debug, Clone)]
pub struct EnergyValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("network failed validation: {0}")]
    InvalidNetwork(ValidationReport),
    #[error("boundary data does not fit the network: {0}")]
    Boundary(CoreError),
    #[error("non-finite quantity encountered: {what}")]
    NonFinite { what: String },
    #[error("{free_nodes} free nodes exceed the dense solver limit {limit}")]
    TooLarge { free_nodes: usize, limit: usize },
    #[error("no convergence after {iterations} iterations, gradient max-norm {gradient_norm:.3e}")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
}

/// Free-node positions: `free_pos[node] = Some(index into non_terminals)`.
fn free_positions(net: &Network) -> Vec<Option<usize>> {
    let mut pos = vec![None; net.n_nodes()];
    for (k, &node) in net.non_terminals().iter().enumerate() {
        pos[node.0] = Some(k);
    }
    pos
}

fn assemble_pi(net: &Network, boundary: &BoundaryData, pi_free: &[f64]) -> Vec<f64> {
    let mut pi = vec![0.0; net.n_nodes()];
    for (&node, &value) in net.terminals().iter().zip(&boundary.pi_terminal) {
        pi[node.0] = value;
    }
    for (&node, &value) in net.non_terminals().iter().zip(pi_free) {
        pi[node.0] = value;
    }
    pi
}

fn energy_parts(
    net: &Network,
    injections: &[f64],
    pi: &[f64],
    free_pos: &[Option<usize>],
) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut gradient = vec![0.0; net.non_terminals().len()];
    for edge in net.edges() {
        let (a, b) = edge.endpoints();
        let delta = pi[a.0] - pi[b.0];
        value += edge.law().primitive(delta);
        let flow = edge.law().inverse(delta);
        if let Some(k) = free_pos[a.0] {
            gradient[k] += flow;
        }
        if let Some(k) = free_pos[b.0] {
            gradient[k] -= flow;
        }
    }
    for &node in net.non_terminals() {
        let k = free_pos[node.0].expect("non-terminal is free");
        value -= pi[node.0] * injections[node.0];
        gradient[k] -= injections[node.0];
    }
    (value, gradient)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Energy and gradient at the given free potentials (ascending node order
/// over sources and internals; terminal potentials come from the boundary).
pub fn energy(
    net: &Network,
    boundary: &BoundaryData,
    pi_free: &[f64],
) -> Result<EnergyValue, SolveError> {
    boundary.check(net)?;
    let free = net.non_terminals();
    if pi_free.len() != free.len() {
        return Err(SolveError::Boundary(CoreError::DimensionMismatch {
            what: "free potentials",
            expected: free.len(),
            got: pi_free.len(),
        }));
    }
    let injections = boundary.injections(net);
    let pi = assemble_pi(net, boundary, pi_free);
    let free_pos = free_positions(net);
    let (value, gradient) = energy_parts(net, &injections, &pi, &free_pos);
    Ok(EnergyValue { value, gradient })
}

fn newton_direction(
    net: &Network,
    pi: &[f64],
    free_pos: &[Option<usize>],
    gradient: &[f64],
    cap: f64,
) -> Option<Vec<f64>> {
    let nf = gradient.len();
    let mut h = DMatrix::zeros(nf, nf);
    for edge in net.edges() {
        let (a, b) = edge.endpoints();
        let delta = pi[a.0] - pi[b.0];
        let w = edge.law().inverse_derivative(delta).min(cap).max(0.0);
        match (free_pos[a.0], free_pos[b.0]) {
            (Some(ka), Some(kb)) => {
                h[(ka, ka)] += w;
                h[(kb, kb)] += w;
                h[(ka, kb)] -= w;
                h[(kb, ka)] -= w;
            }
            (Some(ka), None) => h[(ka, ka)] += w,
            (None, Some(kb)) => h[(kb, kb)] += w,
            (None, None) => {}
        }
    }
    let rhs = DVector::from_iterator(nf, gradient.iter().map(|g| -g));
    let solved = h
        .clone()
        .cholesky()
        .map(|chol| chol.solve(&rhs))
        .or_else(|| h.lu().solve(&rhs));
    solved.and_then(|d| {
        let d: Vec<f64> = d.iter().copied().collect();
        if d.iter().all(|x| x.is_finite()) {
            Some(d)
        } else {
            None
        }
    })
}

struct SearchPoint {
    x: Vec<f64>,
    pi: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
}

/// Exact line search: the energy is strictly convex along any descent
/// direction and its directional derivative is continuous and increasing,
/// so the 1D minimizer is the slope's root, found by doubling then
/// bisection. This matters near a law's kink (an edge drop crossing an
/// offset point), where the curvature blows up and a merely sufficient
/// decrease accepts steps that shrink the kink coordinate geometrically;
/// the exact minimizer jumps it to its conditional optimum in one step.
fn exact_line_search(
    net: &Network,
    injections: &[f64],
    boundary: &BoundaryData,
    from: &SearchPoint,
    direction: &[f64],
    free_pos: &[Option<usize>],
) -> Option<SearchPoint> {
    let slope_at_zero: f64 = from.gradient.iter().zip(direction).map(|(g, d)| g * d).sum();
    if !(slope_at_zero < 0.0) {
        return None;
    }
    let eval = |t: f64| -> (f64, SearchPoint) {
        let x: Vec<f64> = from.x.iter().zip(direction).map(|(x, d)| x + t * d).collect();
        let pi = assemble_pi(net, boundary, &x);
        let (value, gradient) = energy_parts(net, injections, &pi, free_pos);
        let slope = gradient.iter().zip(direction).map(|(g, d)| g * d).sum();
        (slope, SearchPoint { x, pi, value, gradient })
    };

    let mut hi = 1.0;
    let mut best = eval(hi);
    for _ in 0..60 {
        if !best.0.is_finite() || best.0 >= 0.0 {
            break;
        }
        hi *= 2.0;
        best = eval(hi);
    }
    if best.0.is_finite() && best.0 < 0.0 {
        // Slope never turned: coercivity rules this out, bail.
        return None;
    }
    let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let at_mid = eval(mid);
        if at_mid.0.is_finite() && at_mid.0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = at_mid;
        }
    }
    let (_, found) = best;
    if !found.value.is_finite() || found.x == from.x {
        return None;
    }
    Some(found)
}

/// Solves the steady state: minimizes the energy over the free potentials,
/// then reconstructs flows from the inverse laws and terminal productions
/// from conservation.
pub fn solve_steady_state(
    net: &Network,
    boundary: &BoundaryData,
    options: &SolverOptions,
) -> Result<FlowState, SolveError> {
    let report = net.validate();
    if !report.is_admissible() {
        return Err(SolveError::InvalidNetwork(report));
    }
    boundary.check(net)?;
    let free = net.non_terminals();
    if free.len() > MAX_DENSE_NODES {
        return Err(SolveError::TooLarge {
            free_nodes: free.len(),
            limit: MAX_DENSE_NODES,
        });
    }
    let tol = options.resolved_tolerance(boundary);
    let injections = boundary.injections(net);
    let free_pos = free_positions(net);

    let x: Vec<f64> = match &options.initial {
        Some(init) => {
            if init.len() != free.len() {
                return Err(SolveError::Boundary(CoreError::DimensionMismatch {
                    what: "initial potentials",
                    expected: free.len(),
                    got: init.len(),
                }));
            }
            init.clone()
        }
        None => {
            let mean =
                boundary.pi_terminal.iter().sum::<f64>() / boundary.pi_terminal.len() as f64;
            vec![mean; free.len()]
        }
    };

    let pi = assemble_pi(net, boundary, &x);
    let (value, gradient) = energy_parts(net, &injections, &pi, &free_pos);
    if !value.is_finite() {
        return Err(SolveError::NonFinite {
            what: format!("energy at the initial point ({value})"),
        });
    }
    let mut current = SearchPoint { x, pi, value, gradient };
    let mut converged = max_norm(&current.gradient) <= tol;

    let mut iterations = 0;
    while !converged {
        if iterations >= options.max_iterations {
            return Err(SolveError::NonConvergence {
                iterations,
                gradient_norm: max_norm(&current.gradient),
            });
        }
        iterations += 1;

        let newton = newton_direction(
            net,
            &current.pi,
            &free_pos,
            &current.gradient,
            options.derivative_cap,
        );

        // A full Newton step that clearly shrinks the gradient is taken
        // as-is: that is the quadratic regime, and near the minimum it
        // keeps moving even when energy differences fall below f64
        // resolution and any decrease test would stall.
        if let Some(d) = newton.as_deref() {
            let x: Vec<f64> = current.x.iter().zip(d).map(|(xi, di)| xi + di).collect();
            let pi = assemble_pi(net, boundary, &x);
            let (value, gradient) = energy_parts(net, &injections, &pi, &free_pos);
            if value.is_finite() && max_norm(&gradient) <= 0.9 * max_norm(&current.gradient) {
                current = SearchPoint { x, pi, value, gradient };
                converged = max_norm(&current.gradient) <= tol;
                continue;
            }
        }

        let steepest: Vec<f64> = current.gradient.iter().map(|g| -g).collect();
        let step = newton
            .as_deref()
            .and_then(|d| exact_line_search(net, &injections, boundary, &current, d, &free_pos))
            .or_else(|| {
                exact_line_search(net, &injections, boundary, &current, &steepest, &free_pos)
            });
        let Some(next) = step else {
            return Err(SolveError::NonConvergence {
                iterations,
                gradient_norm: max_norm(&current.gradient),
            });
        };
        current = next;
        converged = max_norm(&current.gradient) <= tol;
    }

    // Polish: a couple of undamped Newton steps push the gradient from
    // "just under tol" to the quadratic floor, so that independent runs
    // agree far more tightly than tol itself.
    for _ in 0..2 {
        let Some(d) = newton_direction(
            net,
            &current.pi,
            &free_pos,
            &current.gradient,
            options.derivative_cap,
        ) else {
            break;
        };
        let x: Vec<f64> = current.x.iter().zip(&d).map(|(xi, di)| xi + di).collect();
        let pi = assemble_pi(net, boundary, &x);
        let (value, gradient) = energy_parts(net, &injections, &pi, &free_pos);
        if value.is_finite() && max_norm(&gradient) < max_norm(&current.gradient) {
            current = SearchPoint { x, pi, value, gradient };
        } else {
            break;
        }
    }
    let pi = current.pi;

    // Reconstruct the full state from the potentials.
    let mut phi = Vec::with_capacity(net.edges().len());
    let mut inflow = vec![0.0; net.n_nodes()];
    for edge in net.edges() {
        let (a, b) = edge.endpoints();
        let flow = edge.law().inverse(pi[a.0] - pi[b.0]);
        inflow[b.0] += flow;
        inflow[a.0] -= flow;
        phi.push(flow);
    }
    let mut q = injections;
    for &node in net.terminals() {
        q[node.0] = -inflow[node.0];
    }
    Ok(FlowState { phi, pi, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipation::{DissipationFunction, GasPipe};
    use crate::network::{NodeId, NodeRole};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn pipe(c: f64) -> Arc<dyn DissipationFunction> {
        Arc::new(GasPipe::new(c).unwrap())
    }

    fn two_node() -> (Network, BoundaryData) {
        let net = Network::new(
            vec![NodeRole::Source, NodeRole::Terminal],
            vec![(0, 1, pipe(1.0))],
        )
        .unwrap();
        let boundary = BoundaryData {
            q_source: vec![1.0],
            q_internal: vec![],
            pi_terminal: vec![1.0],
        };
        (net, boundary)
    }

    fn three_node() -> (Network, BoundaryData) {
        let net = Network::new(
            vec![NodeRole::Source, NodeRole::Internal, NodeRole::Terminal],
            vec![(0, 1, pipe(1.0)), (1, 2, pipe(1.0))],
        )
        .unwrap();
        let boundary = BoundaryData {
            q_source: vec![1.0],
            q_internal: vec![0.0],
            pi_terminal: vec![1.0],
        };
        (net, boundary)
    }

    #[test]
    fn energy_gradient_vanishes_at_the_two_node_solution() {
        // Hand solution: drop f(1) = 1, so pi_0 = 2 balances q_0 = 1.
        let (net, boundary) = two_node();
        let at_solution = energy(&net, &boundary, &[2.0]).unwrap();
        assert!(at_solution.gradient[0].abs() <= 1e-15);
        // Off the solution the gradient is the negated imbalance.
        let above = energy(&net, &boundary, &[3.0]).unwrap();
        assert!(above.gradient[0] > 0.0);
        let below = energy(&net, &boundary, &[1.0]).unwrap();
        assert!(below.gradient[0] < 0.0);
    }

    #[test]
    fn energy_gradient_matches_central_differences() {
        let (net, boundary) = three_node();
        let h = 1e-6;
        for point in [[1.7f64, 2.9], [3.0, 0.5], [0.2, 0.1], [5.0, 4.0]] {
            let at = energy(&net, &boundary, &point).unwrap();
            for k in 0..2 {
                let mut up = point;
                let mut down = point;
                up[k] += h;
                down[k] -= h;
                let fd = (energy(&net, &boundary, &up).unwrap().value
                    - energy(&net, &boundary, &down).unwrap().value)
                    / (2.0 * h);
                assert_relative_eq!(fd, at.gradient[k], max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn two_node_steady_state_matches_hand_solution() {
        let (net, boundary) = two_node();
        let state = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        assert_relative_eq!(state.pi[0], 2.0, max_relative = 1e-9);
        assert_eq!(state.pi[1], 1.0);
        assert_relative_eq!(state.phi[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(state.q[1], -1.0, max_relative = 1e-9);
        let res = net.residuals(&state).unwrap();
        assert!(res.max_conservation() <= 1e-9);
        assert!(res.max_potential_drop() <= 1e-12);
    }

    #[test]
    fn three_node_steady_state_matches_hand_solution() {
        // Series flow 1 through both pipes: pi = (3, 2, 1), q_2 = -1.
        let (net, boundary) = three_node();
        let state = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        assert_relative_eq!(state.pi[0], 3.0, max_relative = 1e-9);
        assert_relative_eq!(state.pi[1], 2.0, max_relative = 1e-9);
        assert_relative_eq!(state.phi[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(state.phi[1], 1.0, max_relative = 1e-9);
        assert_relative_eq!(state.q[2], -1.0, max_relative = 1e-9);
        assert!(state.balance().abs() <= 1e-12);
    }

    #[test]
    fn zero_boundary_flow_gives_flat_potentials() {
        let (net, mut boundary) = three_node();
        boundary.q_source[0] = 0.0;
        let state = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        assert_eq!(state.phi, vec![0.0, 0.0]);
        assert_eq!(state.pi, vec![1.0, 1.0, 1.0]);
        assert_eq!(state.q[2], 0.0);
    }

    #[test]
    fn compression_shifts_the_source_potential() {
        // f(phi) = phi|phi| - b, so the needed drop at flow 1 is 1 - b.
        let net = Network::new(
            vec![NodeRole::Source, NodeRole::Terminal],
            vec![(
                0,
                1,
                Arc::new(GasPipe::with_offset(1.0, 0.5).unwrap()) as Arc<dyn DissipationFunction>,
            )],
        )
        .unwrap();
        let boundary = BoundaryData {
            q_source: vec![1.0],
            q_internal: vec![],
            pi_terminal: vec![1.0],
        };
        let state = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        assert_relative_eq!(state.pi[0], 1.5, max_relative = 1e-9);

        // A boost beyond the friction loss pulls the source below the sink.
        let boosted = Network::new(
            vec![NodeRole::Source, NodeRole::Terminal],
            vec![(
                0,
                1,
                Arc::new(GasPipe::with_offset(1.0, 3.0).unwrap()) as Arc<dyn DissipationFunction>,
            )],
        )
        .unwrap();
        let state = solve_steady_state(&boosted, &boundary, &SolverOptions::default()).unwrap();
        assert_relative_eq!(state.pi[0], -1.0, max_relative = 1e-9);
        assert!(state.pi[0] < state.pi[1]);
    }

    #[test]
    fn independent_initializations_agree() {
        let (net, boundary) = three_node();
        let reference = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        for init in [vec![10.0, -3.0], vec![0.0, 0.0], vec![100.0, 100.0]] {
            let options = SolverOptions {
                initial: Some(init),
                ..SolverOptions::default()
            };
            let state = solve_steady_state(&net, &boundary, &options).unwrap();
            for (a, b) in state.pi.iter().zip(&reference.pi) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn iteration_budget_is_honored() {
        let (net, boundary) = three_node();
        let options = SolverOptions {
            max_iterations: 0,
            ..SolverOptions::default()
        };
        match solve_steady_state(&net, &boundary, &options) {
            Err(SolveError::NonConvergence { iterations: 0, gradient_norm }) => {
                assert!(gradient_norm > 0.0);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_networks_and_boundaries_are_rejected() {
        let no_terminal = Network::new(
            vec![NodeRole::Source, NodeRole::Internal],
            vec![(0, 1, pipe(1.0))],
        )
        .unwrap();
        let boundary = BoundaryData {
            q_source: vec![1.0],
            q_internal: vec![0.0],
            pi_terminal: vec![],
        };
        assert!(matches!(
            solve_steady_state(&no_terminal, &boundary, &SolverOptions::default()),
            Err(SolveError::InvalidNetwork(_))
        ));

        let (net, _) = three_node();
        let short = BoundaryData {
            q_source: vec![],
            q_internal: vec![0.0],
            pi_terminal: vec![1.0],
        };
        assert!(matches!(
            solve_steady_state(&net, &short, &SolverOptions::default()),
            Err(SolveError::Boundary(_))
        ));

        let nan = BoundaryData {
            q_source: vec![f64::NAN],
            q_internal: vec![0.0],
            pi_terminal: vec![1.0],
        };
        assert!(matches!(
            solve_steady_state(&net, &nan, &SolverOptions::default()),
            Err(SolveError::NonFinite { .. })
        ));
    }

    #[test]
    fn free_potential_and_terminal_production_maps_line_up() {
        let (net, boundary) = three_node();
        let state = solve_steady_state(&net, &boundary, &SolverOptions::default()).unwrap();
        let free = state.free_potentials(&net);
        assert_eq!(free.len(), 2);
        assert_eq!(free[0].0, NodeId(0));
        assert_eq!(free[1].0, NodeId(1));
        let productions = state.terminal_productions(&net);
        assert_eq!(productions.len(), 1);
        assert_eq!(productions[0].0, NodeId(2));
        assert_relative_eq!(productions[0].1, -1.0, max_relative = 1e-9);
    }
}
