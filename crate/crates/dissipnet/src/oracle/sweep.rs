//! Exhaustive scenario grids over the withdrawal box.
//!
//! A sweep solves every point of a per-dimension lattice, records state,
//! cost, and bound feasibility for each, and locates the per-node
//! potential extrema and the minimum terminal payment by inspection.
//! This is the enumeration that the two-corner verdict is certified
//! against: on sound instances the extrema land on the box corners and
//! the grid-wide feasibility conjunction equals the corner verdict.

use crate::network::{CoreError, FlowState, Network};
use crate::oracle::OracleError;
use crate::par;
use crate::robust::{bound_violations, terminal_q, CostModel, OperatingPoint, ScenarioBox};
use crate::solver::{solve_steady_state, BoundaryData, SolverOptions};

pub const DEFAULT_SWEEP_BUDGET: usize = 100_000;

/// One converged grid point.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub state: FlowState,
    pub cost: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub resolution: usize,
    /// Row-major lattice, first withdrawal dimension slowest.
    pub scenarios: Vec<Vec<f64>>,
    /// `None` where the steady solve failed; those points are excluded
    /// from extrema and listed in `skipped`.
    pub outcomes: Vec<Option<ScenarioOutcome>>,
    pub skipped: Vec<usize>,
    /// Per node: (grid index, value) of the largest potential seen.
    pub pi_max: Vec<(usize, f64)>,
    pub pi_min: Vec<(usize, f64)>,
    /// Grid index and value of the smallest total terminal payment.
    pub payment_min: (usize, f64),
    pub lower_corner: usize,
    pub upper_corner: usize,
    /// Conjunction of per-point feasibility over converged points.
    pub all_feasible: bool,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn is_corner(&self, index: usize) -> bool {
        index == self.lower_corner || index == self.upper_corner
    }
}

/// Solves the full lattice with `resolution` points per withdrawal
/// dimension (box endpoints are hit exactly) and aggregates extrema in
/// grid order, so identical inputs give identical results regardless of
/// how the solves are scheduled.
pub fn scenario_sweep(
    net: &Network,
    scenarios: &ScenarioBox,
    op: &OperatingPoint,
    cost: &CostModel,
    resolution: usize,
    options: &SolverOptions,
    budget: usize,
) -> Result<SweepResult, OracleError> {
    if resolution < 2 {
        return Err(OracleError::ResolutionTooSmall { got: resolution });
    }
    if scenarios.len() != net.internals().len() {
        return Err(OracleError::Core(CoreError::DimensionMismatch {
            what: "scenario box",
            expected: net.internals().len(),
            got: scenarios.len(),
        }));
    }
    op.check(net)?;
    cost.check(net)?;

    let dims = scenarios.len();
    let total = resolution
        .checked_pow(dims as u32)
        .filter(|&t| t <= budget)
        .ok_or(OracleError::BudgetExceeded {
            points: resolution.saturating_pow(dims as u32),
            budget,
        })?;

    let effective = net.with_compression(&op.compression)?;
    let grid_point = |index: usize| -> Vec<f64> {
        let mut point = vec![0.0; dims];
        let mut rem = index;
        for d in (0..dims).rev() {
            let digit = rem % resolution;
            rem /= resolution;
            let (lo, hi) = (scenarios.lower()[d], scenarios.upper()[d]);
            point[d] = if digit + 1 == resolution {
                hi
            } else {
                lo + (hi - lo) * digit as f64 / (resolution - 1) as f64
            };
        }
        point
    };

    let solved = par::map_indexed(total, |i| {
        let scenario = grid_point(i);
        let boundary = BoundaryData {
            q_source: op.q_source.clone(),
            q_internal: scenario.clone(),
            pi_terminal: op.pi_terminal.clone(),
        };
        (scenario, solve_steady_state(&effective, &boundary, options))
    });

    let n = net.n_nodes();
    let mut result = SweepResult {
        resolution,
        scenarios: Vec::with_capacity(total),
        outcomes: Vec::with_capacity(total),
        skipped: Vec::new(),
        pi_max: vec![(0, f64::NEG_INFINITY); n],
        pi_min: vec![(0, f64::INFINITY); n],
        payment_min: (0, f64::INFINITY),
        lower_corner: 0,
        upper_corner: total - 1,
        all_feasible: true,
    };
    for (i, (scenario, solve)) in solved.into_iter().enumerate() {
        result.scenarios.push(scenario);
        match solve {
            Ok(state) => {
                let q_t = terminal_q(net, &state);
                let payment = cost.terminal_payment(&q_t);
                let feasible = bound_violations(net, &state).is_empty();
                result.all_feasible &= feasible;
                for k in 0..n {
                    if state.pi[k] > result.pi_max[k].1 {
                        result.pi_max[k] = (i, state.pi[k]);
                    }
                    if state.pi[k] < result.pi_min[k].1 {
                        result.pi_min[k] = (i, state.pi[k]);
                    }
                }
                if payment < result.payment_min.1 {
                    result.payment_min = (i, payment);
                }
                result.outcomes.push(Some(ScenarioOutcome {
                    cost: cost.cost(&op.q_source, &q_t),
                    state,
                    feasible,
                }));
            }
            Err(_) => {
                result.skipped.push(i);
                result.outcomes.push(None);
            }
        }
    }
    if result.skipped.len() == total {
        return Err(OracleError::NothingConverged);
    }
    Ok(result)
}
