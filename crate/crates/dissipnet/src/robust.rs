//! Robust feasibility and worst-case cost from two extreme scenarios.
//!
//! Internal withdrawals are uncertain inside a box `Q = [lo, hi]` per node.
//! Because steady-state potentials increase monotonically in every
//! production and terminal productions decrease, the whole box is governed
//! by its two corners:
//!
//! * lower corner `lo` (deepest withdrawals): potentials are at their
//!   minimum, so lower potential bounds bind there;
//! * upper corner `hi` (shallowest withdrawals): potentials are at their
//!   maximum, so upper bounds bind there, and the terminal payment is at
//!   its minimum, so the cost is at its worst there.
//!
//! [`robust_feasibility`] therefore solves exactly two steady states and
//! decides feasibility and worst-case cost for every scenario in the box.
//! [`optimize_operating_point`] wraps that verdict in a derivative-free
//! pattern search over the operator's decisions: source productions,
//! terminal potentials, and compressor offsets. The brute-force
//! counterparts that certify all of this live in [`crate::oracle`].

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{CoreError, FlowState, Network, NodeId};
use crate::par;
use crate::solver::{solve_steady_state, BoundaryData, SolveError, SolverOptions};

/// Which box corner a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    Lower,
    Upper,
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corner::Lower => "lower",
            Corner::Upper => "upper",
        })
    }
}

/// Per-internal-node withdrawal box, aligned with [`Network::internals`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ScenarioBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, RobustError> {
        if lo.len() != hi.len() {
            return Err(RobustError::Core(CoreError::DimensionMismatch {
                what: "scenario box sides",
                expected: lo.len(),
                got: hi.len(),
            }));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(RobustError::BadBox { index: i, lo: l, hi: h });
            }
        }
        Ok(ScenarioBox { lo, hi })
    }

    /// Box collapsed onto a single scenario.
    pub fn point(values: Vec<f64>) -> Result<Self, RobustError> {
        Self::new(values.clone(), values)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    pub fn corner(&self, which: Corner) -> &[f64] {
        match which {
            Corner::Lower => &self.lo,
            Corner::Upper => &self.hi,
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l == h)
    }

    fn check(&self, net: &Network) -> Result<(), RobustError> {
        if self.len() != net.internals().len() {
            return Err(RobustError::Core(CoreError::DimensionMismatch {
                what: "scenario box",
                expected: net.internals().len(),
                got: self.len(),
            }));
        }
        Ok(())
    }
}

/// The operator's decisions: source productions, terminal potentials, and
/// compressor offsets (aligned with [`Network::sources`],
/// [`Network::terminals`], [`Network::compressors`]).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub q_source: Vec<f64>,
    pub pi_terminal: Vec<f64>,
    pub compression: Vec<f64>,
}

impl OperatingPoint {
    pub(crate) fn check(&self, net: &Network) -> Result<(), RobustError> {
        for (what, got, expected) in [
            ("operating source productions", self.q_source.len(), net.sources().len()),
            ("operating terminal potentials", self.pi_terminal.len(), net.terminals().len()),
            ("compression settings", self.compression.len(), net.compressors().len()),
        ] {
            if got != expected {
                return Err(RobustError::Core(CoreError::DimensionMismatch {
                    what,
                    expected,
                    got,
                }));
            }
        }
        for (&edge, &b) in net.compressors().iter().zip(&self.compression) {
            let (lo, hi) = net.edges()[edge.0]
                .law()
                .compression_box()
                .expect("compressor list only holds boxed edges");
            if !(b.is_finite() && b >= lo && b <= hi) {
                return Err(RobustError::CompressionOutsideBox { edge: edge.0, b, lo, hi });
            }
        }
        Ok(())
    }

    fn boundary(&self, scenario: &[f64]) -> BoundaryData {
        BoundaryData {
            q_source: self.q_source.clone(),
            q_internal: scenario.to_vec(),
            pi_terminal: self.pi_terminal.clone(),
        }
    }
}

/// One non-decreasing flow-to-currency map.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFn {
    /// `coef * q`.
    Affine { coef: f64 },
    /// Piecewise-linear interpolation through sorted breakpoints, extended
    /// beyond the ends with the boundary slopes.
    Table(PiecewiseLinear),
}

impl CostFn {
    pub fn eval(&self, q: f64) -> f64 {
        match self {
            CostFn::Affine { coef } => coef * q,
            CostFn::Table(table) => table.eval(q),
        }
    }

    fn is_non_decreasing(&self) -> bool {
        match self {
            CostFn::Affine { coef } => *coef >= 0.0,
            CostFn::Table(table) => table
                .points
                .windows(2)
                .all(|w| w[1].1 >= w[0].1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, RobustError> {
        if points.len() < 2 {
            return Err(RobustError::BadTable {
                reason: format!("need at least 2 breakpoints, got {}", points.len()),
            });
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(RobustError::BadTable {
                    reason: format!("breakpoints must increase strictly, got {} then {}", w[0].0, w[1].0),
                });
            }
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(RobustError::BadTable {
                reason: "breakpoints must be finite".into(),
            });
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn eval(&self, q: f64) -> f64 {
        let pts = &self.points;
        let seg = if q <= pts[0].0 {
            (pts[0], pts[1])
        } else if q >= pts[pts.len() - 1].0 {
            (pts[pts.len() - 2], pts[pts.len() - 1])
        } else {
            let hi = pts.partition_point(|(x, _)| *x <= q);
            (pts[hi - 1], pts[hi])
        };
        let ((x0, y0), (x1, y1)) = seg;
        y0 + (y1 - y0) / (x1 - x0) * (q - x0)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Per-source cost `g` and per-terminal payment `h`; the objective is
/// `c(q_S, q_T) = sum g_i(q_i) - sum h_i(q_i)`, evaluated at productions
/// (terminal productions are negative, so an affine payment at price `p`
/// contributes `-p * |q_T|`). Every entry must be non-decreasing; that is
/// what pins the worst case to the upper corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub source: Vec<CostFn>,
    pub terminal: Vec<CostFn>,
}

impl CostModel {
    pub fn new(source: Vec<CostFn>, terminal: Vec<CostFn>) -> Result<Self, RobustError> {
        for (which, list) in [("source cost", &source), ("terminal payment", &terminal)] {
            for (i, entry) in list.iter().enumerate() {
                if !entry.is_non_decreasing() {
                    return Err(RobustError::CostNotMonotone {
                        which: format!("{which} {i}"),
                    });
                }
            }
        }
        Ok(CostModel { source, terminal })
    }

    /// Affine model from per-source coefficients and per-terminal prices.
    pub fn affine(coefs: Vec<f64>, prices: Vec<f64>) -> Result<Self, RobustError> {
        Self::new(
            coefs.into_iter().map(|coef| CostFn::Affine { coef }).collect(),
            prices.into_iter().map(|coef| CostFn::Affine { coef }).collect(),
        )
    }

    /// All-zero costs sized for a network.
    pub fn zero(net: &Network) -> Self {
        CostModel {
            source: vec![CostFn::Affine { coef: 0.0 }; net.sources().len()],
            terminal: vec![CostFn::Affine { coef: 0.0 }; net.terminals().len()],
        }
    }

    pub fn cost(&self, q_source: &[f64], q_terminal: &[f64]) -> f64 {
        let g: f64 = self.source.iter().zip(q_source).map(|(c, &q)| c.eval(q)).sum();
        let h: f64 = self.terminal.iter().zip(q_terminal).map(|(c, &q)| c.eval(q)).sum();
        g - h
    }

    pub(crate) fn check(&self, net: &Network) -> Result<(), RobustError> {
        for (what, got, expected) in [
            ("source costs", self.source.len(), net.sources().len()),
            ("terminal payments", self.terminal.len(), net.terminals().len()),
        ] {
            if got != expected {
                return Err(RobustError::Core(CoreError::DimensionMismatch {
                    what,
                    expected,
                    got,
                }));
            }
        }
        Ok(())
    }

    /// The payment part of the objective alone, `sum h_i(q_i)`.
    pub fn terminal_payment(&self, q_terminal: &[f64]) -> f64 {
        self.terminal.iter().zip(q_terminal).map(|(c, &q)| c.eval(q)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Lower,
    Upper,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        })
    }
}

/// One potential bound broken at one corner. `margin` is the distance by
/// which the bound is exceeded (positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: NodeId,
    pub bound: BoundKind,
    pub corner: Corner,
    pub margin: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "node {} breaks its {} potential bound at the {} corner by {:.6}",
            self.node, self.bound, self.corner, self.margin
        )
    }
}

/// Outcome of the two-corner check.
#[derive(Debug, Clone)]
pub struct RobustVerdict {
    pub feasible: bool,
    /// Cost at the upper corner: the worst over the whole box.
    pub worst_cost: f64,
    pub violations: Vec<Violation>,
    pub lower_state: FlowState,
    pub upper_state: FlowState,
}

/// Bound check of a single concrete scenario.
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub node: NodeId,
    pub bound: BoundKind,
    pub margin: f64,
}

/// Solve, cost, and feasibility at one explicit scenario.
#[derive(Debug, Clone)]
pub struct DeterministicReport {
    pub state: FlowState,
    pub cost: f64,
    pub feasible: bool,
    pub violations: Vec<BoundViolation>,
}

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("scenario box entry {index} is not an ordered finite interval: [{lo}, {hi}]")]
    BadBox { index: usize, lo: f64, hi: f64 },
    #[error("search box for {what} entry {index} is not an ordered finite interval: [{lo}, {hi}]")]
    BadSearchBox {
        what: &'static str,
        index: usize,
        lo: f64,
        hi: f64,
    },
    #[error("seed value {value} for {what} entry {index} lies outside its search box [{lo}, {hi}]")]
    SeedOutsideBox {
        what: &'static str,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("compression {b} on edge {edge} lies outside its box [{lo}, {hi}]")]
    CompressionOutsideBox { edge: usize, b: f64, lo: f64, hi: f64 },
    #[error("{which} must be non-decreasing")]
    CostNotMonotone { which: String },
    #[error("bad cost table: {reason}")]
    BadTable { reason: String },
    #[error("steady solve did not converge at the {corner} corner: {source}")]
    Indeterminate { corner: Corner, source: SolveError },
    #[error(transparent)]
    Solver(SolveError),
}

fn tag_corner(result: Result<FlowState, SolveError>, corner: Corner) -> Result<FlowState, RobustError> {
    result.map_err(|e| match e {
        SolveError::NonConvergence { .. } => RobustError::Indeterminate { corner, source: e },
        other => RobustError::Solver(other),
    })
}

pub(crate) fn terminal_q(net: &Network, state: &FlowState) -> Vec<f64> {
    net.terminals().iter().map(|&t| state.q[t.0]).collect()
}

pub(crate) fn bound_violations(net: &Network, state: &FlowState) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for i in 0..net.n_nodes() {
        let (lo, hi) = net.potential_bounds(NodeId(i));
        let pi = state.pi[i];
        if pi < lo {
            out.push(BoundViolation {
                node: NodeId(i),
                bound: BoundKind::Lower,
                margin: lo - pi,
            });
        }
        if pi > hi {
            out.push(BoundViolation {
                node: NodeId(i),
                bound: BoundKind::Upper,
                margin: pi - hi,
            });
        }
    }
    out
}

/// Decides feasibility of an operating point against every scenario in the
/// box, and the worst-case cost, from the two corner solves alone.
///
/// Lower potential bounds are checked on the lower-corner state, upper
/// bounds on the upper-corner state; fixed terminal potentials are checked
/// against both their bounds (they do not move with the scenario). The
/// worst-case cost is the cost at the upper corner. A solver failure on
/// either corner is reported as [`RobustError::Indeterminate`], which is
/// not an infeasibility verdict.
pub fn robust_feasibility(
    net: &Network,
    scenarios: &ScenarioBox,
    op: &OperatingPoint,
    cost: &CostModel,
    options: &SolverOptions,
) -> Result<RobustVerdict, RobustError> {
    scenarios.check(net)?;
    op.check(net)?;
    cost.check(net)?;
    let effective = net.with_compression(&op.compression)?;

    let (lower_state, upper_state) = if scenarios.is_degenerate() {
        let state = tag_corner(
            solve_steady_state(&effective, &op.boundary(scenarios.lower()), options),
            Corner::Lower,
        )?;
        (state.clone(), state)
    } else {
        let lower_boundary = op.boundary(scenarios.lower());
        let upper_boundary = op.boundary(scenarios.upper());
        let (lower, upper) = par::join(
            || solve_steady_state(&effective, &lower_boundary, options),
            || solve_steady_state(&effective, &upper_boundary, options),
        );
        (tag_corner(lower, Corner::Lower)?, tag_corner(upper, Corner::Upper)?)
    };

    let mut violations = Vec::new();
    for i in 0..net.n_nodes() {
        let (lo, hi) = net.potential_bounds(NodeId(i));
        let below = lo - lower_state.pi[i];
        if below > 0.0 {
            violations.push(Violation {
                node: NodeId(i),
                bound: BoundKind::Lower,
                corner: Corner::Lower,
                margin: below,
            });
        }
        let above = upper_state.pi[i] - hi;
        if above > 0.0 {
            violations.push(Violation {
                node: NodeId(i),
                bound: BoundKind::Upper,
                corner: Corner::Upper,
                margin: above,
            });
        }
    }

    let worst_cost = cost.cost(&op.q_source, &terminal_q(net, &upper_state));
    Ok(RobustVerdict {
        feasible: violations.is_empty(),
        worst_cost,
        violations,
        lower_state,
        upper_state,
    })
}

/// Solves one explicit scenario and reports cost and bound feasibility
/// there. A convenience for operators inspecting a concrete realization;
/// the box-wide question belongs to [`robust_feasibility`].
pub fn deterministic_solve(
    net: &Network,
    scenario: &[f64],
    op: &OperatingPoint,
    cost: &CostModel,
    options: &SolverOptions,
) -> Result<DeterministicReport, RobustError> {
    if scenario.len() != net.internals().len() {
        return Err(RobustError::Core(CoreError::DimensionMismatch {
            what: "scenario",
            expected: net.internals().len(),
            got: scenario.len(),
        }));
    }
    op.check(net)?;
    cost.check(net)?;
    let effective = net.with_compression(&op.compression)?;
    let state = tag_corner(
        solve_steady_state(&effective, &op.boundary(scenario), options),
        Corner::Lower,
    )?;
    let violations = bound_violations(net, &state);
    let cost = cost.cost(&op.q_source, &terminal_q(net, &state));
    Ok(DeterministicReport {
        feasible: violations.is_empty(),
        cost,
        violations,
        state,
    })
}

/// Search boxes for the operator's decisions, plus the starting point.
/// Compressor boxes are read off the network's edge laws.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub q_source: Vec<(f64, f64)>,
    pub pi_terminal: Vec<(f64, f64)>,
    pub seed: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Full passes over the decision variables.
    pub sweeps: usize,
    /// Step multiplier applied after a sweep without improvement.
    pub shrink: f64,
    /// Initial step as a fraction of each box width.
    pub step_fraction: f64,
    /// Cap on feasibility evaluations (each is two corner solves).
    pub max_evaluations: usize,
    /// Seeded random starting probes evaluated besides the seed point.
    pub probes: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            sweeps: 30,
            shrink: 0.5,
            step_fraction: 0.1,
            max_evaluations: 10_000,
            probes: 16,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

/// What one candidate evaluation produced.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    Feasible { worst_cost: f64 },
    /// Sum of violation margins; smaller is closer to feasible.
    Infeasible { violation: f64 },
    /// A corner solve failed; the candidate is skipped, never coerced.
    Indeterminate,
}

impl EvalOutcome {
    /// Candidates order by (feasibility class, key): any feasible point
    /// beats any infeasible one, any determinate beats indeterminate.
    fn score(&self) -> (u8, f64) {
        match self {
            EvalOutcome::Feasible { worst_cost } => (0, *worst_cost),
            EvalOutcome::Infeasible { violation } => (1, *violation),
            EvalOutcome::Indeterminate => (2, f64::INFINITY),
        }
    }
}

fn better(a: &EvalOutcome, b: &EvalOutcome) -> bool {
    let (ra, ka) = a.score();
    let (rb, kb) = b.score();
    ra < rb || (ra == rb && ka.total_cmp(&kb).is_lt())
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub point: OperatingPoint,
    pub outcome: EvalOutcome,
    /// Whether this point became the incumbent when evaluated.
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub best: OperatingPoint,
    pub verdict: RobustVerdict,
    /// False means the budget ran out with no feasible candidate; `best`
    /// is then the least-violating point seen, as a diagnostic.
    pub found_feasible: bool,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

struct DimLayout {
    ranges: Vec<(f64, f64)>,
    n_source: usize,
    n_terminal: usize,
}

impl DimLayout {
    fn to_op(&self, x: &[f64]) -> OperatingPoint {
        OperatingPoint {
            q_source: x[..self.n_source].to_vec(),
            pi_terminal: x[self.n_source..self.n_source + self.n_terminal].to_vec(),
            compression: x[self.n_source + self.n_terminal..].to_vec(),
        }
    }
}

/// Minimizes the worst-case cost over robust-feasible operating points by
/// coordinate pattern search with shrinking steps.
///
/// The seed and a batch of seeded random probes are evaluated first; the
/// search then polls each decision variable up and down in a fixed order,
/// accepting strict improvements only, and halves the steps after any
/// sweep without one. While no feasible point is known the same machinery
/// descends on the total violation margin instead, so the search can walk
/// itself into the feasible region. Candidates whose corner solves fail
/// are skipped. Deterministic for a fixed seed and configuration.
pub fn optimize_operating_point(
    net: &Network,
    scenarios: &ScenarioBox,
    cost: &CostModel,
    space: &SearchSpace,
    config: &SearchConfig,
) -> Result<OptimizeOutcome, RobustError> {
    scenarios.check(net)?;
    cost.check(net)?;
    space.seed.check(net)?;

    let mut ranges = Vec::new();
    let mut seed_vec = Vec::new();
    let compressor_boxes: Vec<(f64, f64)> = net
        .compressors()
        .iter()
        .map(|&e| net.edges()[e.0].law().compression_box().expect("boxed"))
        .collect();
    for (what, boxes, seeds, expected) in [
        ("source production", &space.q_source, &space.seed.q_source, net.sources().len()),
        ("terminal potential", &space.pi_terminal, &space.seed.pi_terminal, net.terminals().len()),
        ("compression", &compressor_boxes, &space.seed.compression, net.compressors().len()),
    ] {
        if boxes.len() != expected {
            return Err(RobustError::Core(CoreError::DimensionMismatch {
                what: "search boxes",
                expected,
                got: boxes.len(),
            }));
        }
        for (i, (&(lo, hi), &seed)) in boxes.iter().zip(seeds).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(RobustError::BadSearchBox { what, index: i, lo, hi });
            }
            if !(seed >= lo && seed <= hi) {
                return Err(RobustError::SeedOutsideBox { what, index: i, value: seed, lo, hi });
            }
            ranges.push((lo, hi));
            seed_vec.push(seed);
        }
    }
    let layout = DimLayout {
        ranges,
        n_source: net.sources().len(),
        n_terminal: net.terminals().len(),
    };

    let mut trace = Vec::new();
    let mut evaluations = 0usize;
    let mut best_verdict: Option<RobustVerdict> = None;
    let mut incumbent = seed_vec.clone();
    let mut incumbent_outcome = EvalOutcome::Indeterminate;

    let evaluate = |x: &[f64]| -> Result<(EvalOutcome, Option<RobustVerdict>), RobustError> {
        let op = layout.to_op(x);
        match robust_feasibility(net, scenarios, &op, cost, &config.solver) {
            Ok(verdict) => {
                let outcome = if verdict.feasible {
                    EvalOutcome::Feasible { worst_cost: verdict.worst_cost }
                } else {
                    EvalOutcome::Infeasible {
                        violation: verdict.violations.iter().map(|v| v.margin).sum(),
                    }
                };
                Ok((outcome, Some(verdict)))
            }
            Err(RobustError::Indeterminate { .. }) => Ok((EvalOutcome::Indeterminate, None)),
            Err(other) => Err(other),
        }
    };

    // Seed plus seeded random probes; the best of the batch starts the
    // descent.
    let mut starters = vec![seed_vec.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.probes {
        let point: Vec<f64> = layout
            .ranges
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        starters.push(point);
    }
    starters.truncate(config.max_evaluations.max(1));
    let evaluated = par::map_indexed(starters.len(), |i| evaluate(&starters[i]));
    for (point, result) in starters.into_iter().zip(evaluated) {
        let (outcome, verdict) = result?;
        evaluations += 1;
        let accepted = best_verdict.is_none() && verdict.is_some()
            || better(&outcome, &incumbent_outcome);
        if accepted {
            incumbent = point.clone();
            incumbent_outcome = outcome.clone();
            if let Some(v) = verdict {
                best_verdict = Some(v);
            }
        }
        trace.push(TraceEntry {
            point: layout.to_op(&point),
            outcome,
            accepted,
        });
    }

    let mut steps: Vec<f64> = layout
        .ranges
        .iter()
        .map(|&(lo, hi)| config.step_fraction * (hi - lo))
        .collect();

    'sweeps: for _ in 0..config.sweeps {
        let mut improved = false;
        for d in 0..layout.ranges.len() {
            if steps[d] == 0.0 {
                continue;
            }
            if evaluations >= config.max_evaluations {
                break 'sweeps;
            }
            let (lo, hi) = layout.ranges[d];
            let mut polls = Vec::new();
            for direction in [1.0, -1.0] {
                let value = (incumbent[d] + direction * steps[d]).clamp(lo, hi);
                if value != incumbent[d] {
                    let mut point = incumbent.clone();
                    point[d] = value;
                    polls.push(point);
                }
            }
            polls.truncate(config.max_evaluations - evaluations);
            if polls.is_empty() {
                continue;
            }
            let results = if polls.len() == 2 {
                let (a, b) = par::join(|| evaluate(&polls[0]), || evaluate(&polls[1]));
                vec![a, b]
            } else {
                vec![evaluate(&polls[0])]
            };
            for (point, result) in polls.into_iter().zip(results) {
                let (outcome, verdict) = result?;
                evaluations += 1;
                let accepted = better(&outcome, &incumbent_outcome);
                if accepted {
                    incumbent = point.clone();
                    incumbent_outcome = outcome.clone();
                    best_verdict = verdict;
                    improved = true;
                }
                trace.push(TraceEntry {
                    point: layout.to_op(&point),
                    outcome,
                    accepted,
                });
            }
        }
        if !improved {
            for step in &mut steps {
                *step *= config.shrink;
            }
        }
    }

    let Some(verdict) = best_verdict else {
        // Every evaluated candidate failed to converge.
        return Err(RobustError::Indeterminate {
            corner: Corner::Lower,
            source: SolveError::NonConvergence {
                iterations: 0,
                gradient_norm: f64::NAN,
            },
        });
    };
    Ok(OptimizeOutcome {
        best: layout.to_op(&incumbent),
        found_feasible: matches!(incumbent_outcome, EvalOutcome::Feasible { .. }),
        verdict,
        evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipation::{DissipationFunction, GasPipe};
    use crate::network::NodeRole;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn pipe(c: f64) -> Arc<dyn DissipationFunction> {
        Arc::new(GasPipe::new(c).unwrap())
    }

    /// Source 0 - internal 1 - terminal 2, unit pipes, potentials boxed to
    /// [0, 4], q_0 = 1, pi_2 = 1, withdrawals q_1 in [-0.5, 0].
    fn worked_instance() -> (Network, ScenarioBox, OperatingPoint, CostModel) {
        let net = Network::new(
            vec![NodeRole::Source, NodeRole::Internal, NodeRole::Terminal],
            vec![(0, 1, pipe(1.0)), (1, 2, pipe(1.0))],
        )
        .unwrap()
        .with_potential_bounds(vec![(0.0, 4.0); 3])
        .unwrap();
        let scenarios = ScenarioBox::new(vec![-0.5], vec![0.0]).unwrap();
        let op = OperatingPoint {
            q_source: vec![1.0],
            pi_terminal: vec![1.0],
            compression: vec![],
        };
        let cost = CostModel::affine(vec![1.0], vec![2.0]).unwrap();
        (net, scenarios, op, cost)
    }

    #[test]
    fn worked_instance_is_feasible_with_known_corner_states() {
        let (net, scenarios, op, cost) = worked_instance();
        let verdict =
            robust_feasibility(&net, &scenarios, &op, &cost, &SolverOptions::default()).unwrap();
        assert!(verdict.feasible);
        assert!(verdict.violations.is_empty());

        // Upper corner (q_1 = 0): series flow 1, pi = (3, 2, 1), q_2 = -1.
        assert_relative_eq!(verdict.upper_state.pi[0], 3.0, max_relative = 1e-9);
        assert_relative_eq!(verdict.upper_state.pi[1], 2.0, max_relative = 1e-9);
        // Lower corner (q_1 = -0.5): phi_12 = 1 but phi_23 = 0.5, so
        // pi_1 = 1 + f(0.5) = 1.25 and pi_0 = 1.25 + f(1) = 2.25.
        assert_relative_eq!(verdict.lower_state.pi[0], 2.25, max_relative = 1e-9);
        assert_relative_eq!(verdict.lower_state.pi[1], 1.25, max_relative = 1e-9);

        // Worst cost sits at the upper corner: g(1) - h(-1) = 1 + 2 = 3.
        assert_relative_eq!(verdict.worst_cost, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn tightened_upper_bound_is_reported_with_its_margin() {
        let (net, scenarios, op, cost) = worked_instance();
        let net = net
            .with_potential_bounds(vec![(0.0, 2.9), (0.0, 4.0), (0.0, 4.0)])
            .unwrap();
        let verdict =
            robust_feasibility(&net, &scenarios, &op, &cost, &SolverOptions::default()).unwrap();
        assert!(!verdict.feasible);
        assert_eq!(verdict.violations.len(), 1);
        let v = &verdict.violations[0];
        assert_eq!(v.node, NodeId(0));
        assert_eq!(v.bound, BoundKind::Upper);
        assert_eq!(v.corner, Corner::Upper);
        assert_relative_eq!(v.margin, 0.1, max_relative = 1e-7);
    }

    #[test]
    fn degenerate_box_reduces_to_plain_feasibility() {
        let (net, _, op, cost) = worked_instance();
        let point = ScenarioBox::point(vec![-0.25]).unwrap();
        let verdict =
            robust_feasibility(&net, &point, &op, &cost, &SolverOptions::default()).unwrap();
        assert!(verdict.feasible);
        assert_eq!(verdict.lower_state, verdict.upper_state);
    }

    #[test]
    fn solver_failure_is_indeterminate_not_infeasible() {
        let (net, scenarios, op, cost) = worked_instance();
        let options = SolverOptions {
            max_iterations: 0,
            ..SolverOptions::default()
        };
        match robust_feasibility(&net, &scenarios, &op, &cost, &options) {
            Err(RobustError::Indeterminate { .. }) => {}
            other => panic!("expected Indeterminate, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_solve_reports_midbox_scenario() {
        let (net, _, op, cost) = worked_instance();
        // q_1 = -0.25: phi_23 = 0.75, pi_1 = 1 + 0.5625, pi_0 = pi_1 + 1,
        // cost = 1 - 2 * (-0.75) = 2.5.
        let report =
            deterministic_solve(&net, &[-0.25], &op, &cost, &SolverOptions::default()).unwrap();
        assert!(report.feasible);
        assert_relative_eq!(report.state.pi[1], 1.5625, max_relative = 1e-9);
        assert_relative_eq!(report.state.pi[0], 2.5625, max_relative = 1e-9);
        assert_relative_eq!(report.cost, 2.5, max_relative = 1e-9);
    }

    #[test]
    fn scenario_boxes_reject_malformed_intervals() {
        assert!(matches!(
            ScenarioBox::new(vec![0.0], vec![-1.0]),
            Err(RobustError::BadBox { .. })
        ));
        assert!(matches!(
            ScenarioBox::new(vec![f64::NAN], vec![0.0]),
            Err(RobustError::BadBox { .. })
        ));
        assert!(ScenarioBox::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn cost_tables_interpolate_and_enforce_monotonicity() {
        let table = PiecewiseLinear::new(vec![(-2.0, -4.0), (0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(table.eval(-1.0), -2.0);
        assert_eq!(table.eval(0.5), 0.5);
        // Extrapolation continues the boundary slopes.
        assert_eq!(table.eval(-3.0), -6.0);
        assert_eq!(table.eval(2.0), 2.0);

        assert!(matches!(
            CostModel::new(
                vec![],
                vec![CostFn::Table(
                    PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap()
                )],
            ),
            Err(RobustError::CostNotMonotone { .. })
        ));
        assert!(matches!(
            CostModel::affine(vec![1.0], vec![-2.0]),
            Err(RobustError::CostNotMonotone { .. })
        ));
        assert!(PiecewiseLinear::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(PiecewiseLinear::new(vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn optimizer_matches_exhaustive_grid_on_the_worked_instance() {
        let (net, scenarios, _, cost) = worked_instance();
        let space = SearchSpace {
            q_source: vec![(0.0, 1.0)],
            pi_terminal: vec![(1.0, 4.0)],
            seed: OperatingPoint {
                q_source: vec![1.0],
                pi_terminal: vec![1.0],
                compression: vec![],
            },
        };
        let outcome = optimize_operating_point(
            &net,
            &scenarios,
            &cost,
            &space,
            &SearchConfig::default(),
        )
        .unwrap();
        assert!(outcome.found_feasible);
        assert!(outcome.verdict.feasible);

        // Independent check: exhaustive grid over the two decisions.
        let mut grid_best = f64::INFINITY;
        for i in 0..11 {
            for j in 0..11 {
                let op = OperatingPoint {
                    q_source: vec![i as f64 / 10.0],
                    pi_terminal: vec![1.0 + 3.0 * j as f64 / 10.0],
                    compression: vec![],
                };
                let verdict =
                    robust_feasibility(&net, &scenarios, &op, &cost, &SolverOptions::default())
                        .unwrap();
                if verdict.feasible && verdict.worst_cost < grid_best {
                    grid_best = verdict.worst_cost;
                }
            }
        }
        assert!(
            outcome.verdict.worst_cost <= grid_best + 1e-9,
            "search found {}, grid found {grid_best}",
            outcome.verdict.worst_cost
        );

        // Accepted feasible steps never worsen the worst-case cost.
        let mut last = f64::INFINITY;
        for entry in outcome.trace.iter().filter(|e| e.accepted) {
            if let EvalOutcome::Feasible { worst_cost } = entry.outcome {
                assert!(worst_cost <= last + 1e-12);
                last = worst_cost;
            }
        }
    }

    #[test]
    fn optimizer_walks_into_feasibility_through_a_compressor() {
        // Without boost the source sits at pi = 2 > 1.8; a boost of at
        // least 0.2 is needed. Source production and terminal potential are
        // pinned by collapsed boxes.
        let net = Network::new(
            vec![NodeRole::Source, NodeRole::Internal, NodeRole::Terminal],
            vec![
                (
                    0,
                    1,
                    Arc::new(GasPipe::with_compressor(1.0, 0.0, 0.0, 2.0).unwrap())
                        as Arc<dyn DissipationFunction>,
                ),
                (1, 2, pipe(1.0)),
            ],
        )
        .unwrap()
        .with_potential_bounds(vec![(0.0, 1.8), (0.0, 4.0), (0.0, 4.0)])
        .unwrap();
        let scenarios = ScenarioBox::point(vec![0.0]).unwrap();
        let cost = CostModel::affine(vec![1.0], vec![2.0]).unwrap();
        let space = SearchSpace {
            q_source: vec![(1.0, 1.0)],
            pi_terminal: vec![(1.0, 1.0)],
            seed: OperatingPoint {
                q_source: vec![1.0],
                pi_terminal: vec![1.0],
                compression: vec![0.0],
            },
        };
        let config = SearchConfig {
            probes: 0,
            ..SearchConfig::default()
        };
        let outcome =
            optimize_operating_point(&net, &scenarios, &cost, &space, &config).unwrap();
        assert!(outcome.found_feasible);
        assert!(outcome.best.compression[0] >= 0.2 - 1e-9);
        assert!(outcome.verdict.feasible);
    }

    #[test]
    fn optimizer_reports_best_infeasible_diagnostic() {
        let (net, scenarios, op, cost) = worked_instance();
        let net = net
            .with_potential_bounds(vec![(0.0, 0.5); 3])
            .unwrap();
        let space = SearchSpace {
            q_source: vec![(1.0, 1.0)],
            pi_terminal: vec![(1.0, 1.0)],
            seed: op,
        };
        let outcome = optimize_operating_point(
            &net,
            &scenarios,
            &cost,
            &space,
            &SearchConfig::default(),
        )
        .unwrap();
        assert!(!outcome.found_feasible);
        assert!(!outcome.verdict.feasible);
        assert!(!outcome.verdict.violations.is_empty());
    }

    #[test]
    fn optimizer_honors_the_evaluation_budget() {
        let (net, scenarios, op, cost) = worked_instance();
        let space = SearchSpace {
            q_source: vec![(0.0, 1.0)],
            pi_terminal: vec![(1.0, 4.0)],
            seed: op,
        };
        let config = SearchConfig {
            max_evaluations: 3,
            ..SearchConfig::default()
        };
        let outcome =
            optimize_operating_point(&net, &scenarios, &cost, &space, &config).unwrap();
        assert_eq!(outcome.evaluations, 3);
    }

    #[test]
    fn seeds_outside_their_boxes_are_rejected() {
        let (net, scenarios, op, cost) = worked_instance();
        let space = SearchSpace {
            q_source: vec![(0.0, 0.5)],
            pi_terminal: vec![(1.0, 4.0)],
            seed: op,
        };
        assert!(matches!(
            optimize_operating_point(&net, &scenarios, &cost, &space, &SearchConfig::default()),
            Err(RobustError::SeedOutsideBox { .. })
        ));
    }
}
