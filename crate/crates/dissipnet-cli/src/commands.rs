//! Command implementations. Each returns the rendered report plus the exit
//! code carrying the verdict (0 feasible/ok, 2 infeasible), or a
//! [`CommandError`] that the entry point maps to exit 3 (numerical failure)
//! or 4 (usage).

use dissipnet::oracle::{
    aquarius_path, scenario_sweep, verify_certificate, OracleError, DEFAULT_SWEEP_BUDGET,
};
use dissipnet::robust::{
    deterministic_solve, optimize_operating_point, robust_feasibility, RobustError,
};
use dissipnet::solver::{solve_steady_state, SolveError};
use dissipnet::{BoundaryData, FlowState, NodeId};

use crate::format::{self, Model, NetworkFile};
use crate::report::{self, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

#[derive(Debug)]
pub enum CommandError {
    /// Bad input: arguments, file contents, precondition violations.
    Usage(String),
    /// The numerics gave up: non-convergence, degenerate certificates.
    Numerical(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => EXIT_USAGE,
            CommandError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CommandError::Usage(m) | CommandError::Numerical(m) => m,
        }
    }
}

fn from_solve(e: SolveError) -> CommandError {
    match e {
        SolveError::NonConvergence { .. } | SolveError::NonFinite { .. } => {
            CommandError::Numerical(e.to_string())
        }
        _ => CommandError::Usage(e.to_string()),
    }
}

fn from_robust(e: RobustError) -> CommandError {
    match e {
        RobustError::Indeterminate { .. } => CommandError::Numerical(e.to_string()),
        RobustError::Solver(inner) => from_solve(inner),
        _ => CommandError::Usage(e.to_string()),
    }
}

fn from_oracle(e: OracleError) -> CommandError {
    match e {
        OracleError::NothingConverged
        | OracleError::DegenerateFlows { .. }
        | OracleError::NotConserved { .. }
        | OracleError::BadCertificate { .. } => CommandError::Numerical(e.to_string()),
        OracleError::Solver(inner) => from_solve(inner),
        OracleError::Robust(inner) => from_robust(inner),
        _ => CommandError::Usage(e.to_string()),
    }
}

/// `lower`, `upper`, or explicit comma-separated withdrawals, one per
/// internal node in ascending node order.
fn resolve_scenario(model: &Model, choice: &str) -> Result<(String, Vec<f64>), CommandError> {
    match choice {
        "lower" => Ok(("lower corner".into(), model.scenarios.lower().to_vec())),
        "upper" => Ok(("upper corner".into(), model.scenarios.upper().to_vec())),
        _ => {
            let values: Result<Vec<f64>, _> =
                choice.split(',').map(|part| part.trim().parse::<f64>()).collect();
            let values = values.map_err(|_| {
                CommandError::Usage(format!(
                    "scenario must be lower, upper, or comma-separated numbers, got {choice:?}"
                ))
            })?;
            if values.len() != model.scenarios.len() {
                return Err(CommandError::Usage(format!(
                    "scenario has {} values for {} internal nodes",
                    values.len(),
                    model.scenarios.len()
                )));
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(CommandError::Usage(format!("scenario value {bad} is not finite")));
            }
            Ok(("explicit scenario".into(), values))
        }
    }
}

pub fn solve(model: &Model, choice: &str, format: Format) -> Result<(String, i32), CommandError> {
    let (label, scenario) = resolve_scenario(model, choice)?;
    let outcome = deterministic_solve(&model.net, &scenario, &model.seed, &model.cost, &model.solver)
        .map_err(from_robust)?;
    let effective = model
        .net
        .with_compression(&model.seed.compression)
        .map_err(|e| CommandError::Usage(e.to_string()))?;
    let residuals = effective
        .residuals(&outcome.state)
        .map_err(|e| CommandError::Usage(e.to_string()))?;
    let text = report::solve(
        format,
        &model.net,
        &label,
        &scenario,
        &outcome,
        residuals.max_conservation(),
        residuals.max_potential_drop(),
    );
    let code = if outcome.feasible { EXIT_OK } else { EXIT_INFEASIBLE };
    Ok((text, code))
}

pub fn check(model: &Model, format: Format) -> Result<(String, i32), CommandError> {
    let verdict = robust_feasibility(
        &model.net,
        &model.scenarios,
        &model.seed,
        &model.cost,
        &model.solver,
    )
    .map_err(from_robust)?;
    let text = report::check(format, &model.net, &verdict, &model.cost);
    let code = if verdict.feasible { EXIT_OK } else { EXIT_INFEASIBLE };
    Ok((text, code))
}

pub fn sweep(
    model: &Model,
    resolution: usize,
    budget: Option<usize>,
    format: Format,
) -> Result<(String, i32), CommandError> {
    let result = scenario_sweep(
        &model.net,
        &model.scenarios,
        &model.seed,
        &model.cost,
        resolution,
        &model.solver,
        budget.unwrap_or(DEFAULT_SWEEP_BUDGET),
    )
    .map_err(from_oracle)?;
    let text = report::sweep(format, &model.net, &result, &model.cost);
    let code = if !result.skipped.is_empty() {
        EXIT_NUMERICAL
    } else if result.all_feasible {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    };
    Ok((text, code))
}

pub fn optimize(
    model: &Model,
    budget: Option<usize>,
    seed: Option<u64>,
    format: Format,
) -> Result<(String, i32), CommandError> {
    let mut config = model.search.clone();
    if let Some(budget) = budget {
        config.max_evaluations = budget;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let outcome = optimize_operating_point(
        &model.net,
        &model.scenarios,
        &model.cost,
        &model.space,
        &config,
    )
    .map_err(from_robust)?;
    let text = report::optimize(format, &outcome);
    let code = if outcome.found_feasible { EXIT_OK } else { EXIT_INFEASIBLE };
    Ok((text, code))
}

pub fn certify(
    model: &Model,
    target: usize,
    scenarios: &str,
    format: Format,
) -> Result<(String, i32), CommandError> {
    let (first, second) = scenarios.split_once(':').ok_or_else(|| {
        CommandError::Usage(format!(
            "scenarios must be two choices joined by a colon, like upper:lower, got {scenarios:?}"
        ))
    })?;
    let (_, scenario_a) = resolve_scenario(model, first)?;
    let (_, scenario_b) = resolve_scenario(model, second)?;
    let effective = model
        .net
        .with_compression(&model.seed.compression)
        .map_err(|e| CommandError::Usage(e.to_string()))?;
    let solve_at = |scenario: Vec<f64>| -> Result<FlowState, CommandError> {
        let boundary = BoundaryData {
            q_source: model.seed.q_source.clone(),
            q_internal: scenario,
            pi_terminal: model.seed.pi_terminal.clone(),
        };
        solve_steady_state(&effective, &boundary, &model.solver).map_err(from_solve)
    };
    let state_a = solve_at(scenario_a)?;
    let state_b = solve_at(scenario_b)?;
    let certificate = aquarius_path(
        &effective,
        &state_a,
        &state_b,
        effective.terminals(),
        NodeId(target),
    )
    .map_err(from_oracle)?;
    verify_certificate(&effective, &certificate, &state_a, &state_b, effective.terminals())
        .map_err(from_oracle)?;
    Ok((report::certify(format, &certificate), EXIT_OK))
}

pub fn export(file: &NetworkFile) -> (String, i32) {
    (format::export(file), EXIT_OK)
}
