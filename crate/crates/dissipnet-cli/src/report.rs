//! Rendering of command results, either as aligned human-readable text or
//! as versioned JSON records (`"schema": 1`) for machine consumption.

use dissipnet::oracle::{AquariusCertificate, SweepResult};
use dissipnet::robust::{DeterministicReport, OptimizeOutcome, RobustVerdict};
use dissipnet::{CostModel, FlowState, Network, NodeRole};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Records,
}

fn role_letter(role: NodeRole) -> &'static str {
    match role {
        NodeRole::Source => "S",
        NodeRole::Internal => "R",
        NodeRole::Terminal => "T",
    }
}

fn records(command: &str, mut body: Value) -> String {
    let object = body.as_object_mut().expect("record body is an object");
    object.insert("schema".into(), json!(1));
    object.insert("command".into(), json!(command));
    serde_json::to_string_pretty(&body).expect("records serialize")
}

fn state_json(net: &Network, state: &FlowState) -> Value {
    json!({
        "pi": state.pi,
        "q": state.q,
        "phi": state.phi,
        "edges": net.edges().iter().map(|e| {
            let (a, b) = e.endpoints();
            json!([a.0, b.0])
        }).collect::<Vec<_>>(),
    })
}

fn violations_json(verdict: &RobustVerdict) -> Vec<Value> {
    verdict
        .violations
        .iter()
        .map(|v| {
            json!({
                "node": v.node.0,
                "bound": v.bound.to_string(),
                "corner": v.corner.to_string(),
                "margin": v.margin,
            })
        })
        .collect()
}

pub fn solve(
    format: Format,
    net: &Network,
    label: &str,
    scenario: &[f64],
    report: &DeterministicReport,
    conservation: f64,
    drop_law: f64,
) -> String {
    match format {
        Format::Records => records(
            "solve",
            json!({
                "scenario_label": label,
                "scenario": scenario,
                "state": state_json(net, &report.state),
                "cost": report.cost,
                "feasible": report.feasible,
                "violations": report.violations.iter().map(|v| json!({
                    "node": v.node.0,
                    "bound": v.bound.to_string(),
                    "margin": v.margin,
                })).collect::<Vec<_>>(),
                "residuals": { "conservation": conservation, "drop": drop_law },
            }),
        ),
        Format::Text => {
            let mut out = String::new();
            let state = &report.state;
            out += &format!("scenario: {label} {scenario:?}\n\n");
            out += "node  role    potential    production\n";
            for k in 0..net.n_nodes() {
                out += &format!(
                    "{k:<5} {:<5} {:>12.6} {:>12.6}\n",
                    role_letter(net.role(dissipnet::NodeId(k))),
                    state.pi[k],
                    state.q[k]
                );
            }
            out += "\nedge  from  to        flow         drop\n";
            for (idx, edge) in net.edges().iter().enumerate() {
                let (a, b) = edge.endpoints();
                out += &format!(
                    "{idx:<5} {:<5} {:<5} {:>10.6} {:>12.6}\n",
                    a.0,
                    b.0,
                    state.phi[idx],
                    state.pi[a.0] - state.pi[b.0]
                );
            }
            out += &format!("\nconservation residual  {conservation:.3e}\n");
            out += &format!("drop-law residual      {drop_law:.3e}\n");
            out += &format!("cost                   {:.6}\n", report.cost);
            out += &format!("feasible               {}\n", yes_no(report.feasible));
            for v in &report.violations {
                out += &format!(
                    "  node {} breaks its {} potential bound by {:.6}\n",
                    v.node.0, v.bound, v.margin
                );
            }
            out
        }
    }
}

pub fn check(format: Format, net: &Network, verdict: &RobustVerdict, cost: &CostModel) -> String {
    let corner_cost = |state: &FlowState| {
        let q_t: Vec<f64> = net.terminals().iter().map(|&t| state.q[t.0]).collect();
        let q_s: Vec<f64> = net.sources().iter().map(|&s| state.q[s.0]).collect();
        cost.cost(&q_s, &q_t)
    };
    let lower_cost = corner_cost(&verdict.lower_state);
    match format {
        Format::Records => records(
            "check",
            json!({
                "feasible": verdict.feasible,
                "worst_cost": verdict.worst_cost,
                "lower_cost": lower_cost,
                "violations": violations_json(verdict),
                "lower_state": state_json(net, &verdict.lower_state),
                "upper_state": state_json(net, &verdict.upper_state),
            }),
        ),
        Format::Text => {
            let mut out = String::new();
            out += &format!(
                "verdict      {}\n",
                if verdict.feasible { "feasible" } else { "infeasible" }
            );
            out += &format!("worst cost   {:.6} (upper corner)\n", verdict.worst_cost);
            out += &format!("lower cost   {lower_cost:.6}\n");
            if verdict.violations.is_empty() {
                out += "violations   none\n";
            } else {
                out += "violations\n";
                for v in &verdict.violations {
                    out += &format!("  {v}\n");
                }
            }
            out
        }
    }
}

pub fn sweep(format: Format, net: &Network, result: &SweepResult, cost: &CostModel) -> String {
    let payment = |state: &FlowState| {
        let q_t: Vec<f64> = net.terminals().iter().map(|&t| state.q[t.0]).collect();
        cost.terminal_payment(&q_t)
    };
    let corner_label = |index: usize| {
        if index == result.lower_corner {
            "lower"
        } else if index == result.upper_corner {
            "upper"
        } else {
            ""
        }
    };
    match format {
        Format::Records => records(
            "sweep",
            json!({
                "resolution": result.resolution,
                "rows": result.scenarios.iter().enumerate().map(|(i, scenario)| {
                    match &result.outcomes[i] {
                        Some(outcome) => json!({
                            "index": i,
                            "scenario": scenario,
                            "cost": outcome.cost,
                            "payment": payment(&outcome.state),
                            "feasible": outcome.feasible,
                            "corner": if result.is_corner(i) { Value::from(corner_label(i)) } else { Value::Null },
                        }),
                        None => json!({
                            "index": i,
                            "scenario": scenario,
                            "skipped": true,
                            "corner": if result.is_corner(i) { Value::from(corner_label(i)) } else { Value::Null },
                        }),
                    }
                }).collect::<Vec<_>>(),
                "pi_max": result.pi_max.iter().enumerate().map(|(node, &(index, value))| {
                    json!({ "node": node, "index": index, "value": value })
                }).collect::<Vec<_>>(),
                "pi_min": result.pi_min.iter().enumerate().map(|(node, &(index, value))| {
                    json!({ "node": node, "index": index, "value": value })
                }).collect::<Vec<_>>(),
                "payment_min": { "index": result.payment_min.0, "value": result.payment_min.1 },
                "skipped": result.skipped,
                "all_feasible": result.all_feasible,
            }),
        ),
        Format::Text => {
            let mut out = String::new();
            out += &format!(
                "resolution {} -> {} scenarios, {} skipped\n\n",
                result.resolution,
                result.len(),
                result.skipped.len()
            );
            out += &format!(
                "{:<6} {:<28} {:>11} {:>11}  {:<9} corner\n",
                "index", "scenario", "cost", "payment", "feasible"
            );
            for (i, scenario) in result.scenarios.iter().enumerate() {
                let cells: Vec<String> = scenario.iter().map(|q| format!("{q:.4}")).collect();
                match &result.outcomes[i] {
                    Some(outcome) => {
                        out += &format!(
                            "{i:<6} {:<28} {:>11.6} {:>11.4}  {:<9} {}\n",
                            cells.join(" "),
                            outcome.cost,
                            payment(&outcome.state),
                            yes_no(outcome.feasible),
                            corner_label(i)
                        );
                    }
                    None => {
                        out += &format!(
                            "{i:<6} {:<28} (solver did not converge) {}\n",
                            cells.join(" "),
                            corner_label(i)
                        );
                    }
                }
            }
            out += &format!(
                "\n{:<5} {:>12} {:>9} {:>12} {:>9}\n",
                "node", "pi min", "at index", "pi max", "at index"
            );
            for node in 0..net.n_nodes() {
                let (imin, vmin) = result.pi_min[node];
                let (imax, vmax) = result.pi_max[node];
                out += &format!(
                    "{node:<5} {vmin:>12.6} {imin:>9} {vmax:>12.6} {imax:>9}\n"
                );
            }
            out += &format!(
                "\nminimum payment {:.6} at index {}\n",
                result.payment_min.1, result.payment_min.0
            );
            out += &format!("all feasible: {}\n", yes_no(result.all_feasible));
            out
        }
    }
}

pub fn optimize(format: Format, outcome: &OptimizeOutcome) -> String {
    match format {
        Format::Records => records(
            "optimize",
            json!({
                "found_feasible": outcome.found_feasible,
                "worst_cost": outcome.verdict.worst_cost,
                "evaluations": outcome.evaluations,
                "best": {
                    "q_source": outcome.best.q_source,
                    "pi_terminal": outcome.best.pi_terminal,
                    "compression": outcome.best.compression,
                },
                "feasible": outcome.verdict.feasible,
                "violations": violations_json(&outcome.verdict),
            }),
        ),
        Format::Text => {
            let mut out = String::new();
            out += &format!("found feasible  {}\n", yes_no(outcome.found_feasible));
            out += &format!("worst cost      {:.6}\n", outcome.verdict.worst_cost);
            out += &format!("evaluations     {}\n", outcome.evaluations);
            out += &format!("q_source        {}\n", vector(&outcome.best.q_source));
            out += &format!("pi_terminal     {}\n", vector(&outcome.best.pi_terminal));
            out += &format!("compression     {}\n", vector(&outcome.best.compression));
            if !outcome.verdict.feasible {
                out += "remaining violations\n";
                for v in &outcome.verdict.violations {
                    out += &format!("  {v}\n");
                }
            }
            out
        }
    }
}

pub fn certify(format: Format, certificate: &AquariusCertificate) -> String {
    match format {
        Format::Records => records(
            "certify",
            json!({
                "target": certificate.target.0,
                "strict": certificate.strict,
                "path": certificate.path.iter().map(|n| n.0).collect::<Vec<_>>(),
                "edges": certificate.edges.iter().map(|e| json!({
                    "from": e.from.0,
                    "to": e.to.0,
                    "flow_star": e.flow_star,
                    "flow": e.flow,
                })).collect::<Vec<_>>(),
            }),
        ),
        Format::Text => {
            let mut out = String::new();
            out += &format!(
                "certificate: {}, target node {}\n",
                if certificate.strict { "strict" } else { "non-strict" },
                certificate.target.0
            );
            let nodes: Vec<String> = certificate.path.iter().map(|n| n.0.to_string()).collect();
            out += &format!("path: {}\n\n", nodes.join(" -> "));
            out += "from  to       flow*        flow\n";
            for edge in &certificate.edges {
                out += &format!(
                    "{:<5} {:<5} {:>9.6} {:>11.6}\n",
                    edge.from.0, edge.to.0, edge.flow_star, edge.flow
                );
            }
            out
        }
    }
}

fn vector(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", cells.join(", "))
}

fn yes_no(value: bool) -> &'static str {
    if value {
        "yes"
    } else {
        "no"
    }
}
