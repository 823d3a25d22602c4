//! The instance file format: a strict, human-editable TOML document that
//! carries the network, the withdrawal box, the cost model, and the
//! operator's decision values or search boxes, plus optional solver and
//! search configuration. Unknown keys are rejected so that instance files
//! stay reviewable in diffs; `export` re-emits the parsed document in
//! canonical form, and re-parsing that output yields an identical model.

use std::sync::Arc;

use dissipnet::dissipation::{DissipationFunction, GasPipe};
use dissipnet::robust::{CostFn, PiecewiseLinear, SearchConfig, SearchSpace};
use dissipnet::{CostModel, Network, NodeRole, OperatingPoint, ScenarioBox, SolverOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA: u64 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema {0}; this tool reads schema {SCHEMA}")]
    Schema(u64),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(message: impl Into<String>) -> FileError {
    FileError::Invalid(message.into())
}

/// A fixed value or an inclusive interval, depending on how much freedom
/// the operator keeps over the quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Fixed(f64),
    Range([f64; 2]),
}

impl Setting {
    fn interval(self, what: &str) -> Result<(f64, f64), FileError> {
        let (lo, hi) = match self {
            Setting::Fixed(v) => (v, v),
            Setting::Range([lo, hi]) => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(invalid(format!("{what} must be finite, got [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(invalid(format!("{what} range is reversed: [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }

    /// The fixed value, or the midpoint of the interval.
    fn pick(self) -> f64 {
        match self {
            Setting::Fixed(v) => v,
            Setting::Range([lo, hi]) => 0.5 * (lo + hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    S,
    R,
    T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: usize,
    pub role: Role,
    /// Production: required on S (fixed or search box) and on R (the
    /// withdrawal interval); forbidden on T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Setting>,
    /// Held potential: required on T (fixed or search box); forbidden
    /// elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Setting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorEntry {
    pub b_min: f64,
    pub b_max: f64,
    /// Offset used when solving at the file's operating point; defaults
    /// to the box midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: usize,
    pub to: usize,
    /// Resistance, directly...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// ...or as a (length, alpha) pair with c = length * alpha / 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressor: Option<CompressorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    /// Per-source purchase coefficients, ascending node id.
    pub source: Vec<f64>,
    /// Per-terminal sale prices, ascending node id...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
    /// ...or per-terminal monotone tables of [production, payment]
    /// breakpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_tables: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Cap on feasibility evaluations in `optimize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema: u64,
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Costs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSection>,
}

/// Everything the commands need, assembled and validated.
pub struct Model {
    pub net: Network,
    pub scenarios: ScenarioBox,
    pub cost: CostModel,
    /// The file's operating point: fixed values as given, boxed decisions
    /// at their midpoints.
    pub seed: OperatingPoint,
    pub space: SearchSpace,
    pub solver: SolverOptions,
    pub search: SearchConfig,
}

pub fn parse(text: &str) -> Result<(NetworkFile, Model), FileError> {
    let file: NetworkFile = toml::from_str(text)?;
    let model = build(&file)?;
    Ok((file, model))
}

pub fn export(file: &NetworkFile) -> String {
    toml::to_string_pretty(file).expect("instance documents serialize")
}

fn build(file: &NetworkFile) -> Result<Model, FileError> {
    if file.schema != SCHEMA {
        return Err(FileError::Schema(file.schema));
    }
    let n = file.nodes.len();

    // Node ids must be exactly 0..n, in any order.
    let mut by_id: Vec<Option<&NodeEntry>> = vec![None; n];
    for node in &file.nodes {
        let slot = by_id.get_mut(node.id).ok_or_else(|| {
            invalid(format!(
                "node id {} out of range: ids must cover 0..{} exactly",
                node.id,
                n.saturating_sub(1)
            ))
        })?;
        if slot.is_some() {
            return Err(invalid(format!("duplicate node id {}", node.id)));
        }
        *slot = Some(node);
    }
    let by_id: Vec<&NodeEntry> = by_id.into_iter().map(|slot| slot.unwrap()).collect();

    let mut roles = Vec::with_capacity(n);
    let mut bounds = Vec::with_capacity(n);
    let mut q_source_boxes = Vec::new();
    let mut q_source_seed = Vec::new();
    let mut scenario_lo = Vec::new();
    let mut scenario_hi = Vec::new();
    let mut pi_terminal_boxes = Vec::new();
    let mut pi_terminal_seed = Vec::new();
    for node in &by_id {
        let id = node.id;
        match node.role {
            Role::S => {
                let q = node
                    .q
                    .ok_or_else(|| invalid(format!("source node {id} needs q")))?;
                let (lo, hi) = q.interval(&format!("q of node {id}"))?;
                q_source_boxes.push((lo, hi));
                q_source_seed.push(q.pick());
                roles.push(NodeRole::Source);
            }
            Role::R => {
                let q = node
                    .q
                    .ok_or_else(|| invalid(format!("internal node {id} needs q")))?;
                let (lo, hi) = q.interval(&format!("q of node {id}"))?;
                scenario_lo.push(lo);
                scenario_hi.push(hi);
                roles.push(NodeRole::Internal);
            }
            Role::T => {
                let pi = node
                    .pi
                    .ok_or_else(|| invalid(format!("terminal node {id} needs pi")))?;
                let (lo, hi) = pi.interval(&format!("pi of node {id}"))?;
                pi_terminal_boxes.push((lo, hi));
                pi_terminal_seed.push(pi.pick());
                roles.push(NodeRole::Terminal);
            }
        }
        if node.role == Role::T && node.q.is_some() {
            return Err(invalid(format!(
                "terminal node {id} cannot carry q: its production is determined by the network"
            )));
        }
        if node.role != Role::T && node.pi.is_some() {
            return Err(invalid(format!(
                "node {id} cannot carry pi: only terminals hold their potential"
            )));
        }
        let lo = node.pi_min.unwrap_or(f64::NEG_INFINITY);
        let hi = node.pi_max.unwrap_or(f64::INFINITY);
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(invalid(format!(
                "potential bounds of node {id} are not ordered: [{lo}, {hi}]"
            )));
        }
        bounds.push((lo, hi));
    }

    let mut edges: Vec<(usize, usize, Arc<dyn DissipationFunction>)> = Vec::new();
    let mut compression_seed = Vec::new();
    for (index, edge) in file.edges.iter().enumerate() {
        if edge.from >= edge.to {
            return Err(invalid(format!(
                "edge {index} must be written from the lower node id: {} -> {}",
                edge.from, edge.to
            )));
        }
        if edge.to >= n {
            return Err(invalid(format!(
                "edge {index} references node {} beyond the node table",
                edge.to
            )));
        }
        let c = match (edge.c, edge.length, edge.alpha) {
            (Some(c), None, None) => c,
            (None, Some(length), Some(alpha)) => length * alpha / 2.0,
            _ => {
                return Err(invalid(format!(
                    "edge {index} needs either c or the (length, alpha) pair"
                )))
            }
        };
        let law: Arc<dyn DissipationFunction> = match edge.compressor {
            None => Arc::new(
                GasPipe::new(c).map_err(|e| invalid(format!("edge {index}: {e}")))?,
            ),
            Some(comp) => {
                let b = comp.b.unwrap_or(0.5 * (comp.b_min + comp.b_max));
                compression_seed.push(b);
                Arc::new(
                    GasPipe::with_compressor(c, b, comp.b_min, comp.b_max)
                        .map_err(|e| invalid(format!("edge {index}: {e}")))?,
                )
            }
        };
        edges.push((edge.from, edge.to, law));
    }

    let net = Network::new(roles, edges)
        .and_then(|net| net.with_potential_bounds(bounds))
        .map_err(|e| invalid(e.to_string()))?;
    let report = net.validate();
    if !report.is_admissible() {
        return Err(invalid(format!("network is not admissible: {report}")));
    }

    let cost = match &file.costs {
        None => CostModel::zero(&net),
        Some(costs) => {
            if costs.source.len() != net.sources().len() {
                return Err(invalid(format!(
                    "costs.source has {} entries for {} source nodes",
                    costs.source.len(),
                    net.sources().len()
                )));
            }
            let source = costs.source.iter().map(|&coef| CostFn::Affine { coef }).collect();
            let terminal = match (&costs.terminal, &costs.terminal_tables) {
                (Some(prices), None) => {
                    prices.iter().map(|&coef| CostFn::Affine { coef }).collect()
                }
                (None, Some(tables)) => tables
                    .iter()
                    .map(|points| {
                        let points = points.iter().map(|&[q, v]| (q, v)).collect();
                        PiecewiseLinear::new(points).map(CostFn::Table)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid(e.to_string()))?,
                (None, None) => vec![CostFn::Affine { coef: 0.0 }; net.terminals().len()],
                (Some(_), Some(_)) => {
                    return Err(invalid(
                        "costs carries both terminal prices and terminal tables; pick one",
                    ))
                }
            };
            if terminal.len() != net.terminals().len() {
                return Err(invalid(format!(
                    "costs describe {} terminals but the network has {}",
                    terminal.len(),
                    net.terminals().len()
                )));
            }
            CostModel::new(source, terminal).map_err(|e| invalid(e.to_string()))?
        }
    };

    let scenarios =
        ScenarioBox::new(scenario_lo, scenario_hi).map_err(|e| invalid(e.to_string()))?;
    let seed = OperatingPoint {
        q_source: q_source_seed,
        pi_terminal: pi_terminal_seed,
        compression: compression_seed,
    };
    let space = SearchSpace {
        q_source: q_source_boxes,
        pi_terminal: pi_terminal_boxes,
        seed: seed.clone(),
    };

    let solver_section = file.solver.unwrap_or_default();
    let solver = SolverOptions {
        tolerance: solver_section.tolerance,
        max_iterations: solver_section
            .max_iterations
            .unwrap_or(SolverOptions::default().max_iterations),
        ..SolverOptions::default()
    };
    let search_section = file.search.unwrap_or_default();
    let defaults = SearchConfig::default();
    let search = SearchConfig {
        max_evaluations: search_section.budget.unwrap_or(defaults.max_evaluations),
        seed: search_section.seed.unwrap_or(defaults.seed),
        sweeps: search_section.sweeps.unwrap_or(defaults.sweeps),
        probes: search_section.probes.unwrap_or(defaults.probes),
        solver: solver.clone(),
        ..defaults
    };

    Ok(Model {
        net,
        scenarios,
        cost,
        seed,
        space,
        solver,
        search,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_NODE: &str = r#"
schema = 1

[[nodes]]
id = 0
role = "S"
q = 1.0

[[nodes]]
id = 1
role = "R"
q = [-0.5, 0.0]

[[nodes]]
id = 2
role = "T"
pi = 1.0

[[edges]]
from = 0
to = 1
c = 1.0

[[edges]]
from = 1
to = 2
c = 1.0

[costs]
source = [1.0]
terminal = [2.0]
"#;

    #[test]
    fn worked_instance_parses_to_the_expected_model() {
        let (_, model) = parse(THREE_NODE).unwrap();
        assert_eq!(model.net.n_nodes(), 3);
        assert_eq!(model.net.internals().len(), 1);
        assert_eq!(model.scenarios.lower(), &[-0.5]);
        assert_eq!(model.scenarios.upper(), &[0.0]);
        assert_eq!(model.seed.q_source, vec![1.0]);
        assert_eq!(model.seed.pi_terminal, vec![1.0]);
        assert!(model.seed.compression.is_empty());
        assert_eq!(model.cost.cost(&[1.0], &[-1.0]), 3.0);
    }

    #[test]
    fn export_round_trips_to_an_identical_document() {
        let (file, _) = parse(THREE_NODE).unwrap();
        let text = export(&file);
        let (again, _) = parse(&text).unwrap();
        assert_eq!(file, again);
        assert_eq!(text, export(&again));
    }

    #[test]
    fn boxed_decisions_become_search_space_and_midpoint_seed() {
        let text = THREE_NODE
            .replace("q = 1.0", "q = [0.2, 1.0]")
            .replace("pi = 1.0", "pi = [1.0, 2.0]");
        let (_, model) = parse(&text).unwrap();
        assert_eq!(model.space.q_source, vec![(0.2, 1.0)]);
        assert_eq!(model.space.pi_terminal, vec![(1.0, 2.0)]);
        assert_eq!(model.seed.q_source, vec![0.6]);
        assert_eq!(model.seed.pi_terminal, vec![1.5]);
    }

    #[test]
    fn reversed_ranges_and_unknown_keys_are_rejected() {
        let reversed = THREE_NODE.replace("q = [-0.5, 0.0]", "q = [0.0, -0.5]");
        assert!(matches!(parse(&reversed), Err(FileError::Invalid(m)) if m.contains("reversed")));
        let unknown = THREE_NODE.replace("c = 1.0", "c = 1.0\nwidth = 2.0");
        assert!(matches!(parse(&unknown), Err(FileError::Parse(_))));
        let last_wins = THREE_NODE.replace("schema = 1", "schema = 3");
        assert!(matches!(parse(&last_wins), Err(FileError::Schema(3))));
    }

    #[test]
    fn role_key_combinations_are_policed() {
        let pi_on_source = THREE_NODE.replace("q = 1.0", "q = 1.0\npi = 2.0");
        assert!(parse(&pi_on_source).is_err());
        let q_on_terminal = THREE_NODE.replace("pi = 1.0", "pi = 1.0\nq = 0.5");
        assert!(parse(&q_on_terminal).is_err());
        let missing_q = THREE_NODE.replace("q = [-0.5, 0.0]\n", "");
        assert!(parse(&missing_q).is_err());
    }

    #[test]
    fn edges_must_run_from_the_lower_id_and_describe_one_resistance() {
        let backwards = THREE_NODE.replace("from = 0\nto = 1", "from = 1\nto = 0");
        assert!(matches!(parse(&backwards), Err(FileError::Invalid(m)) if m.contains("lower")));
        let both = THREE_NODE.replace("from = 0\nto = 1\nc = 1.0", "from = 0\nto = 1\nc = 1.0\nlength = 2.0\nalpha = 1.0");
        assert!(parse(&both).is_err());
        let neither = THREE_NODE.replace("from = 0\nto = 1\nc = 1.0", "from = 0\nto = 1");
        assert!(parse(&neither).is_err());
    }

    #[test]
    fn length_alpha_pair_builds_the_resistance() {
        let text = THREE_NODE.replace("from = 0\nto = 1\nc = 1.0", "from = 0\nto = 1\nlength = 4.0\nalpha = 0.5");
        let (_, model) = parse(&text).unwrap();
        // c = 4.0 * 0.5 / 2 = 1.0, so the model is unchanged.
        let state = dissipnet::solve_steady_state(
            &model.net,
            &dissipnet::BoundaryData {
                q_source: vec![1.0],
                q_internal: vec![0.0],
                pi_terminal: vec![1.0],
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((state.pi[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn compressor_blocks_join_the_search_dimensions() {
        let text = THREE_NODE.replace(
            "from = 0\nto = 1\nc = 1.0",
            "from = 0\nto = 1\nc = 1.0\ncompressor = { b_min = 0.0, b_max = 0.5 }",
        );
        let (_, model) = parse(&text).unwrap();
        assert_eq!(model.net.compressors().len(), 1);
        assert_eq!(model.seed.compression, vec![0.25]);
    }

    #[test]
    fn node_ids_must_cover_the_range_exactly() {
        let skipped = THREE_NODE.replace("id = 2", "id = 3");
        assert!(parse(&skipped).is_err());
        let duplicate = THREE_NODE.replace("id = 1", "id = 0");
        assert!(matches!(parse(&duplicate), Err(FileError::Invalid(m)) if m.contains("duplicate")));
    }
}
