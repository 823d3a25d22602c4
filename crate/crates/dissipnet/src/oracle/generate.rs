//! Seeded random instances: the test corpus generator.
//!
//! Networks are random recursive trees (node k attaches to a uniform
//! earlier node, so connectivity is structural) plus a configurable
//! number of extra chords, with pipe coefficients drawn uniformly.
//! Everything is driven by a counter-seeded ChaCha stream, so a (config,
//! seed) pair names one instance forever.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dissipation::{DissipationFunction, GasPipe};
use crate::network::{Network, NodeRole};
use crate::oracle::OracleError;
use crate::solver::BoundaryData;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub nodes: usize,
    /// Extra chords beyond the spanning tree, as a fraction of the node
    /// count; 0 keeps the instance a tree.
    pub extra_edge_fraction: f64,
    pub c_range: (f64, f64),
    /// Fixed pipe offsets; (0, 0) means plain pipes.
    pub b_range: (f64, f64),
    pub source_fraction: f64,
    pub terminal_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nodes: 10,
            extra_edge_fraction: 0.3,
            c_range: (0.5, 2.0),
            b_range: (0.0, 0.0),
            source_fraction: 0.2,
            terminal_fraction: 0.2,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(usize, usize), OracleError> {
        let bad = |reason: String| Err(OracleError::BadGenerator { reason });
        if self.nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if !(self.c_range.0 > 0.0 && self.c_range.1 >= self.c_range.0) {
            return bad(format!("resistance range {:?} is not positive-ordered", self.c_range));
        }
        if !(self.b_range.0 <= self.b_range.1 && self.b_range.0.is_finite() && self.b_range.1.is_finite())
        {
            return bad(format!("offset range {:?} is not ordered", self.b_range));
        }
        if !(self.extra_edge_fraction >= 0.0 && self.extra_edge_fraction.is_finite()) {
            return bad(format!("extra edge fraction {} is negative", self.extra_edge_fraction));
        }
        let n = self.nodes as f64;
        let n_sources = ((n * self.source_fraction).round() as usize).max(1);
        let n_terminals = ((n * self.terminal_fraction).round() as usize).max(1);
        if n_sources + n_terminals > self.nodes {
            return bad(format!(
                "{n_sources} sources and {n_terminals} terminals exceed {} nodes",
                self.nodes
            ));
        }
        Ok((n_sources, n_terminals))
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn random_network(config: &GeneratorConfig, seed: u64) -> Result<Network, OracleError> {
    let (n_sources, n_terminals) = config.validate()?;
    let n = config.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut roles = vec![NodeRole::Internal; n];
    for &id in &ids[..n_sources] {
        roles[id] = NodeRole::Source;
    }
    for &id in &ids[n_sources..n_sources + n_terminals] {
        roles[id] = NodeRole::Terminal;
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    for k in 1..n {
        let parent = rng.random_range(0..k);
        pairs.push((parent, k));
        used.insert((parent, k));
    }
    let extra = (config.extra_edge_fraction * n as f64).round() as usize;
    let mut attempts = 0;
    let mut added = 0;
    while added < extra && attempts < 20 * extra + 20 {
        attempts += 1;
        let x = rng.random_range(0..n);
        let y = rng.random_range(0..n);
        if x == y {
            continue;
        }
        let pair = (x.min(y), x.max(y));
        if used.insert(pair) {
            pairs.push(pair);
            added += 1;
        }
    }

    let mut edges: Vec<(usize, usize, Arc<dyn DissipationFunction>)> = Vec::new();
    for (a, b) in pairs {
        let c = uniform(&mut rng, config.c_range);
        let offset = uniform(&mut rng, config.b_range);
        let law: Arc<dyn DissipationFunction> = if offset == 0.0 {
            Arc::new(GasPipe::new(c).expect("generated resistance is positive"))
        } else {
            Arc::new(GasPipe::with_offset(c, offset).expect("generated offset is finite"))
        };
        edges.push((a, b, law));
    }
    Ok(Network::new(roles, edges)?)
}

/// Uniform boundary data: sources produce in (0.2, 1), internal customers
/// withdraw in (-0.8, 0), terminal potentials sit in (1, 3).
pub fn random_boundary(net: &Network, seed: u64) -> BoundaryData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BoundaryData {
        q_source: (0..net.sources().len())
            .map(|_| uniform(&mut rng, (0.2, 1.0)))
            .collect(),
        q_internal: (0..net.internals().len())
            .map(|_| uniform(&mut rng, (-0.8, 0.0)))
            .collect(),
        pi_terminal: (0..net.terminals().len())
            .map(|_| uniform(&mut rng, (1.0, 3.0)))
            .collect(),
    }
}

/// An ordered boundary pair: the first dominates the second by a bump in
/// (0.05, 0.3) on every production, and on every terminal potential
/// unless `equal_terminals` pins those to identical values.
pub fn random_ordered_pair(
    net: &Network,
    seed: u64,
    equal_terminals: bool,
) -> (BoundaryData, BoundaryData) {
    let lower = random_boundary(net, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut higher = lower.clone();
    for q in higher.q_source.iter_mut().chain(&mut higher.q_internal) {
        *q += uniform(&mut rng, (0.05, 0.3));
    }
    if !equal_terminals {
        for pi in &mut higher.pi_terminal {
            *pi += uniform(&mut rng, (0.05, 0.3));
        }
    }
    (higher, lower)
}
