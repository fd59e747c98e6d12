//! Dataset and reference-trajectory loading.

use std::path::{Path, PathBuf};

use aeros_core::eval::lift;
use aeros_core::gio::{manhattan, parse_g2o_with, parse_tum, ManhattanConfig, ParseOptions};
use aeros_core::{AnyGraph, RobustConfig, Se3, SolverSettings};
use anyhow::{bail, Context};

use crate::method::Mode;
use crate::solve::solve_any;

pub const DATA_DIR_VAR: &str = "AEROS_DATA_DIR";

/// Where the reference trajectory of a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    /// Exact poses of a synthetic generator.
    Generated,
    /// A trajectory file supplied by the user.
    File,
    /// The L2 batch solution of the clean graph.
    CleanL2,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: AnyGraph,
    pub truth: Vec<Se3>,
    pub truth_source: TruthSource,
}

/// Resolves `name` as given, then under `$AEROS_DATA_DIR`.
pub fn resolve_path(name: &Path) -> PathBuf {
    if name.exists() || name.is_absolute() {
        return name.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(DATA_DIR_VAR) {
        let candidate = Path::new(&dir).join(name);
        if candidate.exists() {
            return candidate;
        }
    }
    name.to_path_buf()
}

pub fn read_graph(path: &Path, options: ParseOptions) -> anyhow::Result<AnyGraph> {
    let path = resolve_path(path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_g2o_with(&text, options).with_context(|| format!("in {}", path.display()))
}

/// Reads a reference trajectory: vertices of a g2o file, or TUM lines.
pub fn read_trajectory(path: &Path) -> anyhow::Result<Vec<Se3>> {
    let path = resolve_path(path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("g2o")) {
        let g = parse_g2o_with(&text, ParseOptions::default()).with_context(|| format!("in {}", path.display()))?;
        return Ok(match &g {
            AnyGraph::Se2(g) => lift(g.vertices()),
            AnyGraph::Se3(g) => g.vertices().to_vec(),
        });
    }
    let rows = parse_tum(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

/// `manhattan` or `manhattan:SEED` builds the synthetic Manhattan graph;
/// anything else is a g2o path. Without `truth`, file datasets are scored
/// against the L2 solution of the clean graph.
pub fn load_dataset(spec: &str, truth: Option<&Path>, options: ParseOptions) -> anyhow::Result<Dataset> {
    let (graph, generated, name) = if let Some(rest) = spec.strip_prefix("manhattan") {
        let mut cfg = ManhattanConfig::default();
        match rest.strip_prefix(':') {
            Some(seed) => cfg.seed = seed.parse().with_context(|| format!("invalid seed in dataset '{spec}'"))?,
            None if rest.is_empty() => {}
            None => bail!("unknown dataset '{spec}'"),
        }
        let d = manhattan(&cfg).context("synthetic walk revisited too few cells")?;
        (AnyGraph::Se2(d.graph), Some(lift(&d.truth)), spec.to_string())
    } else {
        let path = Path::new(spec);
        let name = path.file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
        (read_graph(path, options)?, None, name)
    };
    let (truth, truth_source) = match (truth, generated) {
        (Some(p), _) => (read_trajectory(p)?, TruthSource::File),
        (None, Some(t)) => (t, TruthSource::Generated),
        (None, None) => {
            let solved = solve_any(&graph, &RobustConfig::L2, &SolverSettings::default(), Mode::Batch)
                .context("solving the clean graph for a reference trajectory")?;
            (solved.trajectory, TruthSource::CleanL2)
        }
    };
    if truth.len() != graph.num_vertices() {
        bail!("reference has {} poses but the graph has {} vertices", truth.len(), graph.num_vertices());
    }
    Ok(Dataset { name, graph, truth, truth_source })
}
