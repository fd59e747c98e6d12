//! Experiment configuration, read from TOML or from `key = value` lines.

use std::path::{Path, PathBuf};

use aeros_core::eval::RTE_LENGTHS;
use aeros_core::gio::{Classification, CorruptionSpec, ParseOptions};
use aeros_core::SolverSettings;
use anyhow::{bail, Context};
use serde::Deserialize;

use crate::method::{MethodSpec, Mode};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `manhattan`, `manhattan:SEED` or a g2o path.
    pub dataset: String,
    /// Reference trajectory (TUM or g2o). Optional for synthetic datasets.
    pub truth: Option<PathBuf>,
    pub methods: Vec<String>,
    /// Outlier ratios in percent of the inlier loops; 0 is the clean graph.
    pub ratios: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// Edges per replay batch; 0 solves each graph in one batch.
    pub batch_size: usize,
    pub out_dir: PathBuf,
    pub rte_lengths: Vec<f64>,
    pub max_iterations: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Side of the outlier translation box; default half the bounding-box diagonal.
    pub translation_extent: Option<f64>,
    pub min_index_separation: usize,
    /// Treat repeated consecutive-id edges as loops.
    pub first_per_pair: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            dataset: "manhattan".into(),
            truth: None,
            methods: vec!["l2@batch".into(), "aeros".into(), "sc".into(), "dcs".into(), "gm".into()],
            ratios: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            runs: 10,
            seed: 0,
            batch_size: 500,
            out_dir: PathBuf::from("results"),
            rte_lengths: RTE_LENGTHS.to_vec(),
            max_iterations: s.max_iterations,
            abs_tol: s.abs_tol,
            rel_tol: s.rel_tol,
            translation_extent: None,
            min_index_separation: CorruptionSpec::default().min_index_separation,
            first_per_pair: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, falling back to `key = value` lines whose values may be
    /// bare strings or comma-separated lists.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        match toml::from_str::<Self>(text) {
            Ok(cfg) => Ok(cfg),
            Err(toml_err) => {
                let table = key_value_table(text).map_err(|e| anyhow::anyhow!("{e} (as TOML: {toml_err})"))?;
                Ok(Self::deserialize(table).context("invalid configuration")?)
            }
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn method_specs(&self) -> anyhow::Result<Vec<MethodSpec>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings { max_iterations: self.max_iterations, abs_tol: self.abs_tol, rel_tol: self.rel_tol, ..SolverSettings::default() }
    }

    pub fn default_mode(&self) -> Mode {
        Mode::from_batch_size(self.batch_size)
    }

    pub fn parse_options(&self) -> ParseOptions {
        let classification = if self.first_per_pair { Classification::FirstPerPair } else { Classification::Adjacent };
        ParseOptions { classification }
    }

    /// Corruption for every positive ratio, nested across ratios.
    pub fn corruption(&self) -> CorruptionSpec {
        let mut ratios: Vec<f64> = self.ratios.iter().copied().filter(|r| *r > 0.0).collect();
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        CorruptionSpec {
            ratios,
            seed: self.seed,
            nested: true,
            translation_extent: self.translation_extent,
            min_index_separation: self.min_index_separation,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.methods.is_empty() {
            bail!("at least one method is required");
        }
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            bail!("ratios must be a non-empty list of non-negative percentages");
        }
        if self.rte_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            bail!("rte_lengths must be positive");
        }
        if self.max_iterations == 0 || !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) {
            bail!("solver settings must have max_iterations ≥ 1 and non-negative tolerances");
        }
        self.method_specs()?;
        Ok(())
    }
}

fn key_value_table(text: &str) -> Result<toml::Table, String> {
    let mut table = toml::Table::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", k + 1));
        };
        table.insert(key.trim().to_string(), scalar_or_list(value.trim()));
    }
    Ok(table)
}

fn scalar_or_list(v: &str) -> toml::Value {
    let scalar = |s: &str| -> toml::Value {
        let s = s.trim();
        format!("v = {s}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(s.trim_matches('"').to_string()))
    };
    match scalar(v) {
        toml::Value::String(_) if v.contains(',') => toml::Value::Array(v.split(',').map(scalar).collect()),
        other => other,
    }
}
