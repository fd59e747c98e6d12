//! Monte-Carlo sweeps over methods × outlier ratios × runs.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use aeros_core::eval::{ate, error_cdf, rejection_score, rte, RejectionScore, RteStat};
use aeros_core::gio::{format_number, inject_outliers_any, CorruptionSpec};
use aeros_core::{AnyGraph, SolverSettings};
use anyhow::{bail, Context};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, Dataset};
use crate::method::{MethodSpec, Mode};
use crate::solve::solve_any;

pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub ratio: f64,
    pub run: usize,
    pub outliers: usize,
    pub loops: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub ate_rmse: f64,
    pub rte: Vec<RteStat>,
    pub final_alpha: Option<f64>,
    pub wall_seconds: f64,
    pub score: Option<RejectionScore>,
    pub latent_columns: usize,
    pub error: Option<String>,
    pub cdf: Vec<(f64, f64)>,
    pub alpha_trace: Vec<(usize, f64)>,
}

pub fn report_header(lengths: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["dataset", "method", "ratio", "run", "outliers", "loops", "converged", "iterations", "final_objective", "ate_rmse"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in lengths {
        let l = format_number(*l);
        h.push(format!("rte_{l}_mean"));
        h.push(format!("rte_{l}_rmse"));
    }
    for s in ["final_alpha", "wall_seconds", "precision", "recall", "f1", "latent_columns", "error"] {
        h.push(s.to_string());
    }
    h
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format_number(x)
    } else {
        String::new()
    }
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.dataset.clone(),
            self.method.clone(),
            num(self.ratio),
            self.run.to_string(),
            self.outliers.to_string(),
            self.loops.to_string(),
            self.converged.to_string(),
            self.iterations.to_string(),
            num(self.final_objective),
            num(self.ate_rmse),
        ];
        for s in &self.rte {
            let empty = s.count == 0;
            r.push(if empty { String::new() } else { num(s.mean) });
            r.push(if empty { String::new() } else { num(s.rmse) });
        }
        r.push(self.final_alpha.map_or_else(String::new, num));
        r.push(num(self.wall_seconds));
        match &self.score {
            Some(s) => r.extend([num(s.precision), num(s.recall), num(s.f1)]),
            None => r.extend([String::new(), String::new(), String::new()]),
        }
        r.push(self.latent_columns.to_string());
        r.push(self.error.clone().unwrap_or_default());
        r
    }

    fn failed(dataset: &str, method: &MethodSpec, ratio: f64, run: usize, lengths: &[f64], error: String) -> Self {
        Self {
            dataset: dataset.to_string(),
            method: method.label.clone(),
            ratio,
            run,
            outliers: 0,
            loops: 0,
            converged: false,
            iterations: 0,
            final_objective: f64::NAN,
            ate_rmse: f64::NAN,
            rte: lengths.iter().map(|&length| RteStat { length, count: 0, mean: 0.0, rmse: 0.0, rotation_rmse: 0.0 }).collect(),
            final_alpha: None,
            wall_seconds: 0.0,
            score: None,
            latent_columns: 0,
            error: Some(error),
            cdf: Vec::new(),
            alpha_trace: Vec::new(),
        }
    }
}

/// The graph of run `run` at `ratio` percent; ratio 0 is the clean graph.
/// `spec.ratios` must contain `ratio` when it is positive.
pub fn corrupted_graph(graph: &AnyGraph, spec: &CorruptionSpec, ratio: f64, run: usize) -> anyhow::Result<AnyGraph> {
    if ratio <= 0.0 {
        return Ok(graph.clone());
    }
    let Some(k) = spec.ratios.iter().position(|r| *r == ratio) else {
        bail!("ratio {ratio} is not part of the corruption spec");
    };
    let mut graphs = inject_outliers_any(graph, spec, run as u64)?;
    Ok(graphs.swap_remove(k))
}

/// Solves and scores one graph. Failures become records with `error` set.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    dataset: &Dataset,
    graph: &AnyGraph,
    method: &MethodSpec,
    mode: Mode,
    settings: &SolverSettings,
    lengths: &[f64],
    ratio: f64,
    run: usize,
) -> RunRecord {
    let out = match solve_any(graph, &method.config, settings, mode) {
        Ok(o) => o,
        Err(e) => return RunRecord::failed(&dataset.name, method, ratio, run, lengths, e.to_string()),
    };
    let metrics = ate(&out.trajectory, &dataset.truth, true).and_then(|(a, per)| Ok((a, per, rte(&out.trajectory, &dataset.truth, lengths)?)));
    let (ate_rmse, per_pose, rte) = match metrics {
        Ok(m) => m,
        Err(e) => return RunRecord::failed(&dataset.name, method, ratio, run, lengths, e.to_string()),
    };
    let outliers = out.provenance.iter().filter(|p| **p == aeros_core::Provenance::InjectedOutlier).count();
    RunRecord {
        dataset: dataset.name.clone(),
        method: method.label.clone(),
        ratio,
        run,
        outliers,
        loops: out.provenance.len(),
        converged: out.report.converged,
        iterations: out.report.iterations,
        final_objective: out.report.final_objective,
        ate_rmse,
        rte,
        final_alpha: out.alpha,
        wall_seconds: out.report.wall_seconds,
        score: rejection_score(&out.provenance, &out.weights).ok(),
        latent_columns: out.report.linearization.latent_columns,
        error: None,
        cdf: error_cdf(&per_pose),
        alpha_trace: out.alpha_trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSummary {
    pub rows: usize,
    pub new_rows: usize,
    pub skipped: usize,
    /// Rows of the final report that record a failed run.
    pub failed: usize,
}

type Key = (String, String, String);

fn key_of(method: &str, ratio: &str, run: &str) -> Key {
    (method.to_string(), ratio.to_string(), run.to_string())
}

fn read_existing(path: &Path, header: &[String]) -> anyhow::Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header {
        bail!("{} has different columns; use another out_dir or remove it", path.display());
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.with_context(|| format!("reading {}", path.display()))?.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_side_files(out_dir: &Path, method: &MethodSpec, rec: &RunRecord) -> anyhow::Result<()> {
    let stem = format!("{}_r{}_run{}.csv", method.file_stem(), num(rec.ratio), rec.run);
    if !rec.cdf.is_empty() {
        let mut text = String::from("error,fraction\n");
        for (e, f) in &rec.cdf {
            text.push_str(&format!("{},{}\n", num(*e), num(*f)));
        }
        fs::write(out_dir.join("cdf").join(&stem), text)?;
    }
    if !rec.alpha_trace.is_empty() {
        let mut text = String::from("step,vertices,alpha\n");
        for (k, (v, a)) in rec.alpha_trace.iter().enumerate() {
            text.push_str(&format!("{k},{v},{}\n", num(*a)));
        }
        fs::write(out_dir.join("alpha").join(&stem), text)?;
    }
    Ok(())
}

/// Runs every missing (method, ratio, run) row, appending to `report.csv`
/// as runs finish, then rewrites it in grid order.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<ExperimentSummary> {
    cfg.validate()?;
    let methods = cfg.method_specs()?;
    let dataset = load_dataset(&cfg.dataset, cfg.truth.as_deref(), cfg.parse_options())?;
    run_experiment_on(cfg, &methods, &dataset, jobs)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, methods: &[MethodSpec], dataset: &Dataset, jobs: usize) -> anyhow::Result<ExperimentSummary> {
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir.join("cdf"))?;
    fs::create_dir_all(out_dir.join("alpha"))?;
    let report = out_dir.join(REPORT_FILE);
    let header = report_header(&cfg.rte_lengths);
    let existing = read_existing(&report, &header)?;
    let done: HashSet<Key> = existing.iter().map(|r| key_of(&r[1], &r[2], &r[3])).collect();

    let mut tasks = Vec::new();
    for m in methods {
        for &ratio in &cfg.ratios {
            for run in 0..cfg.runs {
                if !done.contains(&key_of(&m.label, &num(ratio), &run.to_string())) {
                    tasks.push((m, ratio, run));
                }
            }
        }
    }
    let skipped = cfg.ratios.len() * cfg.runs * methods.len() - tasks.len();

    let spec = cfg.corruption();
    let settings = cfg.settings();
    if existing.is_empty() {
        write_rows(&report, &header, &[])?;
    }
    let appender = Mutex::new(fs::OpenOptions::new().append(true).open(&report)?);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<anyhow::Result<Vec<String>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(m, ratio, run)| {
                let rec = match corrupted_graph(&dataset.graph, &spec, ratio, run) {
                    Ok(g) => run_one(dataset, &g, m, m.mode_or(cfg.default_mode()), &settings, &cfg.rte_lengths, ratio, run),
                    Err(e) => RunRecord::failed(&dataset.name, m, ratio, run, &cfg.rte_lengths, format!("{e:#}")),
                };
                write_side_files(out_dir, m, &rec)?;
                let row = rec.csv_row();
                let mut line = csv::Writer::from_writer(Vec::new());
                line.write_record(&row)?;
                let bytes = line.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
                let mut f = appender.lock().expect("appender lock");
                f.write_all(&bytes)?;
                f.flush()?;
                log::info!("{} ratio {} run {}: ATE {}", m.label, num(ratio), run, num(rec.ate_rmse));
                Ok(row)
            })
            .collect()
    });
    drop(appender);

    let new_rows = results.len();
    let mut rows = existing;
    for r in results {
        rows.push(r?);
    }
    let failed = rows.iter().filter(|r| r.last().is_some_and(|e| !e.is_empty())).count();
    sort_rows(&mut rows, methods, &cfg.ratios);
    write_rows(&report, &header, &rows)?;
    Ok(ExperimentSummary { rows: rows.len(), new_rows, skipped, failed })
}

/// Grid order: method, then ratio as configured, then run. Rows outside the
/// grid keep their relative order at the end.
fn sort_rows(rows: &mut [Vec<String>], methods: &[MethodSpec], ratios: &[f64]) {
    let m_index: HashMap<&str, usize> = methods.iter().enumerate().map(|(k, m)| (m.label.as_str(), k)).collect();
    let r_index: HashMap<String, usize> = ratios.iter().enumerate().map(|(k, r)| (num(*r), k)).collect();
    rows.sort_by_key(|r| {
        let m = m_index.get(r[1].as_str()).copied().unwrap_or(usize::MAX);
        let q = r_index.get(&r[2]).copied().unwrap_or(usize::MAX);
        let run: usize = r[3].parse().unwrap_or(usize::MAX);
        (m, q, run)
    });
}
