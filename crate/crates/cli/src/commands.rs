//! Subcommands. Each returns the process exit code; errors map to 1.

use std::fmt::Write as _;
use std::path::PathBuf;

use aeros_core::eval::{ate, rte, RTE_LENGTHS};
use aeros_core::gio::{
    export_trajectory, format_number, inject_outliers_any, manhattan, write_any, write_g2o, Classification, CorruptionSpec, ManhattanConfig,
    ParseOptions, TrajectoryFormat,
};
use aeros_core::SolverSettings;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::dataset::{read_graph, read_trajectory};
use crate::experiment::run_experiment;
use crate::method::{MethodSpec, Mode};
use crate::solve::solve_any;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "aeros", version, about = "Robust pose-graph optimization and outlier experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one g2o graph and write the trajectory.
    Optimize(OptimizeArgs),
    /// Add seeded false loop closures to a g2o graph.
    Corrupt(CorruptArgs),
    /// Run methods × ratios × Monte-Carlo runs and write CSV reports.
    Experiment(ExperimentArgs),
    /// Compare an estimated trajectory with a reference; prints one CSV row.
    Evaluate(EvaluateArgs),
    /// Write the synthetic Manhattan graph and its ground truth.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tum,
    Csv,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Treat repeated edges between consecutive ids as loop closures.
    #[arg(long)]
    pub first_per_pair: bool,
}

impl ParseArgs {
    fn options(&self) -> ParseOptions {
        let classification = if self.first_per_pair { Classification::FirstPerPair } else { Classification::Adjacent };
        ParseOptions { classification }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub input: PathBuf,
    /// l2, aeros[:α_init], aeros-fixed:α, sc, sc-sigmoid, dcs[:Φ], gm[:c], huber[:k], cauchy[:c], welsch[:c]
    #[arg(long, default_value = "aeros")]
    pub method: String,
    /// Replay edges in batches of this size; 0 solves in one batch.
    #[arg(long, default_value_t = 0)]
    pub incremental: usize,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub out_trajectory: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Tum)]
    pub format: FormatArg,
    #[arg(long)]
    pub out_graph: Option<PathBuf>,
    #[command(flatten)]
    pub parse: ParseArgs,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    pub input: PathBuf,
    /// Outliers in percent of the inlier loop count.
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo run index.
    #[arg(long, default_value_t = 0)]
    pub run: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub translation_extent: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub min_index_separation: usize,
    #[command(flatten)]
    pub parse: ParseArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML or key = value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated method specs.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated outlier ratios in percent.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub estimate: PathBuf,
    pub reference: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub rte_lengths: Option<Vec<f64>>,
    /// Skip the rigid alignment.
    #[arg(long)]
    pub no_align: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = ManhattanConfig::default().poses)]
    pub poses: usize,
    #[arg(long, default_value_t = ManhattanConfig::default().loops)]
    pub loops: usize,
    /// Grid cells span [-W, W] on both axes.
    #[arg(long, default_value_t = ManhattanConfig::default().half_width)]
    pub half_width: i64,
    #[arg(long, default_value_t = ManhattanConfig::default().seed)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth trajectory in TUM form.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Experiment(a) => experiment(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Generate(a) => generate(a),
    }
}

fn write_file(path: &PathBuf, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn optimize(a: OptimizeArgs) -> anyhow::Result<u8> {
    let method: MethodSpec = a.method.parse()?;
    let graph = read_graph(&a.input, a.parse.options())?;
    let d = SolverSettings::default();
    let settings = SolverSettings {
        max_iterations: a.max_iterations.unwrap_or(d.max_iterations),
        abs_tol: a.abs_tol.unwrap_or(d.abs_tol),
        rel_tol: a.rel_tol.unwrap_or(d.rel_tol),
        ..d
    };
    let mode = method.mode.unwrap_or(Mode::from_batch_size(a.incremental));
    let out = solve_any(&graph, &method.config, &settings, mode)?;
    let r = &out.report;
    println!("method: {}", method.label);
    println!("converged: {}", r.converged);
    println!("iterations: {}", r.iterations);
    println!("objective: {} -> {}", format_number(r.initial_objective), format_number(r.final_objective));
    if let Some(alpha) = out.alpha {
        println!("alpha: {}", format_number(alpha));
    }
    println!("latent columns: {}", r.linearization.latent_columns);
    let rejected = out.weights.iter().filter(|w| **w < aeros_core::robust::REJECTION_THRESHOLD).count();
    println!("rejected loops: {rejected} of {}", out.weights.len());
    println!("wall seconds: {:.3}", r.wall_seconds);
    if let Some(p) = &a.out_trajectory {
        let format = match a.format {
            FormatArg::Tum => TrajectoryFormat::Tum,
            FormatArg::Csv => TrajectoryFormat::Csv,
        };
        write_file(p, &export_trajectory(&out.trajectory, format))?;
    }
    if let Some(p) = &a.out_graph {
        write_file(p, &write_any(&out.solved))?;
    }
    Ok(if r.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn corrupt(a: CorruptArgs) -> anyhow::Result<u8> {
    if !(a.ratio.is_finite() && a.ratio >= 0.0) {
        bail!("ratio must be a non-negative percentage");
    }
    let graph = read_graph(&a.input, a.parse.options())?;
    let spec = CorruptionSpec {
        ratios: vec![a.ratio],
        seed: a.seed,
        translation_extent: a.translation_extent,
        min_index_separation: a.min_index_separation,
        ..CorruptionSpec::default()
    };
    let out = inject_outliers_any(&graph, &spec, a.run)?.remove(0);
    write_file(&a.out, &write_any(&out))?;
    eprintln!("added {} loop closures", out.num_loops() - graph.num_loops());
    Ok(EXIT_OK)
}

pub fn experiment(a: ExperimentArgs) -> anyhow::Result<u8> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.dataset {
        cfg.dataset = v;
    }
    if a.truth.is_some() {
        cfg.truth = a.truth;
    }
    if let Some(v) = a.methods {
        cfg.methods = v;
    }
    if let Some(v) = a.ratios {
        cfg.ratios = v;
    }
    if let Some(v) = a.runs {
        cfg.runs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    let s = run_experiment(&cfg, a.jobs)?;
    eprintln!("{} rows ({} new, {} already present, {} failed) in {}", s.rows, s.new_rows, s.skipped, s.failed, cfg.out_dir.display());
    Ok(if s.rows > s.failed { EXIT_OK } else { EXIT_ERROR })
}

pub fn evaluate(a: EvaluateArgs) -> anyhow::Result<u8> {
    let est = read_trajectory(&a.estimate)?;
    let reference = read_trajectory(&a.reference)?;
    let lengths = a.rte_lengths.unwrap_or_else(|| RTE_LENGTHS.to_vec());
    if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        bail!("RTE lengths must be positive");
    }
    let (ate_rmse, _) = ate(&est, &reference, !a.no_align)?;
    let stats = rte(&est, &reference, &lengths)?;
    let mut header = String::from("ate_rmse");
    let mut row = format_number(ate_rmse);
    for s in &stats {
        let l = format_number(s.length);
        let _ = write!(header, ",rte_{l}_mean,rte_{l}_rmse");
        if s.count == 0 {
            row.push_str(",,");
        } else {
            let _ = write!(row, ",{},{}", format_number(s.mean), format_number(s.rmse));
        }
    }
    println!("{header}\n{row}");
    Ok(EXIT_OK)
}

pub fn generate(a: GenerateArgs) -> anyhow::Result<u8> {
    let cfg = ManhattanConfig { poses: a.poses, loops: a.loops, half_width: a.half_width, seed: a.seed, ..ManhattanConfig::default() };
    if cfg.poses < 2 || cfg.half_width < 1 {
        bail!("at least 2 poses and a half width of at least 1 are required");
    }
    let d = manhattan(&cfg).context("the walk revisits too few cells for that many loops")?;
    write_file(&a.out, &write_g2o(&d.graph))?;
    if let Some(p) = &a.truth {
        write_file(p, &export_trajectory(&d.truth, TrajectoryFormat::Tum))?;
    }
    Ok(EXIT_OK)
}
