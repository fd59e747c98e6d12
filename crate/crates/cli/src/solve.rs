//! One solve of a graph of either dimension, batch or replayed.

use aeros_core::eval::lift;
use aeros_core::gio::G2oPose;
use aeros_core::robust::effective_weights;
use aeros_core::solver::IncrementalStep;
use aeros_core::{solve_batch, solve_incremental, AnyGraph, PoseGraph, Provenance, RobustConfig, Se3, SolveReport, SolverError, SolverSettings};

use crate::method::Mode;

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Input graph with the solved poses as its vertices.
    pub solved: AnyGraph,
    pub trajectory: Vec<Se3>,
    /// Report of the final solve. For a replay, `iterations` and
    /// `wall_seconds` are summed over all batches.
    pub report: SolveReport,
    /// `(vertices, α)` after every accepted step (batch) or every batch (replay).
    pub alpha_trace: Vec<(usize, f64)>,
    pub alpha: Option<f64>,
    pub weights: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

pub fn solve_any(graph: &AnyGraph, config: &RobustConfig, settings: &SolverSettings, mode: Mode) -> Result<Outcome, SolverError> {
    match graph {
        AnyGraph::Se2(g) => solve_typed(g, config, settings, mode, AnyGraph::Se2),
        AnyGraph::Se3(g) => solve_typed(g, config, settings, mode, AnyGraph::Se3),
    }
}

fn solve_typed<P: G2oPose<D>, const D: usize>(
    graph: &PoseGraph<P, D>,
    config: &RobustConfig,
    settings: &SolverSettings,
    mode: Mode,
    wrap: fn(PoseGraph<P, D>) -> AnyGraph,
) -> Result<Outcome, SolverError> {
    let (report, state, alpha_trace) = match mode {
        Mode::Batch => {
            let (report, state) = solve_batch(graph, config, settings, None)?;
            let n = graph.num_vertices();
            let trace = report.alpha_trace.iter().map(|&a| (n, a)).collect();
            (report, state, trace)
        }
        Mode::Incremental(size) => {
            let (steps, state) = solve_incremental(graph, config, settings, size)?;
            let trace = steps.iter().filter_map(|s| s.alpha.map(|a| (s.vertices, a))).collect();
            (merge_steps(steps), state, trace)
        }
    };
    let weights = effective_weights(config, graph, &state.poses, &state.latents);
    let mut solved = graph.clone();
    solved.set_vertices(state.poses.clone());
    Ok(Outcome {
        trajectory: lift(&state.poses),
        solved: wrap(solved),
        alpha: state.alpha(config),
        report,
        alpha_trace,
        weights,
        provenance: graph.loops().iter().map(|l| l.provenance).collect(),
    })
}

fn merge_steps(steps: Vec<IncrementalStep>) -> SolveReport {
    let iterations = steps.iter().map(|s| s.report.iterations).sum();
    let wall = steps.iter().map(|s| s.report.wall_seconds).sum();
    let mut last = steps.into_iter().last().map(|s| s.report).unwrap_or_default();
    last.iterations = iterations;
    last.wall_seconds = wall;
    last
}

