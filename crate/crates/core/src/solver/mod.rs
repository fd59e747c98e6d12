//! Levenberg–Marquardt over pose manifolds and latent scalars.
//!
//! Variables are ordered pose-major (`D` columns per pose, vertex order)
//! followed by the strategy's latent scalars, so the latent columns come last
//! in the factorization. Vertex 0 is anchored by a strong prior.

pub mod sparse;

use std::f64::consts::SQRT_2;
use std::time::Instant;

use nalgebra::{SMatrix, SVector};

use crate::error::SolverError;
use crate::graph::{attach_latents, AugmentedProblem, PoseGraph};
use crate::lie::{LieGroup, Tangent};
use crate::robust::{loop_blocks, scaled_edge_block, model_cost, robust_cost, Coefficients, ResidualBlock, RobustConfig};

use sparse::{NormalEquations, Pattern};

/// Information of the prior anchoring vertex 0, on every degree of freedom.
pub const GAUGE_INFORMATION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Consecutive small decreases required to declare convergence.
    pub patience: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            abs_tol: 1e-6,
            rel_tol: 1e-8,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_min: 1e-12,
            lambda_max: 1e8,
            patience: 3,
        }
    }
}

/// Poses plus the strategy's latent scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct State<P> {
    pub poses: Vec<P>,
    pub latents: Vec<f64>,
}

impl<P> State<P> {
    pub fn alpha(&self, config: &RobustConfig) -> Option<f64> {
        matches!(config, RobustConfig::Aeros(_)).then(|| self.latents[0])
    }
}

/// Column accounting of the assembled normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinearizationInfo {
    pub pose_columns: usize,
    pub latent_columns: usize,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Robust objective (χ² units) after every accepted step, starting with the initial state.
    pub objective_trace: Vec<f64>,
    /// Acceptance-model cost before and after every accepted step.
    pub model_trace: Vec<(f64, f64)>,
    pub alpha_trace: Vec<f64>,
    pub wall_seconds: f64,
    pub converged: bool,
    pub linearization: LinearizationInfo,
}

/// Objective reported to callers: `Σχ²` over odometry plus twice the robust
/// loop cost (χ² units). The gauge prior is excluded.
pub fn objective<P: LieGroup<D>, const D: usize>(graph: &PoseGraph<P, D>, config: &RobustConfig, state: &State<P>) -> f64 {
    let odo: f64 = graph.odometry().iter().map(|e| e.chi2(&state.poses[e.from], &state.poses[e.to])).sum();
    odo + 2.0 * robust_cost(config, graph, &state.poses, &state.latents)
}

struct Problem<'a, P, const D: usize> {
    graph: &'a PoseGraph<P, D>,
    config: &'a RobustConfig,
    anchor: P,
    pattern: Pattern<D>,
}

impl<'a, P: LieGroup<D>, const D: usize> Problem<'a, P, D> {
    fn new(graph: &'a PoseGraph<P, D>, config: &'a RobustConfig, anchor: P) -> Self {
        let pairs = graph.odometry().iter().map(|e| (e.from, e.to)).chain(graph.loops().iter().map(|l| (l.edge.from, l.edge.to)));
        let aug = attach_latents(graph, config);
        let links: Vec<(usize, usize)> = match config {
            RobustConfig::Sc(_) => graph.loops().iter().enumerate().flat_map(|(k, l)| [(l.edge.from, k), (l.edge.to, k)]).collect(),
            _ => Vec::new(),
        };
        let pattern = Pattern::new(graph.num_vertices(), aug.extra_variables(), pairs, links);
        Self { graph, config, anchor, pattern }
    }

    fn gauge_residual(&self, x0: &P) -> Tangent<D> {
        self.anchor.between(x0).log() * (GAUGE_INFORMATION.sqrt() / SQRT_2)
    }

    /// Cost the LM step is accepted against.
    fn cost(&self, state: &State<P>, coeffs: &Coefficients) -> f64 {
        let odo: f64 = self.graph.odometry().iter().map(|e| e.chi2(&state.poses[e.from], &state.poses[e.to])).sum();
        0.5 * odo + model_cost(self.config, self.graph, &state.poses, &state.latents, coeffs) + self.gauge_residual(&state.poses[0]).norm_squared()
    }

    fn blocks(&self, state: &State<P>, coeffs: &Coefficients) -> Vec<ResidualBlock<D>> {
        let mut out = Vec::with_capacity(self.graph.num_edges() * 2 + 2);
        for e in self.graph.odometry() {
            out.push(scaled_edge_block(e, &state.poses[e.from], &state.poses[e.to], 1.0));
        }
        loop_blocks(self.config, self.graph, &state.poses, &state.latents, coeffs, &mut out);
        out
    }

    fn assemble(&self, state: &State<P>, coeffs: &Coefficients, ne: &mut NormalEquations<'_, D>) {
        ne.clear();
        for b in self.blocks(state, coeffs) {
            match b {
                ResidualBlock::Pair { i, j, r, ji, jj, latent } => {
                    let (a, bb, jab) = if i < j { (i, j, ji.transpose() * jj) } else { (j, i, jj.transpose() * ji) };
                    ne.add_pose_block(i, i, &(ji.transpose() * ji));
                    ne.add_pose_block(j, j, &(jj.transpose() * jj));
                    ne.add_pose_block(a, bb, &jab);
                    ne.add_pose_gradient(i, &(ji.transpose() * r));
                    ne.add_pose_gradient(j, &(jj.transpose() * r));
                    if let Some((l, jl)) = latent {
                        ne.add_pose_latent(i, l, &(ji.transpose() * jl));
                        ne.add_pose_latent(j, l, &(jj.transpose() * jl));
                        ne.add_latent_diag(l, jl.norm_squared());
                        ne.add_latent_gradient(l, jl.dot(&r));
                    }
                }
                ResidualBlock::Scalar { latent, r, j } => {
                    ne.add_latent_diag(latent, j * j);
                    ne.add_latent_gradient(latent, j * r);
                }
            }
        }
        let r0 = self.gauge_residual(&state.poses[0]);
        let j0: SMatrix<f64, D, D> = P::right_jacobian_inv(&(r0 * (SQRT_2 / GAUGE_INFORMATION.sqrt()))) * (GAUGE_INFORMATION.sqrt() / SQRT_2);
        ne.add_pose_block(0, 0, &(j0.transpose() * j0));
        ne.add_pose_gradient(0, &(j0.transpose() * r0));
    }

    fn retract(&self, state: &State<P>, delta: &[f64]) -> State<P> {
        let poses = state
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| p.retract(&SVector::<f64, D>::from_column_slice(&delta[i * D..(i + 1) * D])))
            .collect();
        let base = state.poses.len() * D;
        let mut latents: Vec<f64> = state.latents.iter().enumerate().map(|(k, v)| v + delta[base + k]).collect();
        self.config.project_latents(&mut latents);
        State { poses, latents }
    }
}

fn is_small_decrease(decrease: f64, cost: f64, s: &SolverSettings) -> bool {
    decrease < s.abs_tol || decrease < s.rel_tol * cost.abs()
}

/// Initial state: dead-reckoned poses and the strategy's initial latents.
pub fn initial_state<P: LieGroup<D>, const D: usize>(graph: &PoseGraph<P, D>, config: &RobustConfig) -> Result<State<P>, SolverError> {
    Ok(State { poses: graph.dead_reckoning()?, latents: config.initial_latents(graph.loops().len()) })
}

/// Batch Levenberg–Marquardt solve from `init` (dead reckoning when `None`).
pub fn solve_batch<P: LieGroup<D>, const D: usize>(
    graph: &PoseGraph<P, D>,
    config: &RobustConfig,
    settings: &SolverSettings,
    init: Option<State<P>>,
) -> Result<(SolveReport, State<P>), SolverError> {
    let start = Instant::now();
    // runs are parallelized by the caller, so each factorization stays sequential
    faer::set_global_parallelism(faer::Par::Seq);
    let mut state = match init {
        Some(s) => s,
        None => initial_state(graph, config)?,
    };
    let aug: AugmentedProblem = attach_latents(graph, config);
    if state.poses.len() != graph.num_vertices() || state.latents.len() != aug.extra_variables() {
        return Err(SolverError::InvalidInput(format!(
            "state has {} poses and {} latents, graph needs {} and {}",
            state.poses.len(),
            state.latents.len(),
            graph.num_vertices(),
            aug.extra_variables()
        )));
    }
    config.project_latents(&mut state.latents);
    if graph.num_vertices() == 0 {
        return Ok((SolveReport { converged: true, ..SolveReport::default() }, state));
    }

    let problem = Problem::new(graph, config, state.poses[0]);
    let mut ne = NormalEquations::new(&problem.pattern);
    let diag = ne.diagonal_indices();
    let mut report = SolveReport {
        linearization: LinearizationInfo {
            pose_columns: graph.num_vertices() * D,
            latent_columns: problem.pattern.num_latents(),
            nonzeros: problem.pattern.nnz(),
        },
        ..SolveReport::default()
    };
    report.initial_objective = objective(graph, config, &state);
    report.objective_trace.push(report.initial_objective);
    if let Some(a) = state.alpha(config) {
        report.alpha_trace.push(a);
    }

    let mut lambda = settings.lambda_init;
    let mut small = 0usize;
    let mut coeffs = Coefficients::compute(config, graph, &state.poses, &state.latents);
    let mut cost = problem.cost(&state, &coeffs);
    if !cost.is_finite() {
        return Err(SolverError::NonFiniteResidual);
    }
    let mut damped = vec![0.0; ne.values.len()];

    while report.iterations < settings.max_iterations {
        report.iterations += 1;
        problem.assemble(&state, &coeffs, &mut ne);
        let grad_max = ne.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_max < 1e-12 {
            report.converged = true;
            break;
        }
        // latents on a bound whose descent direction leaves the feasible set stay put
        let (lo, hi) = config.latent_bounds();
        let base = state.poses.len() * D;
        let pinned: Vec<usize> = (0..state.latents.len())
            .filter(|&l| {
                let (v, g) = (state.latents[l], ne.gradient[base + l]);
                (v <= lo && g > 0.0) || (v >= hi && g < 0.0)
            })
            .collect();
        let mut gradient = ne.gradient.clone();
        for &l in &pinned {
            gradient[base + l] = 0.0;
        }
        let mut accepted = None;
        let mut first_pred = None;
        loop {
            damped.copy_from_slice(&ne.values);
            for &k in &diag {
                let d = ne.values[k];
                damped[k] = if d > 0.0 { d * (1.0 + lambda) } else { 1.0 };
            }
            for &l in &pinned {
                ne.pin_latent(&mut damped, l);
            }
            if let Some(delta) = ne.solve(&damped, &gradient) {
                let candidate = problem.retract(&state, &delta);
                // predicted reduction of the undamped model along the projected step
                let mut step = delta.clone();
                for (k, (new, old)) in candidate.latents.iter().zip(&state.latents).enumerate() {
                    step[base + k] = new - old;
                }
                let hs = ne.multiply(&step);
                let pred = -(2.0 * dot(&ne.gradient, &step) + dot(&step, &hs));
                first_pred.get_or_insert(pred);
                let new_cost = problem.cost(&candidate, &coeffs);
                if new_cost.is_finite() && new_cost < cost && pred > 0.0 {
                    accepted = Some((candidate, new_cost));
                    lambda = (lambda / settings.lambda_down).max(settings.lambda_min);
                    break;
                }
            }
            lambda *= settings.lambda_up;
            if lambda > settings.lambda_max {
                break;
            }
        }
        let Some((candidate, new_cost)) = accepted else {
            // no decrease at any damping: stationary up to the tolerances, or stuck
            report.converged = first_pred.is_some_and(|p| is_small_decrease(p, cost, settings));
            if first_pred.is_none() {
                return Err(SolverError::SingularNormalEquations);
            }
            break;
        };
        let decrease = cost - new_cost;
        report.model_trace.push((cost, new_cost));
        state = candidate;
        coeffs = Coefficients::compute(config, graph, &state.poses, &state.latents);
        cost = problem.cost(&state, &coeffs);
        report.objective_trace.push(objective(graph, config, &state));
        if let Some(a) = state.alpha(config) {
            report.alpha_trace.push(a);
        }
        if is_small_decrease(decrease, cost + decrease, settings) {
            small += 1;
            if small >= settings.patience {
                report.converged = true;
                break;
            }
        } else {
            small = 0;
        }
    }
    report.final_objective = objective(graph, config, &state);
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((report, state))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One entry per replayed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalStep {
    pub edges: usize,
    pub vertices: usize,
    pub report: SolveReport,
    pub alpha: Option<f64>,
}

/// Replays the edges in arrival order, `batch_size` at a time, solving each
/// growing prefix from the previous solution. New vertices are chained from
/// their predecessor through the odometry edge that introduced them.
pub fn solve_incremental<P: LieGroup<D>, const D: usize>(
    graph: &PoseGraph<P, D>,
    config: &RobustConfig,
    settings: &SolverSettings,
    batch_size: usize,
) -> Result<(Vec<IncrementalStep>, State<P>), SolverError> {
    if batch_size == 0 {
        return Err(SolverError::InvalidInput("batch size must be at least 1".into()));
    }
    let (graph, loop_index) = graph.arrival_order();
    let graph = &graph;
    let total = graph.num_edges();
    let mut steps = Vec::new();
    let mut prev: Option<State<P>> = None;
    let mut done = 0;
    while done < total || (total == 0 && steps.is_empty()) {
        done = (done + batch_size).min(total);
        let sub = graph.prefix(done);
        let init = warm_start(&sub, config, prev.as_ref())?;
        let (report, state) = solve_batch(&sub, config, settings, Some(init))?;
        steps.push(IncrementalStep { edges: done, vertices: sub.num_vertices(), alpha: state.alpha(config), report });
        prev = Some(state);
        if total == 0 {
            break;
        }
    }
    let mut state = prev.expect("at least one batch");
    if let RobustConfig::Sc(_) = config {
        let mut latents = vec![0.0; state.latents.len()];
        for (k, &orig) in loop_index.iter().enumerate() {
            latents[orig] = state.latents[k];
        }
        state.latents = latents;
    }
    Ok((steps, state))
}

fn warm_start<P: LieGroup<D>, const D: usize>(sub: &PoseGraph<P, D>, config: &RobustConfig, prev: Option<&State<P>>) -> Result<State<P>, SolverError> {
    let Some(prev) = prev else {
        return initial_state(sub, config);
    };
    let n = sub.num_vertices();
    let mut poses: Vec<P> = prev.poses.iter().take(n).copied().collect();
    let dr = sub.dead_reckoning()?;
    while poses.len() < n {
        let k = poses.len();
        // keep the dead-reckoned increment from the last solved pose
        let next = poses[k - 1].compose(&dr[k - 1].between(&dr[k]));
        poses.push(next);
    }
    let mut latents = config.initial_latents(sub.loops().len());
    match config {
        RobustConfig::Aeros(_) => latents[0] = prev.latents[0],
        RobustConfig::Sc(_) => {
            let keep = prev.latents.len().min(latents.len());
            latents[..keep].copy_from_slice(&prev.latents[..keep]);
        }
        _ => {}
    }
    Ok(State { poses, latents })
}
