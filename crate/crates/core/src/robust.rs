//! Outlier-handling strategies for loop closures.
//!
//! Every strategy turns a loop edge into residual blocks for the solver. The
//! solver minimizes `F = Σ ‖e‖²` over all blocks, so a plain edge contributes
//! `e = r / √2` and `F` is half the χ² sum. Odometry is always plain L2.
//!
//! Coefficients that the strategy treats as IRLS weights (ω̄ for AEROS, ω for
//! fixed kernels, s for DCS) are computed once per relinearization by
//! [`Coefficients::compute`] and held constant inside the linear solve.

use std::f64::consts::SQRT_2;

use nalgebra::{SMatrix, SVector};

use crate::graph::{Edge, PoseGraph, Provenance};
use crate::kernels::{d_psi_d_alpha, psi, AdaptiveKernel, FixedKernel, ALPHA_MAX, ALPHA_MIN};
use crate::lie::LieGroup;

/// Upper bound of the estimated α. At exactly 2 every ω̄ is 1 and Ψ(1, α)
/// vanishes for all α, so the estimate could never leave the quadratic case.
pub const ALPHA_CEILING: f64 = 1.99;
/// Default starting α.
pub const ALPHA_INIT: f64 = ALPHA_CEILING;
/// Effective weight below which a loop counts as rejected.
pub const REJECTION_THRESHOLD: f64 = 0.5;
/// Lower bound of a linear switch. At exactly 0 the block `√s · r` vanishes
/// together with its gradient `½χ²`, and the prior alone would pull the
/// switch back up.
pub const SWITCH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AerosConfig {
    pub alpha_init: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub prior_mean: f64,
    pub prior_sigma2: f64,
    pub c: f64,
    /// Keep α at `alpha_init` instead of estimating it.
    pub fixed_alpha: bool,
}

impl Default for AerosConfig {
    fn default() -> Self {
        Self {
            alpha_init: ALPHA_INIT,
            alpha_min: ALPHA_MIN,
            alpha_max: ALPHA_CEILING,
            prior_mean: 2.0,
            prior_sigma2: 20.0,
            c: 1.0,
            fixed_alpha: false,
        }
    }
}

impl AerosConfig {
    pub fn with_fixed_alpha(alpha: f64) -> Self {
        Self { alpha_init: alpha, alpha_max: ALPHA_MAX, fixed_alpha: true, ..Self::default() }
    }

    pub fn clamp(&self, alpha: f64) -> f64 {
        alpha.clamp(self.alpha_min, self.alpha_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchWeight {
    /// `w(s) = clamp(s, 0, 1)`
    Linear,
    /// `w(s) = 1 / (1 + e^{-s})`
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScConfig {
    pub weight: SwitchWeight,
    pub lambda: f64,
    pub sigma: f64,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self { weight: SwitchWeight::Linear, lambda: 1.0, sigma: 1.0 }
    }
}

impl ScConfig {
    pub fn sigmoid() -> Self {
        Self { weight: SwitchWeight::Sigmoid, lambda: 10.0, sigma: 20.0 }
    }

    pub fn w(&self, s: f64) -> f64 {
        match self.weight {
            SwitchWeight::Linear => s.clamp(0.0, 1.0),
            SwitchWeight::Sigmoid => 1.0 / (1.0 + (-s).exp()),
        }
    }

    /// `d√w/ds`. At the linear switch's upper bound this is the left derivative,
    /// so a switch starting at 1 can still move.
    fn d_sqrt_w(&self, s: f64) -> f64 {
        match self.weight {
            SwitchWeight::Linear => {
                if s > 1.0 {
                    0.0
                } else {
                    0.5 / s.max(SWITCH_FLOOR).sqrt()
                }
            }
            SwitchWeight::Sigmoid => {
                let w = self.w(s);
                0.5 * w.sqrt() * (1.0 - w)
            }
        }
    }

    /// Feasible switch interval.
    pub fn bounds(&self) -> (f64, f64) {
        match self.weight {
            SwitchWeight::Linear => (SWITCH_FLOOR, 1.0),
            SwitchWeight::Sigmoid => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustConfig {
    L2,
    Aeros(AerosConfig),
    Sc(ScConfig),
    Dcs { phi: f64 },
    Fixed(FixedKernel),
}

impl RobustConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RobustConfig::L2 => "l2",
            RobustConfig::Aeros(_) => "aeros",
            RobustConfig::Sc(_) => "sc",
            RobustConfig::Dcs { .. } => "dcs",
            RobustConfig::Fixed(k) => k.name(),
        }
    }

    /// Initial latent values appended after the poses.
    pub fn initial_latents(&self, num_loops: usize) -> Vec<f64> {
        match self {
            RobustConfig::Aeros(a) => vec![a.clamp(a.alpha_init)],
            RobustConfig::Sc(s) => vec![s.lambda; num_loops],
            _ => Vec::new(),
        }
    }

    /// Feasible interval shared by every latent of the strategy.
    pub fn latent_bounds(&self) -> (f64, f64) {
        match self {
            RobustConfig::Aeros(a) => (a.alpha_min, a.alpha_max),
            RobustConfig::Sc(s) => s.bounds(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Projects latents onto their feasible set.
    pub fn project_latents(&self, latents: &mut [f64]) {
        match self {
            RobustConfig::Aeros(a) => {
                latents[0] = if a.fixed_alpha { a.clamp(a.alpha_init) } else { a.clamp(latents[0]) };
            }
            RobustConfig::Sc(s) => {
                let (lo, hi) = s.bounds();
                for v in latents.iter_mut() {
                    *v = v.clamp(lo, hi);
                }
            }
            _ => {}
        }
    }
}

/// DCS switch `s = min(1, 2Φ / (Φ + χ²))`.
pub fn dcs_scale(chi2: f64, phi: f64) -> f64 {
    (2.0 * phi / (phi + chi2)).min(1.0)
}

/// Loss whose IRLS weight is the squared DCS switch, in the half convention:
/// `½χ²` up to `Φ`, then `3Φ/2 − 2Φ² / (Φ + χ²)`, bounded by `3Φ/2`.
pub fn dcs_loss(chi2: f64, phi: f64) -> f64 {
    if chi2 <= phi {
        0.5 * chi2
    } else {
        1.5 * phi - 2.0 * phi * phi / (phi + chi2)
    }
}

/// A residual block linearized at the current state. Latent indices refer
/// to the latent vector, not to solver columns.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualBlock<const D: usize> {
    Pair {
        i: usize,
        j: usize,
        r: SVector<f64, D>,
        ji: SMatrix<f64, D, D>,
        jj: SMatrix<f64, D, D>,
        latent: Option<(usize, SVector<f64, D>)>,
    },
    Scalar {
        latent: usize,
        r: f64,
        j: f64,
    },
}

impl<const D: usize> ResidualBlock<D> {
    pub fn squared_norm(&self) -> f64 {
        match self {
            ResidualBlock::Pair { r, .. } => r.norm_squared(),
            ResidualBlock::Scalar { r, .. } => r * r,
        }
    }

    pub fn latent(&self) -> Option<usize> {
        match self {
            ResidualBlock::Pair { latent, .. } => latent.map(|l| l.0),
            ResidualBlock::Scalar { latent, .. } => Some(*latent),
        }
    }
}

/// Plain (or scaled) edge block `scale · r / √2`.
pub fn scaled_edge_block<P: LieGroup<D>, const D: usize>(edge: &Edge<P, D>, xi: &P, xj: &P, scale: f64) -> ResidualBlock<D> {
    let (r, ji, jj) = edge.linearize(xi, xj);
    let k = scale / SQRT_2;
    ResidualBlock::Pair { i: edge.from, j: edge.to, r: r * k, ji: ji * k, jj: jj * k, latent: None }
}

/// `√Ψ(ω̄, α)` with ω̄ held at its linearization value.
pub fn outlier_process_residual(omega_bar: f64, alpha: f64) -> f64 {
    psi(omega_bar, alpha).unwrap_or(f64::INFINITY).sqrt()
}

/// The two AEROS blocks of one loop: `√ω̄ · r / (c√2)` on the poses and the
/// scalar `√Ψ(ω̄, α)` on α. Both hold ω̄ fixed; since ω̄ minimizes
/// `ω̄·½(ν/c)² + Ψ(ω̄, α)`, the α derivative of `Ψ` at fixed ω̄ is `∂ρ/∂α`.
/// The α column is `∂Ψ/∂α / (2√Ψ)`, and 0 where Ψ vanishes.
pub fn build_aeros_blocks<P: LieGroup<D>, const D: usize>(
    edge: &Edge<P, D>,
    xi: &P,
    xj: &P,
    alpha: f64,
    omega_bar: f64,
    config: &AerosConfig,
) -> [ResidualBlock<D>; 2] {
    let a = scaled_edge_block(edge, xi, xj, omega_bar.sqrt() / config.c);
    let r = outlier_process_residual(omega_bar, alpha);
    let j = if config.fixed_alpha || r == 0.0 { 0.0 } else { d_psi_d_alpha(omega_bar, alpha) / (2.0 * r) };
    [a, ResidualBlock::Scalar { latent: 0, r, j }]
}

/// Gaussian prior on α, `(α − μ) / (σ √2)`.
pub fn aeros_prior_block<const D: usize>(alpha: f64, config: &AerosConfig) -> ResidualBlock<D> {
    let k = 1.0 / (config.prior_sigma2.sqrt() * SQRT_2);
    let j = if config.fixed_alpha { 0.0 } else { k };
    ResidualBlock::Scalar { latent: 0, r: (alpha - config.prior_mean) * k, j }
}

/// Switched loop block `√w(s) · r / √2` and the switch prior `(s − λ) / (σ √2)`.
pub fn build_sc_blocks<P: LieGroup<D>, const D: usize>(
    edge: &Edge<P, D>,
    xi: &P,
    xj: &P,
    s: f64,
    latent: usize,
    config: &ScConfig,
) -> [ResidualBlock<D>; 2] {
    let (r, ji, jj) = edge.linearize(xi, xj);
    let sw = config.w(s).sqrt() / SQRT_2;
    let ds = config.d_sqrt_w(s) / SQRT_2;
    let a = ResidualBlock::Pair { i: edge.from, j: edge.to, r: r * sw, ji: ji * sw, jj: jj * sw, latent: Some((latent, r * ds)) };
    let k = 1.0 / (config.sigma * SQRT_2);
    [a, ResidualBlock::Scalar { latent, r: (s - config.lambda) * k, j: k }]
}

/// IRLS block `√ω · r / √2` with ω from the previous iterate.
pub fn build_irls_blocks<P: LieGroup<D>, const D: usize>(edge: &Edge<P, D>, xi: &P, xj: &P, weight: f64) -> ResidualBlock<D> {
    scaled_edge_block(edge, xi, xj, weight.sqrt())
}

/// Per-loop quantities frozen at a relinearization.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// ω̄ (AEROS), ω (fixed kernels), s² (DCS), w(s) (SC) or 1 (L2).
    pub weights: Vec<f64>,
    /// Whitened residual norms at the linearization point.
    pub nu: Vec<f64>,
}

impl Coefficients {
    pub fn compute<P: LieGroup<D>, const D: usize>(config: &RobustConfig, graph: &PoseGraph<P, D>, poses: &[P], latents: &[f64]) -> Self {
        let nu: Vec<f64> = graph
            .loops()
            .iter()
            .map(|l| l.edge.whitened_residual(&poses[l.edge.from], &poses[l.edge.to]).norm())
            .collect();
        let weights = nu
            .iter()
            .enumerate()
            .map(|(k, &v)| match config {
                RobustConfig::L2 => 1.0,
                RobustConfig::Aeros(a) => AdaptiveKernel::new(latents[0], a.c).omega_bar(v),
                RobustConfig::Sc(s) => s.w(latents[k]),
                RobustConfig::Dcs { phi } => dcs_scale(v * v, *phi).powi(2),
                RobustConfig::Fixed(f) => f.weight(v),
            })
            .collect();
        Self { weights, nu }
    }
}

/// All loop and latent-prior blocks of a graph at the current state.
pub fn loop_blocks<P: LieGroup<D>, const D: usize>(
    config: &RobustConfig,
    graph: &PoseGraph<P, D>,
    poses: &[P],
    latents: &[f64],
    coeffs: &Coefficients,
    out: &mut Vec<ResidualBlock<D>>,
) {
    for (k, l) in graph.loops().iter().enumerate() {
        let (xi, xj) = (&poses[l.edge.from], &poses[l.edge.to]);
        match config {
            RobustConfig::L2 => out.push(scaled_edge_block(&l.edge, xi, xj, 1.0)),
            RobustConfig::Aeros(a) => out.extend(build_aeros_blocks(&l.edge, xi, xj, latents[0], coeffs.weights[k], a)),
            RobustConfig::Sc(s) => out.extend(build_sc_blocks(&l.edge, xi, xj, latents[k], k, s)),
            RobustConfig::Dcs { .. } | RobustConfig::Fixed(_) => out.push(build_irls_blocks(&l.edge, xi, xj, coeffs.weights[k])),
        }
    }
    if let RobustConfig::Aeros(a) = config {
        out.push(aeros_prior_block(latents[0], a));
    }
}

/// Loop and prior part of `F` at a trial state, with the coefficients of the
/// current linearization. This is the cost the LM step is accepted against.
pub fn model_cost<P: LieGroup<D>, const D: usize>(
    config: &RobustConfig,
    graph: &PoseGraph<P, D>,
    poses: &[P],
    latents: &[f64],
    coeffs: &Coefficients,
) -> f64 {
    let mut total = 0.0;
    for (k, l) in graph.loops().iter().enumerate() {
        let chi2 = l.edge.chi2(&poses[l.edge.from], &poses[l.edge.to]);
        total += match config {
            RobustConfig::L2 => 0.5 * chi2,
            RobustConfig::Aeros(a) => {
                0.5 * coeffs.weights[k] * chi2 / (a.c * a.c) + outlier_process_residual(coeffs.weights[k], latents[0]).powi(2)
            }
            RobustConfig::Sc(s) => 0.5 * s.w(latents[k]) * chi2 + 0.5 * ((latents[k] - s.lambda) / s.sigma).powi(2),
            RobustConfig::Dcs { .. } | RobustConfig::Fixed(_) => 0.5 * coeffs.weights[k] * chi2,
        };
    }
    total + latent_prior_cost(config, latents)
}

fn latent_prior_cost(config: &RobustConfig, latents: &[f64]) -> f64 {
    match config {
        RobustConfig::Aeros(a) => 0.5 * (latents[0] - a.prior_mean).powi(2) / a.prior_sigma2,
        _ => 0.0,
    }
}

/// Loop and prior part of the robust objective in the half convention:
/// `Σ ρ(ν_j)` for kernels and DCS, the switched sum plus priors for SC.
pub fn robust_cost<P: LieGroup<D>, const D: usize>(config: &RobustConfig, graph: &PoseGraph<P, D>, poses: &[P], latents: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, l) in graph.loops().iter().enumerate() {
        let chi2 = l.edge.chi2(&poses[l.edge.from], &poses[l.edge.to]);
        total += match config {
            RobustConfig::L2 => 0.5 * chi2,
            RobustConfig::Aeros(a) => AdaptiveKernel::new(latents[0], a.c).rho(chi2.sqrt()),
            RobustConfig::Sc(s) => 0.5 * s.w(latents[k]) * chi2 + 0.5 * ((latents[k] - s.lambda) / s.sigma).powi(2),
            RobustConfig::Dcs { phi } => dcs_loss(chi2, *phi),
            RobustConfig::Fixed(f) => f.rho(chi2.sqrt()),
        };
    }
    total + latent_prior_cost(config, latents)
}

/// Final effective weight of every loop: ω̄ (AEROS), ω (fixed kernels),
/// s² (DCS), w(s) (SC), 1 (L2).
pub fn effective_weights<P: LieGroup<D>, const D: usize>(config: &RobustConfig, graph: &PoseGraph<P, D>, poses: &[P], latents: &[f64]) -> Vec<f64> {
    Coefficients::compute(config, graph, poses, latents).weights
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accepted,
    Rejected,
}

/// Loop decisions under a weight threshold, paired with each loop's provenance.
pub fn classify_rejections(weights: &[f64], provenance: &[Provenance], threshold: f64) -> Vec<(Decision, Provenance)> {
    weights
        .iter()
        .zip(provenance)
        .map(|(&w, &p)| (if w < threshold { Decision::Rejected } else { Decision::Accepted }, p))
        .collect()
}
