//! Kernel point values, duality, derivatives and factor blocks.

use aeros_core::graph::Information;
use aeros_core::kernels::{d_psi_d_alpha, psi};
use aeros_core::lie::Tangent;
use aeros_core::robust::{
    build_aeros_blocks, build_irls_blocks, build_sc_blocks, loop_blocks, outlier_process_residual, robust_cost, scaled_edge_block, Coefficients,
    ResidualBlock,
};
use aeros_core::{AdaptiveKernel, AerosConfig, Edge, FixedKernel, LieGroup, PoseGraph, Provenance, RobustConfig, ScConfig, Se2, Se3};
use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

pub fn point_values() -> Verdict {
    let mut v = Verdict::new();
    let k = AdaptiveKernel::new;
    let exact = [
        ("rho(1; 2, 1)", k(2.0, 1.0).rho(1.0), 0.5),
        ("rho(1; 1, 1)", k(1.0, 1.0).rho(1.0), 2f64.sqrt() - 1.0),
        ("rho(2; 0, 1)", k(0.0, 1.0).rho(2.0), 3f64.ln()),
        ("weight(0.7; 2, 1)", k(2.0, 1.0).weight(0.7), 1.0),
        ("weight(5; 2, 1)", k(2.0, 1.0).weight(5.0), 1.0),
        ("weight(1; 0, 1)", k(0.0, 1.0).weight(1.0), 2.0 / 3.0),
        ("weight(1; -inf, 1)", k(f64::NEG_INFINITY, 1.0).weight(1.0), (-0.5f64).exp()),
        ("psi(0.5; 0)", psi(0.5, 0.0).unwrap(), -(0.5f64.ln()) - 0.5),
        ("psi(0.5; -2)", psi(0.5, -2.0).unwrap(), 3.0 - 2.0 * 2f64.sqrt()),
        ("psi(1; -3)", psi(1.0, -3.0).unwrap(), 0.0),
        ("d_rho_d_nu(0; -2, 1)", k(-2.0, 1.0).d_rho_d_nu(0.0), 0.0),
        ("d_rho_d_nu(1; 2, 1)", k(2.0, 1.0).d_rho_d_nu(1.0), 1.0),
        ("d_psi_d_alpha(1; -4)", d_psi_d_alpha(1.0, -4.0), 0.0),
        ("d_psi_d_alpha(1; 0.7)", d_psi_d_alpha(1.0, 0.7), 0.0),
        ("huber(0.5; 1)", FixedKernel::Huber(1.0).rho(0.5), 0.125),
        ("huber weight(0.5; 1)", FixedKernel::Huber(1.0).weight(0.5), 1.0),
        ("huber(2; 1)", FixedKernel::Huber(1.0).rho(2.0), 1.5),
        ("huber weight(2; 1)", FixedKernel::Huber(1.0).weight(2.0), 0.5),
        ("gm(1e6; 1)", FixedKernel::GemanMcClure(1.0).rho(1e6), 0.5),
        ("gm weight(1e6; 1)", FixedKernel::GemanMcClure(1.0).weight(1e6), 0.0),
    ];
    for (name, got, want) in exact {
        v.check((got - want).abs() <= 1e-9, format!("{name} = {got}, expected {want}"));
    }
    // At α = -10 the kernel is 1.2·(1 - 0.75⁵), about 0.05 above the Welsch limit
    // 1 - e⁻²; the gap closes only as α decreases further.
    let at_minus_ten = k(-10.0, 1.0).rho(2.0);
    let want = 1.2 * (1.0 - 0.75f64.powi(5));
    v.check((at_minus_ten - want).abs() <= 1e-9, format!("rho(2; -10, 1) = {at_minus_ten}, expected {want}"));
    let gaps = [-10.0, -100.0, -1000.0].map(|a| (k(a, 1.0).rho(2.0) - (1.0 - (-2f64).exp())).abs());
    v.check(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-3, format!("no convergence to the Welsch limit: {gaps:?}"));
    v.note(format!("{} values checked to 1e-9; gap to the Welsch limit at nu = 2: {:.4} (alpha -10), {:.1e} (alpha -1000)", exact.len() + 1, gaps[0], gaps[2]));
    v
}

/// `min over ω̄ ∈ [0, 1] of ω̄·½(ν/c)² + Ψ(ω̄, α)` by a 10⁴-interval grid and
/// golden-section refinement around the best grid point.
fn dual_minimum(nu: f64, alpha: f64, c: f64) -> (f64, f64) {
    let q = 0.5 * (nu / c).powi(2);
    let h = |w: f64| w * q + psi(w, alpha).unwrap_or(f64::INFINITY);
    const N: usize = 10_000;
    let best = (0..=N).map(|k| k as f64 / N as f64).map(|w| (w, h(w))).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let (mut lo, mut hi) = ((best.0 - 1.0 / N as f64).max(0.0), (best.0 + 1.0 / N as f64).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if h(a) <= h(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let w = 0.5 * (lo + hi);
    [(w, h(w)), best, (0.0, h(0.0)), (1.0, h(1.0))].into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap()
}

pub fn duality() -> Verdict {
    let mut v = Verdict::new();
    let alphas = [1.5, 1.0, 0.5, 0.01, -0.5, -1.0, -2.0, -4.0, -6.0, -10.0];
    let (mut worst_value, mut worst_weight, mut points) = (0f64, 0f64, 0);
    for &alpha in &alphas {
        for &c in &[0.5, 1.0, 2.0] {
            let kernel = AdaptiveKernel::new(alpha, c);
            for i in 0..=100 {
                let nu = i as f64 * 0.1;
                let (w, value) = dual_minimum(nu, alpha, c);
                let dv = (value - kernel.rho(nu)).abs();
                let dw = (w - c * c * kernel.weight(nu)).abs();
                worst_value = worst_value.max(dv);
                worst_weight = worst_weight.max(dw);
                points += 1;
                v.check(dv <= 1e-6, format!("value gap {dv:.3e} at nu {nu}, alpha {alpha}, c {c}"));
                v.check(dw <= 1e-5, format!("minimizer gap {dw:.3e} at nu {nu}, alpha {alpha}, c {c}"));
            }
        }
    }
    v.details.truncate(10);
    v.note(format!("{points} grid points; worst value gap {worst_value:.2e}, worst minimizer gap {worst_weight:.2e}"));
    v
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-3)
}

fn mat_rel_err<const R: usize, const C: usize>(got: &SMatrix<f64, R, C>, want: &SMatrix<f64, R, C>) -> f64 {
    (got - want).norm() / want.norm().max(1e-3)
}

/// Away from the guard bands around 0 and 2.
fn sample_alpha(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        rng.gen_range(-10.0..-0.02)
    } else {
        rng.gen_range(0.02..1.98)
    }
}

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

trait Sample<const D: usize>: LieGroup<D> {
    fn sample(rng: &mut ChaCha8Rng) -> Self;
}

impl Sample<3> for Se2 {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Se2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0))
    }
}

impl Sample<6> for Se3 {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let t = Tangent::<6>::from_fn(|k, _| if k < 3 { rng.gen_range(-5.0..5.0) } else { rng.gen_range(-1.5..1.5) });
        Se3::exp(&t)
    }
}

fn sample_information<const D: usize>(rng: &mut ChaCha8Rng) -> Information<D> {
    let a = SMatrix::<f64, D, D>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    a * a.transpose() + Information::<D>::identity() * 0.5
}

/// Residual of a pose-pair block, evaluated fresh at the given poses.
fn residual<const D: usize>(block: &ResidualBlock<D>) -> SVector<f64, D> {
    match block {
        ResidualBlock::Pair { r, .. } => *r,
        ResidualBlock::Scalar { .. } => panic!("pair block expected"),
    }
}

/// Worst relative error of the pose Jacobians of `make` against central differences.
fn pose_jacobian_error<P: LieGroup<D>, const D: usize>(xi: &P, xj: &P, make: impl Fn(&P, &P) -> ResidualBlock<D>) -> f64 {
    let ResidualBlock::Pair { ji, jj, .. } = make(xi, xj) else { panic!("pair block expected") };
    let h = 1e-6;
    let mut fd_i = SMatrix::<f64, D, D>::zeros();
    let mut fd_j = SMatrix::<f64, D, D>::zeros();
    for k in 0..D {
        let mut d = Tangent::<D>::zeros();
        d[k] = h;
        let col_i = (residual(&make(&xi.retract(&d), xj)) - residual(&make(&xi.retract(&-d), xj))) / (2.0 * h);
        let col_j = (residual(&make(xi, &xj.retract(&d))) - residual(&make(xi, &xj.retract(&-d)))) / (2.0 * h);
        fd_i.set_column(k, &col_i);
        fd_j.set_column(k, &col_j);
    }
    mat_rel_err(&ji, &fd_i).max(mat_rel_err(&jj, &fd_j))
}

fn block_gradients<P: Sample<D>, const D: usize>(rng: &mut ChaCha8Rng, points: usize, tol: f64, label: &str, v: &mut Verdict) {
    let mut worst = [0f64; 5];
    for _ in 0..points {
        let (xi, xj, z) = (P::sample(rng), P::sample(rng), P::sample(rng));
        let edge = Edge::new(0, 1, z, sample_information::<D>(rng)).unwrap();
        let alpha = sample_alpha(rng);
        let omega = rng.gen_range(0.01..1.0);
        let aeros = AerosConfig { c: rng.gen_range(0.5..2.0), ..AerosConfig::default() };
        let weight = rng.gen_range(0.01..1.0);
        let s = rng.gen_range(0.05..0.95);
        let sc = ScConfig::default();
        let sig = ScConfig::sigmoid();
        let s_sig = rng.gen_range(-5.0..5.0);

        worst[0] = worst[0].max(pose_jacobian_error(&xi, &xj, |a, b| scaled_edge_block(&edge, a, b, 1.0)));
        worst[1] = worst[1].max(pose_jacobian_error(&xi, &xj, |a, b| build_aeros_blocks(&edge, a, b, alpha, omega, &aeros)[0].clone()));
        worst[2] = worst[2].max(pose_jacobian_error(&xi, &xj, |a, b| build_irls_blocks(&edge, a, b, weight)));
        for (cfg, s) in [(&sc, s), (&sig, s_sig)] {
            worst[3] = worst[3].max(pose_jacobian_error(&xi, &xj, |a, b| build_sc_blocks(&edge, a, b, s, 0, cfg)[0].clone()));
            let [ResidualBlock::Pair { latent: Some((_, col)), .. }, _] = build_sc_blocks(&edge, &xi, &xj, s, 0, cfg) else { panic!() };
            let at = |s: f64| residual(&build_sc_blocks(&edge, &xi, &xj, s, 0, cfg)[0]);
            let h = 1e-6 * s.abs().max(1.0);
            let fd = (at(s + h) - at(s - h)) / (2.0 * h);
            worst[4] = worst[4].max(mat_rel_err(&col, &fd));
            let [_, ResidualBlock::Scalar { j, .. }] = build_sc_blocks(&edge, &xi, &xj, s, 0, cfg) else { panic!() };
            let prior = |s: f64| match &build_sc_blocks(&edge, &xi, &xj, s, 0, cfg)[1] {
                ResidualBlock::Scalar { r, .. } => *r,
                _ => unreachable!(),
            };
            worst[4] = worst[4].max(rel_err(j, central(prior, s)));
        }
    }
    let names = ["plain edge", "AEROS pose block", "IRLS block", "switched block poses", "switch column and prior"];
    for (name, w) in names.iter().zip(worst) {
        v.check(w <= tol, format!("{label} {name}: worst relative error {w:.2e} > {tol:e}"));
    }
    v.note(format!("{label}: {points} points, worst Jacobian error {:.2e}", worst.iter().cloned().fold(0.0, f64::max)));
}

pub fn gradients() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    const POINTS: usize = 200;
    let mut worst = [0f64; 4];
    for _ in 0..POINTS {
        let alpha = sample_alpha(&mut rng);
        let c = rng.gen_range(0.5..2.0);
        let nu = rng.gen_range(0.05..15.0);
        let k = AdaptiveKernel::new(alpha, c);
        worst[0] = worst[0].max(rel_err(k.d_rho_d_nu(nu), central(|x| k.rho(x), nu)));
        worst[1] = worst[1].max(rel_err(k.d_rho_d_alpha(nu), central(|a| AdaptiveKernel::new(a, c).rho(nu), alpha)));
        let w = rng.gen_range(0.01..1.0);
        worst[2] = worst[2].max(rel_err(d_psi_d_alpha(w, alpha), central(|a| psi(w, a).unwrap(), alpha)));
        // α column of the outlier-process block, ω̄ held at the linearization point.
        let omega = k.omega_bar(nu);
        let cfg = AerosConfig { c, ..AerosConfig::default() };
        let edge = Edge::new(0, 1, Se2::identity(), Information::<3>::identity()).unwrap();
        let [_, ResidualBlock::Scalar { j, .. }] = build_aeros_blocks(&edge, &Se2::identity(), &Se2::new(nu, 0.0, 0.0), alpha, omega, &cfg) else {
            panic!()
        };
        worst[3] = worst[3].max(rel_err(j, central(|a| outlier_process_residual(omega, a), alpha)));
    }
    let names = ["d rho / d nu", "d rho / d alpha", "d psi / d alpha", "alpha column of the outlier-process block"];
    for (name, w) in names.iter().zip(worst) {
        v.check(w <= 1e-5, format!("{name}: worst relative error {w:.2e}"));
    }
    v.note(format!("kernel derivatives: {POINTS} points, worst relative error {:.2e}", worst.iter().cloned().fold(0.0, f64::max)));
    block_gradients::<Se2, 3>(&mut rng, POINTS, 1e-5, "SE2", &mut v);
    block_gradients::<Se3, 6>(&mut rng, POINTS, 1e-4, "SE3", &mut v);
    v
}

fn random_graph<P: Sample<D>, const D: usize>(rng: &mut ChaCha8Rng, vertices: usize, loops: usize) -> PoseGraph<P, D> {
    let poses: Vec<P> = (0..vertices).map(|_| P::sample(rng)).collect();
    let mut g = PoseGraph::with_vertices(poses);
    for i in 1..vertices {
        g.add_odometry(Edge::new(i - 1, i, P::sample(rng), sample_information::<D>(rng)).unwrap()).unwrap();
    }
    for _ in 0..loops {
        let j = rng.gen_range(2..vertices);
        let i = rng.gen_range(0..j - 1);
        g.add_loop(Edge::new(i, j, P::sample(rng), sample_information::<D>(rng)).unwrap(), Provenance::Unknown).unwrap();
    }
    g
}

fn identity_gap<P: Sample<D>, const D: usize>(rng: &mut ChaCha8Rng) -> f64 {
    let g = random_graph::<P, D>(rng, 12, 15);
    let alpha = rng.gen_range(-10.0..1.99);
    let config = RobustConfig::Aeros(AerosConfig { c: rng.gen_range(0.5..2.0), ..AerosConfig::default() });
    let latents = [alpha];
    let coeffs = Coefficients::compute(&config, &g, g.vertices(), &latents);
    let mut blocks = Vec::new();
    loop_blocks(&config, &g, g.vertices(), &latents, &coeffs, &mut blocks);
    // The last block is the α prior, which `robust_cost` also includes.
    let squares: f64 = blocks.iter().map(|b| b.squared_norm()).sum();
    let rho = robust_cost(&config, &g, g.vertices(), &latents);
    (squares - rho).abs() / rho.max(1.0)
}

pub fn block_identity() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for _ in 0..100 {
        worst = worst.max(identity_gap::<Se2, 3>(&mut rng));
        worst = worst.max(identity_gap::<Se3, 6>(&mut rng));
    }
    v.check(worst <= 1e-6, format!("sum of squared AEROS blocks differs from the kernel sum by {worst:.2e}"));
    v.note(format!("200 random graphs (SE2 and SE3); worst relative gap {worst:.2e}"));
    v
}
