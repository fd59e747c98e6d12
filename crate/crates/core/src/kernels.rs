//! Scalar robust losses.
//!
//! The adaptive kernel is parameterized by a shape `α` and a scale `c`. With
//! `x = ν / c` and the normalized weight `ω̄ = c² ω ∈ [0, 1]`, the loss and its
//! outlier process `Ψ` satisfy
//!
//! ```text
//! ρ(ν, α, c) = min_{ω̄ ∈ [0,1]}  ω̄ · ½x² + Ψ(ω̄, α)
//! ```
//!
//! with the minimum attained at `ω̄ = c² ω(ν, α, c)`.
//!
//! Near the removable singularities `α = 2` and `α = 0` the power form is
//! evaluated with the shifted exponents `p = |α − 2| + ζ`, `q = α ± ζ`. Exactly
//! at `α = 0`, at `α ≥ 2 − ζ` and at `α = −∞` the closed limit forms are used.

use crate::error::KernelError;

/// Guard offset for the shifted exponents.
pub const ZETA: f64 = 1e-5;
/// Distance from `α ∈ {0, 2}` inside which the shifted exponents are used.
pub const GUARD_RADIUS: f64 = 0.01;
pub const ALPHA_MIN: f64 = -10.0;
pub const ALPHA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Quadratic,
    Log,
    Welsch,
    Power { p: f64, q: f64 },
}

fn form(alpha: f64, zeta: f64) -> Form {
    if alpha == f64::NEG_INFINITY {
        Form::Welsch
    } else if alpha >= 2.0 - zeta {
        // q = α + ζ would reach 2 here and flip the sign of the Ψ exponent.
        Form::Quadratic
    } else if alpha == 0.0 {
        Form::Log
    } else {
        let (p, q) = power_exponents(alpha, zeta);
        Form::Power { p, q }
    }
}

/// `(p, q)` of the power form, shifted inside the guard radius.
fn power_exponents(alpha: f64, zeta: f64) -> (f64, f64) {
    let guarded = (alpha - 2.0).abs() < GUARD_RADIUS || alpha.abs() < GUARD_RADIUS;
    if guarded {
        let q = if alpha >= 0.0 { alpha + zeta } else { alpha - zeta };
        ((alpha - 2.0).abs() + zeta, q)
    } else {
        ((alpha - 2.0).abs(), alpha)
    }
}

/// Exponents used for α-derivatives; the limit forms borrow the guarded
/// power form next to them.
fn derivative_exponents(alpha: f64, zeta: f64) -> Option<(f64, f64)> {
    if alpha == f64::NEG_INFINITY {
        None
    } else {
        Some(power_exponents(alpha.min(2.0 - 2.0 * zeta), zeta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveKernel {
    pub alpha: f64,
    pub c: f64,
    pub zeta: f64,
}

impl AdaptiveKernel {
    pub fn new(alpha: f64, c: f64) -> Self {
        assert!(c > 0.0, "kernel scale must be positive");
        Self { alpha, c, zeta: ZETA }
    }

    pub fn rho(&self, nu: f64) -> f64 {
        let x2 = (nu / self.c).powi(2);
        match form(self.alpha, self.zeta) {
            Form::Quadratic => 0.5 * x2,
            Form::Log => (0.5 * x2).ln_1p(),
            Form::Welsch => -(-0.5 * x2).exp_m1(),
            Form::Power { p, q } => p / q * (0.5 * q * (x2 / p).ln_1p()).exp_m1(),
        }
    }

    /// IRLS weight `ρ′(ν) / ν`, in `(0, 1/c²]`.
    pub fn weight(&self, nu: f64) -> f64 {
        self.omega_bar(nu) / (self.c * self.c)
    }

    /// Normalized weight `c² ω ∈ (0, 1]`.
    pub fn omega_bar(&self, nu: f64) -> f64 {
        let x2 = (nu / self.c).powi(2);
        match form(self.alpha, self.zeta) {
            Form::Quadratic => 1.0,
            Form::Log => 1.0 / (0.5 * x2 + 1.0),
            Form::Welsch => (-0.5 * x2).exp(),
            Form::Power { p, q } => ((0.5 * q - 1.0) * (x2 / p).ln_1p()).exp(),
        }
    }

    /// Influence function `ψ(ν) = ρ′(ν)`.
    pub fn d_rho_d_nu(&self, nu: f64) -> f64 {
        nu * self.weight(nu)
    }

    pub fn d_rho_d_alpha(&self, nu: f64) -> f64 {
        let Some((p, q)) = derivative_exponents(self.alpha, self.zeta) else {
            return 0.0;
        };
        let x2 = (nu / self.c).powi(2);
        let log_b = (x2 / p).ln_1p();
        let b = 1.0 + x2 / p;
        let bq = (0.5 * q * log_b).exp();
        let bq_m1 = (0.5 * q * log_b).exp_m1();
        // dp/dα = -1, dq/dα = 1
        (-q - p) / (q * q) * bq_m1 + p / q * bq * (0.5 * log_b + 0.5 * q * x2 / (p * p * b))
    }

    pub fn psi(&self, omega_bar: f64) -> Result<f64, KernelError> {
        psi_with_zeta(omega_bar, self.alpha, self.zeta)
    }
}

/// Outlier process `Ψ(ω̄, α)`; `+∞` where the process forbids down-weighting.
pub fn psi(omega_bar: f64, alpha: f64) -> Result<f64, KernelError> {
    psi_with_zeta(omega_bar, alpha, ZETA)
}

pub fn psi_with_zeta(w: f64, alpha: f64, zeta: f64) -> Result<f64, KernelError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(KernelError::DomainError(w));
    }
    Ok(match form(alpha, zeta) {
        Form::Quadratic => {
            if w == 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Form::Log => {
            if w == 0.0 {
                f64::INFINITY
            } else {
                -w.ln() + w - 1.0
            }
        }
        Form::Welsch => {
            if w == 0.0 {
                1.0
            } else {
                w * w.ln() - w + 1.0
            }
        }
        Form::Power { p, q } => {
            let e = q / (q - 2.0);
            let we = if w == 0.0 {
                if e > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                w.powf(e)
            };
            (p / q * ((1.0 - 0.5 * q) * we + 0.5 * q * w - 1.0)).max(0.0)
        }
    })
}

pub fn d_psi_d_alpha(w: f64, alpha: f64) -> f64 {
    let Some((p, q)) = derivative_exponents(alpha, ZETA) else {
        return 0.0;
    };
    let e = q / (q - 2.0);
    let de = -2.0 / ((q - 2.0) * (q - 2.0));
    let (we, we_ln) = if w == 0.0 {
        if e > 0.0 {
            (0.0, 0.0)
        } else {
            return f64::INFINITY;
        }
    } else {
        let we = w.powf(e);
        (we, we * w.ln())
    };
    let k = (1.0 - 0.5 * q) * we + 0.5 * q * w - 1.0;
    let dk = -0.5 * we + (1.0 - 0.5 * q) * we_ln * de + 0.5 * w;
    (-q - p) / (q * q) * k + p / q * dk
}

/// Numerical minimization of `ω̄·½x² + Ψ(ω̄, α)` over `[0, 1]`.
///
/// Returns `(ω̄*, value)`. A 10⁴-point grid picks the bracket, then
/// golden-section search refines it. Independent of the closed-form weight.
pub fn br_reconstruct(nu: f64, kernel: &AdaptiveKernel) -> (f64, f64) {
    let half_x2 = 0.5 * (nu / kernel.c).powi(2);
    let f = |w: f64| w * half_x2 + kernel.psi(w.clamp(0.0, 1.0)).unwrap_or(f64::INFINITY);
    const N: usize = 10_000;
    let mut best = (N, f(1.0));
    for k in 0..N {
        let v = f(k as f64 / N as f64);
        if v < best.1 {
            best = (k, v);
        }
    }
    let mut a = best.0.saturating_sub(1) as f64 / N as f64;
    let mut b = ((best.0 + 1).min(N)) as f64 / N as f64;
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < 1e-15 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let mut cands = [(0.5 * (a + b), f(0.5 * (a + b))), (best.0 as f64 / N as f64, best.1), (1.0, f(1.0)), (0.0, f(0.0))];
    cands.sort_by(|l, r| l.1.total_cmp(&r.1));
    cands[0]
}

/// Classical M-estimators with fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedKernel {
    L2,
    Huber(f64),
    Cauchy(f64),
    GemanMcClure(f64),
    Welsch(f64),
    L1L2(f64),
}

impl FixedKernel {
    pub fn rho(&self, nu: f64) -> f64 {
        let nu = nu.abs();
        match *self {
            FixedKernel::L2 => 0.5 * nu * nu,
            FixedKernel::Huber(k) => {
                if nu <= k {
                    0.5 * nu * nu
                } else {
                    k * (nu - 0.5 * k)
                }
            }
            FixedKernel::Cauchy(c) => 0.5 * c * c * (nu / c).powi(2).ln_1p(),
            FixedKernel::GemanMcClure(c) => 0.5 * nu * nu / (1.0 + (nu / c).powi(2)),
            FixedKernel::Welsch(c) => -0.5 * c * c * (-(nu / c).powi(2)).exp_m1(),
            FixedKernel::L1L2(c) => c * c * ((1.0 + (nu / c).powi(2)).sqrt() - 1.0),
        }
    }

    /// `ρ′(ν) / ν`; equals 1 at `ν = 0` for every kind.
    pub fn weight(&self, nu: f64) -> f64 {
        let nu = nu.abs();
        match *self {
            FixedKernel::L2 => 1.0,
            FixedKernel::Huber(k) => {
                if nu <= k {
                    1.0
                } else {
                    k / nu
                }
            }
            FixedKernel::Cauchy(c) => 1.0 / (1.0 + (nu / c).powi(2)),
            FixedKernel::GemanMcClure(c) => (1.0 + (nu / c).powi(2)).powi(-2),
            FixedKernel::Welsch(c) => (-(nu / c).powi(2)).exp(),
            FixedKernel::L1L2(c) => 1.0 / (1.0 + (nu / c).powi(2)).sqrt(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FixedKernel::L2 => "l2",
            FixedKernel::Huber(_) => "huber",
            FixedKernel::Cauchy(_) => "cauchy",
            FixedKernel::GemanMcClure(_) => "gm",
            FixedKernel::Welsch(_) => "welsch",
            FixedKernel::L1L2(_) => "l1l2",
        }
    }
}
