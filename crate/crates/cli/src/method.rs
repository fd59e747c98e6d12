//! Method specifications: `name[:param][@mode]`.
//!
//! `name` is one of `l2`, `aeros`, `aeros-fixed`, `sc`, `sc-sigmoid`, `dcs`,
//! `gm`, `huber`, `cauchy`, `welsch`. The parameter is α_init for `aeros`,
//! the fixed α for `aeros-fixed`, Φ for `dcs` and the kernel scale for the
//! fixed kernels. `@batch` forces a batch solve and `@N` an incremental
//! replay with batches of `N` edges; without it the experiment default holds.

use std::fmt;
use std::str::FromStr;

use aeros_core::{AerosConfig, FixedKernel, RobustConfig, ScConfig};
use anyhow::{bail, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Incremental(usize),
}

impl Mode {
    /// `0` means batch.
    pub fn from_batch_size(n: usize) -> Self {
        if n == 0 {
            Mode::Batch
        } else {
            Mode::Incremental(n)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    /// The text the method was parsed from, used in reports and file names.
    pub label: String,
    pub config: RobustConfig,
    pub mode: Option<Mode>,
}

impl MethodSpec {
    pub fn mode_or(&self, default: Mode) -> Mode {
        self.mode.unwrap_or(default)
    }

    /// Label with characters unsafe in file names replaced.
    pub fn file_stem(&self) -> String {
        self.label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for MethodSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let label = s.trim().to_string();
        let (body, mode) = match label.split_once('@') {
            Some((b, "batch")) => (b, Some(Mode::Batch)),
            Some((b, n)) => {
                let n: usize = n.parse().with_context(|| format!("invalid batch size in method '{label}'"))?;
                if n == 0 {
                    bail!("batch size must be positive in method '{label}'");
                }
                (b, Some(Mode::Incremental(n)))
            }
            None => (label.as_str(), None),
        };
        let (name, param) = match body.split_once(':') {
            Some((n, p)) => {
                let v: f64 = p.parse().with_context(|| format!("invalid parameter in method '{label}'"))?;
                if !v.is_finite() {
                    bail!("invalid parameter in method '{label}'");
                }
                (n, Some(v))
            }
            None => (body, None),
        };
        let positive = |default: f64| -> anyhow::Result<f64> {
            let v = param.unwrap_or(default);
            if v <= 0.0 {
                bail!("parameter of method '{label}' must be positive");
            }
            Ok(v)
        };
        let config = match name {
            "l2" => RobustConfig::L2,
            "aeros" => {
                let cfg = AerosConfig::default();
                RobustConfig::Aeros(AerosConfig { alpha_init: cfg.clamp(param.unwrap_or(cfg.alpha_init)), ..cfg })
            }
            "aeros-fixed" => {
                let Some(a) = param else { bail!("method '{label}' needs a fixed α, e.g. aeros-fixed:0") };
                RobustConfig::Aeros(AerosConfig::with_fixed_alpha(a))
            }
            "sc" => RobustConfig::Sc(ScConfig::default()),
            "sc-sigmoid" => RobustConfig::Sc(ScConfig::sigmoid()),
            "dcs" => RobustConfig::Dcs { phi: positive(1.0)? },
            "gm" => RobustConfig::Fixed(FixedKernel::GemanMcClure(positive(1.0)?)),
            "huber" => RobustConfig::Fixed(FixedKernel::Huber(positive(1.345)?)),
            "cauchy" => RobustConfig::Fixed(FixedKernel::Cauchy(positive(1.0)?)),
            "welsch" => RobustConfig::Fixed(FixedKernel::Welsch(positive(1.0)?)),
            other => bail!("unknown method '{other}' (expected l2, aeros, aeros-fixed, sc, sc-sigmoid, dcs, gm, huber, cauchy or welsch)"),
        };
        if param.is_some() && matches!(name, "l2" | "sc" | "sc-sigmoid") {
            bail!("method '{name}' takes no parameter");
        }
        Ok(Self { label, config, mode })
    }
}
