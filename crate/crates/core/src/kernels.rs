//! Smoothing kernels, their moment constants and bandwidth rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Symmetric second-order kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `(3/4)(1 - u^2)` on `[-1, 1]`.
    #[default]
    Epanechnikov,
    /// Standard normal density.
    Gaussian,
    /// `1 - |u|` on `[-1, 1]`.
    Triangular,
    /// `1/2` on `[-1, 1]`.
    Uniform,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Epanechnikov,
        Kernel::Gaussian,
        Kernel::Triangular,
        Kernel::Uniform,
    ];

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Triangular => {
                let a = u.abs();
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support, `None` for kernels with unbounded support.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            Kernel::Gaussian => None,
            _ => Some(1.0),
        }
    }

    /// `kappa_j = ∫ u^j K(u) du`, or `nu_j = ∫ u^j K(u)^2 du` when `squared`.
    ///
    /// All four families have polynomial or Gaussian profiles, so every moment
    /// has a closed form; odd moments vanish by symmetry.
    pub fn moment(self, j: u32, squared: bool) -> f64 {
        if j % 2 == 1 {
            return 0.0;
        }
        let jf = f64::from(j);
        match (self, squared) {
            (Kernel::Epanechnikov, false) => 1.5 * (1.0 / (jf + 1.0) - 1.0 / (jf + 3.0)),
            (Kernel::Epanechnikov, true) => {
                1.125 * (1.0 / (jf + 1.0) - 2.0 / (jf + 3.0) + 1.0 / (jf + 5.0))
            }
            (Kernel::Gaussian, false) => double_factorial_odd(j),
            // K^2 = N(0, 1/2) density / (2 sqrt(pi))
            (Kernel::Gaussian, true) => {
                double_factorial_odd(j) * 0.5f64.powi(j as i32 / 2)
                    / (2.0 * std::f64::consts::PI.sqrt())
            }
            (Kernel::Triangular, false) => 2.0 * (1.0 / (jf + 1.0) - 1.0 / (jf + 2.0)),
            (Kernel::Triangular, true) => {
                2.0 * (1.0 / (jf + 1.0) - 2.0 / (jf + 2.0) + 1.0 / (jf + 3.0))
            }
            (Kernel::Uniform, false) => 1.0 / (jf + 1.0),
            (Kernel::Uniform, true) => 0.5 / (jf + 1.0),
        }
    }

    /// Shorthand for `kappa_2`.
    pub fn kappa2(self) -> f64 {
        self.moment(2, false)
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Gaussian => "gaussian",
            Kernel::Triangular => "triangular",
            Kernel::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown kernel `{s}`")))
    }
}

/// `(j - 1)!!` for even `j`, the `j`-th moment of a standard normal.
fn double_factorial_odd(j: u32) -> f64 {
    (1..j).step_by(2).map(f64::from).product()
}

/// How a bandwidth is derived from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `scale * sd * n^(-1/5)`.
    Scaled { scale: f64 },
    /// `(4/3)^(1/5) * sd * n^(-1/5)`.
    Silverman,
    /// A fixed user-supplied value.
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Scaled { scale } if !(scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidConfig("bandwidth scale must be positive".into()),
            ),
            BandwidthRule::Fixed { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::InvalidConfig("bandwidth must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A positive bandwidth together with the rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub h: f64,
    pub rule: BandwidthRule,
}

impl Bandwidth {
    pub fn fixed(h: f64) -> Result<Self> {
        let rule = BandwidthRule::Fixed { h };
        rule.validate()?;
        Ok(Self { h, rule })
    }
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// Applies `rule` to the spread of `values`.
pub fn bandwidth_rule(values: &[f64], rule: BandwidthRule) -> Result<Bandwidth> {
    rule.validate()?;
    if let BandwidthRule::Fixed { h } = rule {
        return Ok(Bandwidth { h, rule });
    }
    if values.len() < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            got: values.len(),
        });
    }
    let sd = sample_sd(values);
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::DegenerateBandwidth);
    }
    let rate = (values.len() as f64).powf(-0.2);
    let h = match rule {
        BandwidthRule::Scaled { scale } => scale * sd * rate,
        BandwidthRule::Silverman => (4.0f64 / 3.0).powf(0.2) * sd * rate,
        BandwidthRule::Fixed { .. } => unreachable!(),
    };
    Ok(Bandwidth { h, rule })
}
