//! Point estimators of `m(t)` and `theta(t)`, their variances and pointwise intervals.
//!
//! Every kernel-weighted estimator is reduced, at each grid point, to a table of
//! per-observation summands ([`Summands`]). Point values, plug-in variances and
//! multiplier-bootstrap replicates are all computed from the same table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{EstimationConfig, EvalGrid, ObservationSet};
use crate::error::{Error, Result};
use crate::kernels::Bandwidth;
use crate::nuisance::NuisanceSet;

pub mod nopositivity;
pub mod positivity;

pub use nopositivity::{
    integrate_theta, m_c_curve, theta_c_dr, theta_c_ipw, theta_c_ra, variance_theta_c_dr,
};
pub use positivity::{
    ipw_variant_bias_diag, m_dr, m_ipw, m_ra, theta_dr, theta_ipw, theta_ra, variance_theta_dr,
};

/// Target curve of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Dose-response curve `m(t)`, root-`nh` scale.
    DoseResponse,
    /// Derivative effect curve `theta(t)`, root-`nh^3` scale.
    Derivative,
}

impl Estimand {
    /// Power of `h` in the convergence rate: `sqrt(n h^p)`.
    pub fn rate_power(self) -> i32 {
        match self {
            Estimand::DoseResponse => 1,
            Estimand::Derivative => 3,
        }
    }
}

/// Every estimator the crate implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    MRa,
    MIpw,
    MDr,
    ThetaRa,
    ThetaIpw,
    ThetaDr,
    ThetaCRa,
    ThetaCIpw,
    ThetaCDr,
    MCRa,
    MCIpw,
    MCDr,
}

impl Estimator {
    pub const ALL: [Estimator; 12] = [
        Estimator::MRa,
        Estimator::MIpw,
        Estimator::MDr,
        Estimator::ThetaRa,
        Estimator::ThetaIpw,
        Estimator::ThetaDr,
        Estimator::ThetaCRa,
        Estimator::ThetaCIpw,
        Estimator::ThetaCDr,
        Estimator::MCRa,
        Estimator::MCIpw,
        Estimator::MCDr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::MRa => "m_ra",
            Estimator::MIpw => "m_ipw",
            Estimator::MDr => "m_dr",
            Estimator::ThetaRa => "theta_ra",
            Estimator::ThetaIpw => "theta_ipw",
            Estimator::ThetaDr => "theta_dr",
            Estimator::ThetaCRa => "theta_c_ra",
            Estimator::ThetaCIpw => "theta_c_ipw",
            Estimator::ThetaCDr => "theta_c_dr",
            Estimator::MCRa => "m_c_ra",
            Estimator::MCIpw => "m_c_ipw",
            Estimator::MCDr => "m_c_dr",
        }
    }

    pub fn estimand(self) -> Estimand {
        match self {
            Estimator::MRa
            | Estimator::MIpw
            | Estimator::MDr
            | Estimator::MCRa
            | Estimator::MCIpw
            | Estimator::MCDr => Estimand::DoseResponse,
            _ => Estimand::Derivative,
        }
    }

    /// Whether a plug-in variance and pointwise interval are produced.
    pub fn has_inference(self) -> bool {
        matches!(
            self,
            Estimator::MIpw
                | Estimator::MDr
                | Estimator::ThetaIpw
                | Estimator::ThetaDr
                | Estimator::ThetaCIpw
                | Estimator::ThetaCDr
        )
    }

    /// Needs the conditional treatment density `p(t|s)`.
    pub fn needs_cond_density(self) -> bool {
        matches!(
            self,
            Estimator::MIpw | Estimator::MDr | Estimator::ThetaIpw | Estimator::ThetaDr
        )
    }

    /// Needs the joint density of `(T, S)`.
    pub fn needs_joint(self) -> bool {
        matches!(
            self,
            Estimator::ThetaCIpw | Estimator::ThetaCDr | Estimator::MCIpw | Estimator::MCDr
        )
    }

    /// The derivative estimator integrated by an `m_c_*` estimator.
    pub fn integrand(self) -> Option<Estimator> {
        match self {
            Estimator::MCRa => Some(Estimator::ThetaCRa),
            Estimator::MCIpw => Some(Estimator::ThetaCIpw),
            Estimator::MCDr => Some(Estimator::ThetaCDr),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

/// Estimate at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    /// Plug-in asymptotic variance on the estimand's rate scale; 0 when not available.
    pub variance: f64,
    /// Observations carrying nonzero weight at this point.
    pub n_effective: usize,
    /// Set when the kernel window (or level set) was empty and the value was defaulted to 0.
    pub flagged: bool,
}

/// An estimated curve over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEstimate {
    pub grid: EvalGrid,
    pub estimates: Vec<PointEstimate>,
    pub method: Estimator,
    pub h: Bandwidth,
    /// Sample size the variances refer to.
    pub n: usize,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub band_quantile: Option<f64>,
}

impl CurveEstimate {
    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.value).collect()
    }

    pub fn has_inference(&self) -> bool {
        self.method.has_inference()
    }

    /// Standard error at grid index `k` on the estimator's own scale.
    pub fn std_error(&self, k: usize) -> f64 {
        let p = self.method.estimand().rate_power();
        (self.estimates[k].variance / (self.n as f64 * self.h.h.powi(p))).sqrt()
    }

    pub(crate) fn assemble(
        grid: EvalGrid,
        estimates: Vec<PointEstimate>,
        method: Estimator,
        h: Bandwidth,
        n: usize,
        tau: f64,
    ) -> Self {
        let q = normal_quantile(1.0 - tau / 2.0);
        let p = method.estimand().rate_power();
        let (ci_lower, ci_upper) = estimates
            .iter()
            .map(|e| interval(e.value, e.variance, n, h.h, p, q))
            .unzip();
        Self {
            grid,
            estimates,
            method,
            h,
            n,
            ci_lower,
            ci_upper,
            band_quantile: None,
        }
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn interval(value: f64, variance: f64, n: usize, h: f64, power: i32, q: f64) -> (f64, f64) {
    let half = q * (variance / (n as f64 * h.powi(power))).sqrt();
    (value - half, value + half)
}

/// Wald interval `theta +- q_{1-tau/2} sqrt(V / (n h^3))`.
pub fn pointwise_ci(estimate: f64, variance: f64, n: usize, h: f64, tau: f64) -> (f64, f64) {
    interval(estimate, variance, n, h, 3, normal_quantile(1.0 - tau / 2.0))
}

/// Wald interval on the dose-response scale, `m +- q_{1-tau/2} sqrt(V / (n h))`.
pub fn pointwise_ci_m(estimate: f64, variance: f64, n: usize, h: f64, tau: f64) -> (f64, f64) {
    interval(estimate, variance, n, h, 1, normal_quantile(1.0 - tau / 2.0))
}

/// Nuisance functions indexed by the fold of each observation.
///
/// Without cross-fitting every observation maps to the single fitted set.
#[derive(Debug, Clone)]
pub struct FoldedNuisance {
    assignment: Vec<usize>,
    parts: Vec<NuisanceSet>,
    members: Vec<Vec<usize>>,
    pub(crate) interior_cache: nopositivity::InteriorCache,
}

impl FoldedNuisance {
    /// One nuisance set shared by all `n` observations.
    pub fn single(set: NuisanceSet, n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            parts: vec![set],
            members: vec![(0..n).collect()],
            interior_cache: Default::default(),
        }
    }

    pub fn new(assignment: Vec<usize>, parts: Vec<NuisanceSet>) -> Result<Self> {
        let mut members = vec![Vec::new(); parts.len()];
        for (i, &f) in assignment.iter().enumerate() {
            members
                .get_mut(f)
                .ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "observation {i} assigned to fold {f} but only {} nuisance sets given",
                        parts.len()
                    ))
                })?
                .push(i);
        }
        Ok(Self {
            assignment,
            parts,
            members,
            interior_cache: Default::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn folds(&self) -> usize {
        self.parts.len()
    }

    /// Nuisances used for observation `i`.
    pub fn for_row(&self, i: usize) -> &NuisanceSet {
        &self.parts[self.assignment[i]]
    }

    pub fn part(&self, fold: usize) -> &NuisanceSet {
        &self.parts[fold]
    }

    pub fn members(&self, fold: usize) -> &[usize] {
        &self.members[fold]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
}

/// Plug-in (regression adjustment) part of an estimator.
#[derive(Debug, Clone)]
pub(crate) enum RaTerm {
    None,
    /// `(1/n) sum_i Z_i r_i`.
    Mean(Vec<f64>),
    /// `sum_i Z_i a_i / sum_i Z_i b_i`.
    Ratio { num: Vec<f64>, den: Vec<f64> },
}

/// Per-observation terms of an estimator at one query point.
#[derive(Debug, Clone)]
pub struct Summands {
    pub(crate) t: f64,
    /// Kernel-weighted terms `(residual * weight_i, normalizing weight_i)`.
    pub(crate) weighted: Option<(Vec<f64>, Vec<f64>)>,
    pub(crate) ra: RaTerm,
    pub(crate) n_effective: usize,
    pub(crate) flagged: bool,
}

/// Constants shared by every grid point of one curve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scale {
    pub estimand: Estimand,
    pub h: f64,
    pub kappa2: f64,
    pub self_normalized: bool,
    pub n: usize,
}

impl Scale {
    /// Extra factor in the weighted term: `h kappa_2` for derivatives, 1 for levels.
    fn c(&self) -> f64 {
        match self.estimand {
            Estimand::DoseResponse => 1.0,
            Estimand::Derivative => self.h * self.kappa2,
        }
    }

    fn root(&self) -> f64 {
        self.h.powi(self.estimand.rate_power()).sqrt()
    }
}

#[inline]
fn weighted_sum(values: &[f64], z: Option<&[f64]>) -> f64 {
    match z {
        None => values.iter().sum(),
        Some(z) => values.iter().zip(z).map(|(v, w)| w * v).sum(),
    }
}

impl Summands {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn is_flagged(&self) -> bool {
        self.flagged
    }

    fn ra_value(&self, scale: &Scale, z: Option<&[f64]>) -> f64 {
        match &self.ra {
            RaTerm::None => 0.0,
            RaTerm::Mean(r) => weighted_sum(r, z) / scale.n as f64,
            RaTerm::Ratio { num, den } => {
                let d = weighted_sum(den, z);
                if d > 0.0 {
                    weighted_sum(num, z) / d
                } else {
                    0.0
                }
            }
        }
    }

    /// Estimate with optional multiplier weights `z` on every summand.
    pub(crate) fn value(&self, scale: &Scale, z: Option<&[f64]>) -> f64 {
        if self.flagged {
            return 0.0;
        }
        let weighted = match &self.weighted {
            None => 0.0,
            Some((num, den)) => {
                let s = weighted_sum(num, z);
                if scale.self_normalized {
                    s / (scale.c() * weighted_sum(den, z))
                } else {
                    s / (scale.n as f64 * scale.h * scale.c())
                }
            }
        };
        weighted + self.ra_value(scale, z)
    }

    /// Sample second moment of the influence terms, centered at `estimate`.
    pub(crate) fn variance(&self, scale: &Scale, estimate: f64) -> f64 {
        let Some((num, den)) = &self.weighted else {
            return 0.0;
        };
        if self.flagged {
            return 0.0;
        }
        let n = scale.n as f64;
        let root = scale.root();
        let mut factor = root / (scale.h * scale.c());
        if scale.self_normalized {
            factor *= n * scale.h / den.iter().sum::<f64>();
        }
        let centering: Box<dyn Fn(usize) -> f64 + '_> = match &self.ra {
            RaTerm::None => Box::new(|_| -estimate),
            RaTerm::Mean(r) => Box::new(move |i| r[i] - estimate),
            RaTerm::Ratio { .. } => {
                let c = self.ra_value(scale, None) - estimate;
                Box::new(move |_| c)
            }
        };
        num.iter()
            .enumerate()
            .map(|(i, a)| {
                let v = a * factor + root * centering(i);
                v * v
            })
            .sum::<f64>()
            / n
    }

    pub(crate) fn point(&self, scale: &Scale, with_variance: bool) -> PointEstimate {
        let value = self.value(scale, None);
        let variance = if with_variance {
            self.variance(scale, value)
        } else {
            0.0
        };
        PointEstimate {
            value,
            variance,
            n_effective: self.n_effective,
            flagged: self.flagged,
        }
    }
}

/// A curve together with the summand tables it was computed from.
#[derive(Debug, Clone)]
pub struct CurveWork {
    pub curve: CurveEstimate,
    pub(crate) tables: Vec<Summands>,
    pub(crate) scale: Scale,
}

impl CurveWork {
    pub fn tables(&self) -> &[Summands] {
        &self.tables
    }

    /// Recomputes every grid value with the summands weighted by `z`.
    pub fn reweighted(&self, z: &[f64]) -> Vec<f64> {
        self.tables
            .iter()
            .map(|s| s.value(&self.scale, Some(z)))
            .collect()
    }
}

/// Evaluates `est` on `grid` with nuisances indexed by fold.
pub fn estimate_folded(
    data: &ObservationSet,
    nuisance: &FoldedNuisance,
    est: Estimator,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveWork> {
    if nuisance.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "nuisance fold assignment covers {} rows, data has {}",
            nuisance.len(),
            data.len()
        )));
    }
    if let Some(base) = est.integrand() {
        return nopositivity::m_c_work(data, nuisance, base, est, h, grid, cfg);
    }
    let scale = Scale {
        estimand: est.estimand(),
        h: h.h,
        kappa2: cfg.kernel.kappa2(),
        self_normalized: cfg.self_normalized,
        n: data.len(),
    };
    let tables: Vec<Summands> = if est.needs_joint() || est == Estimator::ThetaCRa {
        let ctx = nopositivity::Context::new(data, nuisance, est, h.h, cfg, grid.points())?;
        (0..grid.len()).map(|k| ctx.summands(k)).collect::<Result<_>>()?
    } else {
        let ctx = positivity::Context::new(data, nuisance, est, h.h, cfg)?;
        grid.points().iter().map(|&t| ctx.summands(t)).collect()
    };
    let mut estimates = Vec::with_capacity(tables.len());
    for s in &tables {
        if s.flagged && cfg.strict {
            return Err(Error::EmptyWindow { t: s.t });
        }
        if s.flagged {
            log::debug!("{}: empty window at t = {}", est.name(), s.t);
        }
        estimates.push(s.point(&scale, est.has_inference()));
    }
    let curve = CurveEstimate::assemble(grid.clone(), estimates, est, h, data.len(), cfg.ci_level);
    Ok(CurveWork {
        curve,
        tables,
        scale,
    })
}

/// Evaluates `est` with one nuisance set for every observation.
pub fn estimate_curve(
    data: &ObservationSet,
    nuisance: &NuisanceSet,
    est: Estimator,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveEstimate> {
    let folded = FoldedNuisance::single(nuisance.clone(), data.len());
    estimate_folded(data, &folded, est, h, grid, cfg).map(|w| w.curve)
}
