//! Regression-adjustment, inverse-weighting and doubly robust estimators under positivity.

use super::{estimate_curve, CurveEstimate, Estimand, Estimator, FoldedNuisance, RaTerm, Scale, Summands};
use crate::data::{DrForm, EstimationConfig, EvalGrid, ObservationSet, WeightPoint};
use crate::error::{Error, Result};
use crate::kernels::Bandwidth;
use crate::nuisance::{CondDensityFn, NuisanceSet, OutcomeFn, ZeroOutcome};
use std::sync::Arc;

/// Quantities shared by every grid point of one positivity-based curve.
pub(crate) struct Context<'a> {
    data: &'a ObservationSet,
    nuisance: &'a FoldedNuisance,
    est: Estimator,
    h: f64,
    cfg: &'a EstimationConfig,
    /// Floored `p(T_i | S_i)` from each row's fold.
    sample_density: Vec<f64>,
    /// `mu(T_i, S_i)`, only for the efficient-influence residual.
    mu_at_sample: Vec<f64>,
}

fn density_of(set: &NuisanceSet, est: Estimator) -> Result<&dyn CondDensityFn> {
    set.cond_density.as_deref().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{} needs a conditional treatment density",
            est.name()
        ))
    })
}

impl<'a> Context<'a> {
    pub(crate) fn new(
        data: &'a ObservationSet,
        nuisance: &'a FoldedNuisance,
        est: Estimator,
        h: f64,
        cfg: &'a EstimationConfig,
    ) -> Result<Self> {
        let n = data.len();
        let mut sample_density = Vec::new();
        if est.needs_cond_density() {
            sample_density.reserve(n);
            for i in 0..n {
                let p = density_of(nuisance.for_row(i), est)?;
                let v = p.density(data.treatments()[i], data.covariates(i));
                sample_density.push(v.max(cfg.density_floor));
            }
        }
        let mu_at_sample = if est == Estimator::ThetaDr && cfg.dr_form == DrForm::Eif {
            (0..n)
                .map(|i| {
                    nuisance
                        .for_row(i)
                        .outcome
                        .mu(data.treatments()[i], data.covariates(i))
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            data,
            nuisance,
            est,
            h,
            cfg,
            sample_density,
            mu_at_sample,
        })
    }

    fn weight_density(&self, i: usize, t: f64) -> f64 {
        let query = self.cfg.weight_point == WeightPoint::QueryPoint
            && matches!(self.est, Estimator::MIpw | Estimator::ThetaIpw);
        if query {
            let p = self.nuisance.for_row(i).cond_density.as_deref();
            p.map_or(self.cfg.density_floor, |p| {
                p.density(t, self.data.covariates(i))
            })
            .max(self.cfg.density_floor)
        } else {
            self.sample_density[i]
        }
    }

    pub(crate) fn summands(&self, t: f64) -> Summands {
        let data = self.data;
        let n = data.len();
        let kernel = self.cfg.kernel;
        let y = data.outcomes();
        let tr = data.treatments();
        let outcome = |i: usize| -> &dyn OutcomeFn { self.nuisance.for_row(i).outcome.as_ref() };

        match self.est {
            Estimator::MRa => {
                let r = (0..n).map(|i| outcome(i).mu(t, data.covariates(i))).collect();
                return Summands {
                    t,
                    weighted: None,
                    ra: RaTerm::Mean(r),
                    n_effective: n,
                    flagged: false,
                };
            }
            Estimator::ThetaRa => {
                let r = (0..n).map(|i| outcome(i).beta(t, data.covariates(i))).collect();
                return Summands {
                    t,
                    weighted: None,
                    ra: RaTerm::Mean(r),
                    n_effective: n,
                    flagged: false,
                };
            }
            _ => {}
        }

        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        let mut ra = Vec::new();
        let mut n_effective = 0;
        for i in 0..n {
            let s = data.covariates(i);
            let u = (tr[i] - t) / self.h;
            let k = kernel.eval(u);
            let ra_i = match self.est {
                Estimator::MDr => Some(outcome(i).mu(t, s)),
                Estimator::ThetaDr => Some(outcome(i).beta(t, s)),
                _ => None,
            };
            if let Some(v) = ra_i {
                ra.push(v);
            }
            if k == 0.0 {
                continue;
            }
            n_effective += 1;
            let p = self.weight_density(i, t);
            let (resid, lever) = match self.est {
                Estimator::MIpw => (y[i], k),
                Estimator::MDr => (y[i] - outcome(i).mu(t, s), k),
                Estimator::ThetaIpw => (y[i], u * k),
                Estimator::ThetaDr => {
                    let resid = match self.cfg.dr_form {
                        DrForm::LocalPoly => {
                            y[i] - outcome(i).mu(t, s) - (tr[i] - t) * ra_i.unwrap_or(0.0)
                        }
                        DrForm::Eif => y[i] - self.mu_at_sample[i],
                    };
                    (resid, u * k)
                }
                _ => unreachable!("not a positivity estimator"),
            };
            num[i] = resid * (lever / p);
            den[i] = k / p;
        }
        Summands {
            t,
            weighted: Some((num, den)),
            ra: if ra.is_empty() {
                RaTerm::None
            } else {
                RaTerm::Mean(ra)
            },
            n_effective,
            flagged: n_effective == 0,
        }
    }
}

fn density_only(density: Arc<dyn CondDensityFn>) -> NuisanceSet {
    NuisanceSet::new(Arc::new(ZeroOutcome)).with_cond_density(density)
}

/// `(1/n) sum_i mu(t, S_i)`.
pub fn m_ra(data: &ObservationSet, outcome: Arc<dyn OutcomeFn>, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, &NuisanceSet::new(outcome), Estimator::MRa, h, grid, cfg)
}

/// Kernel-localized inverse-density weighted average of `Y`.
pub fn m_ipw(data: &ObservationSet, density: Arc<dyn CondDensityFn>, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, &density_only(density), Estimator::MIpw, h, grid, cfg)
}

pub fn m_dr(data: &ObservationSet, nuisance: &NuisanceSet, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, nuisance, Estimator::MDr, h, grid, cfg)
}

/// `(1/n) sum_i beta(t, S_i)`.
pub fn theta_ra(data: &ObservationSet, outcome: Arc<dyn OutcomeFn>, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, &NuisanceSet::new(outcome), Estimator::ThetaRa, h, grid, cfg)
}

pub fn theta_ipw(data: &ObservationSet, density: Arc<dyn CondDensityFn>, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, &density_only(density), Estimator::ThetaIpw, h, grid, cfg)
}

/// Doubly robust derivative estimator; the residual is chosen by `cfg.dr_form`.
///
/// Density weights are always taken at the sample points.
pub fn theta_dr(data: &ObservationSet, nuisance: &NuisanceSet, h: Bandwidth, grid: &EvalGrid, cfg: &EstimationConfig) -> Result<CurveEstimate> {
    estimate_curve(data, nuisance, Estimator::ThetaDr, h, grid, cfg)
}

/// Plug-in variance of the doubly robust derivative estimator at `t`.
pub fn variance_theta_dr(
    data: &ObservationSet,
    nuisance: &NuisanceSet,
    h: Bandwidth,
    t: f64,
    theta_hat: f64,
    cfg: &EstimationConfig,
) -> Result<f64> {
    let folded = FoldedNuisance::single(nuisance.clone(), data.len());
    let ctx = Context::new(data, &folded, Estimator::ThetaDr, h.h, cfg)?;
    let scale = Scale {
        estimand: Estimand::Derivative,
        h: h.h,
        kappa2: cfg.kernel.kappa2(),
        self_normalized: cfg.self_normalized,
        n: data.len(),
    };
    Ok(ctx.summands(t).variance(&scale, theta_hat))
}

/// Difference between the query-point and sample-point inverse-weighted derivative estimates at `t`.
///
/// Both are computed without self-normalization.
pub fn ipw_variant_bias_diag(
    data: &ObservationSet,
    density: Arc<dyn CondDensityFn>,
    h: Bandwidth,
    t: f64,
    cfg: &EstimationConfig,
) -> Result<f64> {
    let grid = EvalGrid::new(vec![t])?;
    let mut c = cfg.clone();
    c.self_normalized = false;
    c.strict = false;
    c.weight_point = WeightPoint::SamplePoint;
    let sample = theta_ipw(data, Arc::clone(&density), h, &grid, &c)?;
    c.weight_point = WeightPoint::QueryPoint;
    let query = theta_ipw(data, density, h, &grid, &c)?;
    Ok(query.estimates[0].value - sample.estimates[0].value)
}
