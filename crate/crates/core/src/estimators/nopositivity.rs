//! Bias-corrected estimators for designs where the conditional treatment density
//! vanishes on part of the covariate space, plus integral estimators of `m(t)`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use super::{
    estimate_curve, estimate_folded, CurveEstimate, CurveWork, Estimand, Estimator,
    FoldedNuisance, PointEstimate, RaTerm, Scale, Summands,
};
use crate::data::{EstimationConfig, EvalGrid, ObservationSet};
use crate::error::{Error, Result};
use crate::kernels::Bandwidth;
use crate::nuisance::{
    InteriorDensity, JointDensityFn, NuisanceSet, OutcomeFn, ZeroOutcome,
};
use crate::quadrature::{cumulative_trapezoid, interpolate};

/// Trimmed covariate densities already computed for a fitted nuisance, keyed by
/// sample fingerprint, query point, level multiplier and density floor.
#[derive(Debug, Clone, Default)]
pub(crate) struct InteriorCache(Arc<Mutex<HashMap<[u64; 4], Interior>>>);

/// `p_zeta(S_i | t)` over all rows; `None` when the level set is empty.
type Interior = Option<Arc<Vec<f64>>>;

pub(crate) struct Context<'a> {
    data: &'a ObservationSet,
    nuisance: &'a FoldedNuisance,
    est: Estimator,
    h: f64,
    cfg: &'a EstimationConfig,
    grid: Vec<f64>,
    /// Floored `p(T_i, S_i)`.
    joint_at_sample: Vec<f64>,
    /// Floored `p_S(S_i)`.
    marginal_s: Vec<f64>,
    /// Per grid point.
    interior: Vec<Interior>,
}

fn joint_of(set: &NuisanceSet, est: Estimator) -> Result<&Arc<dyn JointDensityFn>> {
    set.joint.as_ref().ok_or_else(|| {
        Error::InvalidConfig(format!("{} needs a joint density of (T, S)", est.name()))
    })
}

fn fingerprint(data: &ObservationSet) -> u64 {
    let mut hasher = DefaultHasher::new();
    data.len().hash(&mut hasher);
    for i in 0..data.len() {
        for v in data.covariates(i) {
            v.to_bits().hash(&mut hasher);
        }
    }
    hasher.finish()
}

/// `p_zeta(S_i | t)` for every row and grid point.
///
/// Each fold's density is trimmed and normalized over the full sample, then read off at
/// that fold's rows.
fn interior_table(
    data: &ObservationSet,
    nuisance: &FoldedNuisance,
    est: Estimator,
    cfg: &EstimationConfig,
    grid: &[f64],
) -> Result<Vec<Interior>> {
    let print = fingerprint(data);
    let key = |t: f64| {
        [
            print,
            t.to_bits(),
            cfg.level_multiplier.to_bits(),
            cfg.density_floor.to_bits(),
        ]
    };
    let mut cache = nuisance
        .interior_cache
        .0
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    let missing: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&t| !cache.contains_key(&key(t)))
        .collect();
    if !missing.is_empty() {
        let n = data.len();
        let points: Vec<&[f64]> = (0..n).map(|i| data.covariates(i)).collect();
        let mut table: Vec<Option<Vec<f64>>> = vec![Some(vec![0.0; n]); missing.len()];
        // Folds sharing one joint model share one evaluation.
        #[allow(clippy::type_complexity)]
        let mut done: Vec<(&Arc<dyn JointDensityFn>, Vec<Option<Vec<f64>>>)> = Vec::new();
        for fold in 0..nuisance.folds() {
            let rows = nuisance.members(fold);
            if rows.is_empty() {
                continue;
            }
            let joint = joint_of(nuisance.part(fold), est)?;
            let position = done.iter().position(|(j, _)| Arc::ptr_eq(j, joint));
            let position = match position {
                Some(p) => p,
                None => {
                    let cond = joint.cond_s_given_t_grid(&missing, &points);
                    let marg: Vec<f64> = points
                        .iter()
                        .map(|s| joint.marginal_s(s).max(cfg.density_floor))
                        .collect();
                    let mut per_t = Vec::with_capacity(missing.len());
                    for (j, &t) in missing.iter().enumerate() {
                        per_t.push(
                            match InteriorDensity::from_values(t, &cond[j], &marg, cfg.level_multiplier) {
                                Ok(inner) => Some(inner.at_sample().to_vec()),
                                Err(Error::EmptyLevelSet { .. }) => None,
                                Err(e) => return Err(e),
                            },
                        );
                    }
                    done.push((joint, per_t));
                    done.len() - 1
                }
            };
            for (slot, values) in table.iter_mut().zip(&done[position].1) {
                match (slot.as_mut(), values) {
                    (Some(out), Some(v)) => {
                        for &i in rows {
                            out[i] = v[i];
                        }
                    }
                    _ => *slot = None,
                }
            }
        }
        for (t, values) in missing.iter().zip(table) {
            cache.insert(key(*t), values.map(Arc::new));
        }
    }
    Ok(grid.iter().map(|&t| cache[&key(t)].clone()).collect())
}

impl<'a> Context<'a> {
    pub(crate) fn new(
        data: &'a ObservationSet,
        nuisance: &'a FoldedNuisance,
        est: Estimator,
        h: f64,
        cfg: &'a EstimationConfig,
        grid: &[f64],
    ) -> Result<Self> {
        let n = data.len();
        let mut joint_at_sample = Vec::new();
        let mut marginal_s = Vec::new();
        let mut interior = Vec::new();
        if est.needs_joint() {
            joint_at_sample.reserve(n);
            marginal_s.reserve(n);
            for i in 0..n {
                let joint = joint_of(nuisance.for_row(i), est)?;
                let s = data.covariates(i);
                joint_at_sample.push(joint.joint(data.treatments()[i], s).max(cfg.density_floor));
                marginal_s.push(joint.marginal_s(s).max(cfg.density_floor));
            }
            interior = interior_table(data, nuisance, est, cfg, grid)?;
        }
        Ok(Self {
            data,
            nuisance,
            est,
            h,
            cfg,
            grid: grid.to_vec(),
            joint_at_sample,
            marginal_s,
            interior,
        })
    }

    fn flagged(t: f64) -> Summands {
        Summands {
            t,
            weighted: None,
            ra: RaTerm::None,
            n_effective: 0,
            flagged: true,
        }
    }

    pub(crate) fn summands(&self, k: usize) -> Result<Summands> {
        let t = self.grid[k];
        let data = self.data;
        let n = data.len();
        let kernel = self.cfg.kernel;
        let y = data.outcomes();
        let tr = data.treatments();
        let outcome = |i: usize| -> &dyn OutcomeFn { self.nuisance.for_row(i).outcome.as_ref() };

        if self.est == Estimator::ThetaCRa {
            let mut num = vec![0.0; n];
            let mut den = vec![0.0; n];
            let mut n_effective = 0;
            for i in 0..n {
                let k = kernel.eval((tr[i] - t) / self.h);
                if k > 0.0 {
                    n_effective += 1;
                    num[i] = k * outcome(i).beta(t, data.covariates(i));
                    den[i] = k;
                }
            }
            if n_effective == 0 {
                return Ok(Self::flagged(t));
            }
            return Ok(Summands {
                t,
                weighted: None,
                ra: RaTerm::Ratio { num, den },
                n_effective,
                flagged: false,
            });
        }

        let interior = match &self.interior[k] {
            Some(v) => v,
            None if self.cfg.strict => return Err(Error::EmptyLevelSet { t }),
            None => return Ok(Self::flagged(t)),
        };
        let dr = self.est == Estimator::ThetaCDr;
        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        let (mut ra_num, mut ra_den) = if dr {
            (vec![0.0; n], vec![0.0; n])
        } else {
            (Vec::new(), Vec::new())
        };
        let mut n_effective = 0;
        for i in 0..n {
            let pz = interior[i];
            if pz == 0.0 {
                continue;
            }
            let s = data.covariates(i);
            let beta = if dr { outcome(i).beta(t, s) } else { 0.0 };
            if dr {
                let w = pz / self.marginal_s[i];
                ra_num[i] = beta * w;
                ra_den[i] = w;
            }
            let u = (tr[i] - t) / self.h;
            let k = kernel.eval(u);
            if k == 0.0 {
                continue;
            }
            n_effective += 1;
            let resid = if dr {
                y[i] - outcome(i).mu(t, s) - (tr[i] - t) * beta
            } else {
                y[i]
            };
            let w = pz / self.joint_at_sample[i];
            num[i] = resid * u * k * w;
            den[i] = k * w;
        }
        if n_effective == 0 {
            return Ok(Self::flagged(t));
        }
        Ok(Summands {
            t,
            weighted: Some((num, den)),
            ra: if dr {
                RaTerm::Ratio {
                    num: ra_num,
                    den: ra_den,
                }
            } else {
                RaTerm::None
            },
            n_effective,
            flagged: false,
        })
    }
}

/// `sum_i w_i(t) beta(t, S_i)` with Nadaraya-Watson weights in the treatment.
pub fn theta_c_ra(
    data: &ObservationSet,
    outcome: Arc<dyn OutcomeFn>,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveEstimate> {
    estimate_curve(data, &NuisanceSet::new(outcome), Estimator::ThetaCRa, h, grid, cfg)
}

/// Inverse joint-density weighted derivative estimator reweighted by the trimmed `p_zeta(S_i|t)`.
pub fn theta_c_ipw(
    data: &ObservationSet,
    joint: Arc<dyn JointDensityFn>,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveEstimate> {
    let set = NuisanceSet::new(Arc::new(ZeroOutcome)).with_joint(joint);
    estimate_curve(data, &set, Estimator::ThetaCIpw, h, grid, cfg)
}

/// Bias-corrected doubly robust derivative estimator. `nuisance.joint` must be set.
pub fn theta_c_dr(
    data: &ObservationSet,
    nuisance: &NuisanceSet,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveEstimate> {
    estimate_curve(data, nuisance, Estimator::ThetaCDr, h, grid, cfg)
}

/// Plug-in variance of [`theta_c_dr`] at `t`.
pub fn variance_theta_c_dr(
    data: &ObservationSet,
    nuisance: &NuisanceSet,
    h: Bandwidth,
    t: f64,
    theta_hat: f64,
    cfg: &EstimationConfig,
) -> Result<f64> {
    let folded = FoldedNuisance::single(nuisance.clone(), data.len());
    let ctx = Context::new(data, &folded, Estimator::ThetaCDr, h.h, cfg, &[t])?;
    let scale = Scale {
        estimand: Estimand::Derivative,
        h: h.h,
        kappa2: cfg.kernel.kappa2(),
        self_normalized: cfg.self_normalized,
        n: data.len(),
    };
    Ok(ctx.summands(0)?.variance(&scale, theta_hat))
}

fn integral_method(theta: Estimator) -> Estimator {
    match theta {
        Estimator::ThetaRa | Estimator::ThetaCRa => Estimator::MCRa,
        Estimator::ThetaIpw | Estimator::ThetaCIpw => Estimator::MCIpw,
        _ => Estimator::MCDr,
    }
}

/// `m(t) = mean(Y) + (1/n) sum_i int_{T_i}^t theta`, with `theta` tabulated on its own grid.
///
/// The tabulated grid must span every `T_i` and every point of `grid`.
pub fn integrate_theta(
    theta_curve: &CurveEstimate,
    data: &ObservationSet,
    grid: &EvalGrid,
) -> Result<CurveEstimate> {
    let xs = theta_curve.grid.points();
    let ys = theta_curve.values();
    let tr = data.treatments();
    let need_lo = tr.iter().copied().fold(grid.points()[0], f64::min);
    let need_hi = tr
        .iter()
        .copied()
        .fold(*grid.points().last().unwrap_or(&need_lo), f64::max);
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if lo > need_lo || hi < need_hi || xs.len() < 2 {
        return Err(Error::GridCoverage {
            lo,
            hi,
            need_lo,
            need_hi,
        });
    }
    warn_on_gaps(tr, (hi - lo) / (xs.len() - 1) as f64);

    let cumulative = cumulative_trapezoid(xs, &ys);
    let n = tr.len() as f64;
    let y_bar = data.outcomes().iter().sum::<f64>() / n;
    let anchor = tr.iter().map(|&t| interpolate(xs, &cumulative, t)).sum::<f64>() / n;
    let estimates = grid
        .points()
        .iter()
        .map(|&t| PointEstimate {
            value: y_bar + interpolate(xs, &cumulative, t) - anchor,
            variance: 0.0,
            n_effective: data.len(),
            flagged: false,
        })
        .collect();
    Ok(CurveEstimate::assemble(
        grid.clone(),
        estimates,
        integral_method(theta_curve.method),
        theta_curve.h,
        data.len(),
        0.05,
    ))
}

fn warn_on_gaps(treatments: &[f64], spacing: f64) {
    let mut sorted = treatments.to_vec();
    sorted.sort_by(f64::total_cmp);
    let widest = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if widest > 5.0 * spacing {
        log::warn!(
            "observed treatments have a gap of {widest:.4} (fine-grid spacing {spacing:.4}); the treatment support may not be connected"
        );
    }
}

/// Fine grid spanning the observed treatments and the query grid.
pub fn fine_grid(data: &ObservationSet, grid: &EvalGrid, points: usize) -> Result<EvalGrid> {
    let tr = data.treatments();
    let lo = tr.iter().copied().fold(grid.points()[0], f64::min);
    let hi = tr
        .iter()
        .copied()
        .fold(*grid.points().last().unwrap_or(&lo), f64::max);
    EvalGrid::linspace(lo, hi, points)
}

pub(crate) fn m_c_work(
    data: &ObservationSet,
    nuisance: &FoldedNuisance,
    base: Estimator,
    est: Estimator,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveWork> {
    let fine = fine_grid(data, grid, cfg.fine_grid_points)?;
    let theta = estimate_folded(data, nuisance, base, h, &fine, cfg)?;
    let mut curve = integrate_theta(&theta.curve, data, grid)?;
    curve.method = est;
    let (lower, upper) = curve.estimates.iter().map(|e| (e.value, e.value)).unzip();
    curve.ci_lower = lower;
    curve.ci_upper = upper;
    Ok(CurveWork {
        curve,
        tables: Vec::new(),
        scale: Scale {
            estimand: Estimand::DoseResponse,
            h: h.h,
            kappa2: cfg.kernel.kappa2(),
            self_normalized: cfg.self_normalized,
            n: data.len(),
        },
    })
}

/// Integral dose-response estimator built on the derivative estimator matching `est`.
pub fn m_c_curve(
    data: &ObservationSet,
    nuisance: &NuisanceSet,
    est: Estimator,
    h: Bandwidth,
    grid: &EvalGrid,
    cfg: &EstimationConfig,
) -> Result<CurveEstimate> {
    if est.integrand().is_none() {
        return Err(Error::InvalidConfig(format!(
            "{} is not an integral dose-response estimator",
            est.name()
        )));
    }
    estimate_curve(data, nuisance, est, h, grid, cfg)
}
