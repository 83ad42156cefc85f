//! Cross-fitted nuisance estimation and multiplier-bootstrap uniform bands.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{EstimationConfig, EvalGrid, ObservationSet};
use crate::error::{Error, Result};
use crate::estimators::{estimate_folded, CurveEstimate, CurveWork, Estimator, FoldedNuisance};
use crate::kernels::{bandwidth_rule, Bandwidth};
use crate::nuisance::NuisancePlan;
use crate::rng::{ordered_map, substream, Domain};

/// Fold index of every observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    count: usize,
}

impl FoldAssignment {
    pub fn fold_of(&self, i: usize) -> usize {
        self.folds[i]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.folds
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Balanced random partition of `0..n` into `count` folds.
pub fn make_folds(n: usize, count: usize, seed: u64) -> Result<FoldAssignment> {
    if count == 0 || count > n {
        return Err(Error::InvalidConfig(format!(
            "fold count {count} must lie in [1, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if count > 1 {
        order.shuffle(&mut substream(seed, Domain::Fold, 0));
    }
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % count;
    }
    Ok(FoldAssignment { folds, count })
}

/// Fits `plan` once per fold on the complementary observations.
///
/// A single fold fits on the whole sample.
pub fn fit_folded(
    data: &ObservationSet,
    plan: &NuisancePlan,
    folds: &FoldAssignment,
) -> Result<FoldedNuisance> {
    let parts = if folds.count() == 1 {
        vec![plan.fit(data)?]
    } else {
        ordered_map(folds.count(), |fold| {
            let train: Vec<usize> = (0..data.len())
                .filter(|&i| folds.fold_of(i) != fold)
                .collect();
            plan.fit(&data.subset(&train)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
    };
    let parts = parts
        .into_iter()
        .enumerate()
        .map(|(k, mut p)| {
            p.fold = Some(k);
            p
        })
        .collect();
    FoldedNuisance::new(folds.as_slice().to_vec(), parts)
}

/// Bandwidth from `cfg.bandwidth` applied to the observed treatments.
pub fn select_bandwidth(data: &ObservationSet, cfg: &EstimationConfig) -> Result<Bandwidth> {
    bandwidth_rule(data.treatments(), cfg.bandwidth)
}

/// Fits nuisances with `cfg.folds`-fold cross-fitting and evaluates `est` on `grid`.
pub fn crossfit_curve(
    data: &ObservationSet,
    plan: &NuisancePlan,
    cfg: &EstimationConfig,
    est: Estimator,
    grid: &EvalGrid,
) -> Result<CurveWork> {
    cfg.validate()?;
    let h = select_bandwidth(data, cfg)?;
    let folds = make_folds(data.len(), cfg.folds, cfg.rng_seed)?;
    let nuisance = fit_folded(data, plan, &folds)?;
    estimate_folded(data, &nuisance, est, h, grid, cfg)
}

/// Law of the bootstrap multipliers; every choice has mean 1 and variance 1 except `Unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierLaw {
    #[default]
    Exponential,
    /// 0 or 2 with equal probability.
    TwoPoint,
    /// Always 1; replicates equal the original estimate.
    Unit,
}

impl MultiplierLaw {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            MultiplierLaw::Exponential => Exp1.sample(rng),
            MultiplierLaw::TwoPoint => {
                if rng.random::<bool>() {
                    2.0
                } else {
                    0.0
                }
            }
            MultiplierLaw::Unit => 1.0,
        }
    }
}

/// Simultaneous band over the grid.
#[derive(Debug, Clone, Serialize)]
pub struct UniformBand {
    pub curve: CurveEstimate,
    pub quantile: f64,
    pub replicates: usize,
    pub law: MultiplierLaw,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Sup statistic of every replicate, in draw order.
    pub sup_statistics: Vec<f64>,
}

/// Multiplier bootstrap of the sup-t statistic with the nuisances held fixed.
pub fn multiplier_bootstrap_band(
    work: &CurveWork,
    replicates: usize,
    tau: f64,
    law: MultiplierLaw,
    seed: u64,
) -> Result<UniformBand> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig("tau must lie in (0, 1)".into()));
    }
    let curve = &work.curve;
    if !curve.has_inference() || work.tables().is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} has no variance estimate to studentize a band",
            curve.method
        )));
    }
    let eligible: Vec<usize> = (0..curve.estimates.len())
        .filter(|&k| !curve.estimates[k].flagged && curve.estimates[k].variance > 0.0)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidConfig(
            "every grid point has zero variance".into(),
        ));
    }
    let n = curve.n;
    let scale = (n as f64 * curve.h.h.powi(curve.method.estimand().rate_power())).sqrt();
    let sup_statistics = ordered_map(replicates, |b| {
        let mut rng = substream(seed, Domain::Bootstrap, b as u64);
        let z: Vec<f64> = (0..n).map(|_| law.draw(&mut rng)).collect();
        let star = work.reweighted(&z);
        eligible
            .iter()
            .map(|&k| {
                let e = &curve.estimates[k];
                scale * (star[k] - e.value).abs() / e.variance.sqrt()
            })
            .fold(0.0, f64::max)
    });
    let mut sorted = sup_statistics.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - tau) * replicates as f64).ceil() as usize;
    let quantile = sorted[rank.clamp(1, replicates) - 1];

    let mut band_curve = curve.clone();
    band_curve.band_quantile = Some(quantile);
    let (lower, upper) = (0..curve.estimates.len())
        .map(|k| {
            let half = quantile * curve.std_error(k);
            let v = curve.estimates[k].value;
            (v - half, v + half)
        })
        .unzip();
    Ok(UniformBand {
        curve: band_curve,
        quantile,
        replicates,
        law,
        lower,
        upper,
        sup_statistics,
    })
}
