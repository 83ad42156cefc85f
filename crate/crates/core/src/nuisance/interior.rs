//! Level-set trimmed conditional covariate density `p_zeta(s | t)`.

use std::sync::Arc;

use super::JointDensityFn;
use crate::data::ObservationSet;
use crate::error::{Error, Result};

/// `p(s|t)` restricted to `{s : p(s|t) >= zeta}` and renormalized.
///
/// The normalizer is the importance-sampling estimate
/// `(1/n) sum_i p(S_i|t) 1{p(S_i|t) >= zeta} / p_S(S_i)` over the reference sample.
#[derive(Debug, Clone)]
pub struct InteriorDensity {
    t: f64,
    zeta: f64,
    normalizer: f64,
    at_sample: Vec<f64>,
    retained: usize,
    joint: Option<Arc<dyn JointDensityFn>>,
}

impl InteriorDensity {
    /// Builds the trimmed density from conditional values `p(S_i|t)` and marginals `p_S(S_i)`
    /// already evaluated on the reference sample.
    pub fn from_values(
        t: f64,
        cond_values: &[f64],
        marginal_s: &[f64],
        multiplier: f64,
    ) -> Result<Self> {
        let peak = cond_values.iter().copied().fold(0.0f64, f64::max);
        if !(peak > 0.0) {
            return Err(Error::EmptyLevelSet { t });
        }
        let zeta = multiplier * peak;
        let n = cond_values.len() as f64;
        let mut retained = 0;
        let mut mass = 0.0;
        for (c, ps) in cond_values.iter().zip(marginal_s) {
            if *c >= zeta {
                retained += 1;
                mass += c / ps;
            }
        }
        let normalizer = mass / n;
        let at_sample = cond_values
            .iter()
            .map(|&c| if c >= zeta { c / normalizer } else { 0.0 })
            .collect();
        Ok(Self {
            t,
            zeta,
            normalizer,
            at_sample,
            retained,
            joint: None,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn threshold(&self) -> f64 {
        self.zeta
    }

    /// Importance-sampling estimate of the level-set mass of `p(.|t)`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `p_zeta(S_i|t)` at each reference point.
    pub fn at_sample(&self) -> &[f64] {
        &self.at_sample
    }

    /// Number of reference points inside the level set.
    pub fn retained(&self) -> usize {
        self.retained
    }

    /// Evaluates `p_zeta(s|t)` at an arbitrary covariate value.
    ///
    /// Only available when built through [`interior_density`], which keeps the joint model.
    pub fn eval(&self, s: &[f64]) -> Option<f64> {
        let joint = self.joint.as_ref()?;
        let c = joint.cond_s_given_t(s, self.t);
        Some(if c >= self.zeta { c / self.normalizer } else { 0.0 })
    }
}

/// Trims the fitted `p(s|t)` at `multiplier * max_i p(S_i|t)` over the rows of `data`.
///
/// Marginal covariate densities are clamped below at `floor`.
pub fn interior_density(
    joint: &Arc<dyn JointDensityFn>,
    t: f64,
    data: &ObservationSet,
    multiplier: f64,
    floor: f64,
) -> Result<InteriorDensity> {
    let points: Vec<&[f64]> = (0..data.len()).map(|i| data.covariates(i)).collect();
    let cond = joint.cond_s_given_t_many(t, &points);
    let marg: Vec<f64> = points
        .iter()
        .map(|s| joint.marginal_s(s).max(floor))
        .collect();
    let mut out = InteriorDensity::from_values(t, &cond, &marg, multiplier)?;
    out.joint = Some(Arc::clone(joint));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::nuisance::joint::fit_joint_density;
    use crate::quadrature::trapezoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_density_keeps_everything() {
        let cond = [0.7; 5];
        let marg = [0.5, 1.0, 2.0, 0.25, 1.0];
        let inner = InteriorDensity::from_values(0.0, &cond, &marg, 0.5).unwrap();
        assert_eq!(inner.retained(), 5);
        let expected: f64 = marg.iter().map(|p| 0.7 / p).sum::<f64>() / 5.0;
        assert!((inner.normalizer() - expected).abs() < 1e-15);
        for v in inner.at_sample() {
            assert!((v - 0.7 / expected).abs() < 1e-15);
        }
    }

    #[test]
    fn low_point_is_trimmed() {
        let cond = [0.1, 1.0, 1.0, 1.0];
        let inner = InteriorDensity::from_values(0.0, &cond, &[1.0; 4], 0.5).unwrap();
        assert_eq!(inner.at_sample()[0], 0.0);
        assert!(inner.at_sample()[1..].iter().all(|&v| v > 0.0));
        assert_eq!(inner.threshold(), 0.5);
    }

    #[test]
    fn all_zero_is_an_error() {
        assert!(matches!(
            InteriorDensity::from_values(1.5, &[0.0; 3], &[1.0; 3], 0.5),
            Err(Error::EmptyLevelSet { .. })
        ));
    }

    #[test]
    fn importance_normalizer_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 500;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = s
            .iter()
            .map(|v| v + rng.random_range(-0.5..0.5))
            .collect();
        let data = ObservationSet::new(vec![0.0; n], t, s, 1).unwrap();
        let joint: Arc<dyn JointDensityFn> = Arc::new(fit_joint_density(&data, Kernel::Gaussian).unwrap());
        for t0 in [-0.4, 0.0, 0.3] {
            let inner = interior_density(&joint, t0, &data, 0.5, 1e-3).unwrap();
            let grid: Vec<f64> = (0..=4000).map(|k| -3.0 + k as f64 * 6.0 / 4000.0).collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&g| {
                    let c = joint.cond_s_given_t(&[g], t0);
                    if c >= inner.threshold() { c } else { 0.0 }
                })
                .collect();
            let oracle = trapezoid(&grid, &vals);
            assert!(
                (inner.normalizer() - oracle).abs() < 0.05,
                "t={t0}: is={} quad={oracle}",
                inner.normalizer()
            );
            // zero exactly where the conditional density is below the threshold
            for i in 0..n {
                let c = joint.cond_s_given_t(data.covariates(i), t0);
                assert_eq!(inner.at_sample()[i] == 0.0, c < inner.threshold());
            }
        }
    }
}
