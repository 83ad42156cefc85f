//! Estimators of the conditional treatment density `p(t | s)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regression::{covariate_poly_features, covariate_poly_width, ridge_pseudo_inverse};
use super::CondDensityFn;
use crate::data::ObservationSet;
use crate::error::Result;
use crate::kernels::{bandwidth_rule, BandwidthRule, Kernel};

/// Which conditional density estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CondDensityMethod {
    /// Regress `T` on `S`, then run a KDE on the residuals.
    KdeResidual {
        kernel: Kernel,
        bandwidth: BandwidthRule,
        /// Per-coordinate polynomial degree of the `T`-on-`S` regression.
        degree: usize,
    },
    /// Regress kernel-smoothed treatment indicators `K((T - t)/h) / h` on `S`.
    Rks {
        kernel: Kernel,
        bandwidth: BandwidthRule,
        degree: usize,
        ridge: f64,
    },
}

impl CondDensityMethod {
    pub fn kde_residual() -> Self {
        CondDensityMethod::KdeResidual {
            kernel: Kernel::Epanechnikov,
            bandwidth: BandwidthRule::Silverman,
            degree: 3,
        }
    }

    pub fn rks() -> Self {
        CondDensityMethod::Rks {
            kernel: Kernel::Gaussian,
            bandwidth: BandwidthRule::Silverman,
            degree: 2,
            ridge: 1e-6,
        }
    }
}

/// A fitted conditional density model.
#[derive(Debug, Clone)]
pub enum CondDensityModel {
    KdeResidual(ResidualKde),
    Rks(SmoothedRegression),
}

impl CondDensityFn for CondDensityModel {
    fn density(&self, t: f64, s: &[f64]) -> f64 {
        match self {
            CondDensityModel::KdeResidual(m) => m.density(t, s),
            CondDensityModel::Rks(m) => m.density(t, s),
        }
    }
}

/// Method 1: `(1/(n h)) sum_k K((t - g(s) - r_k) / h)` with residuals `r_k = T_k - g(S_k)`.
#[derive(Debug, Clone)]
pub struct ResidualKde {
    degree: usize,
    regressor: Vec<f64>,
    /// Sorted residuals.
    residuals: Vec<f64>,
    kernel: Kernel,
    h: f64,
}

impl ResidualKde {
    /// Builds the estimator from an already fitted location function and its residuals.
    pub fn from_parts(
        degree: usize,
        regressor: Vec<f64>,
        mut residuals: Vec<f64>,
        kernel: Kernel,
        h: f64,
    ) -> Self {
        residuals.sort_by(f64::total_cmp);
        Self {
            degree,
            regressor,
            residuals,
            kernel,
            h,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Fitted conditional mean `g(s)` of the treatment.
    pub fn location(&self, s: &[f64]) -> f64 {
        let mut f = Vec::with_capacity(self.regressor.len());
        covariate_poly_features(s, self.degree, &mut f);
        f.iter().zip(&self.regressor).map(|(a, b)| a * b).sum()
    }

    fn density(&self, t: f64, s: &[f64]) -> f64 {
        let centre = t - self.location(s);
        let n = self.residuals.len() as f64;
        let window: &[f64] = match self.kernel.support_radius() {
            Some(r) => {
                let lo = self.residuals.partition_point(|&v| v < centre - r * self.h);
                let hi = self.residuals.partition_point(|&v| v <= centre + r * self.h);
                &self.residuals[lo..hi]
            }
            None => &self.residuals,
        };
        let sum: f64 = window
            .iter()
            .map(|r| self.kernel.eval((centre - r) / self.h))
            .sum();
        sum / (n * self.h)
    }
}

/// Method 2: a linear smoother in `S` applied to `K((T_k - t)/h)/h` for each query `t`.
///
/// All regressions share one design, so the ridge pseudo-inverse is computed once and
/// every `t` reuses it; negative fitted values are clamped to zero.
#[derive(Debug, Clone)]
pub struct SmoothedRegression {
    degree: usize,
    pinv: DMatrix<f64>,
    train_t: Vec<f64>,
    kernel: Kernel,
    h: f64,
}

impl SmoothedRegression {
    fn density(&self, t: f64, s: &[f64]) -> f64 {
        let k = DVector::from_iterator(
            self.train_t.len(),
            self.train_t
                .iter()
                .map(|&tk| self.kernel.eval((tk - t) / self.h) / self.h),
        );
        let coef = &self.pinv * k;
        let mut f = Vec::with_capacity(coef.len());
        covariate_poly_features(s, self.degree, &mut f);
        let fitted: f64 = f.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
        fitted.max(0.0)
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }
}

fn design(train: &ObservationSet, degree: usize) -> DMatrix<f64> {
    let p = covariate_poly_width(train.dim(), degree);
    let mut x = DMatrix::zeros(train.len(), p);
    let mut buf = Vec::with_capacity(p);
    for i in 0..train.len() {
        covariate_poly_features(train.covariates(i), degree, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    x
}

/// Fits the requested conditional density estimator on `train`.
pub fn fit_cond_density(
    train: &ObservationSet,
    method: CondDensityMethod,
) -> Result<CondDensityModel> {
    match method {
        CondDensityMethod::KdeResidual {
            kernel,
            bandwidth,
            degree,
        } => {
            let x = design(train, degree);
            let pinv = ridge_pseudo_inverse(&x, 0.0, 1)
                .or_else(|_| ridge_pseudo_inverse(&x, 1e-8, 1))?;
            let coef = &pinv * DVector::from_column_slice(train.treatments());
            let fitted = &x * &coef;
            let residuals: Vec<f64> = train
                .treatments()
                .iter()
                .zip(fitted.iter())
                .map(|(t, g)| t - g)
                .collect();
            let bw = bandwidth_rule(&residuals, bandwidth)?;
            Ok(CondDensityModel::KdeResidual(ResidualKde::from_parts(
                degree,
                coef.iter().copied().collect(),
                residuals,
                kernel,
                bw.h,
            )))
        }
        CondDensityMethod::Rks {
            kernel,
            bandwidth,
            degree,
            ridge,
        } => {
            let bw = bandwidth_rule(train.treatments(), bandwidth)?;
            let x = design(train, degree);
            let pinv = ridge_pseudo_inverse(&x, ridge, 1)?;
            Ok(CondDensityModel::Rks(SmoothedRegression {
                degree,
                pinv,
                train_t: train.treatments().to_vec(),
                kernel,
                h: bw.h,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn three_residual_hand_sum() {
        // g(s) = s, residuals {-1, 0, 1}, h = 1: (1/3)[K(1) + K(0) + K(-1)] = 0.25
        let kde = ResidualKde::from_parts(1, vec![0.0, 1.0], vec![-1.0, 0.0, 1.0], Kernel::Epanechnikov, 1.0);
        let s = [0.4];
        assert!((kde.density(kde.location(&s), &s) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn point_mass_residuals() {
        let h = 0.3;
        let kde = ResidualKde::from_parts(1, vec![0.0, 1.0], vec![0.0; 5], Kernel::Epanechnikov, h);
        let s = [-0.2];
        assert!((kde.density(-0.2, &s) - 0.75 / h).abs() < 1e-12);
    }

    fn noisy_linear(n: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = s
            .iter()
            .map(|v| 0.5 * v + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        ObservationSet::new(vec![0.0; n], t, s, 1).unwrap()
    }

    #[test]
    fn residual_kde_integrates_to_one() {
        let data = noisy_linear(300, 5);
        let model = fit_cond_density(&data, CondDensityMethod::kde_residual()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let s = [rng.random_range(-1.0..1.0)];
            // piecewise polynomial integrand: split at many points for accuracy
            let edges: Vec<f64> = (0..=400).map(|k| -4.0 + k as f64 * 0.02).collect();
            let total: f64 = edges
                .windows(2)
                .map(|w| integrate(|t| model.density(t, &s), w[0], w[1], 1e-12))
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "mass {total}");
        }
    }

    #[test]
    fn rks_tracks_true_density() {
        let data = noisy_linear(2000, 7);
        let model = fit_cond_density(&data, CondDensityMethod::rks()).unwrap();
        let s = [0.2];
        let truth = |t: f64| {
            let z = (t - 0.1) / 0.3;
            (-0.5 * z * z).exp() / (0.3 * (2.0 * std::f64::consts::PI).sqrt())
        };
        for t in [-0.2, 0.1, 0.4] {
            let est = model.density(t, &s);
            assert!(est >= 0.0);
            assert!((est - truth(t)).abs() < 0.35 * truth(t), "t={t} est={est}");
        }
        // far tail clamps to zero or stays tiny
        assert!(model.density(5.0, &s) < 1e-3);
    }
}
