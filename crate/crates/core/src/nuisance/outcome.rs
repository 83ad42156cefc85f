//! Polynomial ridge model for the regression function `mu(t, s)` and its `t`-derivative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regression::ridge_solve;
use super::OutcomeFn;
use crate::data::ObservationSet;
use crate::error::{Error, Result};

/// Terms of the outcome expansion.
///
/// The feature vector at `(t, s)` is
/// `[1, t, ..., t^t_degree] ++ [s_1, ..., s_d] (if covariates) ++ [t^k s_j for k in 1..=interactions]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub t_degree: usize,
    pub covariates: bool,
    pub interactions: usize,
}

impl BasisConfig {
    /// Quadratic in `t`, linear in `s`, with `t * s_j` interactions.
    pub const QUADRATIC_INTERACTION: BasisConfig = BasisConfig {
        t_degree: 2,
        covariates: true,
        interactions: 1,
    };

    pub fn width(&self, d: usize) -> usize {
        self.t_degree + 1 + if self.covariates { d } else { 0 } + self.interactions * d
    }

    fn features(&self, t: f64, s: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut tp = 1.0;
        for _ in 0..=self.t_degree {
            out.push(tp);
            tp *= t;
        }
        if self.covariates {
            out.extend_from_slice(s);
        }
        let mut tk = 1.0;
        for _ in 1..=self.interactions {
            tk *= t;
            out.extend(s.iter().map(|v| tk * v));
        }
    }

    fn derivative_features(&self, t: f64, s: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(0.0);
        let mut tp = 1.0; // t^(k-1)
        for k in 1..=self.t_degree {
            out.push(k as f64 * tp);
            tp *= t;
        }
        if self.covariates {
            out.extend(std::iter::repeat_n(0.0, s.len()));
        }
        let mut tk = 1.0; // t^(k-1)
        for k in 1..=self.interactions {
            out.extend(s.iter().map(|v| k as f64 * tk * v));
            tk *= t;
        }
    }
}

/// Fitted coefficients of a [`BasisConfig`] expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    basis: BasisConfig,
    d: usize,
    coef: Vec<f64>,
    ridge: f64,
}

impl OutcomeModel {
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn basis(&self) -> BasisConfig {
        self.basis
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn dot(&self, feats: &[f64]) -> f64 {
        feats.iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }
}

impl OutcomeFn for OutcomeModel {
    fn mu(&self, t: f64, s: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.coef.len());
        self.basis.features(t, s, &mut buf);
        self.dot(&buf)
    }

    fn beta(&self, t: f64, s: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.coef.len());
        self.basis.derivative_features(t, s, &mut buf);
        self.dot(&buf)
    }
}

/// Least-squares (ridge when `lambda > 0`) fit of `Y` on the basis expansion of `(T, S)`.
///
/// The intercept is never penalized.
pub fn fit_outcome_regression(
    train: &ObservationSet,
    basis: BasisConfig,
    lambda: f64,
) -> Result<OutcomeModel> {
    let d = train.dim();
    let p = basis.width(d);
    let n = train.len();
    let mut x = DMatrix::zeros(n, p);
    let mut buf = Vec::with_capacity(p);
    for i in 0..n {
        basis.features(train.treatments()[i], train.covariates(i), &mut buf);
        for (j, v) in buf.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let y = DVector::from_column_slice(train.outcomes());
    let coef = ridge_solve(&x, &y, lambda, 1)?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularFit { rank: 0, columns: p });
    }
    Ok(OutcomeModel {
        basis,
        d,
        coef: coef.iter().copied().collect(),
        ridge: lambda,
    })
}

impl OutcomeModel {
    /// Covariate dimension the model was fitted with.
    pub fn dim(&self) -> usize {
        self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::eval_beta;
    use crate::nuisance::eval_mu;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(n: usize, d: usize, seed: u64, y: impl Fn(f64, &[f64]) -> f64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let yv = (0..n).map(|i| y(t[i], &s[i * d..(i + 1) * d])).collect();
        ObservationSet::new(yv, t, s, d).unwrap()
    }

    #[test]
    fn linear_fit_is_exact() {
        let data = design(40, 2, 1, |t, s| 2.0 * t + 3.0 * s[0]);
        let basis = BasisConfig {
            t_degree: 1,
            covariates: true,
            interactions: 0,
        };
        let m = fit_outcome_regression(&data, basis, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t = rng.random_range(-3.0..3.0);
            let s = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert!((eval_mu(&m, t, &s) - (2.0 * t + 3.0 * s[0])).abs() < 1e-8);
            assert!((eval_beta(&m, t, &s) - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_fit_gives_exact_derivative() {
        let data = design(30, 1, 2, |t, _| t * t);
        let basis = BasisConfig {
            t_degree: 2,
            covariates: false,
            interactions: 0,
        };
        let m = fit_outcome_regression(&data, basis, 0.0).unwrap();
        for t in [-1.0, 0.0, 1.0] {
            assert!((m.beta(t, &[0.0]) - 2.0 * t).abs() < 1e-8);
        }
        assert!((m.mu(2.0, &[0.0]) - 4.0).abs() < 1e-8);
        assert!((m.beta(2.0, &[0.0]) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_model_has_zero_slope() {
        let data = design(10, 2, 3, |_, s| s[1] + 1.0);
        let basis = BasisConfig {
            t_degree: 0,
            covariates: false,
            interactions: 0,
        };
        let m = fit_outcome_regression(&data, basis, 0.0).unwrap();
        assert_eq!(m.beta(0.3, &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn underdetermined_fit_is_singular() {
        let data = design(3, 3, 4, |t, _| t);
        let basis = BasisConfig {
            t_degree: 3,
            covariates: true,
            interactions: 1,
        };
        assert_eq!(basis.width(3), 10);
        assert!(matches!(
            fit_outcome_regression(&data, basis, 0.0),
            Err(Error::SingularFit { .. })
        ));
    }

    fn central_difference(m: &OutcomeModel, t: f64, s: &[f64]) -> f64 {
        let step = 1e-5;
        (m.mu(t + step, s) - m.mu(t - step, s)) / (2.0 * step)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn derivative_matches_finite_difference(
            t_degree in 0usize..4,
            covariates in any::<bool>(),
            interactions in 0usize..3,
            seed in 0u64..1000,
        ) {
            let basis = BasisConfig { t_degree, covariates, interactions };
            let data = design(80, 2, seed, |t, s| (t).sin() + t * s[0] - s[1] * s[1]);
            let m = fit_outcome_regression(&data, basis, 1e-6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            for _ in 0..100 {
                let t = rng.random_range(-2.0..2.0);
                let s = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let exact = m.beta(t, &s);
                let fd = central_difference(&m, t, &s);
                let rel = (exact - fd).abs() / exact.abs().max(1.0);
                prop_assert!(rel <= 1e-6, "rel diff {rel}");
            }
        }
    }
}
