//! Product-kernel density estimate of the joint law of `(T, S)` and its derived marginals.

use super::JointDensityFn;
use crate::data::ObservationSet;
use crate::error::Result;
use crate::kernels::{bandwidth_rule, BandwidthRule, Kernel};

/// KDE over `(t, s)` with one Silverman bandwidth per coordinate.
#[derive(Debug, Clone)]
pub struct JointDensityModel {
    kernel: Kernel,
    h_t: f64,
    h_s: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    d: usize,
}

impl JointDensityModel {
    pub fn bandwidths(&self) -> (f64, &[f64]) {
        (self.h_t, &self.h_s)
    }

    fn n(&self) -> usize {
        self.t.len()
    }

    #[inline]
    fn t_factor(&self, t: f64, k: usize) -> f64 {
        self.kernel.eval((t - self.t[k]) / self.h_t) / self.h_t
    }

    #[inline]
    fn s_factor(&self, s: &[f64], k: usize) -> f64 {
        let row = &self.s[k * self.d..(k + 1) * self.d];
        let mut prod = 1.0;
        for j in 0..self.d {
            prod *= self.kernel.eval((s[j] - row[j]) / self.h_s[j]) / self.h_s[j];
            if prod == 0.0 {
                break;
            }
        }
        prod
    }
}

impl JointDensityFn for JointDensityModel {
    fn joint(&self, t: f64, s: &[f64]) -> f64 {
        let sum: f64 = (0..self.n())
            .map(|k| {
                let a = self.t_factor(t, k);
                if a == 0.0 {
                    0.0
                } else {
                    a * self.s_factor(s, k)
                }
            })
            .sum();
        sum / self.n() as f64
    }

    fn marginal_t(&self, t: f64) -> f64 {
        (0..self.n()).map(|k| self.t_factor(t, k)).sum::<f64>() / self.n() as f64
    }

    fn marginal_s(&self, s: &[f64]) -> f64 {
        (0..self.n()).map(|k| self.s_factor(s, k)).sum::<f64>() / self.n() as f64
    }

    fn cond_s_given_t_many(&self, t: f64, points: &[&[f64]]) -> Vec<f64> {
        let weights: Vec<(usize, f64)> = (0..self.n())
            .map(|k| (k, self.t_factor(t, k)))
            .filter(|(_, a)| *a != 0.0)
            .collect();
        let pt: f64 = weights.iter().map(|(_, a)| a).sum::<f64>() / self.n() as f64;
        if pt <= 0.0 {
            return vec![0.0; points.len()];
        }
        points
            .iter()
            .map(|s| {
                let joint: f64 = weights.iter().map(|&(k, a)| a * self.s_factor(s, k)).sum::<f64>()
                    / self.n() as f64;
                joint / pt
            })
            .collect()
    }

    fn cond_s_given_t_grid(&self, ts: &[f64], points: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = self.n();
        let g = ts.len();
        let mut a = vec![0.0; n * g];
        let mut pt = vec![0.0; g];
        let mut active = Vec::new();
        for k in 0..n {
            let row = &mut a[k * g..(k + 1) * g];
            for (j, &t) in ts.iter().enumerate() {
                row[j] = self.t_factor(t, k);
            }
            if row.iter().any(|&v| v != 0.0) {
                active.push(k);
            }
        }
        for j in 0..g {
            pt[j] = (0..n).map(|k| a[k * g + j]).sum::<f64>() / n as f64;
        }
        let mut out = vec![vec![0.0; points.len()]; g];
        let mut acc = vec![0.0; g];
        for (i, s) in points.iter().enumerate() {
            acc.fill(0.0);
            for &k in &active {
                let b = self.s_factor(s, k);
                if b == 0.0 {
                    continue;
                }
                for (sum, w) in acc.iter_mut().zip(&a[k * g..(k + 1) * g]) {
                    *sum += w * b;
                }
            }
            for j in 0..g {
                if pt[j] > 0.0 {
                    out[j][i] = acc[j] / n as f64 / pt[j];
                }
            }
        }
        out
    }
}

/// Fits the product KDE with per-dimension Silverman bandwidths.
pub fn fit_joint_density(train: &ObservationSet, kernel: Kernel) -> Result<JointDensityModel> {
    let h_t = bandwidth_rule(train.treatments(), BandwidthRule::Silverman)?.h;
    let h_s = (0..train.dim())
        .map(|j| bandwidth_rule(&train.covariate_column(j), BandwidthRule::Silverman).map(|b| b.h))
        .collect::<Result<Vec<_>>>()?;
    let s = (0..train.len())
        .flat_map(|i| train.covariates(i).iter().copied())
        .collect();
    Ok(JointDensityModel {
        kernel,
        h_t,
        h_s,
        t: train.treatments().to_vec(),
        s,
        d: train.dim(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::kernels::sample_sd;
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coincident_points_are_degenerate() {
        let data = ObservationSet::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], 1).unwrap();
        assert!(matches!(
            fit_joint_density(&data, Kernel::Gaussian),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn two_point_marginal() {
        let data =
            ObservationSet::new(vec![0.0; 2], vec![-1.0, 1.0], vec![0.0, 0.5], 1).unwrap();
        let model = fit_joint_density(&data, Kernel::Gaussian).unwrap();
        let h_t = (4.0f64 / 3.0).powf(0.2) * sample_sd(&[-1.0, 1.0]) * 2f64.powf(-0.2);
        let k = Kernel::Gaussian;
        let expected = 0.5 * (k.eval(1.0 / h_t) + k.eval(-1.0 / h_t)) / h_t;
        assert!((model.marginal_t(0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn joint_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = s.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let data = ObservationSet::new(vec![0.0; n], t, s, 1).unwrap();
        let model = fit_joint_density(&data, Kernel::Gaussian).unwrap();
        let total = integrate(
            |tt| integrate(|ss| model.joint(tt, &[ss]), -4.0, 4.0, 1e-9),
            -4.0,
            4.0,
            1e-8,
        );
        assert!((total - 1.0).abs() < 1e-4, "mass {total}");
        // conditional of s given t integrates to one as well
        let c = integrate(|ss| model.cond_s_given_t(&[ss], 0.2), -4.0, 4.0, 1e-10);
        assert!((c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let s: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|i| s[2 * i] + rng.random_range(-0.3..0.3)).collect();
        let data = ObservationSet::new(vec![0.0; n], t, s, 2).unwrap();
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let model = fit_joint_density(&data, kernel).unwrap();
            let points: Vec<&[f64]> = (0..n).map(|i| data.covariates(i)).collect();
            let ts = [-2.5, -0.4, 0.0, 0.7];
            let grid = model.cond_s_given_t_grid(&ts, &points);
            for (j, &tq) in ts.iter().enumerate() {
                let single = model.cond_s_given_t_many(tq, &points);
                for (a, b) in grid[j].iter().zip(&single) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
