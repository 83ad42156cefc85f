//! The two simulation designs: a smooth confounded design with full overlap and a
//! thin-band design where the treatment density vanishes off a curve.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::nuisance::{CondDensityFn, FnCondDensity, FnOutcome, OutcomeFn};
use crate::rng::{substream, Domain};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `d` correlated Gaussian covariates, overlap everywhere.
    Dgp1,
    /// One uniform covariate, treatment confined to a band around `sin(pi s)`.
    Dgp2,
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DgpKind::Dgp1 => "dgp1",
            DgpKind::Dgp2 => "dgp2",
        })
    }
}

impl FromStr for DgpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dgp1" | "1" => Ok(DgpKind::Dgp1),
            "dgp2" | "2" => Ok(DgpKind::Dgp2),
            other => Err(Error::InvalidConfig(format!("unknown design `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    /// Covariate dimension; forced to 1 for `Dgp2`.
    pub d: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, d: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewObservations { required: 2, got: n });
        }
        let d = match kind {
            DgpKind::Dgp1 if d == 0 => {
                return Err(Error::InvalidConfig("dgp1 needs d >= 1".into()))
            }
            DgpKind::Dgp1 => d,
            DgpKind::Dgp2 => 1,
        };
        Ok(Self { kind, n, d, seed })
    }

    /// Draws one sample using the generator seeded by `seed`.
    pub fn generate_with_seed(&self, seed: u64) -> Result<ObservationSet> {
        match self.kind {
            DgpKind::Dgp1 => gen_dgp1(self.n, self.d, seed),
            DgpKind::Dgp2 => gen_dgp2(self.n, seed),
        }
    }

    pub fn generate(&self) -> Result<ObservationSet> {
        self.generate_with_seed(self.seed)
    }

    pub fn theta_true(&self, t: f64) -> f64 {
        theta_true(self.kind, t)
    }

    pub fn m_true(&self, t: f64) -> f64 {
        m_true(self.kind, t)
    }

    pub fn oracle_density(&self) -> Arc<dyn CondDensityFn> {
        oracle_cond_density(self.kind)
    }

    pub fn oracle_outcome(&self) -> Arc<dyn OutcomeFn> {
        oracle_outcome(self.kind)
    }
}

pub fn theta_true(kind: DgpKind, t: f64) -> f64 {
    match kind {
        DgpKind::Dgp1 => 1.2 + 2.0 * t,
        DgpKind::Dgp2 => 3.0 * t * t + 2.0 * t,
    }
}

pub fn m_true(kind: DgpKind, t: f64) -> f64 {
    match kind {
        DgpKind::Dgp1 => 1.2 * t + t * t,
        DgpKind::Dgp2 => t * t * t + t * t,
    }
}

fn xi(d: usize) -> Vec<f64> {
    (1..=d).map(|j| 1.0 / (j * j) as f64).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factor of the tridiagonal covariance with unit diagonal and 0.5 off-diagonal.
fn tridiagonal_factor(d: usize) -> Result<DMatrix<f64>> {
    let sigma = DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    });
    sigma
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidConfig(format!("covariance for d = {d} is not positive definite")))
}

pub fn gen_dgp1(n: usize, d: usize, seed: u64) -> Result<ObservationSet> {
    DgpSpec::new(DgpKind::Dgp1, n, d, seed)?;
    let chol = tridiagonal_factor(d)?;
    let xi = xi(d);
    let mut rng = substream(seed, Domain::Data, 0);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row: Vec<f64> = (0..d)
            .map(|i| (0..=i).map(|j| chol[(i, j)] * z[j]).sum())
            .collect();
        let e: f64 = StandardNormal.sample(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let lin = dot(&xi, &row);
        let ti = normal_cdf(3.0 * lin) - 0.5 + 0.75 * e;
        let yi = 1.2 * ti + ti * ti + ti * row[0] + 1.2 * lin + eps * (0.5 + normal_cdf(row[0])).sqrt();
        t.push(ti);
        y.push(yi);
        s.extend_from_slice(&row);
    }
    ObservationSet::new(y, t, s, d)
}

pub fn gen_dgp2(n: usize, seed: u64) -> Result<ObservationSet> {
    DgpSpec::new(DgpKind::Dgp2, n, 1, seed)?;
    let mut rng = substream(seed, Domain::Data, 0);
    let cov = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let shift = Uniform::new_inclusive(-0.3, 0.3).expect("valid range");
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let si: f64 = rng.sample(cov);
        let ti = (PI * si).sin() + rng.sample(shift);
        let eps: f64 = StandardNormal.sample(&mut rng);
        y.push(ti * ti * ti + ti * ti + 10.0 * si + eps);
        t.push(ti);
        s.push(si);
    }
    ObservationSet::new(y, t, s, 1)
}

/// True `p(t | s)` of the design.
pub fn oracle_cond_density(kind: DgpKind) -> Arc<dyn CondDensityFn> {
    match kind {
        DgpKind::Dgp1 => Arc::new(FnCondDensity::new(|t, s| {
            let xi = xi(s.len());
            let mean = normal_cdf(3.0 * dot(&xi, s)) - 0.5;
            normal_pdf((t - mean) / 0.75) / 0.75
        })),
        DgpKind::Dgp2 => Arc::new(FnCondDensity::new(|t, s| {
            if (t - (PI * s[0]).sin()).abs() <= 0.3 {
                1.0 / 0.6
            } else {
                0.0
            }
        })),
    }
}

/// True `mu(t, s)` and its treatment derivative.
pub fn oracle_outcome(kind: DgpKind) -> Arc<dyn OutcomeFn> {
    match kind {
        DgpKind::Dgp1 => Arc::new(FnOutcome::new(
            |t, s| 1.2 * t + t * t + t * s[0] + 1.2 * dot(&xi(s.len()), s),
            |t, s| 1.2 + 2.0 * t + s[0],
        )),
        DgpKind::Dgp2 => Arc::new(FnOutcome::new(
            |t, s| t * t * t + t * t + 10.0 * s[0],
            |t, _| 3.0 * t * t + 2.0 * t,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths() {
        assert_eq!(theta_true(DgpKind::Dgp1, 0.0), 1.2);
        assert!((m_true(DgpKind::Dgp1, 1.0) - 2.2).abs() < 1e-15);
        assert_eq!(theta_true(DgpKind::Dgp2, 0.0), 0.0);
        assert_eq!(theta_true(DgpKind::Dgp2, 1.0), 5.0);
    }

    #[test]
    fn truth_derivatives_agree() {
        for kind in [DgpKind::Dgp1, DgpKind::Dgp2] {
            for k in 0..41 {
                let t = -2.0 + 0.1 * k as f64;
                let step = 1e-5;
                let fd = (m_true(kind, t + step) - m_true(kind, t - step)) / (2.0 * step);
                assert!((fd - theta_true(kind, t)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normal_cdf_accuracy() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn dgp1_covariance() {
        let data = gen_dgp1(100_000, 5, 11).unwrap();
        let s1 = data.covariate_column(0);
        let s2 = data.covariate_column(1);
        let n = s1.len() as f64;
        let m1 = s1.iter().sum::<f64>() / n;
        let m2 = s2.iter().sum::<f64>() / n;
        let v1 = s1.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / n;
        let v2 = s2.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / n;
        let c = s1.iter().zip(&s2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / n;
        assert!((v1 - 1.0).abs() < 0.03);
        assert!((c / (v1 * v2).sqrt() - 0.5).abs() < 0.03);
    }

    #[test]
    fn dgp2_support() {
        let data = gen_dgp2(5000, 2).unwrap();
        assert!(data.treatments().iter().all(|t| t.abs() <= 1.3));
        assert!(data.covariate_column(0).iter().all(|s| s.abs() <= 1.0));
        let p = oracle_cond_density(DgpKind::Dgp2);
        for i in 0..data.len() {
            assert!(p.density(data.treatments()[i], data.covariates(i)) > 0.0);
        }
    }

    #[test]
    fn same_seed_same_sample() {
        assert_eq!(gen_dgp1(50, 3, 4).unwrap(), gen_dgp1(50, 3, 4).unwrap());
        assert_ne!(gen_dgp1(50, 3, 4).unwrap(), gen_dgp1(50, 3, 5).unwrap());
    }
}
