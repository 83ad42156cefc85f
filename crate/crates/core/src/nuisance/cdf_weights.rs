//! Nadaraya-Watson weights standing in for the conditional distribution of `S` given `T = t`.

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Per-observation weights `K((T_i - t)/h) / sum_j K((T_j - t)/h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondCdfWeights {
    pub t: f64,
    pub weights: Vec<f64>,
}

impl CondCdfWeights {
    /// Number of observations with positive weight.
    pub fn support(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// `sum_i w_i f(i)`.
    pub fn average(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| w * f(i))
            .sum()
    }
}

pub fn cond_cdf_weights(
    data: &ObservationSet,
    t: f64,
    kernel: Kernel,
    h: f64,
) -> Result<CondCdfWeights> {
    let raw: Vec<f64> = data
        .treatments()
        .iter()
        .map(|&ti| kernel.eval((ti - t) / h))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyWindow { t });
    }
    Ok(CondCdfWeights {
        t,
        weights: raw.into_iter().map(|k| k / total).collect(),
    })
}
