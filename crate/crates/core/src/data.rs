//! Sample representation, evaluation grids and the shared estimation configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BandwidthRule, Kernel};

/// An i.i.d. sample `(Y_i, T_i, S_i)` with a dense row-major covariate matrix.
///
/// Instances are only built through [`ObservationSet::new`], so every value in
/// circulation satisfies the row-count and finiteness invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    y: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    d: usize,
}

impl ObservationSet {
    /// Builds a sample from outcome, treatment and a flat row-major `n x d` covariate buffer.
    pub fn new(y: Vec<f64>, t: Vec<f64>, s: Vec<f64>, d: usize) -> Result<Self> {
        let n = y.len();
        if t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {n} rows but treatment has {}",
                t.len()
            )));
        }
        if d == 0 {
            return Err(Error::DimensionMismatch(
                "covariate dimension must be at least 1".into(),
            ));
        }
        if s.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "covariate buffer has {} entries, expected {n} x {d}",
                s.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewObservations {
                required: 2,
                got: n,
            });
        }
        check_finite("y", &y, 1)?;
        check_finite("t", &t, 1)?;
        check_finite("s", &s, d)?;
        Ok(Self { y, t, s, d })
    }

    /// Builds a sample from per-row covariate vectors.
    pub fn from_rows(y: Vec<f64>, t: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "covariate row {bad} has {} entries, expected {d}",
                rows[bad].len()
            )));
        }
        let s = rows.iter().flatten().copied().collect();
        Self::new(y, t, s, d)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate dimension `d`.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn treatments(&self) -> &[f64] {
        &self.t
    }

    /// Covariate vector of row `i`.
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.s[i * self.d..(i + 1) * self.d]
    }

    /// Column `j` of the covariate matrix.
    pub fn covariate_column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.s[i * self.d + j]).collect()
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let t = indices.iter().map(|&i| self.t[i]).collect();
        let s = indices
            .iter()
            .flat_map(|&i| self.covariates(i).iter().copied())
            .collect();
        Self::new(y, t, s, self.d)
    }

    /// Same sample with every outcome replaced by `f(y)`.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.y.iter().map(|&v| f(v)).collect(),
            self.t.clone(),
            self.s.clone(),
            self.d,
        )
    }
}

fn check_finite(field: &'static str, values: &[f64], stride: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite {
            field,
            row: pos / stride,
        }),
        None => Ok(()),
    }
}

/// Re-checks every invariant of a sample and hands it back unchanged.
pub fn validate(data: ObservationSet) -> Result<ObservationSet> {
    let ObservationSet { y, t, s, d } = data;
    ObservationSet::new(y, t, s, d)
}

/// Strictly increasing treatment values at which curves are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvalGrid {
    points: Vec<f64>,
}

impl EvalGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("evaluation grid is empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "evaluation grid has a non-finite point".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "evaluation grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// `count` equally spaced points on `[lo, hi]` (a single point yields `[lo]`).
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::InvalidConfig("grid needs at least one point".into())),
            1 => Self::new(vec![lo]),
            _ => {
                let step = (hi - lo) / (count - 1) as f64;
                Self::new(
                    (0..count)
                        .map(|k| if k + 1 == count { hi } else { lo + step * k as f64 })
                        .collect(),
                )
            }
        }
    }

    /// The 81-point grid on `[-2, 2]` used by the simulation presets.
    pub fn default_simulation() -> Self {
        Self::linspace(-2.0, 2.0, 81).expect("static grid is valid")
    }

    /// Parses `lo:hi:count`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || Error::InvalidConfig(format!("grid `{spec}` is not of the form lo:hi:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Self::linspace(lo, hi, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for EvalGrid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<EvalGrid> for Vec<f64> {
    fn from(grid: EvalGrid) -> Self {
        grid.points
    }
}

/// Where the inverse-probability weight `1 / p(T|S)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPoint {
    /// `1 / p(T_i | S_i)`.
    #[default]
    SamplePoint,
    /// `1 / p(t | S_i)` at the query treatment value.
    QueryPoint,
}

/// Residual used by the doubly robust derivative estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrForm {
    /// Local linear residual `Y - mu(t,S) - (T - t) beta(t,S)`.
    #[default]
    LocalPoly,
    /// Efficient-influence-function residual `Y - mu(T,S)`.
    Eif,
}

/// Settings shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule,
    /// Number of cross-fitting folds; 1 disables cross-fitting.
    pub folds: usize,
    pub self_normalized: bool,
    pub weight_point: WeightPoint,
    pub dr_form: DrForm,
    /// Lower clamp for every estimated density that ends up in a denominator.
    pub density_floor: f64,
    /// Significance level `tau`; intervals have nominal coverage `1 - tau`.
    pub ci_level: f64,
    /// Multiplier on the maximal conditional density defining the level-set threshold.
    pub level_multiplier: f64,
    /// Resolution of the fine grid used by the integral dose-response estimators.
    pub fine_grid_points: usize,
    /// Error out on empty kernel windows instead of flagging the grid point.
    pub strict: bool,
    pub rng_seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Epanechnikov,
            bandwidth: BandwidthRule::Scaled { scale: 1.25 },
            folds: 5,
            self_normalized: true,
            weight_point: WeightPoint::SamplePoint,
            dr_form: DrForm::LocalPoly,
            density_floor: 1e-3,
            ci_level: 0.05,
            level_multiplier: 0.5,
            fine_grid_points: 400,
            strict: false,
            rng_seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        self.bandwidth.validate()?;
        if self.folds == 0 {
            return Err(Error::InvalidConfig("fold count must be at least 1".into()));
        }
        if !(self.density_floor > 0.0 && self.density_floor.is_finite()) {
            return Err(Error::InvalidConfig("density floor must be positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig("ci level must lie in (0, 1)".into()));
        }
        if !(self.level_multiplier > 0.0 && self.level_multiplier <= 1.0) {
            return Err(Error::InvalidConfig(
                "level-set multiplier must lie in (0, 1]".into(),
            ));
        }
        if self.fine_grid_points < 2 {
            return Err(Error::InvalidConfig(
                "fine grid needs at least two points".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, d: usize) -> ObservationSet {
        let y = (0..n).map(|i| i as f64).collect();
        let t = (0..n).map(|i| 0.5 * i as f64).collect();
        let s = (0..n * d).map(|k| (k as f64).sin()).collect();
        ObservationSet::new(y, t, s, d).unwrap()
    }

    #[test]
    fn validate_is_identity_on_valid_input() {
        let data = sample(10, 3);
        let checked = validate(data.clone()).unwrap();
        assert_eq!(checked, data);
        assert_eq!(validate(checked.clone()).unwrap(), checked);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let err = ObservationSet::new(vec![0.0; 9], vec![0.0; 10], vec![0.0; 30], 3).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn nan_rejected() {
        let mut y = vec![1.0; 10];
        y[4] = f64::NAN;
        let err = ObservationSet::new(y, vec![0.0; 10], vec![0.0; 10], 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { field: "y", row: 4 }));
    }

    #[test]
    fn single_row_rejected() {
        let err = ObservationSet::new(vec![1.0], vec![0.0], vec![0.0], 1).unwrap_err();
        assert!(matches!(err, Error::TooFewObservations { .. }));
    }

    #[test]
    fn subset_keeps_rows() {
        let data = sample(6, 2);
        let sub = data.subset(&[4, 1]).unwrap();
        assert_eq!(sub.outcomes(), &[4.0, 1.0]);
        assert_eq!(sub.covariates(0), data.covariates(4));
    }

    #[test]
    fn grid_parsing() {
        let grid = EvalGrid::parse("-2:2:81").unwrap();
        assert_eq!(grid.len(), 81);
        assert_eq!(grid.points()[0], -2.0);
        assert_eq!(grid.points()[80], 2.0);
        assert!((grid.points()[40]).abs() < 1e-15);
        assert!(EvalGrid::parse("1:0:3").is_err());
        assert!(EvalGrid::parse("0:1").is_err());
        assert!(EvalGrid::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn config_bounds() {
        let mut cfg = EstimationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.ci_level = 1.0;
        assert!(cfg.validate().is_err());
        cfg.ci_level = 0.05;
        cfg.density_floor = 0.0;
        assert!(cfg.validate().is_err());
    }
}
