//! Nuisance functions: outcome regression, conditional and joint densities.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::ObservationSet;
use crate::error::Result;
use crate::kernels::Kernel;

pub mod cdf_weights;
pub mod cond_density;
pub mod interior;
pub mod joint;
pub mod outcome;
pub mod regression;

pub use cdf_weights::{cond_cdf_weights, CondCdfWeights};
pub use cond_density::{fit_cond_density, CondDensityMethod, CondDensityModel};
pub use interior::{interior_density, InteriorDensity};
pub use joint::{fit_joint_density, JointDensityModel};
pub use outcome::{fit_outcome_regression, BasisConfig, OutcomeModel};

/// Outcome regression `mu(t, s)` together with its treatment derivative `beta(t, s)`.
pub trait OutcomeFn: Send + Sync + fmt::Debug {
    fn mu(&self, t: f64, s: &[f64]) -> f64;
    fn beta(&self, t: f64, s: &[f64]) -> f64;
}

/// Conditional treatment density `p(t | s)`.
pub trait CondDensityFn: Send + Sync + fmt::Debug {
    fn density(&self, t: f64, s: &[f64]) -> f64;
}

/// Joint density of `(T, S)` with its marginals.
pub trait JointDensityFn: Send + Sync + fmt::Debug {
    fn joint(&self, t: f64, s: &[f64]) -> f64;
    fn marginal_t(&self, t: f64) -> f64;
    fn marginal_s(&self, s: &[f64]) -> f64;

    /// `p(s | t) = p(t, s) / p_T(t)`, zero where `p_T(t)` vanishes.
    fn cond_s_given_t(&self, s: &[f64], t: f64) -> f64 {
        let pt = self.marginal_t(t);
        if pt > 0.0 {
            self.joint(t, s) / pt
        } else {
            0.0
        }
    }

    fn cond_s_given_t_many(&self, t: f64, points: &[&[f64]]) -> Vec<f64> {
        points.iter().map(|s| self.cond_s_given_t(s, t)).collect()
    }

    /// `p(s | t)` indexed `[t][point]`.
    fn cond_s_given_t_grid(&self, ts: &[f64], points: &[&[f64]]) -> Vec<Vec<f64>> {
        ts.iter().map(|&t| self.cond_s_given_t_many(t, points)).collect()
    }
}

pub fn eval_mu(model: &dyn OutcomeFn, t: f64, s: &[f64]) -> f64 {
    model.mu(t, s)
}

pub fn eval_beta(model: &dyn OutcomeFn, t: f64, s: &[f64]) -> f64 {
    model.beta(t, s)
}

/// Elementwise `max(v, floor)`.
pub fn apply_density_floor(values: &[f64], floor: f64) -> Vec<f64> {
    values.iter().map(|v| v.max(floor)).collect()
}

/// `mu = beta = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroOutcome;

impl OutcomeFn for ZeroOutcome {
    fn mu(&self, _: f64, _: &[f64]) -> f64 {
        0.0
    }
    fn beta(&self, _: f64, _: &[f64]) -> f64 {
        0.0
    }
}

/// `p(t | s) = c` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDensity(pub f64);

impl CondDensityFn for ConstantDensity {
    fn density(&self, _: f64, _: &[f64]) -> f64 {
        self.0
    }
}

type Fn2 = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Outcome model from closures, e.g. a known truth.
#[derive(Clone)]
pub struct FnOutcome {
    mu: Arc<Fn2>,
    beta: Arc<Fn2>,
}

impl FnOutcome {
    pub fn new(
        mu: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            mu: Arc::new(mu),
            beta: Arc::new(beta),
        }
    }
}

impl fmt::Debug for FnOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnOutcome")
    }
}

impl OutcomeFn for FnOutcome {
    fn mu(&self, t: f64, s: &[f64]) -> f64 {
        (self.mu)(t, s)
    }
    fn beta(&self, t: f64, s: &[f64]) -> f64 {
        (self.beta)(t, s)
    }
}

/// Conditional density from a closure.
#[derive(Clone)]
pub struct FnCondDensity(Arc<Fn2>);

impl FnCondDensity {
    pub fn new(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for FnCondDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnCondDensity")
    }
}

impl CondDensityFn for FnCondDensity {
    fn density(&self, t: f64, s: &[f64]) -> f64 {
        (self.0)(t, s)
    }
}

/// The nuisance functions used on one evaluation fold.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub outcome: Arc<dyn OutcomeFn>,
    pub cond_density: Option<Arc<dyn CondDensityFn>>,
    pub joint: Option<Arc<dyn JointDensityFn>>,
    /// Fold whose complement the functions were fitted on.
    pub fold: Option<usize>,
}

impl NuisanceSet {
    pub fn new(outcome: Arc<dyn OutcomeFn>) -> Self {
        Self {
            outcome,
            cond_density: None,
            joint: None,
            fold: None,
        }
    }

    pub fn with_cond_density(mut self, density: Arc<dyn CondDensityFn>) -> Self {
        self.cond_density = Some(density);
        self
    }

    pub fn with_joint(mut self, joint: Arc<dyn JointDensityFn>) -> Self {
        self.joint = Some(joint);
        self
    }

    /// Same functions with the outcome model replaced by zero.
    pub fn without_outcome(&self) -> Self {
        Self {
            outcome: Arc::new(ZeroOutcome),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub enum OutcomeSpec {
    Polynomial { basis: BasisConfig, ridge: f64 },
    Zero,
    Fixed(Arc<dyn OutcomeFn>),
}

#[derive(Debug, Clone)]
pub enum DensitySpec {
    Method(CondDensityMethod),
    Fixed(Arc<dyn CondDensityFn>),
    Constant(f64),
    None,
}

#[derive(Debug, Clone)]
pub enum JointSpec {
    Kde { kernel: Kernel },
    Fixed(Arc<dyn JointDensityFn>),
    None,
}

/// How to obtain each nuisance from a training sample.
#[derive(Debug, Clone)]
pub struct NuisancePlan {
    pub outcome: OutcomeSpec,
    pub density: DensitySpec,
    pub joint: JointSpec,
}

/// Plain-text summary of a plan, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub outcome: String,
    pub density: String,
    pub joint: String,
}

impl Default for NuisancePlan {
    fn default() -> Self {
        Self {
            outcome: OutcomeSpec::Polynomial {
                basis: BasisConfig::QUADRATIC_INTERACTION,
                ridge: 1e-8,
            },
            density: DensitySpec::Method(CondDensityMethod::kde_residual()),
            joint: JointSpec::None,
        }
    }
}

impl NuisancePlan {
    /// Fits every configured nuisance on `train`.
    pub fn fit(&self, train: &ObservationSet) -> Result<NuisanceSet> {
        let outcome: Arc<dyn OutcomeFn> = match &self.outcome {
            OutcomeSpec::Polynomial { basis, ridge } => {
                Arc::new(fit_outcome_regression(train, *basis, *ridge)?)
            }
            OutcomeSpec::Zero => Arc::new(ZeroOutcome),
            OutcomeSpec::Fixed(f) => Arc::clone(f),
        };
        let cond_density: Option<Arc<dyn CondDensityFn>> = match &self.density {
            DensitySpec::Method(m) => Some(Arc::new(fit_cond_density(train, *m)?)),
            DensitySpec::Fixed(f) => Some(Arc::clone(f)),
            DensitySpec::Constant(c) => Some(Arc::new(ConstantDensity(*c))),
            DensitySpec::None => None,
        };
        let joint: Option<Arc<dyn JointDensityFn>> = match &self.joint {
            JointSpec::Kde { kernel } => Some(Arc::new(fit_joint_density(train, *kernel)?)),
            JointSpec::Fixed(f) => Some(Arc::clone(f)),
            JointSpec::None => None,
        };
        Ok(NuisanceSet {
            outcome,
            cond_density,
            joint,
            fold: None,
        })
    }

    /// True when nothing is learned from data.
    pub fn is_fixed(&self) -> bool {
        !matches!(self.outcome, OutcomeSpec::Polynomial { .. })
            && !matches!(self.density, DensitySpec::Method(_))
            && !matches!(self.joint, JointSpec::Kde { .. })
    }

    pub fn summary(&self) -> PlanSummary {
        let outcome = match &self.outcome {
            OutcomeSpec::Polynomial { basis, ridge } => format!(
                "polynomial(t_degree={}, covariates={}, interactions={}, ridge={ridge})",
                basis.t_degree, basis.covariates, basis.interactions
            ),
            OutcomeSpec::Zero => "zero".into(),
            OutcomeSpec::Fixed(_) => "fixed".into(),
        };
        let density = match &self.density {
            DensitySpec::Method(CondDensityMethod::KdeResidual { kernel, degree, .. }) => {
                format!("kde_residual(kernel={}, degree={degree})", kernel.name())
            }
            DensitySpec::Method(CondDensityMethod::Rks { kernel, degree, .. }) => {
                format!("rks(kernel={}, degree={degree})", kernel.name())
            }
            DensitySpec::Fixed(_) => "fixed".into(),
            DensitySpec::Constant(c) => format!("constant({c})"),
            DensitySpec::None => "none".into(),
        };
        let joint = match &self.joint {
            JointSpec::Kde { kernel } => format!("kde(kernel={})", kernel.name()),
            JointSpec::Fixed(_) => "fixed".into(),
            JointSpec::None => "none".into(),
        };
        PlanSummary {
            outcome,
            density,
            joint,
        }
    }
}
