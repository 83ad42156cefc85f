//! Repeated sampling from a design and per-grid-point bias, RMSE and coverage.

use serde::{Deserialize, Serialize};

use super::dgp::{DgpKind, DgpSpec};
use crate::crossfit::{fit_folded, make_folds, select_bandwidth};
use crate::data::{EstimationConfig, EvalGrid};
use crate::error::{Error, Result};
use crate::estimators::{estimate_folded, Estimand, Estimator};
use crate::kernels::Kernel;
use crate::nuisance::{
    BasisConfig, CondDensityMethod, DensitySpec, JointSpec, NuisancePlan, OutcomeSpec, PlanSummary,
};
use crate::rng::{ordered_map, replication_seed};

/// Outcome model used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeChoice {
    Polynomial { basis: BasisConfig, ridge: f64 },
    Zero,
    /// The design's true regression function.
    Oracle,
}

/// Conditional treatment density used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityChoice {
    Fitted { method: CondDensityMethod },
    Oracle,
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceChoice {
    pub outcome: OutcomeChoice,
    pub density: DensityChoice,
    /// Kernel of the joint `(T, S)` density estimate.
    pub joint_kernel: Kernel,
}

impl NuisanceChoice {
    /// Defaults for a design: correctly specified polynomial outcome, residual KDE on
    /// the overlap design and the true density on the band design.
    pub fn preset(kind: DgpKind) -> Self {
        match kind {
            DgpKind::Dgp1 => Self {
                outcome: OutcomeChoice::Polynomial {
                    basis: BasisConfig::QUADRATIC_INTERACTION,
                    ridge: 1e-8,
                },
                density: DensityChoice::Fitted {
                    method: CondDensityMethod::kde_residual(),
                },
                joint_kernel: Kernel::Gaussian,
            },
            DgpKind::Dgp2 => Self {
                outcome: OutcomeChoice::Polynomial {
                    basis: BasisConfig {
                        t_degree: 3,
                        covariates: true,
                        interactions: 0,
                    },
                    ridge: 1e-8,
                },
                density: DensityChoice::Oracle,
                joint_kernel: Kernel::Gaussian,
            },
        }
    }

    pub fn plan(&self, dgp: &DgpSpec, estimators: &[Estimator]) -> NuisancePlan {
        let outcome = match self.outcome {
            OutcomeChoice::Polynomial { basis, ridge } => OutcomeSpec::Polynomial { basis, ridge },
            OutcomeChoice::Zero => OutcomeSpec::Zero,
            OutcomeChoice::Oracle => OutcomeSpec::Fixed(dgp.oracle_outcome()),
        };
        let density = if estimators.iter().any(|e| e.needs_cond_density()) {
            match self.density {
                DensityChoice::Fitted { method } => DensitySpec::Method(method),
                DensityChoice::Oracle => DensitySpec::Fixed(dgp.oracle_density()),
                DensityChoice::Constant { value } => DensitySpec::Constant(value),
            }
        } else {
            DensitySpec::None
        };
        let joint = if estimators.iter().any(|e| e.needs_joint()) {
            JointSpec::Kde {
                kernel: self.joint_kernel,
            }
        } else {
            JointSpec::None
        };
        NuisancePlan {
            outcome,
            density,
            joint,
        }
    }
}

/// Everything that defines a Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub dgp: DgpSpec,
    pub estimators: Vec<Estimator>,
    pub config: EstimationConfig,
    pub nuisance: NuisanceChoice,
    pub grid: EvalGrid,
    pub replications: usize,
}

impl MonteCarloSpec {
    /// Default experiment for a design: preset estimators, nuisances and bandwidth on the 81-point grid.
    pub fn preset(kind: DgpKind, n: usize, d: usize, replications: usize, seed: u64) -> Result<Self> {
        let dgp = DgpSpec::new(kind, n, d, seed)?;
        let mut config = EstimationConfig {
            rng_seed: seed,
            ..EstimationConfig::default()
        };
        let estimators = match kind {
            DgpKind::Dgp1 => vec![Estimator::ThetaRa, Estimator::ThetaIpw, Estimator::ThetaDr],
            DgpKind::Dgp2 => {
                config.bandwidth = crate::kernels::BandwidthRule::Scaled { scale: 2.0 };
                vec![
                    Estimator::ThetaIpw,
                    Estimator::ThetaDr,
                    Estimator::ThetaCRa,
                    Estimator::ThetaCIpw,
                    Estimator::ThetaCDr,
                ]
            }
        };
        Ok(Self {
            dgp,
            estimators,
            config,
            nuisance: NuisanceChoice::preset(kind),
            grid: EvalGrid::default_simulation(),
            replications,
        })
    }
}

/// Provenance block written alongside every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub version: String,
    pub dgp: Option<DgpSpec>,
    pub estimators: Vec<Estimator>,
    pub estimation: EstimationConfig,
    pub nuisance: Option<NuisanceChoice>,
    pub plan: Option<PlanSummary>,
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<serde_json::Value>,
}

impl ConfigEcho {
    pub fn for_spec(spec: &MonteCarloSpec) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            dgp: Some(spec.dgp),
            estimators: spec.estimators.clone(),
            estimation: spec.config.clone(),
            nuisance: Some(spec.nuisance),
            plan: Some(spec.nuisance.plan(&spec.dgp, &spec.estimators).summary()),
            replications: Some(spec.replications),
            data: None,
        }
    }
}

/// Per-grid-point metrics of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub truth: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub mean_ci_lower: Vec<f64>,
    pub mean_ci_upper: Vec<f64>,
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// `None` for estimators without intervals.
    pub coverage: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub grid: EvalGrid,
    /// Replications that contributed.
    pub replications: usize,
    /// Replications skipped after a failure.
    pub failed: usize,
    pub summaries: Vec<EstimatorSummary>,
    pub config: ConfigEcho,
}

/// Estimates and interval bounds of one estimator in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Reduces replication records (in replication order) into metrics against `truth`.
pub fn summarize(
    estimator: Estimator,
    truth: &[f64],
    records: &[&ReplicationRecord],
    with_coverage: bool,
) -> EstimatorSummary {
    let g = truth.len();
    let r = records.len().max(1) as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> &Vec<f64>| -> Vec<f64> {
        (0..g)
            .map(|k| records.iter().map(|rec| f(rec)[k]).sum::<f64>() / r)
            .collect()
    };
    let mean_estimate = mean(&|rec| &rec.values);
    let bias = (0..g).map(|k| mean_estimate[k] - truth[k]).collect();
    let rmse = (0..g)
        .map(|k| {
            (records
                .iter()
                .map(|rec| (rec.values[k] - truth[k]).powi(2))
                .sum::<f64>()
                / r)
                .sqrt()
        })
        .collect();
    let coverage = with_coverage.then(|| {
        (0..g)
            .map(|k| {
                records
                    .iter()
                    .filter(|rec| rec.lower[k] <= truth[k] && truth[k] <= rec.upper[k])
                    .count() as f64
                    / r
            })
            .collect()
    });
    EstimatorSummary {
        estimator,
        truth: truth.to_vec(),
        mean_variance: mean(&|rec| &rec.variances),
        mean_ci_lower: mean(&|rec| &rec.lower),
        mean_ci_upper: mean(&|rec| &rec.upper),
        mean_estimate,
        bias,
        rmse,
        coverage,
    }
}

/// Runs one replication and returns a record per estimator.
pub fn run_replication(spec: &MonteCarloSpec, r: usize) -> Result<Vec<ReplicationRecord>> {
    let child = replication_seed(spec.dgp.seed, r as u64);
    let data = spec.dgp.generate_with_seed(child)?;
    let h = select_bandwidth(&data, &spec.config)?;
    let folds = make_folds(data.len(), spec.config.folds, child)?;
    let plan = spec.nuisance.plan(&spec.dgp, &spec.estimators);
    let nuisance = fit_folded(&data, &plan, &folds)?;
    spec.estimators
        .iter()
        .map(|&est| {
            let work = estimate_folded(&data, &nuisance, est, h, &spec.grid, &spec.config)?;
            let c = work.curve;
            Ok(ReplicationRecord {
                values: c.values(),
                variances: c.estimates.iter().map(|e| e.variance).collect(),
                lower: c.ci_lower,
                upper: c.ci_upper,
            })
        })
        .collect()
}

/// Runs the experiment. Replications execute in parallel when the `parallel` feature is on;
/// the report does not depend on the number of threads.
pub fn run_monte_carlo(spec: &MonteCarloSpec) -> Result<SimulationReport> {
    if spec.replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if spec.estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators requested".into()));
    }
    spec.config.validate()?;
    let outcomes = ordered_map(spec.replications, |r| run_replication(spec, r));

    let mut kept = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(records) => kept.push(records),
            Err(e) if spec.config.strict => {
                return Err(Error::Replication {
                    replication: r,
                    source: Box::new(e),
                })
            }
            Err(e) => {
                log::warn!("replication {r} skipped: {e}");
                failed += 1;
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "all {} replications failed",
            spec.replications
        )));
    }

    let summaries = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &est)| {
            let truth: Vec<f64> = spec
                .grid
                .points()
                .iter()
                .map(|&t| match est.estimand() {
                    Estimand::Derivative => spec.dgp.theta_true(t),
                    Estimand::DoseResponse => spec.dgp.m_true(t),
                })
                .collect();
            let records: Vec<&ReplicationRecord> = kept.iter().map(|rep| &rep[j]).collect();
            summarize(est, &truth, &records, est.has_inference())
        })
        .collect();
    Ok(SimulationReport {
        grid: spec.grid.clone(),
        replications: kept.len(),
        failed,
        summaries,
        config: ConfigEcho::for_spec(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(values: Vec<f64>, half: f64) -> ReplicationRecord {
        ReplicationRecord {
            lower: values.iter().map(|v| v - half).collect(),
            upper: values.iter().map(|v| v + half).collect(),
            variances: vec![1.0; values.len()],
            values,
        }
    }

    #[test]
    fn perfect_estimator() {
        let truth = vec![0.0, 1.0, 4.0];
        let recs = [record(truth.clone(), 0.1), record(truth.clone(), 0.2)];
        let refs: Vec<_> = recs.iter().collect();
        let s = summarize(Estimator::ThetaDr, &truth, &refs, true);
        assert_eq!(s.bias, vec![0.0; 3]);
        assert_eq!(s.rmse, vec![0.0; 3]);
        assert_eq!(s.coverage.unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn single_replication_rmse_is_abs_bias() {
        let truth = vec![0.5, -1.0];
        let recs = [record(vec![0.2, -0.25], 0.1)];
        let refs: Vec<_> = recs.iter().collect();
        let s = summarize(Estimator::ThetaDr, &truth, &refs, true);
        for k in 0..2 {
            assert_eq!(s.rmse[k], s.bias[k].abs());
        }
        assert_eq!(s.coverage.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rmse_dominates_bias() {
        let truth = vec![1.0; 4];
        let recs = [
            record(vec![0.0, 1.0, 2.0, 3.0], 0.5),
            record(vec![1.5, 1.1, -2.0, 1.0], 0.5),
            record(vec![0.9, 0.2, 2.0, 0.7], 0.5),
        ];
        let refs: Vec<_> = recs.iter().collect();
        let s = summarize(Estimator::ThetaIpw, &truth, &refs, true);
        for k in 0..4 {
            assert!(s.rmse[k] >= s.bias[k].abs());
            let c = s.coverage.as_ref().unwrap()[k];
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn small_experiment_runs() {
        let mut spec = MonteCarloSpec::preset(DgpKind::Dgp1, 300, 2, 3, 1).unwrap();
        spec.grid = EvalGrid::linspace(-1.0, 1.0, 5).unwrap();
        let report = run_monte_carlo(&spec).unwrap();
        assert_eq!(report.replications, 3);
        assert_eq!(report.summaries.len(), 3);
        assert!(report.summaries[0].coverage.is_none());
        assert!(report.summaries[2].coverage.is_some());
    }
}
