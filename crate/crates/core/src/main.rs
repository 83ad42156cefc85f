use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use doseslope::crossfit::{crossfit_curve, multiplier_bootstrap_band, MultiplierLaw};
use doseslope::estimators::Estimator;
use doseslope::kernels::{BandwidthRule, Kernel};
use doseslope::nuisance::{
    BasisConfig, CondDensityMethod, DensitySpec, JointSpec, NuisancePlan, OutcomeSpec,
};
use doseslope::sim::io::{self, CurveOutput, Format, Output};
use doseslope::sim::monte_carlo::{ConfigEcho, DensityChoice, OutcomeChoice};
use doseslope::sim::{run_monte_carlo, DgpKind, MonteCarloSpec};
use doseslope::{Error, EstimationConfig, EvalGrid, Result};

#[derive(Parser)]
#[command(name = "doseslope", version, about = "Dose-response and derivative effect curve estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo experiment on a built-in design.
    Simulate(SimulateArgs),
    /// Estimate a curve from a CSV file.
    Estimate(EstimateArgs),
    /// Pool simulation reports written as JSON.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Kernel: epanechnikov, gaussian, triangular or uniform.
    #[arg(long, default_value = "epanechnikov")]
    kernel: Kernel,
    /// Bandwidth scale C in h = C * sd(T) * n^(-1/5).
    #[arg(long)]
    bw_scale: Option<f64>,
    /// Use this bandwidth instead of the scaled rule.
    #[arg(long, conflicts_with = "bw_scale")]
    bandwidth: Option<f64>,
    /// Cross-fitting folds (1 disables cross-fitting).
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Evaluation grid as lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Report raw instead of self-normalized weighted estimators.
    #[arg(long)]
    no_self_normalize: bool,
    /// Lower clamp for estimated densities.
    #[arg(long, default_value_t = 1e-3)]
    density_floor: f64,
    /// Level-set multiplier for the interior density.
    #[arg(long, default_value_t = 0.5)]
    level_multiplier: f64,
    /// Fail on empty kernel windows instead of flagging them.
    #[arg(long)]
    strict: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self, default_scale: f64) -> EstimationConfig {
        let bandwidth = match (self.bandwidth, self.bw_scale) {
            (Some(h), _) => BandwidthRule::Fixed { h },
            (None, scale) => BandwidthRule::Scaled {
                scale: scale.unwrap_or(default_scale),
            },
        };
        EstimationConfig {
            kernel: self.kernel,
            bandwidth,
            folds: self.folds,
            self_normalized: !self.no_self_normalize,
            density_floor: self.density_floor,
            level_multiplier: self.level_multiplier,
            strict: self.strict,
            rng_seed: self.seed,
            ..EstimationConfig::default()
        }
    }

    fn grid(&self, default: EvalGrid) -> Result<EvalGrid> {
        self.grid.as_deref().map_or(Ok(default), EvalGrid::parse)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// dgp1 or dgp2.
    #[arg(long, default_value = "dgp1")]
    dgp: DgpKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Covariate dimension (dgp1 only).
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Comma-separated estimators, e.g. theta_dr,theta_ipw.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<Estimator>,
    /// Outcome model: poly2, poly3, zero or oracle.
    #[arg(long)]
    outcome_model: Option<String>,
    /// Treatment density: kde, rks, oracle or a positive constant.
    #[arg(long)]
    density: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    outcome: String,
    /// Treatment column.
    #[arg(long)]
    treatment: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    /// Estimator; defaults to theta_dr, or theta_c_dr with --no-positivity.
    #[arg(long)]
    method: Option<Estimator>,
    /// Use the bias-corrected estimators that do not rely on positivity.
    #[arg(long)]
    no_positivity: bool,
    /// Bootstrap replicates for a uniform band (0 = no band).
    #[arg(long, default_value_t = 0)]
    band: usize,
    /// Significance level tau of intervals and bands.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// z-score every selected column (population standard deviation).
    #[arg(long)]
    standardize: bool,
    /// Treatment density method: kde or rks.
    #[arg(long, default_value = "kde")]
    density: String,
    /// Polynomial degree in t of the outcome model.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON simulation reports to pool.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

fn parse_outcome(spec: &str) -> Result<OutcomeChoice> {
    let poly = |t_degree| OutcomeChoice::Polynomial {
        basis: BasisConfig {
            t_degree,
            covariates: true,
            interactions: 1,
        },
        ridge: 1e-8,
    };
    match spec {
        "poly2" => Ok(poly(2)),
        "poly3" => Ok(poly(3)),
        "zero" => Ok(OutcomeChoice::Zero),
        "oracle" => Ok(OutcomeChoice::Oracle),
        other => Err(Error::InvalidConfig(format!("unknown outcome model `{other}`"))),
    }
}

fn parse_density(spec: &str) -> Result<DensityChoice> {
    match spec {
        "kde" => Ok(DensityChoice::Fitted {
            method: CondDensityMethod::kde_residual(),
        }),
        "rks" => Ok(DensityChoice::Fitted {
            method: CondDensityMethod::rks(),
        }),
        "oracle" => Ok(DensityChoice::Oracle),
        other => match other.parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(DensityChoice::Constant { value: v }),
            _ => Err(Error::InvalidConfig(format!("unknown density `{other}`"))),
        },
    }
}

fn write_output(doc: &Output, format: Format, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => io::emit_report(doc, format, path),
        None => {
            print!("{}", io::render(doc, format)?);
            Ok(())
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let c = &args.common;
    let mut spec = MonteCarloSpec::preset(args.dgp, args.n, args.d, args.reps, c.seed)?;
    let default_scale = match args.dgp {
        DgpKind::Dgp1 => 1.25,
        DgpKind::Dgp2 => 2.0,
    };
    spec.config = c.config(default_scale);
    spec.grid = c.grid(spec.grid.clone())?;
    if !args.estimators.is_empty() {
        spec.estimators = args.estimators.clone();
    }
    if let Some(o) = &args.outcome_model {
        spec.nuisance.outcome = parse_outcome(o)?;
    }
    if let Some(d) = &args.density {
        spec.nuisance.density = parse_density(d)?;
    }
    let report = with_threads(c.threads, || run_monte_carlo(&spec))?;
    write_output(&Output::Simulation(report), c.format, c.out.as_deref())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let c = &args.common;
    let data = io::load_csv(
        &args.data,
        &args.outcome,
        &args.treatment,
        &args.covariates,
        args.standardize,
    )?;
    let mut cfg = c.config(1.25);
    cfg.ci_level = args.level;
    let method = args.method.unwrap_or(if args.no_positivity {
        Estimator::ThetaCDr
    } else {
        Estimator::ThetaDr
    });
    let tr = data.treatments();
    let lo = tr.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = c.grid(EvalGrid::linspace(lo, hi, 41)?)?;
    let density = match args.density.as_str() {
        "kde" => CondDensityMethod::kde_residual(),
        "rks" => CondDensityMethod::rks(),
        other => return Err(Error::InvalidConfig(format!("unknown density method `{other}`"))),
    };
    let plan = NuisancePlan {
        outcome: OutcomeSpec::Polynomial {
            basis: BasisConfig {
                t_degree: args.degree,
                covariates: true,
                interactions: 1,
            },
            ridge: 1e-8,
        },
        density: if method.needs_cond_density() {
            DensitySpec::Method(density)
        } else {
            DensitySpec::None
        },
        joint: if method.needs_joint() {
            JointSpec::Kde {
                kernel: Kernel::Gaussian,
            }
        } else {
            JointSpec::None
        },
    };
    let (work, band) = with_threads(c.threads, || {
        let work = crossfit_curve(&data, &plan, &cfg, method, &grid)?;
        let band = if args.band > 0 {
            Some(multiplier_bootstrap_band(
                &work,
                args.band,
                cfg.ci_level,
                MultiplierLaw::Exponential,
                cfg.rng_seed,
            )?)
        } else {
            None
        };
        Ok((work, band))
    })?;
    let echo = ConfigEcho {
        version: env!("CARGO_PKG_VERSION").to_string(),
        dgp: None,
        estimators: vec![method],
        estimation: cfg.clone(),
        nuisance: None,
        plan: Some(plan.summary()),
        replications: None,
        data: Some(json!({
            "path": args.data.display().to_string(),
            "outcome": args.outcome,
            "treatment": args.treatment,
            "covariates": args.covariates,
            "n": data.len(),
            "standardized": args.standardize,
            "bootstrap_replicates": args.band,
        })),
    };
    let doc = Output::Curve(CurveOutput::new(&work.curve, band.as_ref(), echo));
    write_output(&doc, c.format, c.out.as_deref())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        match io::read_output(path)? {
            Output::Simulation(r) => reports.push(r),
            Output::Curve(_) => {
                return Err(Error::InvalidConfig(format!(
                    "{} holds a single curve, not a simulation report",
                    path.display()
                )))
            }
        }
    }
    let pooled = io::pool_reports(&reports)?;
    write_output(&Output::Simulation(pooled), args.format, args.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
