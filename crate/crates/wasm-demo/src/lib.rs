//! Browser bindings for three interactive views: a derivative-effect curve on the
//! overlap design, plain versus bias-corrected estimates on the band design, and
//! kernel profiles.

use doseslope::crossfit::crossfit_curve;
use doseslope::estimators::Estimator;
use doseslope::sim::dgp::{gen_dgp1, DgpKind, DgpSpec};
use doseslope::sim::monte_carlo::{run_replication, MonteCarloSpec, NuisanceChoice};
use doseslope::{BandwidthRule, EstimationConfig, EvalGrid, Kernel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CurveView {
    pub t: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub name: &'static str,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ComparisonView {
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub series: Vec<Series>,
}

#[derive(Debug, Serialize)]
pub struct KernelView {
    pub name: &'static str,
    pub u: Vec<f64>,
    pub k: Vec<f64>,
    pub kappa2: f64,
    pub nu0: f64,
}

fn check_size(n: usize) -> doseslope::Result<()> {
    if !(50..=5000).contains(&n) {
        return Err(doseslope::Error::InvalidConfig(
            "sample size must lie in 50..=5000".into(),
        ));
    }
    Ok(())
}

/// Cross-fitted doubly robust derivative curve with pointwise intervals on one draw of the overlap design.
pub fn overlap_curve(n: usize, seed: u64, bw_scale: f64) -> doseslope::Result<CurveView> {
    check_size(n)?;
    let d = 5;
    let dgp = DgpSpec::new(DgpKind::Dgp1, n, d, seed)?;
    let data = gen_dgp1(n, d, seed)?;
    let cfg = EstimationConfig {
        bandwidth: BandwidthRule::Scaled { scale: bw_scale },
        rng_seed: seed,
        ..EstimationConfig::default()
    };
    let plan = NuisanceChoice::preset(DgpKind::Dgp1).plan(&dgp, &[Estimator::ThetaDr]);
    let grid = EvalGrid::linspace(-2.0, 2.0, 41)?;
    let curve = crossfit_curve(&data, &plan, &cfg, Estimator::ThetaDr, &grid)?.curve;
    Ok(CurveView {
        t: grid.points().to_vec(),
        estimate: curve.values(),
        truth: grid.points().iter().map(|&t| dgp.theta_true(t)).collect(),
        lower: curve.ci_lower,
        upper: curve.ci_upper,
        h: curve.h.h,
    })
}

/// Plain inverse weighting against the bias-corrected estimators on one draw of the band design.
pub fn band_comparison(n: usize, seed: u64) -> doseslope::Result<ComparisonView> {
    check_size(n)?;
    let estimators = [Estimator::ThetaIpw, Estimator::ThetaCIpw, Estimator::ThetaCDr];
    let mut spec = MonteCarloSpec::preset(DgpKind::Dgp2, n, 1, 1, seed)?;
    spec.estimators = estimators.to_vec();
    spec.grid = EvalGrid::linspace(-1.5, 1.5, 21)?;
    let records = run_replication(&spec, 0)?;
    let series = estimators
        .iter()
        .zip(records)
        .map(|(est, rec)| Series {
            name: est.name(),
            estimate: rec.values,
            lower: rec.lower,
            upper: rec.upper,
        })
        .collect();
    Ok(ComparisonView {
        t: spec.grid.points().to_vec(),
        truth: spec.grid.points().iter().map(|&t| spec.dgp.theta_true(t)).collect(),
        series,
    })
}

/// Kernel values on `[-3, 3]` together with its second moment and squared integral.
pub fn kernel_profile(name: &str, points: usize) -> doseslope::Result<KernelView> {
    let kernel: Kernel = name.parse()?;
    let points = points.clamp(3, 2001);
    let u: Vec<f64> = (0..points)
        .map(|i| -3.0 + 6.0 * i as f64 / (points - 1) as f64)
        .collect();
    Ok(KernelView {
        name: kernel.name(),
        k: u.iter().map(|&x| kernel.eval(x)).collect(),
        u,
        kappa2: kernel.kappa2(),
        nu0: kernel.moment(0, true),
    })
}

fn to_json<T: Serialize>(value: doseslope::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = overlapCurve)]
pub fn overlap_curve_js(n: usize, seed: u32, bw_scale: f64) -> Result<String, JsError> {
    to_json(overlap_curve(n, u64::from(seed), bw_scale))
}

#[wasm_bindgen(js_name = bandComparison)]
pub fn band_comparison_js(n: usize, seed: u32) -> Result<String, JsError> {
    to_json(band_comparison(n, u64::from(seed)))
}

#[wasm_bindgen(js_name = kernelProfile)]
pub fn kernel_profile_js(name: &str, points: usize) -> Result<String, JsError> {
    to_json(kernel_profile(name, points))
}
