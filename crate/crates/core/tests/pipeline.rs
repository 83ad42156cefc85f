use doseslope::crossfit::{crossfit_curve, multiplier_bootstrap_band, MultiplierLaw};
use doseslope::estimators::Estimator;
use doseslope::nuisance::NuisancePlan;
use doseslope::sim::dgp::gen_dgp1;
use doseslope::sim::io::{parse_csv, render, CurveOutput, Format, Output};
use doseslope::sim::monte_carlo::ConfigEcho;
use doseslope::{EstimationConfig, EvalGrid};

fn to_csv(data: &doseslope::ObservationSet) -> String {
    let mut text = String::from("t,noise,y,a,b,c\n");
    for i in 0..data.len() {
        let s = data.covariates(i);
        text.push_str(&format!(
            "{:?},0,{:?},{:?},{:?},{:?}\n",
            data.treatments()[i],
            data.outcomes()[i],
            s[0],
            s[1],
            s[2]
        ));
    }
    text
}

#[test]
fn csv_ingestion_preserves_estimates() {
    let data = gen_dgp1(500, 3, 8).unwrap();
    let cols: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let loaded = parse_csv(&to_csv(&data), "y", "t", &cols, false).unwrap();
    assert_eq!(loaded, data);

    let cfg = EstimationConfig::default();
    let grid = EvalGrid::linspace(-1.0, 1.0, 11).unwrap();
    let plan = NuisancePlan::default();
    let direct = crossfit_curve(&data, &plan, &cfg, Estimator::ThetaDr, &grid).unwrap();
    let via_csv = crossfit_curve(&loaded, &plan, &cfg, Estimator::ThetaDr, &grid).unwrap();
    assert_eq!(direct.curve.values(), via_csv.curve.values());
}

#[test]
fn curve_with_band_renders_in_both_formats() {
    let data = gen_dgp1(400, 2, 9).unwrap();
    let cfg = EstimationConfig::default();
    let grid = EvalGrid::linspace(-1.0, 1.0, 7).unwrap();
    let work = crossfit_curve(&data, &NuisancePlan::default(), &cfg, Estimator::ThetaDr, &grid).unwrap();
    let band = multiplier_bootstrap_band(&work, 100, 0.05, MultiplierLaw::Exponential, 3).unwrap();
    let echo = ConfigEcho {
        version: "test".into(),
        dgp: None,
        estimators: vec![Estimator::ThetaDr],
        estimation: cfg,
        nuisance: None,
        plan: None,
        replications: None,
        data: None,
    };
    let doc = Output::Curve(CurveOutput::new(&work.curve, Some(&band), echo));
    let csv = render(&doc, Format::Csv).unwrap();
    assert_eq!(csv.lines().count(), 8);
    let json: serde_json::Value = serde_json::from_str(&render(&doc, Format::Json).unwrap()).unwrap();
    assert_eq!(json["band_quantile"].as_f64(), Some(band.quantile));
    for (k, pt) in json["points"].as_array().unwrap().iter().enumerate() {
        assert_eq!(pt["band_lower"].as_f64(), Some(band.lower[k]));
        assert!(pt["ci_lower"].as_f64().unwrap() >= band.lower[k] - 1e-12);
    }
}
