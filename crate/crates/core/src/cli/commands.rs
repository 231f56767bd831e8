use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use super::config::ExperimentConfig;
use super::Outputs;
use crate::covariance::empirical_covariance;
use crate::design::{sample_design, DesignSample};
use crate::equivalence::{flr_to_whitenoise, simulate_flr, whitenoise_to_flr, GramTransform, WnCoefficients};
use crate::error::{Error, Result};
use crate::estimators::{
    cutoff_estimator, flr_pinsker_estimator, pinsker_data_driven, select_cutoff, sequence_pinsker, CutoffData,
    PinskerPlan,
};
use crate::function_space::{fmt_f64, norm, GridFunction};
use crate::plot::{write_svg, PlotSpec, Series};
use crate::risk::{
    delta56_study, equivalence_battery, mise_monte_carlo, write_json, EstimatorKind, ModelKind, StudySetting,
    StudySpec, ThetaChoice,
};
use crate::rng::derive_seed;
use crate::whitenoise::{simulate_sequence, SeqObservation};

/// Single-function variant of the study spec used by one-shot commands.
fn single_theta(spec: &StudySpec) -> StudySpec {
    let mut s = spec.clone();
    if s.theta == ThetaChoice::WorstCase {
        s.theta = ThetaChoice::Boundary;
    }
    s
}

struct RegressionData {
    setting: StudySetting,
    sample: DesignSample,
    theta: GridFunction,
    y: Vec<f64>,
}

fn regression_data(config: &ExperimentConfig, spec: &StudySpec, n: usize) -> Result<RegressionData> {
    let setting = StudySetting::new(&single_theta(spec), n, config.seed)?;
    let sample = sample_design(setting.design(), n, derive_seed(config.seed, "design", n as u64))?;
    let theta = setting.theta_function(0)?;
    let y = simulate_flr(&sample, &theta, config.sigma, derive_seed(config.seed, "noise", n as u64))?;
    Ok(RegressionData {
        setting,
        sample,
        theta,
        y,
    })
}

fn sequence_data(config: &ExperimentConfig, spec: &StudySpec, n: usize) -> Result<(StudySetting, SeqObservation)> {
    let setting = StudySetting::new(&single_theta(spec), n, config.seed)?;
    let obs = simulate_sequence(
        &setting.thetas()[0].1,
        setting.lambda(),
        n,
        config.sigma,
        derive_seed(config.seed, "sequence", n as u64),
    )?;
    Ok((setting, obs))
}

fn write_vector(path: &Path, header: [&str; 2], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn sq_error(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    Ok(norm(&a.sub(b)?, 2.0)?.powi(2))
}

pub(super) fn simulate(config: &ExperimentConfig, spec: &StudySpec, out: &mut Outputs) -> Result<String> {
    for &n in &config.n_grid {
        match config.model {
            ModelKind::Sequence => {
                let (setting, obs) = sequence_data(config, spec, n)?;
                let p = out.file(&format!("sequence_n{n}.csv"));
                obs.write_csv(&p, config.seed)?;
                out.sidecar(&p, json!({ "n": n, "sigma": config.sigma, "theta": setting.thetas()[0].0 }))?;
                let t = out.file(&format!("theta_n{n}.csv"));
                write_vector(&t, ["k", "theta"], &setting.thetas()[0].1)?;
                out.sidecar(&t, json!({ "n": n }))?;
            }
            ModelKind::Flr => {
                let data = regression_data(config, spec, n)?;
                let d = out.file(&format!("designs_n{n}.csv"));
                data.sample.write_csv(&d, &json!({}))?;
                out.sidecar(&d, json!({ "n": n, "grid_size": data.sample.grid_size() }))?;
                let y = out.file(&format!("responses_n{n}.csv"));
                write_vector(&y, ["i", "y"], &data.y)?;
                out.sidecar(&y, json!({ "n": n, "sigma": config.sigma }))?;
                let t = out.file(&format!("theta_n{n}.csv"));
                data.theta.write_csv(&t)?;
                out.sidecar(&t, json!({ "n": n, "theta": data.setting.thetas()[0].0 }))?;
            }
        }
    }
    Ok(format!("simulate: {} sample sizes written to {}", config.n_grid.len(), out.dir().display()))
}

pub(super) fn transform(config: &ExperimentConfig, spec: &StudySpec, out: &mut Outputs) -> Result<String> {
    let mut worst = 0.0f64;
    for &n in &config.n_grid {
        let data = regression_data(config, spec, n)?;
        let cov = empirical_covariance(&data.sample)?;
        let t = GramTransform::build(&data.sample, &cov)?;
        let z = flr_to_whitenoise(&data.y, &t, config.sigma)?;
        let zp = out.file(&format!("whitenoise_n{n}.csv"));
        z.write_csv(&zp)?;
        let inv = t.check_invariants();
        out.sidecar(
            &zp,
            json!({ "n": n, "sigma": config.sigma, "flipped_last": t.flipped_last(), "invariants": inv }),
        )?;
        let yp = out.file(&format!("responses_n{n}.csv"));
        write_vector(&yp, ["i", "y"], &data.y)?;
        out.sidecar(&yp, json!({ "n": n }))?;
        let back = whitenoise_to_flr(&WnCoefficients::read_csv(&zp, config.sigma)?, &t)?;
        let err = back
            .iter()
            .zip(&data.y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        let rp = out.file(&format!("roundtrip_n{n}.csv"));
        write_vector(&rp, ["i", "y"], &back)?;
        out.sidecar(&rp, json!({ "n": n, "max_abs_error": err }))?;
    }
    Ok(format!("transform: max roundtrip error {worst:e}"))
}

pub(super) fn estimate(config: &ExperimentConfig, spec: &StudySpec, out: &mut Outputs) -> Result<String> {
    let rho = spec.rho()?;
    let mut summary = Vec::new();
    for &n in &config.n_grid {
        match config.model {
            ModelKind::Sequence => {
                let (setting, obs) = sequence_data(config, spec, n)?;
                let theta = &setting.thetas()[0].1;
                let (est, plan) = match config.estimator {
                    EstimatorKind::Zero => (vec![0.0; theta.len()], json!(null)),
                    EstimatorKind::Truth => (theta.clone(), json!(null)),
                    EstimatorKind::Cutoff => {
                        let k = select_cutoff(n, spec.alpha(), spec.class.beta).min(obs.len());
                        let est = (0..obs.len())
                            .map(|i| if i < k { obs.y[i] / obs.lambda[i].sqrt() } else { 0.0 })
                            .collect();
                        (est, json!({ "cutoff": k }))
                    }
                    EstimatorKind::PinskerOracle => {
                        let plan = PinskerPlan::oracle(
                            setting.spectrum(),
                            &spec.class,
                            config.sigma,
                            n,
                            rho,
                            setting.k(),
                            spec.support_cap,
                        )?;
                        (sequence_pinsker(&obs, &plan.weights), serde_json::to_value(&plan)?)
                    }
                    EstimatorKind::PinskerDataDriven => {
                        return Err(Error::Config("the data-driven estimator needs the regression model".into()))
                    }
                };
                let loss: f64 = est.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
                let p = out.file(&format!("estimate_n{n}.csv"));
                let mut w = csv::Writer::from_path(&p)?;
                w.write_record(["k", "theta", "theta_hat"])?;
                for (i, (t, e)) in theta.iter().zip(&est).enumerate() {
                    w.write_record([(i + 1).to_string(), fmt_f64(*t), fmt_f64(*e)])?;
                }
                w.flush()?;
                out.sidecar(&p, json!({ "n": n, "estimator": config.estimator, "squared_error": loss, "plan": plan }))?;
                summary.push(format!("n={n} squared error {loss:.6e}"));
            }
            ModelKind::Flr => {
                let data = regression_data(config, spec, n)?;
                let truth = data
                    .setting
                    .truth_operator()
                    .ok_or_else(|| Error::invalid("missing true operator"))?;
                let (est, plan) = match config.estimator {
                    EstimatorKind::Zero => (GridFunction::zeros(data.theta.grid_size())?, json!(null)),
                    EstimatorKind::Truth => (data.theta.clone(), json!(null)),
                    EstimatorKind::Cutoff => {
                        let k = select_cutoff(n, spec.alpha(), spec.class.beta).min(data.setting.k());
                        let c = cutoff_estimator(CutoffData::Flr { sample: &data.sample, y: &data.y }, truth, k)?;
                        (truth.eigenfunctions().reconstruct(&c)?, json!({ "cutoff": k, "coefficients": c }))
                    }
                    EstimatorKind::PinskerOracle => {
                        let plan = PinskerPlan::oracle(
                            data.setting.spectrum(),
                            &spec.class,
                            config.sigma,
                            n,
                            rho,
                            data.setting.k(),
                            spec.support_cap,
                        )?;
                        let est = flr_pinsker_estimator(&data.sample, &data.y, &plan.weights, rho)?;
                        (est.function, serde_json::to_value(&plan)?)
                    }
                    EstimatorKind::PinskerDataDriven => {
                        let (est, g) = pinsker_data_driven(
                            &data.sample,
                            &data.y,
                            &spec.class,
                            config.sigma,
                            rho,
                            data.setting.k(),
                        )?;
                        let mut plan = PinskerPlan::new(
                            g.gamma_hat,
                            data.setting.spectrum(),
                            &spec.class,
                            config.sigma,
                            n,
                            rho,
                            data.setting.k(),
                            spec.support_cap,
                        );
                        plan.m = Some(g.m);
                        (est.function, json!({ "plan": plan, "gamma": g }))
                    }
                };
                let loss = sq_error(&est, &data.theta)?;
                let p = out.file(&format!("estimate_n{n}.csv"));
                est.write_csv(&p)?;
                out.sidecar(&p, json!({ "n": n, "estimator": config.estimator, "squared_error": loss, "plan": plan }))?;
                summary.push(format!("n={n} squared error {loss:.6e}"));
            }
        }
    }
    Ok(format!("estimate ({}): {}", config.estimator.label(), summary.join(", ")))
}

pub(super) fn risk(config: &ExperimentConfig, spec: &StudySpec, out: &mut Outputs) -> Result<String> {
    let report = mise_monte_carlo(spec, config.estimator, &config.n_grid, config.replications, config.seed)?;
    let p = out.file("risk.csv");
    report.write_csv(&p)?;
    out.sidecar(
        &p,
        json!({ "estimator": config.estimator, "replications": config.replications, "slope": report.slope }),
    )?;
    let j = out.file("risk.json");
    write_json(&j, &json!({ "meta": out.meta(json!({})), "report": report }))?;
    let slope = report
        .slope
        .map(|s| format!(", slope {:.4} ± {:.4}", s.slope, s.stderr))
        .unwrap_or_default();
    let ratios: Vec<String> = report.rows.iter().map(|r| format!("{:.3}", r.ratio)).collect();
    Ok(format!("risk ({}): MISE/a_n = [{}]{slope}", config.estimator.label(), ratios.join(", ")))
}

pub(super) fn equivalence(config: &ExperimentConfig, spec: &StudySpec, out: &mut Outputs) -> Result<String> {
    let e = &config.equivalence;
    let setting = StudySetting::new(&single_theta(spec), e.n, config.seed)?;
    let sample = sample_design(setting.design(), e.n, derive_seed(config.seed, "equivalence-design", 0))?;
    let theta = setting.theta_function(0)?;
    let ks = equivalence_battery(
        &sample,
        &theta,
        config.sigma,
        e.draws,
        e.level,
        derive_seed(config.seed, "equivalence", 0),
    )?;
    let p = out.file("ks.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["coordinate", "statistic", "p_value", "rejected"])?;
    for (i, ((d, pv), r)) in ks.statistics.iter().zip(&ks.p_values).zip(&ks.rejected).enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*d), fmt_f64(*pv), r.to_string()])?;
    }
    w.flush()?;
    out.sidecar(
        &p,
        json!({ "n": e.n, "draws": e.draws, "level": e.level, "adjusted_level": ks.adjusted_level,
                "rejection_rate": ks.rejection_rate }),
    )?;
    let delta = delta56_study(spec, &config.n_grid, config.replications, config.seed)?;
    let d = out.file("delta56.csv");
    delta.write_csv(&d)?;
    out.sidecar(&d, json!({ "replications": config.replications }))?;
    let j = out.file("equivalence.json");
    write_json(&j, &json!({ "meta": out.meta(json!({})), "ks": ks, "delta56": delta }))?;
    Ok(format!(
        "equivalence: KS rejection rate {:.4} at adjusted level {:.2e}; E|Δ|² = [{}]",
        ks.rejection_rate,
        ks.adjusted_level,
        delta
            .rows
            .iter()
            .map(|r| format!("{:.3e}", r.mean_sq))
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

type Table = BTreeMap<usize, BTreeMap<String, String>>;

fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut table = Table::new();
    for rec in r.records() {
        let rec = rec?;
        let n: usize = rec
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid(format!("{}: first column must be n", path.display())))?;
        let row = headers
            .iter()
            .zip(rec.iter())
            .skip(1)
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        table.insert(n, row);
    }
    Ok(Some(table))
}

fn series(table: &Table, name: &str, column: &str) -> Result<Series> {
    let points = table
        .iter()
        .map(|(n, row)| {
            let v: f64 = row
                .get(column)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid(format!("missing column {column}")))?;
            Ok((*n as f64, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Series {
        name: name.to_string(),
        points,
    })
}

pub(super) fn report(_config: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let risk = read_table(&out.dir().join("risk.csv"))?;
    let delta = read_table(&out.dir().join("delta56.csv"))?;
    if risk.is_none() && delta.is_none() {
        return Err(Error::Config(format!(
            "no risk.csv or delta56.csv in {}; run `risk` or `equivalence` first",
            out.dir().display()
        )));
    }
    let mut written = Vec::new();
    if let Some(t) = &risk {
        let p = out.file("mise_vs_n.svg");
        let spec = PlotSpec {
            title: "MISE against n",
            x_label: "n",
            y_label: "MISE",
            log_x: true,
            log_y: true,
        };
        write_svg(&p, &spec, &[series(t, "MISE", "mise")?, series(t, "a_n", "a_n")?])?;
        let q = out.file("ratio_vs_n.svg");
        let spec = PlotSpec {
            title: "MISE / a_n against n",
            x_label: "n",
            y_label: "ratio",
            log_x: true,
            log_y: false,
        };
        write_svg(&q, &spec, &[series(t, "MISE / a_n", "ratio")?])?;
        written.extend(["mise_vs_n.svg", "ratio_vs_n.svg"]);
    }
    if let Some(t) = &delta {
        let p = out.file("delta56_vs_n.svg");
        let spec = PlotSpec {
            title: "Delta study against n",
            x_label: "n",
            y_label: "value",
            log_x: true,
            log_y: true,
        };
        write_svg(&p, &spec, &[series(t, "E|Delta|^2", "mean_sq_delta")?, series(t, "TV bound", "tv_bound")?])?;
        written.push("delta56_vs_n.svg");
    }
    let columns = [
        ("mise", &risk),
        ("stderr", &risk),
        ("a_n", &risk),
        ("ratio", &risk),
        ("mean_sq_delta", &delta),
        ("tv_bound", &delta),
    ];
    let ns: std::collections::BTreeSet<usize> = risk.iter().chain(delta.iter()).flat_map(|t| t.keys().copied()).collect();
    let p = out.file("summary.csv");
    let mut w = csv::Writer::from_path(&p)?;
    let mut header = vec!["n"];
    header.extend(columns.iter().map(|(c, _)| *c));
    w.write_record(&header)?;
    for n in ns {
        let mut row = vec![n.to_string()];
        for (c, t) in &columns {
            row.push(
                t.as_ref()
                    .and_then(|t| t.get(&n))
                    .and_then(|r| r.get(*c))
                    .cloned()
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    out.sidecar(&p, json!({ "sources": { "risk": risk.is_some(), "delta56": delta.is_some() } }))?;
    written.push("summary.csv");
    Ok(format!("report: wrote {}", written.join(", ")))
}
