//! Monte Carlo risk studies.
//!
//! Every study derives one random stream per replication from the master
//! seed, runs replications in parallel and assembles results in replication
//! order, so reports are bit-identical for a given seed.

use std::path::Path;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{empirical_covariance, CovOperator};
use crate::design::{sample_design, true_covariance, DesignKind, DesignSample, DesignSpec};
use crate::equivalence::{
    design_projections, flr_to_whitenoise, simulate_empirical_wn, GramTransform,
};
use crate::error::{Error, Result};
use crate::estimators::{
    cutoff_estimator, data_driven_gamma, flr_pinsker_with_cov,
    pinsker_gamma_oracle, select_cutoff, sequence_pinsker, sharp_risk_constant, sample_theta,
    CutoffData, PinskerEstimate, PinskerPlan, Rho, Spectrum, SupportCap, ThetaClass, ThetaMode,
    GAMMA_TOLERANCE,
};
use crate::function_space::{fmt_f64, weighted_dot, GridFunction};
use crate::rng;
use crate::stats::{self, KsReport, SlopeFit};
use crate::whitenoise::{default_retained_k, SeqObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Zero,
    Truth,
    Cutoff,
    PinskerOracle,
    PinskerDataDriven,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Zero => "zero",
            EstimatorKind::Truth => "truth",
            EstimatorKind::Cutoff => "cutoff",
            EstimatorKind::PinskerOracle => "pinsker-oracle",
            EstimatorKind::PinskerDataDriven => "pinsker-data-driven",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `y_k = √λ_k θ_k + (σ/√n) ξ_k` with `λ_k = k^{-α}`.
    Sequence,
    /// Regression on random designs.
    Flr,
}

/// Which members of the ellipsoid the risk is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaChoice {
    Boundary,
    Random,
    LeastFavorable,
    /// Maximum over the boundary, least-favorable and random members.
    WorstCase,
    /// All energy on frequency `K+1`, where `K` is the cutoff for `⌊n/2⌋`
    /// pairs; the member maximizing the bias of the cutoff estimator.
    CutoffSpike,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySpec {
    pub model: ModelKind,
    pub design: DesignSpec,
    pub class: ThetaClass,
    pub sigma: f64,
    pub theta: ThetaChoice,
    /// Truncation exponent; `None` takes the midpoint of the admissible interval.
    pub rho: Option<f64>,
    pub support_cap: SupportCap,
    /// Retained frequencies; `None` uses the default for each `n`.
    pub retained: Option<usize>,
    /// Random members included in the worst case.
    pub random_thetas: usize,
}

impl StudySpec {
    pub fn new(model: ModelKind, design: DesignSpec, class: ThetaClass, sigma: f64) -> Self {
        Self {
            model,
            design,
            class,
            sigma,
            theta: ThetaChoice::WorstCase,
            rho: None,
            support_cap: SupportCap::FlagOnly,
            retained: None,
            random_thetas: 8,
        }
    }

    pub fn with_theta(mut self, theta: ThetaChoice) -> Self {
        self.theta = theta;
        self
    }

    pub fn alpha(&self) -> f64 {
        match self.design.kind {
            DesignKind::BasisExpansion => self.design.alpha,
            DesignKind::IntegratedGaussian => 2.0,
        }
    }

    pub fn rho(&self) -> Result<Rho> {
        match self.rho {
            Some(r) => Rho::new(r, self.alpha()),
            None => Ok(Rho::midpoint(self.alpha())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        self.rho()?;
        Ok(())
    }
}

/// Everything fixed at one sample size: the true operator, the test
/// functions and the sharp constant.
pub struct StudySetting {
    n: usize,
    alpha: f64,
    lambda: Vec<f64>,
    spectrum: Spectrum,
    truth: Option<CovOperator>,
    design: DesignSpec,
    thetas: Vec<(String, Vec<f64>)>,
    theta_fns: Vec<Option<GridFunction>>,
    a_n: f64,
}

impl StudySetting {
    pub fn new(spec: &StudySpec, n: usize, seed: u64) -> Result<Self> {
        let alpha = spec.alpha();
        let mut k = spec
            .retained
            .unwrap_or_else(|| default_retained_k(n, alpha, spec.class.beta));
        let mut design = spec.design.clone();
        let (lambda, spectrum, truth) = match spec.model {
            ModelKind::Sequence => {
                let s = Spectrum::PowerLaw { alpha };
                (s.first(k)?, s, None)
            }
            ModelKind::Flr => {
                if design.kind == DesignKind::BasisExpansion {
                    let j = design.truncation_for(n).max(k);
                    design.truncation = Some(j);
                }
                let truth = true_covariance(&design, k)?;
                k = truth.rank();
                let lambda = truth.eigenvalues().to_vec();
                let spectrum = match design.kind {
                    DesignKind::BasisExpansion => Spectrum::PowerLaw { alpha },
                    DesignKind::IntegratedGaussian => Spectrum::Finite(lambda.clone()),
                };
                (lambda, spectrum, Some(truth))
            }
        };
        let modes: Vec<(String, ThetaMode, u64)> = match spec.theta {
            ThetaChoice::CutoffSpike => Vec::new(),
            ThetaChoice::Boundary => vec![("boundary".into(), ThetaMode::Boundary, 0)],
            ThetaChoice::LeastFavorable => {
                vec![("least-favorable".into(), ThetaMode::LeastFavorable, 0)]
            }
            ThetaChoice::Random => vec![("random-1".into(), ThetaMode::Random, 0)],
            ThetaChoice::WorstCase => {
                let mut v = vec![
                    ("boundary".into(), ThetaMode::Boundary, 0),
                    ("least-favorable".into(), ThetaMode::LeastFavorable, 0),
                ];
                v.extend((0..spec.random_thetas as u64).map(|i| {
                    (format!("random-{}", i + 1), ThetaMode::Random, i)
                }));
                v
            }
        };
        let mut thetas = modes
            .into_iter()
            .map(|(label, mode, i)| {
                let s = rng::derive_seed(seed, "theta", i);
                sample_theta(&spec.class, mode, &spectrum, spec.sigma, n, k, s).map(|t| (label, t))
            })
            .collect::<Result<Vec<_>>>()?;
        if spec.theta == ThetaChoice::CutoffSpike {
            let kc = select_cutoff(n / 2, alpha, spec.class.beta);
            if kc >= k {
                return Err(Error::invalid(format!(
                    "spike at frequency {} exceeds the {k} retained frequencies",
                    kc + 1
                )));
            }
            let mut t = vec![0.0; k];
            t[kc] = spec.class.radius.sqrt() / spec.class.beta_k(kc + 1);
            thetas.push(("cutoff-spike".into(), t));
        }
        let theta_fns = thetas
            .iter()
            .map(|(_, t)| match &truth {
                Some(op) if op.fourier_coords().is_none() => op.eigenfunctions().reconstruct(t).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let a_n = sharp_risk_constant(&spectrum, &spec.class, spec.sigma, n)?;
        Ok(Self {
            n,
            alpha,
            lambda,
            spectrum,
            truth,
            design,
            thetas,
            theta_fns,
            a_n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Retained frequencies.
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Design spec with the expansion length fixed for this `n`.
    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn a_n(&self) -> f64 {
        self.a_n
    }

    /// Labelled test functions as coefficients in the eigenbasis of `Γ`.
    pub fn thetas(&self) -> &[(String, Vec<f64>)] {
        &self.thetas
    }

    /// True operator; `None` in the sequence model.
    pub fn truth_operator(&self) -> Option<&CovOperator> {
        self.truth.as_ref()
    }

    /// Test function `i` on the grid.
    pub fn theta_function(&self, i: usize) -> Result<GridFunction> {
        let op = self
            .truth
            .as_ref()
            .ok_or_else(|| Error::invalid("the sequence model has no grid functions"))?;
        match &self.theta_fns[i] {
            Some(f) => Ok(f.clone()),
            None => op.eigenfunctions().reconstruct(&self.thetas[i].1),
        }
    }

    fn truth(&self) -> &CovOperator {
        self.truth.as_ref().expect("regression model has a true operator")
    }
}

fn normals(rng: &mut rng::Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

fn sq_dist_padded(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum()
}

/// `‖θ̂ − θ‖²` for a plug-in estimate.
fn plugin_loss(est: &PinskerEstimate, theta: &[f64], theta_fn: Option<&GridFunction>, truth: &CovOperator) -> f64 {
    match (&est.fourier, truth.fourier_coords(), theta_fn) {
        (Some(f), Some(c), _) => {
            let tf = c * DVector::from_column_slice(theta);
            sq_dist_padded(f, tf.as_slice())
        }
        (_, _, Some(g)) => {
            let d: Vec<f64> = est
                .function
                .values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| a - b)
                .collect();
            weighted_dot(&d, &d)
        }
        _ => unreachable!("either Fourier coordinates or grid truth exist"),
    }
}

struct RepOutcome {
    losses: Vec<f64>,
    gamma_hat: Option<f64>,
}

fn plan_weights(gamma: f64, setting: &StudySetting, spec: &StudySpec, n: usize, rho: Rho) -> (Vec<f64>, bool) {
    let plan = PinskerPlan::new(
        gamma,
        &setting.spectrum,
        &spec.class,
        spec.sigma,
        n,
        rho,
        setting.k(),
        spec.support_cap,
    );
    (plan.weights, plan.cap_binds)
}

fn replicate(
    spec: &StudySpec,
    setting: &StudySetting,
    estimator: EstimatorKind,
    oracle_gamma: f64,
    rng: &mut rng::Rng,
) -> Result<RepOutcome> {
    let n = setting.n;
    let k = setting.k();
    let m = n / 2;
    let rho = spec.rho()?;
    let thetas = &setting.thetas;
    let zero_or_truth = |est: EstimatorKind| -> Vec<f64> {
        thetas
            .iter()
            .map(|(_, t)| if est == EstimatorKind::Zero { t.iter().map(|v| v * v).sum() } else { 0.0 })
            .collect()
    };
    if matches!(estimator, EstimatorKind::Zero | EstimatorKind::Truth) {
        return Ok(RepOutcome {
            losses: zero_or_truth(estimator),
            gamma_hat: None,
        });
    }
    match spec.model {
        ModelKind::Sequence => {
            let xi = normals(rng, k);
            let noise_n = if estimator == EstimatorKind::Cutoff { m.max(1) } else { n };
            let level = spec.sigma / (noise_n as f64).sqrt();
            let losses = thetas
                .iter()
                .map(|(_, theta)| {
                    let obs = SeqObservation {
                        y: theta
                            .iter()
                            .zip(&setting.lambda)
                            .zip(&xi)
                            .map(|((t, l), x)| l.sqrt() * t + level * x)
                            .collect(),
                        lambda: setting.lambda.clone(),
                        noise_level: level,
                        n: noise_n,
                        sigma: spec.sigma,
                    };
                    let est = match estimator {
                        EstimatorKind::Cutoff => {
                            let kc = select_cutoff(noise_n, setting.alpha, spec.class.beta).min(k);
                            cutoff_estimator(CutoffData::Sequence(&obs), &dummy_truth(), kc)?
                        }
                        EstimatorKind::PinskerOracle => {
                            let (w, _) = plan_weights(oracle_gamma, setting, spec, n, rho);
                            sequence_pinsker(&obs, &w)
                        }
                        _ => {
                            return Err(Error::invalid(
                                "the data-driven estimator needs the regression model",
                            ))
                        }
                    };
                    Ok(sq_dist_padded(&est, theta))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RepOutcome {
                losses,
                gamma_hat: None,
            })
        }
        ModelKind::Flr => {
            let truth = setting.truth();
            let design_seed = rng::derive_seed(rand::Rng::random(rng), "design", 0);
            let sample = sample_design(&setting.design, n, design_seed)?;
            let eps = normals(rng, n);
            let p = design_projections(&sample, truth, k)?;
            let responses: Vec<Vec<f64>> = thetas
                .iter()
                .map(|(_, t)| {
                    let x = &p * DVector::from_column_slice(t);
                    x.iter().zip(&eps).map(|(x, e)| x + spec.sigma * e).collect()
                })
                .collect();
            let mut gamma_hat = None;
            let losses = match estimator {
                EstimatorKind::Cutoff => {
                    let sub = sample.rows(0..m)?;
                    let kc = select_cutoff(m, setting.alpha, spec.class.beta).min(k);
                    thetas
                        .iter()
                        .zip(&responses)
                        .map(|((_, t), y)| {
                            let est = cutoff_estimator(CutoffData::Flr { sample: &sub, y: &y[..m] }, truth, kc)?;
                            Ok(sq_dist_padded(&est, t))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                EstimatorKind::PinskerOracle => {
                    let cov = empirical_covariance(&sample)?;
                    let (w, _) = plan_weights(oracle_gamma, setting, spec, n, rho);
                    thetas
                        .iter()
                        .zip(&responses)
                        .zip(&setting.theta_fns)
                        .map(|(((_, t), y), g)| {
                            let est = flr_pinsker_with_cov(&sample, &cov, y, &w, rho)?;
                            Ok(plugin_loss(&est, t, g.as_ref(), truth))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                EstimatorKind::PinskerDataDriven => {
                    let g = data_driven_gamma(&sample, &spec.class, spec.sigma, rho, GAMMA_TOLERANCE)?;
                    gamma_hat = Some(g.gamma_hat);
                    let est_sample = sample.rows(0..g.m)?;
                    let cov = empirical_covariance(&est_sample)?;
                    let (w, _) = plan_weights(g.gamma_hat, setting, spec, g.m, rho);
                    thetas
                        .iter()
                        .zip(&responses)
                        .zip(&setting.theta_fns)
                        .map(|(((_, t), y), gf)| {
                            let est = flr_pinsker_with_cov(&est_sample, &cov, &y[..g.m], &w, rho)?;
                            Ok(plugin_loss(&est, t, gf.as_ref(), truth))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                EstimatorKind::Zero | EstimatorKind::Truth => unreachable!("handled above"),
            };
            Ok(RepOutcome { losses, gamma_hat })
        }
    }
}

/// The sequence-space cutoff needs no operator; any placeholder will do.
fn dummy_truth() -> CovOperator {
    CovOperator::from_fourier_spectrum(vec![1.0], 2).expect("valid one-term spectrum")
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaRisk {
    pub theta: String,
    pub mise: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskRow {
    pub n: usize,
    pub mise: f64,
    pub stderr: f64,
    pub a_n: f64,
    pub ratio: f64,
    pub worst_theta: String,
    pub oracle_gamma: f64,
    pub gamma_hat_median: Option<f64>,
    pub per_theta: Vec<ThetaRisk>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub estimator: EstimatorKind,
    pub model: ModelKind,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<RiskRow>,
    pub slope: Option<SlopeFit>,
}

impl RiskReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "mise", "stderr", "a_n", "ratio", "worst_theta"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_f64(r.mise),
                fmt_f64(r.stderr),
                fmt_f64(r.a_n),
                fmt_f64(r.ratio),
                r.worst_theta.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Monte Carlo MISE of `estimator` at every `n`, maximized over the
/// configured members of the ellipsoid.
pub fn mise_monte_carlo(
    spec: &StudySpec,
    estimator: EstimatorKind,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<RiskReport> {
    if reps < 2 {
        return Err(Error::invalid(format!("need at least 2 replications, got {reps}")));
    }
    if n_grid.is_empty() {
        return Err(Error::invalid("empty n grid"));
    }
    spec.validate()?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        if estimator == EstimatorKind::Cutoff && n < 2 {
            return Err(Error::invalid("the cutoff estimator needs n >= 2"));
        }
        let setting = StudySetting::new(spec, n, seed)?;
        let oracle_gamma = pinsker_gamma_oracle(&setting.spectrum, &spec.class, spec.sigma, n, GAMMA_TOLERANCE)?;
        let component = format!("risk-n{n}");
        let outcomes = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::stream(seed, &component, r as u64);
                replicate(spec, &setting, estimator, oracle_gamma, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let per_theta: Vec<ThetaRisk> = setting
            .thetas
            .iter()
            .enumerate()
            .map(|(i, (label, _))| {
                let losses: Vec<f64> = outcomes.iter().map(|o| o.losses[i]).collect();
                let (mise, stderr) = stats::mean_stderr(&losses);
                ThetaRisk {
                    theta: label.clone(),
                    mise,
                    stderr,
                }
            })
            .collect();
        let worst = per_theta
            .iter()
            .fold(&per_theta[0], |best, t| if t.mise > best.mise { t } else { best });
        let gammas: Vec<f64> = outcomes.iter().filter_map(|o| o.gamma_hat).collect();
        rows.push(RiskRow {
            n,
            mise: worst.mise,
            stderr: worst.stderr,
            a_n: setting.a_n,
            ratio: worst.mise / setting.a_n,
            worst_theta: worst.theta.clone(),
            oracle_gamma,
            gamma_hat_median: (!gammas.is_empty()).then(|| stats::median(&gammas)),
            per_theta: per_theta.clone(),
        });
    }
    let slope = if rows.len() >= 3 && rows.iter().all(|r| r.mise > 0.0) {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ms: Vec<f64> = rows.iter().map(|r| r.mise).collect();
        Some(stats::rate_regression(&ns, &ms)?)
    } else {
        None
    };
    Ok(RiskReport {
        estimator,
        model: spec.model,
        reps,
        seed,
        rows,
        slope,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub n: usize,
    pub gamma_n: f64,
    pub median_relative_error: f64,
    pub median_gamma_hat: f64,
    pub median_gamma_tilde: f64,
    /// Fraction of replications where `γ̃` fell outside the bounds.
    pub clamped_fraction: f64,
}

/// Accuracy of the data-driven `γ̂` against the oracle `γ_n`.
pub fn gamma_consistency_study(spec: &StudySpec, n_grid: &[usize], reps: usize, seed: u64) -> Result<Vec<GammaRow>> {
    spec.validate()?;
    let rho = spec.rho()?;
    n_grid
        .iter()
        .map(|&n| {
            let setting = StudySetting::new(spec, n, seed)?;
            let gamma_n = pinsker_gamma_oracle(&setting.spectrum, &spec.class, spec.sigma, n, GAMMA_TOLERANCE)?;
            let component = format!("gamma-n{n}");
            let draws = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let s = rng::derive_seed(seed, &component, r as u64);
                    let sample = sample_design(&setting.design, n, s)?;
                    data_driven_gamma(&sample, &spec.class, spec.sigma, rho, GAMMA_TOLERANCE)
                })
                .collect::<Result<Vec<_>>>()?;
            let rel: Vec<f64> = draws.iter().map(|g| (g.gamma_hat - gamma_n).abs() / gamma_n).collect();
            let hats: Vec<f64> = draws.iter().map(|g| g.gamma_hat).collect();
            let clamped = draws.iter().filter(|g| g.gamma_hat != g.gamma_tilde).count();
            Ok(GammaRow {
                n,
                gamma_n,
                median_relative_error: stats::median(&rel),
                median_gamma_hat: stats::median(&hats),
                median_gamma_tilde: stats::median(&draws.iter().map(|g| g.gamma_tilde).collect::<Vec<_>>()),
                clamped_fraction: clamped as f64 / reps as f64,
            })
        })
        .collect()
}

/// Conditional bias-variance split of the plug-in estimator given the designs:
/// `Σ_j (w_j λ̂_j/λ̂_{j,ρ} − 1)² ⟨φ̂_j, θ⟩² + ‖θ − Σ_j ⟨φ̂_j,θ⟩φ̂_j‖²
///  + (σ²/n) Σ_j w_j² λ̂_j / λ̂_{j,ρ}²`.
pub fn conditional_decomposition(
    cov: &CovOperator,
    theta_coeffs: &[f64],
    theta_norm_sq: f64,
    weights: &[f64],
    rho: Rho,
    sigma: f64,
    n: usize,
) -> (f64, f64) {
    let floor = rho.floor(n);
    let mut bias = 0.0;
    let mut explained = 0.0;
    let mut variance = 0.0;
    for (j, (l, f)) in cov.eigenvalues().iter().zip(theta_coeffs).enumerate() {
        let w = weights.get(j).copied().unwrap_or(0.0);
        let lr = l.max(floor);
        bias += (w * l / lr - 1.0).powi(2) * f * f;
        explained += f * f;
        variance += w * w * l / (lr * lr);
    }
    let null = (theta_norm_sq - explained).max(0.0);
    (bias + null, sigma * sigma / n as f64 * variance)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub n: usize,
    pub reps: usize,
    pub mise: f64,
    pub mise_stderr: f64,
    pub bias: f64,
    pub variance: f64,
    pub decomposition: f64,
    pub decomposition_stderr: f64,
}

/// Simulated MISE of the oracle-weight plug-in estimator next to the
/// average of its conditional bias-variance decomposition.
pub fn decomposition_study(spec: &StudySpec, n: usize, reps: usize, seed: u64) -> Result<DecompositionReport> {
    if reps < 2 {
        return Err(Error::invalid("need at least 2 replications"));
    }
    if spec.model != ModelKind::Flr {
        return Err(Error::invalid("the decomposition study needs the regression model"));
    }
    spec.validate()?;
    let rho = spec.rho()?;
    let single = StudySpec {
        theta: match spec.theta {
            ThetaChoice::WorstCase => ThetaChoice::LeastFavorable,
            t => t,
        },
        ..spec.clone()
    };
    let setting = StudySetting::new(&single, n, seed)?;
    let truth = setting.truth();
    let theta = &setting.thetas[0].1;
    let theta_fn = setting.theta_fns[0].as_ref();
    let theta_norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let gamma = pinsker_gamma_oracle(&setting.spectrum, &spec.class, spec.sigma, n, GAMMA_TOLERANCE)?;
    let (w, _) = plan_weights(gamma, &setting, spec, n, rho);
    let rows = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, "decomposition", r as u64);
            let sample = sample_design(&setting.design, n, rand::Rng::random(&mut rng))?;
            let eps = normals(&mut rng, n);
            let p = design_projections(&sample, truth, setting.k())?;
            let x = &p * DVector::from_column_slice(theta);
            let y: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| x + spec.sigma * e).collect();
            let cov = empirical_covariance(&sample)?;
            let est = flr_pinsker_with_cov(&sample, &cov, &y, &w, rho)?;
            let loss = plugin_loss(&est, theta, theta_fn, truth);
            let f = match (cov.fourier_coords(), truth.fourier_coords()) {
                (Some(c), Some(t)) => {
                    let tf = t * DVector::from_column_slice(theta);
                    let common = c.nrows().min(tf.len());
                    let v = c.rows(0, common).tr_mul(&tf.rows(0, common));
                    v.iter().copied().collect::<Vec<f64>>()
                }
                _ => cov.coefficients(theta_fn.expect("grid truth"))?,
            };
            let (b, v) = conditional_decomposition(&cov, &f, theta_norm_sq, &w, rho, spec.sigma, n);
            Ok((loss, b, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let losses: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let decomp: Vec<f64> = rows.iter().map(|r| r.1 + r.2).collect();
    let (mise, mise_stderr) = stats::mean_stderr(&losses);
    let (decomposition, decomposition_stderr) = stats::mean_stderr(&decomp);
    Ok(DecompositionReport {
        n,
        reps,
        mise,
        mise_stderr,
        bias: rows.iter().map(|r| r.1).sum::<f64>() / reps as f64,
        variance: rows.iter().map(|r| r.2).sum::<f64>() / reps as f64,
        decomposition,
        decomposition_stderr,
    })
}

/// `(n−m) ‖(Γ^{1/2} − Γ̂₂^{1/2}) v‖²` for `v` given by its coefficients in the
/// eigenbasis of `truth`.
pub fn delta56_norm_sq(v: &[f64], truth: &CovOperator, cov2: &CovOperator, scale: usize) -> Result<f64> {
    if v.len() > truth.rank() {
        return Err(Error::dim("coefficient count", truth.rank(), v.len()));
    }
    let s = scale as f64;
    if let (Some(ct), Some(c2)) = (truth.fourier_coords(), cov2.fourier_coords()) {
        let k = v.len();
        let ct = ct.columns(0, k);
        let vf = ct * DVector::from_column_slice(v);
        let root: Vec<f64> = v
            .iter()
            .zip(truth.eigenvalues())
            .map(|(c, l)| c * l.sqrt())
            .collect();
        let a = ct * DVector::from_column_slice(&root);
        let common = c2.nrows().min(vf.len());
        let proj = c2.rows(0, common).tr_mul(&vf.rows(0, common));
        let scaled = DVector::from_iterator(
            proj.len(),
            proj.iter().zip(cov2.eigenvalues()).map(|(p, l)| p * l.sqrt()),
        );
        let b = c2.rows(0, common) * scaled;
        return Ok(s * sq_dist_padded(a.as_slice(), b.as_slice()));
    }
    let vf = truth.eigenfunctions().reconstruct(v)?;
    let a = truth.sqrt_apply(&vf)?;
    let b = cov2.sqrt_apply(&vf)?;
    let d = a.sub(&b)?;
    Ok(s * weighted_dot(d.values(), d.values()))
}

/// `2 (1 − exp(−E‖Δ‖²/(2σ²)))^{1/2}`.
pub fn tv_bound(mean_sq_delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(mean_sq_delta >= 0.0) {
        return Err(Error::invalid("mean squared norm must be nonnegative"));
    }
    Ok(2.0 * (1.0 - (-mean_sq_delta / (2.0 * sigma * sigma)).exp()).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta56Row {
    pub n: usize,
    pub m: usize,
    pub cutoff: usize,
    pub mean_sq: f64,
    pub stderr: f64,
    pub tv_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta56Report {
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<Delta56Row>,
}

impl Delta56Report {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "m", "cutoff", "mean_sq_delta", "stderr", "tv_bound"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.m.to_string(),
                r.cutoff.to_string(),
                fmt_f64(r.mean_sq),
                fmt_f64(r.stderr),
                fmt_f64(r.tv_bound),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `E‖Δ‖²` with `Δ = √(n−m) (Γ^{1/2} − Γ̂₂^{1/2})(θ − θ̂₁)`, `m = ⌊n/2⌋`,
/// where `θ̂₁` is the cutoff estimate from the first `m` pairs and `Γ̂₂` the
/// empirical covariance of the remaining designs.
pub fn delta56_study(spec: &StudySpec, n_grid: &[usize], reps: usize, seed: u64) -> Result<Delta56Report> {
    if reps < 2 {
        return Err(Error::invalid("need at least 2 replications"));
    }
    if spec.model != ModelKind::Flr {
        return Err(Error::invalid("the Δ study needs the regression model"));
    }
    spec.validate()?;
    let single = StudySpec {
        theta: match spec.theta {
            ThetaChoice::WorstCase => ThetaChoice::Boundary,
            t => t,
        },
        ..spec.clone()
    };
    let mut rows = Vec::new();
    for &n in n_grid {
        if n < 4 {
            return Err(Error::invalid("the Δ study needs n >= 4"));
        }
        let setting = StudySetting::new(&single, n, seed)?;
        let truth = setting.truth();
        let theta = &setting.thetas[0].1;
        let m = n / 2;
        let kc = select_cutoff(m, setting.alpha, spec.class.beta).min(setting.k());
        let component = format!("delta-n{n}");
        let values = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::stream(seed, &component, r as u64);
                let sample = sample_design(&setting.design, n, rand::Rng::random(&mut rng))?;
                let eps = normals(&mut rng, n);
                let p = design_projections(&sample, truth, setting.k())?;
                let x = &p * DVector::from_column_slice(theta);
                let y: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| x + spec.sigma * e).collect();
                let first = sample.rows(0..m)?;
                let est = cutoff_estimator(CutoffData::Flr { sample: &first, y: &y[..m] }, truth, kc)?;
                let v: Vec<f64> = theta
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t - est.get(i).copied().unwrap_or(0.0))
                    .collect();
                let cov2 = empirical_covariance(&sample.rows(m..n)?)?;
                delta56_norm_sq(&v, truth, &cov2, n - m)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean_sq, stderr) = stats::mean_stderr(&values);
        rows.push(Delta56Row {
            n,
            m,
            cutoff: kc,
            mean_sq,
            stderr,
            tv_bound: tv_bound(mean_sq, spec.sigma)?,
        });
    }
    Ok(Delta56Report { reps, seed, rows })
}

/// Accuracy-based lower proxy for the total variation between
/// `N(0, σ²I)` and `N(δ, σ²I)`: `2·acc − 1` of the optimal linear classifier
/// on `draws` samples from each law, with its standard error.
pub fn classifier_tv_proxy(delta: &[f64], sigma: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    if draws == 0 || !(sigma > 0.0) {
        return Err(Error::invalid("need draws > 0 and sigma > 0"));
    }
    let norm_sq: f64 = delta.iter().map(|d| d * d).sum();
    let mut rng = rng::from_seed(seed);
    let mut correct = 0usize;
    for label in [false, true] {
        for _ in 0..draws {
            let score: f64 = delta
                .iter()
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = if label { d + sigma * z } else { sigma * z };
                    x * d
                })
                .sum();
            if (score > 0.5 * norm_sq) == label {
                correct += 1;
            }
        }
    }
    let total = (2 * draws) as f64;
    let acc = correct as f64 / total;
    Ok((2.0 * acc - 1.0, 2.0 * (acc * (1.0 - acc) / total).sqrt()))
}

/// One row of coordinates per draw.
pub type Draws = Vec<Vec<f64>>;

/// Draws of the empirical white-noise coordinates by two routes on fixed
/// designs: rotating simulated regression responses, and sampling the
/// coordinates directly.
pub fn two_route_draws(
    sample: &DesignSample,
    theta: &GridFunction,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<(Draws, Draws)> {
    let cov = empirical_covariance(sample)?;
    let t = GramTransform::build(sample, &cov)?;
    let x = sample.inner_products(theta)?;
    let route_a = (0..draws)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, "route-flr", r as u64);
            let eps = normals(&mut rng, sample.n());
            let y: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| x + sigma * e).collect();
            flr_to_whitenoise(&y, &t, sigma).map(|z| z.z)
        })
        .collect::<Result<Vec<_>>>()?;
    let route_b = (0..draws)
        .into_par_iter()
        .map(|r| {
            let s = rng::derive_seed(seed, "route-direct", r as u64);
            simulate_empirical_wn(theta, sample, &cov, sigma, s).map(|z| z.z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((route_a, route_b))
}

/// KS battery comparing the two routes of [`two_route_draws`].
pub fn equivalence_battery(
    sample: &DesignSample,
    theta: &GridFunction,
    sigma: f64,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<KsReport> {
    let (a, b) = two_route_draws(sample, theta, sigma, draws, seed)?;
    stats::two_sample_equivalence_test(&a, &b, level)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(std::fs::File::create(path)?, value)?;
    Ok(())
}

/// Oracle `γ_n`, or an error when the spectrum is unusable.
pub fn oracle_gamma(spec: &StudySpec, n: usize) -> Result<f64> {
    let spectrum = match spec.model {
        ModelKind::Sequence => Spectrum::PowerLaw { alpha: spec.alpha() },
        ModelKind::Flr => StudySetting::new(spec, n, 0)?.spectrum,
    };
    pinsker_gamma_oracle(&spectrum, &spec.class, spec.sigma, n, GAMMA_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_spec() -> StudySpec {
        StudySpec::new(
            ModelKind::Sequence,
            DesignSpec::basis_expansion(2.0),
            ThetaClass::new(2.0, 1.0).unwrap(),
            1.0,
        )
    }

    #[test]
    fn zero_and_truth_estimators() {
        let spec = seq_spec().with_theta(ThetaChoice::Boundary);
        let z = mise_monte_carlo(&spec, EstimatorKind::Zero, &[100], 4, 1).unwrap();
        let theta = sample_theta(
            &spec.class,
            ThetaMode::Boundary,
            &Spectrum::PowerLaw { alpha: 2.0 },
            1.0,
            100,
            64,
            0,
        )
        .unwrap();
        let norm: f64 = theta.iter().map(|t| t * t).sum();
        assert!((z.rows[0].mise - norm).abs() <= 1e-15 * norm);
        assert!(z.rows[0].stderr < 1e-15);
        let t = mise_monte_carlo(&spec, EstimatorKind::Truth, &[100], 4, 1).unwrap();
        assert_eq!(t.rows[0].mise, 0.0);
        assert!(mise_monte_carlo(&spec, EstimatorKind::Truth, &[100], 1, 1).is_err());
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let spec = seq_spec();
        let a = mise_monte_carlo(&spec, EstimatorKind::PinskerOracle, &[200, 400], 8, 5).unwrap();
        let b = mise_monte_carlo(&spec, EstimatorKind::PinskerOracle, &[200, 400], 8, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn tv_bound_examples() {
        assert_eq!(tv_bound(0.0, 1.0).unwrap(), 0.0);
        assert!((tv_bound(2.0 * 2f64.ln(), 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(tv_bound(1e6, 1.0).unwrap() > 2.0 - 1e-12);
        assert!(tv_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn forced_delta_is_zero() {
        let spec = DesignSpec::basis_expansion(2.0).with_truncation(32);
        let truth = true_covariance(&spec, 16).unwrap();
        let v: Vec<f64> = (1..=16).map(|k| 1.0 / k as f64).collect();
        assert!(delta56_norm_sq(&v, &truth, &truth, 100).unwrap().abs() < 1e-24);
        let s = sample_design(&spec, 20, 3).unwrap();
        let cov2 = empirical_covariance(&s).unwrap();
        assert_eq!(delta56_norm_sq(&[0.0; 16], &truth, &cov2, 10).unwrap(), 0.0);
    }
}
