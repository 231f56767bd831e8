//! Spectral-cutoff and Pinsker-type estimators of the slope function.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::covariance::{empirical_covariance, CovOperator};
use crate::design::DesignSample;
use crate::equivalence::{design_projections, WnCoefficients};
use crate::error::{Error, Result};
use crate::function_space::{weighted_dot, GridFunction};
use crate::rng;
use crate::whitenoise::SeqObservation;

/// Default bisection tolerance for `γ`.
pub const GAMMA_TOLERANCE: f64 = 1e-12;

/// The ellipsoid `Σ_k (1 + k^{2β}) θ_k² ≤ C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaClass {
    pub beta: f64,
    pub radius: f64,
}

impl ThetaClass {
    pub fn new(beta: f64, radius: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { beta, radius })
    }

    /// `β_k = (1 + k^{2β})^{1/2}` for 1-based `k`.
    pub fn beta_k(&self, k: usize) -> f64 {
        (1.0 + (k as f64).powf(2.0 * self.beta)).sqrt()
    }

    /// `Σ_k (1 + k^{2β}) θ_k²`.
    pub fn ellipsoid_sum(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| self.beta_k(i + 1).powi(2) * t * t)
            .sum()
    }

    /// Smoothness needed for rate results: `β > (α + 1)/2`.
    pub fn check_rate_regime(&self, alpha: f64) -> Result<()> {
        if self.beta > (alpha + 1.0) / 2.0 {
            Ok(())
        } else {
            Err(Error::Spec(format!(
                "beta = {} must exceed (alpha + 1)/2 = {}",
                self.beta,
                (alpha + 1.0) / 2.0
            )))
        }
    }

    /// Smoothness needed by the plug-in Pinsker estimator: `β > α + 3/2`.
    pub fn check_plug_in_regime(&self, alpha: f64) -> Result<()> {
        if self.beta > alpha + 1.5 {
            Ok(())
        } else {
            Err(Error::Spec(format!(
                "beta = {} must exceed alpha + 3/2 = {}",
                self.beta,
                alpha + 1.5
            )))
        }
    }
}

/// Eigenvalue truncation exponent, restricted to `(α/(2α+3), 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rho {
    value: f64,
    alpha: f64,
}

impl Rho {
    pub fn bounds(alpha: f64) -> (f64, f64) {
        (alpha / (2.0 * alpha + 3.0), 0.5)
    }

    pub fn new(value: f64, alpha: f64) -> Result<Self> {
        let (lo, hi) = Self::bounds(alpha);
        if !(value > lo && value < hi) {
            return Err(Error::invalid(format!(
                "rho = {value} outside ({lo}, {hi}) for alpha = {alpha}"
            )));
        }
        Ok(Self { value, alpha })
    }

    pub fn midpoint(alpha: f64) -> Self {
        let (lo, hi) = Self::bounds(alpha);
        Self {
            value: 0.5 * (lo + hi),
            alpha,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `n^{-ρ}`, the eigenvalue floor.
    pub fn floor(&self, n: usize) -> f64 {
        (n as f64).powf(-self.value)
    }
}

/// Eigenvalues of `Γ`, either as an explicit list or as `λ_k = k^{-α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spectrum {
    PowerLaw { alpha: f64 },
    Finite(Vec<f64>),
}

impl Spectrum {
    /// `λ_k` for 1-based `k`; `None` past the end of a finite list.
    pub fn lambda(&self, k: usize) -> Option<f64> {
        match self {
            Spectrum::PowerLaw { alpha } => Some((k as f64).powf(-alpha)),
            Spectrum::Finite(v) => v.get(k - 1).copied(),
        }
    }

    pub fn first(&self, count: usize) -> Result<Vec<f64>> {
        (1..=count)
            .map(|k| {
                self.lambda(k)
                    .ok_or_else(|| Error::invalid(format!("spectrum has fewer than {count} entries")))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        match self {
            Spectrum::PowerLaw { alpha } if *alpha > 0.0 => Ok(()),
            Spectrum::Finite(v) if !v.is_empty() && v.iter().all(|l| *l > 0.0) => Ok(()),
            _ => Err(Error::invalid("eigenvalues must be positive")),
        }
    }
}

/// `K = ⌈m^{1/(2β+α+1)}⌉`.
pub fn select_cutoff(m: usize, alpha: f64, beta: f64) -> usize {
    let x = (m.max(1) as f64).powf(1.0 / (2.0 * beta + alpha + 1.0));
    let r = x.round();
    // Exact integer powers can land a hair above the integer.
    let k = if (x - r).abs() <= 1e-9 * r { r } else { x.ceil() };
    (k as usize).max(1)
}

/// Inputs to the spectral cutoff estimator `θ̂₁`.
pub enum CutoffData<'a> {
    /// Empirical white-noise coefficients `Z` from `m` designs whose empirical
    /// covariance is `cov_hat`.
    EmpiricalWn {
        z: &'a WnCoefficients,
        cov_hat: &'a CovOperator,
        m: usize,
    },
    /// Raw regression data.
    Flr {
        sample: &'a DesignSample,
        y: &'a [f64],
    },
    /// A sequence-space observation in the eigenbasis of `Γ`.
    Sequence(&'a SeqObservation),
}

/// `⟨φ_k, φ̂_j⟩` for `k ≤ rows`, all retained `j`.
fn cross_gram(truth: &CovOperator, hat: &CovOperator, rows: usize) -> DMatrix<f64> {
    if let (Some(a), Some(b)) = (truth.fourier_coords(), hat.fourier_coords()) {
        let common = a.nrows().min(b.nrows());
        return a.view((0, 0), (common, rows)).transpose() * b.rows(0, common);
    }
    DMatrix::from_fn(rows, hat.rank(), |k, j| {
        weighted_dot(
            truth.eigenfunctions().get(k).values(),
            hat.eigenfunctions().get(j).values(),
        )
    })
}

/// The first `k` coefficients of `θ̂₁` in the eigenbasis of `truth`.
pub fn cutoff_estimator(data: CutoffData<'_>, truth: &CovOperator, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    match data {
        CutoffData::Sequence(obs) => {
            if k > obs.len() {
                return Err(Error::invalid(format!(
                    "cutoff {k} exceeds the {} observed coordinates",
                    obs.len()
                )));
            }
            Ok((0..k).map(|i| obs.y[i] / obs.lambda[i].sqrt()).collect())
        }
        CutoffData::Flr { sample, y } => {
            check_cutoff(truth, k)?;
            if y.len() != sample.n() {
                return Err(Error::dim("response count", sample.n(), y.len()));
            }
            let p = design_projections(sample, truth, k)?;
            let s = p.tr_mul(&DVector::from_column_slice(y)) / sample.n() as f64;
            Ok((0..k).map(|i| s[i] / truth.eigenvalues()[i]).collect())
        }
        CutoffData::EmpiricalWn { z, cov_hat, m } => {
            check_cutoff(truth, k)?;
            if z.n() > cov_hat.rank() {
                return Err(Error::dim("coefficient count", cov_hat.rank(), z.n()));
            }
            let g = cross_gram(truth, cov_hat, k);
            let scale = 1.0 / (m as f64).sqrt();
            Ok((0..k)
                .map(|i| {
                    let s: f64 = (0..z.n())
                        .map(|j| cov_hat.eigenvalues()[j].sqrt() * g[(i, j)] * z.z[j])
                        .sum();
                    scale * s / truth.eigenvalues()[i]
                })
                .collect())
        }
    }
}

fn check_cutoff(truth: &CovOperator, k: usize) -> Result<()> {
    if k > truth.rank() {
        return Err(Error::invalid(format!(
            "cutoff {k} exceeds the {} known eigenpairs",
            truth.rank()
        )));
    }
    Ok(())
}

/// `w_k = (1 − γ β_k)_+` for `k = 1..=count`.
pub fn pinsker_weights(gamma: f64, class: &ThetaClass, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| (1.0 - gamma * class.beta_k(k)).max(0.0))
        .collect()
}

/// Sums `Σ_k f(k)` over the support `{k : xβ_k < 1}`, which is finite for `x > 0`.
fn support_sum(x: f64, class: &ThetaClass, inv_lambda: &impl Fn(usize) -> Option<f64>, mut f: impl FnMut(usize, f64, f64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut k = 1;
    loop {
        let bk = class.beta_k(k);
        if x * bk >= 1.0 {
            break;
        }
        let Some(il) = inv_lambda(k) else { break };
        total += f(k, bk, il);
        k += 1;
    }
    total
}

/// Root of `Σ_k λ_k^{-1} β_k (1 − xβ_k)_+ = C x n / σ²` for a general
/// inverse-eigenvalue sequence; `inv_lambda(k) = None` ends the sequence.
pub fn solve_gamma(
    inv_lambda: impl Fn(usize) -> Option<f64>,
    class: &ThetaClass,
    sigma: f64,
    n: usize,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if !(sigma > 0.0) || n == 0 {
        return Err(Error::invalid("need sigma > 0 and n > 0"));
    }
    let slope = class.radius * n as f64 / (sigma * sigma);
    let phi = |x: f64| support_sum(x, class, &inv_lambda, |_, b, il| il * b * (1.0 - x * b)) - slope * x;

    // Φ(0+) > 0 and Φ(1/β_1) < 0.
    let (mut lo, mut hi) = (0.0, 1.0 / class.beta_k(1));
    for _ in 0..200 {
        if hi - lo <= tol * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut gamma = 0.5 * (lo + hi);

    // Φ is linear on a fixed support, so solve it exactly there.
    let s = support_sum(gamma, class, &inv_lambda, |_, _, _| 1.0) as usize;
    if s > 0 {
        let (mut num, mut den) = (0.0, slope);
        for k in 1..=s {
            let il = inv_lambda(k).expect("inside support");
            let b = class.beta_k(k);
            num += il * b;
            den += il * b * b;
        }
        let x = num / den;
        let next_ok = inv_lambda(s + 1).is_none() || x * class.beta_k(s + 1) >= 1.0;
        if x * class.beta_k(s) < 1.0 && next_ok {
            gamma = x;
        }
    }
    Ok(gamma)
}

/// The oracle `γ_n` for the true spectrum.
pub fn pinsker_gamma_oracle(spectrum: &Spectrum, class: &ThetaClass, sigma: f64, n: usize, tol: f64) -> Result<f64> {
    spectrum.validate()?;
    solve_gamma(|k| spectrum.lambda(k).map(|l| 1.0 / l), class, sigma, n, tol)
}

/// `(σ²/n) Σ_k λ_k^{-1} (1 − γβ_k)_+` at a given `γ`.
pub fn risk_constant_at(gamma: f64, spectrum: &Spectrum, class: &ThetaClass, sigma: f64, n: usize) -> f64 {
    if gamma <= 0.0 {
        return f64::INFINITY;
    }
    let s = support_sum(gamma, class, &|k| spectrum.lambda(k).map(|l| 1.0 / l), |_, b, il| {
        il * (1.0 - gamma * b)
    });
    sigma * sigma / n as f64 * s
}

/// The sharp minimax constant `a_n`.
pub fn sharp_risk_constant(spectrum: &Spectrum, class: &ThetaClass, sigma: f64, n: usize) -> Result<f64> {
    let gamma = pinsker_gamma_oracle(spectrum, class, sigma, n, GAMMA_TOLERANCE)?;
    Ok(risk_constant_at(gamma, spectrum, class, sigma, n))
}

/// Whether the support restriction `w_k = 0 for k > n^{ρ/α}/log n` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportCap {
    Enforce,
    #[default]
    FlagOnly,
}

/// Everything the Pinsker estimator needs at one sample size.
#[derive(Debug, Clone, Serialize)]
pub struct PinskerPlan {
    pub gamma: f64,
    pub weights: Vec<f64>,
    pub a_n: f64,
    pub rho: f64,
    pub n: usize,
    /// Estimation sample size when the data are split.
    pub m: Option<usize>,
    /// `n^{ρ/α} / log n`.
    pub support_cap: f64,
    /// Set when some positive weight sits beyond the cap.
    pub cap_binds: bool,
    pub cap_policy: SupportCap,
}

impl PinskerPlan {
    /// Plan for the weights `(1 − γβ_k)_+`, `k ≤ count`, at sample size `n`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma: f64,
        spectrum: &Spectrum,
        class: &ThetaClass,
        sigma: f64,
        n: usize,
        rho: Rho,
        count: usize,
        policy: SupportCap,
    ) -> Self {
        let mut weights = pinsker_weights(gamma, class, count);
        let nf = n as f64;
        let support_cap = nf.powf(rho.value() / rho.alpha()) / nf.ln();
        let cap_binds = weights
            .iter()
            .enumerate()
            .any(|(i, w)| *w > 0.0 && (i + 1) as f64 > support_cap);
        if policy == SupportCap::Enforce {
            for (i, w) in weights.iter_mut().enumerate() {
                if (i + 1) as f64 > support_cap {
                    *w = 0.0;
                }
            }
        }
        Self {
            gamma,
            weights,
            a_n: risk_constant_at(gamma, spectrum, class, sigma, n),
            rho: rho.value(),
            n,
            m: None,
            support_cap,
            cap_binds,
            cap_policy: policy,
        }
    }

    /// The oracle plan with `γ = γ_n`.
    pub fn oracle(
        spectrum: &Spectrum,
        class: &ThetaClass,
        sigma: f64,
        n: usize,
        rho: Rho,
        count: usize,
        policy: SupportCap,
    ) -> Result<Self> {
        let gamma = pinsker_gamma_oracle(spectrum, class, sigma, n, GAMMA_TOLERANCE)?;
        Ok(Self::new(gamma, spectrum, class, sigma, n, rho, count, policy))
    }
}

/// `θ̂_k = w_k y_k / √λ_k` in the sequence model.
pub fn sequence_pinsker(obs: &SeqObservation, weights: &[f64]) -> Vec<f64> {
    obs.y
        .iter()
        .zip(&obs.lambda)
        .enumerate()
        .map(|(i, (y, l))| weights.get(i).copied().unwrap_or(0.0) * y / l.sqrt())
        .collect()
}

/// A plug-in estimate expressed in the empirical eigenbasis.
#[derive(Debug, Clone)]
pub struct PinskerEstimate {
    /// Coefficients on `φ̂_1, φ̂_2, …`.
    pub coefficients: Vec<f64>,
    /// Fourier coefficients, when the designs carry them.
    pub fourier: Option<Vec<f64>>,
    pub function: GridFunction,
}

/// `θ̂ = Σ_j w_j λ̂_{j,ρ}^{-1} (1/n) Σ_l Y_l ⟨X_l, φ̂_j⟩ φ̂_j` with
/// `λ̂_{j,ρ} = max(λ̂_j, n^{-ρ})`. Uses the data only.
pub fn flr_pinsker_estimator(sample: &DesignSample, y: &[f64], weights: &[f64], rho: Rho) -> Result<PinskerEstimate> {
    let cov = empirical_covariance(sample)?;
    flr_pinsker_with_cov(sample, &cov, y, weights, rho)
}

/// As [`flr_pinsker_estimator`] with `Γ̂` already computed from `sample`.
pub fn flr_pinsker_with_cov(
    sample: &DesignSample,
    cov: &CovOperator,
    y: &[f64],
    weights: &[f64],
    rho: Rho,
) -> Result<PinskerEstimate> {
    let n = sample.n();
    if y.len() != n {
        return Err(Error::dim("response count", n, y.len()));
    }
    let count = weights.len().min(cov.rank());
    let floor = rho.floor(n);
    let mut coefficients = vec![0.0; count];
    let active = weights[..count].iter().rposition(|w| *w != 0.0).map_or(0, |i| i + 1);
    if active > 0 {
        let q = design_projections(sample, cov, active)?;
        let s = q.tr_mul(&DVector::from_column_slice(y)) / n as f64;
        for j in 0..active {
            coefficients[j] = weights[j] * s[j] / cov.eigenvalues()[j].max(floor);
        }
    }
    let fourier = cov.fourier_coords().map(|c| {
        let v = c.columns(0, count) * DVector::from_column_slice(&coefficients);
        v.iter().copied().collect::<Vec<f64>>()
    });
    let function = if count == 0 {
        GridFunction::zeros(sample.grid_size())?
    } else {
        let basis = cov.eigenfunctions();
        let mut v = vec![0.0; sample.grid_size()];
        for (j, c) in coefficients.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            for (vi, p) in v.iter_mut().zip(basis.get(j).values()) {
                *vi += c * p;
            }
        }
        GridFunction::from_values(v)
    };
    Ok(PinskerEstimate {
        coefficients,
        fourier,
        function,
    })
}

/// Result of the data-driven choice of `γ`.
#[derive(Debug, Clone, Serialize)]
pub struct DataDrivenGamma {
    pub gamma_hat: f64,
    pub gamma_tilde: f64,
    pub lower: f64,
    pub upper: f64,
    /// Estimation pairs; the remaining `n − m` are training pairs.
    pub m: usize,
    pub n: usize,
}

/// `m = ⌈n (1 − 1/log n)⌉`.
pub fn estimation_split(n: usize) -> Result<usize> {
    if n < 8 {
        return Err(Error::invalid(format!("data-driven split needs n >= 8, got {n}")));
    }
    let nf = n as f64;
    let m = (nf * (1.0 - 1.0 / nf.ln())).ceil() as usize;
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("degenerate split m = {m} of n = {n}")));
    }
    Ok(m)
}

/// `γ̂ = med{n^{-β/(3β+1)}, γ̃, n^{-β/(2β+1)}}`, where `γ̃` solves the
/// `γ` equation with floored eigenvalues of the training designs
/// `X_{m+1}, …, X_n`.
pub fn data_driven_gamma(sample: &DesignSample, class: &ThetaClass, sigma: f64, rho: Rho, tol: f64) -> Result<DataDrivenGamma> {
    let n = sample.n();
    let m = estimation_split(n)?;
    let training = sample.rows(m..n)?;
    let spectrum = crate::covariance::empirical_spectrum(&training)?;
    let floor = rho.floor(n);
    let gamma_tilde = solve_gamma(
        |k| Some(1.0 / spectrum.get(k - 1).copied().unwrap_or(0.0).max(floor)),
        class,
        sigma,
        n,
        tol,
    )?;
    let (lower, upper) = gamma_bounds(n, class.beta);
    Ok(DataDrivenGamma {
        gamma_hat: median3(lower, gamma_tilde, upper),
        gamma_tilde,
        lower,
        upper,
        m,
        n,
    })
}

/// `(n^{-β/(2β+1)}, n^{-β/(3β+1)})`, ordered.
pub fn gamma_bounds(n: usize, beta: f64) -> (f64, f64) {
    let nf = n as f64;
    let a = nf.powf(-beta / (3.0 * beta + 1.0));
    let b = nf.powf(-beta / (2.0 * beta + 1.0));
    (a.min(b), a.max(b))
}

pub fn median3(a: f64, b: f64, c: f64) -> f64 {
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    v[1]
}

/// Fits the Pinsker estimator with `γ̂` on the estimation pairs.
pub fn pinsker_data_driven(
    sample: &DesignSample,
    y: &[f64],
    class: &ThetaClass,
    sigma: f64,
    rho: Rho,
    count: usize,
) -> Result<(PinskerEstimate, DataDrivenGamma)> {
    let g = data_driven_gamma(sample, class, sigma, rho, GAMMA_TOLERANCE)?;
    let est_sample = sample.rows(0..g.m)?;
    let weights = pinsker_weights(g.gamma_hat, class, count);
    let est = flr_pinsker_estimator(&est_sample, &y[..g.m], &weights, rho)?;
    Ok((est, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    Boundary,
    Random,
    LeastFavorable,
}

/// Unscaled boundary profile `k^{-β-1/2} / log(k+1)`.
fn boundary_profile(beta: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| {
            let kf = k as f64;
            kf.powf(-beta - 0.5) / (kf + 1.0).ln()
        })
        .collect()
}

fn scale_to_boundary(theta: &mut [f64], class: &ThetaClass) {
    let s = class.ellipsoid_sum(theta);
    if s > 0.0 {
        let c = (class.radius / s).sqrt();
        theta.iter_mut().for_each(|t| *t *= c);
    }
}

/// Coefficients of a member of the ellipsoid in the eigenbasis of `Γ`.
pub fn sample_theta(
    class: &ThetaClass,
    mode: ThetaMode,
    spectrum: &Spectrum,
    sigma: f64,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("need at least one coefficient"));
    }
    match mode {
        ThetaMode::Boundary => {
            let mut t = boundary_profile(class.beta, count);
            scale_to_boundary(&mut t, class);
            Ok(t)
        }
        ThetaMode::Random => {
            let mut rng = rng::from_seed(seed);
            let mut t: Vec<f64> = boundary_profile(class.beta, count)
                .into_iter()
                .map(|p| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * p * rng.random_range(0.25..1.75)
                })
                .collect();
            scale_to_boundary(&mut t, class);
            Ok(t)
        }
        ThetaMode::LeastFavorable => {
            let gamma = pinsker_gamma_oracle(spectrum, class, sigma, n, GAMMA_TOLERANCE)?;
            least_favorable(gamma, spectrum, class, sigma, n, count)
        }
    }
}

/// `θ_k² = (σ²/(nλ_k)) (1/(γβ_k) − 1)_+`.
pub fn least_favorable(
    gamma: f64,
    spectrum: &Spectrum,
    class: &ThetaClass,
    sigma: f64,
    n: usize,
    count: usize,
) -> Result<Vec<f64>> {
    let support = (1..)
        .take_while(|k| gamma * class.beta_k(*k) < 1.0 && spectrum.lambda(*k).is_some())
        .count();
    if support > count {
        return Err(Error::invalid(format!(
            "least-favorable profile needs {support} coefficients, only {count} retained"
        )));
    }
    let lambdas = spectrum.first(count.min(support.max(1)))?;
    Ok((1..=count)
        .map(|k| match lambdas.get(k - 1) {
            Some(l) => {
                let v = (1.0 / (gamma * class.beta_k(k)) - 1.0).max(0.0);
                (sigma * sigma / (n as f64 * l) * v).sqrt()
            }
            None => 0.0,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Spectrum, ThetaClass) {
        (Spectrum::Finite(vec![1.0]), ThetaClass::new(1.0, 1.0).unwrap())
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(select_cutoff(1, 2.0, 2.0), 1);
        assert_eq!(select_cutoff(1000, 2.0, 2.0), 3);
        assert_eq!(select_cutoff(128, 2.0, 2.0), 2);
        let mut last = 0;
        for m in 1..5000 {
            let k = select_cutoff(m, 2.0, 2.0);
            assert!(k >= last);
            last = k;
        }
    }

    #[test]
    fn weight_examples() {
        let c = ThetaClass::new(1.0, 1.0).unwrap();
        assert!(pinsker_weights(0.0, &c, 5).iter().all(|w| *w == 1.0));
        assert!(pinsker_weights(1.0, &c, 5).iter().all(|w| *w == 0.0));
        let w = pinsker_weights(0.1, &c, 1)[0];
        assert!((w - (1.0 - 0.1 * 2f64.sqrt())).abs() < 1e-15);
        assert!((w - 0.858579).abs() < 1e-6);
    }

    #[test]
    fn toy_gamma_and_constant() {
        let (s, c) = toy();
        let g = pinsker_gamma_oracle(&s, &c, 1.0, 1, 1e-12).unwrap();
        assert!((g - 2f64.sqrt() / 3.0).abs() < 1e-10);
        let a = sharp_risk_constant(&s, &c, 1.0, 1).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-10);
        let t = sample_theta(&c, ThetaMode::LeastFavorable, &s, 1.0, 1, 1, 0).unwrap();
        assert!((t[0] * t[0] - 0.5).abs() < 1e-10);
        assert!((c.ellipsoid_sum(&t) - 1.0).abs() < 1e-10);
        assert!(pinsker_gamma_oracle(&s, &c, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn gamma_decreases_with_n() {
        let s = Spectrum::PowerLaw { alpha: 2.0 };
        let c = ThetaClass::new(2.0, 1.0).unwrap();
        let g: Vec<f64> = [100, 1000, 10000]
            .iter()
            .map(|n| pinsker_gamma_oracle(&s, &c, 1.0, *n, 1e-12).unwrap())
            .collect();
        assert!(g[0] > g[1] && g[1] > g[2]);
        assert_eq!(risk_constant_at(1.0, &s, &c, 1.0, 10), 0.0);
    }

    #[test]
    fn median_truncation() {
        let (lo, hi) = gamma_bounds(1000, 2.0);
        assert!(lo < hi);
        assert_eq!(median3(lo, 10.0, hi), hi);
        assert_eq!(median3(lo, 1e-9, hi), lo);
        let mid = 0.5 * (lo + hi);
        assert_eq!(median3(lo, mid, hi), mid);
        // The larger bound is n^{-β/(3β+1)}.
        assert_eq!(hi, 1000f64.powf(-2.0 / 7.0));
    }

    #[test]
    fn boundary_scaling_is_homogeneous() {
        let s = Spectrum::PowerLaw { alpha: 2.0 };
        let c1 = ThetaClass::new(2.0, 1.0).unwrap();
        let c4 = ThetaClass::new(2.0, 4.0).unwrap();
        let a = sample_theta(&c1, ThetaMode::Boundary, &s, 1.0, 100, 20, 0).unwrap();
        let b = sample_theta(&c4, ThetaMode::Boundary, &s, 1.0, 100, 20, 0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
        for mode in [ThetaMode::Boundary, ThetaMode::Random, ThetaMode::LeastFavorable] {
            let t = sample_theta(&c1, mode, &s, 1.0, 1000, 64, 3).unwrap();
            assert!((c1.ellipsoid_sum(&t) - 1.0).abs() < 1e-8, "{mode:?}");
        }
    }

    #[test]
    fn rho_interval() {
        assert!(Rho::new(0.2, 2.0).is_err());
        assert!(Rho::new(0.5, 2.0).is_err());
        let r = Rho::midpoint(2.0);
        assert!((r.value() - 0.5 * (2.0 / 7.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn split_sizes() {
        assert!(estimation_split(7).is_err());
        assert_eq!(estimation_split(8).unwrap(), 5);
        let m = estimation_split(10_000).unwrap();
        assert_eq!(m, (10_000.0f64 * (1.0 - 1.0 / 10_000f64.ln())).ceil() as usize);
    }
}
