//! The white-noise inverse problem in sequence form.
//!
//! In the eigenbasis of `Γ` the model `dY = Γ^{1/2}θ dt + σ n^{-1/2} dW`
//! reads `y_k = √λ_k θ_k + (σ/√n) ξ_k`.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::{fmt_f64, sidecar_path};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqObservation {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Standard deviation of each coordinate's noise.
    pub noise_level: f64,
    pub n: usize,
    pub sigma: f64,
}

impl SeqObservation {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn write_csv(&self, path: &Path, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "lambda", "y"])?;
        for (k, (l, y)) in self.lambda.iter().zip(&self.y).enumerate() {
            w.write_record([(k + 1).to_string(), fmt_f64(*l), fmt_f64(*y)])?;
        }
        w.flush()?;
        let meta = serde_json::json!({
            "n": self.n,
            "sigma": self.sigma,
            "noise_level": self.noise_level,
            "seed": seed,
        });
        serde_json::to_writer_pretty(std::fs::File::create(sidecar_path(path))?, &meta)?;
        Ok(())
    }
}

/// Retained frequencies `max(⌈4 n^{1/(2β+α+1)}⌉, 64)`.
pub fn default_retained_k(n: usize, alpha: f64, beta: f64) -> usize {
    let k = (4.0 * (n as f64).powf(1.0 / (2.0 * beta + alpha + 1.0))).ceil() as usize;
    k.max(64)
}

fn check_inputs(theta: &[f64], lambda: &[f64], sigma: f64) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::invalid("need at least one coefficient"));
    }
    if theta.len() != lambda.len() {
        return Err(Error::dim("eigenvalue count", theta.len(), lambda.len()));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::invalid(format!("eigenvalues must be positive, found {l}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(())
}

pub(crate) fn observe(
    theta: &[f64],
    lambda: &[f64],
    n: usize,
    sigma: f64,
    rng: &mut rng::Rng,
) -> SeqObservation {
    let noise_level = sigma / (n as f64).sqrt();
    let y = theta
        .iter()
        .zip(lambda)
        .map(|(t, l)| {
            let xi: f64 = StandardNormal.sample(rng);
            l.sqrt() * t + noise_level * xi
        })
        .collect();
    SeqObservation {
        y,
        lambda: lambda.to_vec(),
        noise_level,
        n,
        sigma,
    }
}

/// `y_k = √λ_k θ_k + (σ/√n) ξ_k`.
pub fn simulate_sequence(theta: &[f64], lambda: &[f64], n: usize, sigma: f64, seed: u64) -> Result<SeqObservation> {
    check_inputs(theta, lambda, sigma)?;
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(observe(theta, lambda, n, sigma, &mut rng::from_seed(seed)))
}

/// Two independent observations of the same drift with `m` and `n − m`
/// observations' worth of noise.
pub fn simulate_split(
    theta: &[f64],
    lambda: &[f64],
    m: usize,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<(SeqObservation, SeqObservation)> {
    check_inputs(theta, lambda, sigma)?;
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("split needs 0 < m < n, got m = {m}, n = {n}")));
    }
    let mut rng = rng::from_seed(seed);
    let s1 = observe(theta, lambda, m, sigma, &mut rng);
    let s2 = observe(theta, lambda, n - m, sigma, &mut rng);
    Ok((s1, s2))
}

/// `T₁ = (m/n) S₁ + ((n−m)/n) S₂` carries all the information; `T₂ = S₁ − S₂`
/// is pure noise independent of `T₁`.
pub fn recombine_split(
    s1: &SeqObservation,
    s2: &SeqObservation,
    m: usize,
    n: usize,
) -> Result<(SeqObservation, SeqObservation)> {
    if s1.len() != s2.len() {
        return Err(Error::dim("split coordinate count", s1.len(), s2.len()));
    }
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("split needs 0 < m < n, got m = {m}, n = {n}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let (a, b) = (mf / nf, (nf - mf) / nf);
    let sigma = s1.sigma;
    let t1 = SeqObservation {
        y: s1.y.iter().zip(&s2.y).map(|(u, v)| a * u + b * v).collect(),
        lambda: s1.lambda.clone(),
        noise_level: sigma / nf.sqrt(),
        n,
        sigma,
    };
    let t2 = SeqObservation {
        y: s1.y.iter().zip(&s2.y).map(|(u, v)| u - v).collect(),
        lambda: s1.lambda.clone(),
        noise_level: sigma * (1.0 / mf + 1.0 / (nf - mf)).sqrt(),
        n,
        sigma,
    };
    Ok((t1, t2))
}
