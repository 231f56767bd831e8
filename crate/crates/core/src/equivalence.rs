//! Exact finite-sample equivalence between functional linear regression and
//! the empirical white-noise model.
//!
//! Given designs `X_1, …, X_n` with empirical eigenpairs `(λ̂_k, φ̂_k)`, the
//! matrix `Q_{jk} = ⟨X_j, φ̂_k⟩` factors as `Q = A D` with `A` orthogonal and
//! `D = diag(√(nλ̂_k))`. Rotating the responses by `Aᵀ` turns
//! `Y_j = ⟨X_j, θ⟩ + σε_j` into independent coordinates
//! `Z_k = √(nλ̂_k) ⟨φ̂_k, θ⟩ + σε_k`, and `A` rotates them back.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::CovOperator;
use crate::design::DesignSample;
use crate::error::{Error, Result};
use crate::function_space::{fmt_f64, GridFunction};
use crate::rng;

/// Tolerance on `‖AᵀA − I‖_max` above which construction fails.
pub const ORTHOGONALITY_LIMIT: f64 = 1e-6;

/// `⟨X_i, φ_k⟩` for the first `k` eigenfunctions of `op`, as an `n × k` matrix.
pub fn design_projections(sample: &DesignSample, op: &CovOperator, k: usize) -> Result<DMatrix<f64>> {
    if k > op.rank() {
        return Err(Error::invalid(format!(
            "requested {k} eigenfunctions of an operator of rank {}",
            op.rank()
        )));
    }
    if sample.grid_size() != op.grid_size() {
        return Err(Error::dim("grid size", op.grid_size(), sample.grid_size()));
    }
    if let (Some(c), Some(coords)) = (sample.fourier_coeffs(), op.fourier_coords()) {
        let common = c.ncols().min(coords.nrows());
        return Ok(c.columns(0, common) * coords.view((0, 0), (common, k)));
    }
    let mut q = DMatrix::zeros(sample.n(), k);
    for j in 0..k {
        q.set_column(j, &sample.inner_products(op.eigenfunctions().get(j))?);
    }
    Ok(q)
}

/// The factorization `Q = A D` for a full-rank design.
#[derive(Debug, Clone)]
pub struct GramTransform {
    q: DMatrix<f64>,
    d: Vec<f64>,
    a: DMatrix<f64>,
    /// Set when the last column had to be negated to reach `det A = +1`.
    flipped_last: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    /// `max |AᵀA − I|`.
    pub orthogonality_error: f64,
    /// `max |AAᵀ − I|`.
    pub co_orthogonality_error: f64,
    pub determinant: f64,
    /// `max |Q − AD| / d_1`.
    pub factorization_error: f64,
    /// Largest off-diagonal of `QᵀQ` divided by `n λ̂_1`.
    pub qtq_offdiag_relative: f64,
    /// `max_k |(QᵀQ)_{kk} − nλ̂_k| / (nλ̂_1)`.
    pub qtq_diag_relative: f64,
}

impl GramTransform {
    pub fn build(sample: &DesignSample, cov: &CovOperator) -> Result<Self> {
        let n = sample.n();
        if cov.rank() < n {
            return Err(Error::DegenerateDesign {
                rank: cov.rank(),
                n,
            });
        }
        let mut q = design_projections(sample, cov, n)?;
        let d: Vec<f64> = cov.eigenvalues()[..n]
            .iter()
            .map(|l| (n as f64 * l).sqrt())
            .collect();
        // Q = V D on the dual route; dividing Q by D instead would amplify
        // eigensolver residuals by 1/λ̂_n.
        let mut a = match cov.sample_vectors().filter(|v| v.nrows() == n && v.ncols() == n) {
            Some(v) => v.clone(),
            None => {
                let mut a = q.clone();
                for (k, dk) in d.iter().enumerate() {
                    a.column_mut(k).unscale_mut(*dk);
                }
                a
            }
        };
        let mut flipped_last = false;
        if a.determinant() < 0.0 {
            a.column_mut(n - 1).neg_mut();
            q.column_mut(n - 1).neg_mut();
            flipped_last = true;
        }
        let t = Self {
            q,
            d,
            a,
            flipped_last,
        };
        let err = t.orthogonality_error();
        if !(err <= ORTHOGONALITY_LIMIT) {
            return Err(Error::Numerical(format!(
                "transform is not orthogonal: max |AᵀA − I| = {err:e}"
            )));
        }
        let fit = t.factorization_error();
        if !(fit <= ORTHOGONALITY_LIMIT) {
            return Err(Error::Numerical(format!(
                "Q does not factor as A D: max |Q − AD| / d_1 = {fit:e}"
            )));
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Diagonal of `D`, i.e. `√(nλ̂_k)`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn flipped_last(&self) -> bool {
        self.flipped_last
    }

    fn orthogonality_error(&self) -> f64 {
        let n = self.n();
        (self.a.transpose() * &self.a - DMatrix::identity(n, n)).amax()
    }

    fn factorization_error(&self) -> f64 {
        let mut ad = self.a.clone();
        for (k, dk) in self.d.iter().enumerate() {
            ad.column_mut(k).scale_mut(*dk);
        }
        (&self.q - ad).amax() / self.d[0]
    }

    pub fn check_invariants(&self) -> InvariantReport {
        let n = self.n();
        let qtq = self.q.transpose() * &self.q;
        let scale = self.d[0] * self.d[0];
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    diag = diag.max((qtq[(i, i)] - self.d[i] * self.d[i]).abs());
                } else {
                    off = off.max(qtq[(i, j)].abs());
                }
            }
        }
        InvariantReport {
            orthogonality_error: self.orthogonality_error(),
            co_orthogonality_error: (&self.a * self.a.transpose() - DMatrix::identity(n, n))
                .amax(),
            determinant: self.a.determinant(),
            factorization_error: self.factorization_error(),
            qtq_offdiag_relative: off / scale,
            qtq_diag_relative: diag / scale,
        }
    }
}

/// Coordinates `Z_1, …, Z_n` of the empirical white-noise model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WnCoefficients {
    pub z: Vec<f64>,
    pub sigma: f64,
}

impl WnCoefficients {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "z"])?;
        for (k, z) in self.z.iter().enumerate() {
            w.write_record([(k + 1).to_string(), fmt_f64(*z)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, sigma: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut z = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(1)
                .ok_or_else(|| Error::invalid("missing z column"))?
                .parse()
                .map_err(|e| Error::invalid(format!("bad z value: {e}")))?;
            z.push(v);
        }
        Ok(Self { z, sigma })
    }
}

/// `z = Aᵀ Y`.
pub fn flr_to_whitenoise(y: &[f64], t: &GramTransform, sigma: f64) -> Result<WnCoefficients> {
    if y.len() != t.n() {
        return Err(Error::dim("response count", t.n(), y.len()));
    }
    let z = t.a.tr_mul(&DVector::from_column_slice(y));
    Ok(WnCoefficients {
        z: z.iter().copied().collect(),
        sigma,
    })
}

/// `Y = A z`.
pub fn whitenoise_to_flr(z: &WnCoefficients, t: &GramTransform) -> Result<Vec<f64>> {
    if z.n() != t.n() {
        return Err(Error::dim("coefficient count", t.n(), z.n()));
    }
    let y = &t.a * DVector::from_column_slice(&z.z);
    Ok(y.iter().copied().collect())
}

fn normals(rng: &mut rng::Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

/// `Y_i = ⟨X_i, θ⟩ + σ ε_i`.
pub fn simulate_flr(sample: &DesignSample, theta: &GridFunction, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be nonnegative"));
    }
    let x = sample.inner_products(theta)?;
    let mut rng = rng::from_seed(seed);
    let eps = normals(&mut rng, sample.n());
    Ok(x.iter().zip(eps).map(|(x, e)| x + sigma * e).collect())
}

/// `⟨φ̂_k, θ⟩` for every retained empirical eigenfunction.
pub fn drift_coefficients(cov: &CovOperator, theta: &GridFunction) -> Result<Vec<f64>> {
    cov.coefficients(theta)
}

/// `Z_k = √(nλ̂_k) ⟨φ̂_k, θ⟩ + σ ε_k` for `k ≤ rank(Γ̂)`.
pub fn simulate_empirical_wn(
    theta: &GridFunction,
    sample: &DesignSample,
    cov: &CovOperator,
    sigma: f64,
    seed: u64,
) -> Result<WnCoefficients> {
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be nonnegative"));
    }
    let n = sample.n() as f64;
    let f = drift_coefficients(cov, theta)?;
    let mut rng = rng::from_seed(seed);
    let eps = normals(&mut rng, f.len());
    let z = f
        .iter()
        .zip(cov.eigenvalues())
        .zip(eps)
        .map(|((f, l), e)| (n * l).sqrt() * f + sigma * e)
        .collect();
    Ok(WnCoefficients { z, sigma })
}

fn gaussian_loglik(residual_sq: f64, n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * sigma.ln() - residual_sq / (2.0 * sigma * sigma)
}

/// Log-density of `Y` given the designs: `Y ~ N((⟨X_j, θ⟩)_j, σ² I)`.
pub fn conditional_loglik(y: &[f64], sample: &DesignSample, theta: &GridFunction, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if y.len() != sample.n() {
        return Err(Error::dim("response count", sample.n(), y.len()));
    }
    let x = sample.inner_products(theta)?;
    let rss: f64 = y.iter().zip(x.iter()).map(|(y, x)| (y - x).powi(2)).sum();
    Ok(gaussian_loglik(rss, y.len(), sigma))
}

/// The same density written through the reduction, `‖AᵀY − D f‖²` with `f_k = ⟨φ̂_k, θ⟩`.
pub fn reduced_loglik(y: &[f64], t: &GramTransform, f: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if f.len() < t.n() {
        return Err(Error::dim("drift coefficient count", t.n(), f.len()));
    }
    let z = flr_to_whitenoise(y, t, sigma)?;
    let mut rss = 0.0;
    for (k, fk) in f[..t.n()].iter().enumerate() {
        let fk = if k + 1 == t.n() && t.flipped_last { -fk } else { *fk };
        rss += (z.z[k] - t.d[k] * fk).powi(2);
    }
    Ok(gaussian_loglik(rss, t.n(), sigma))
}

fn cumulative_integral(v: &[f64]) -> Vec<f64> {
    let h = 1.0 / (v.len() - 1) as f64;
    let mut out = vec![0.0; v.len()];
    for i in 1..v.len() {
        out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
    }
    out
}

/// Renders the path `Z(t) = Σ_k Z_k ∫_0^t φ̂_k + σ W_⊥(t)`, where `W_⊥` is the
/// part of a fresh Brownian motion not explained by the `φ̂_k`. For display only.
pub fn render_path(z: &WnCoefficients, cov: &CovOperator, seed: u64) -> Result<GridFunction> {
    let d = cov.grid_size();
    if z.n() > cov.rank() {
        return Err(Error::dim("coefficient count", cov.rank(), z.n()));
    }
    let sqrt_h = (1.0 / (d - 1) as f64).sqrt();
    let mut rng = rng::from_seed(seed);
    let mut w = vec![0.0; d];
    let mut dw = vec![0.0; d];
    for i in 1..d {
        let step: f64 = StandardNormal.sample(&mut rng);
        dw[i] = sqrt_h * step;
        w[i] = w[i - 1] + dw[i];
    }
    let mut path = vec![0.0; d];
    let mut residual = w;
    for k in 0..z.n() {
        let phi = cov.eigenfunctions().get(k).values();
        let anti = cumulative_integral(phi);
        // ∫ φ̂_k dW by left-point sums.
        let xi: f64 = (1..d).map(|i| phi[i - 1] * dw[i]).sum();
        for i in 0..d {
            path[i] += z.z[k] * anti[i];
            residual[i] -= xi * anti[i];
        }
    }
    Ok(GridFunction::from_values(
        path.iter().zip(&residual).map(|(p, r)| p + z.sigma * r).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::empirical_covariance;
    use crate::design::{sample_basis_design, DesignSpec};

    fn setup(n: usize, seed: u64) -> (DesignSample, CovOperator, GramTransform) {
        let spec = DesignSpec::basis_expansion(2.0);
        let s = sample_basis_design(&spec, n, seed).unwrap();
        let cov = empirical_covariance(&s).unwrap();
        let t = GramTransform::build(&s, &cov).unwrap();
        (s, cov, t)
    }

    #[test]
    fn single_design_gives_identity() {
        let (_, _, t) = setup(1, 3);
        assert!((t.a()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(!t.flipped_last());
    }

    #[test]
    fn invariants_hold_at_n25() {
        let (_, _, t) = setup(25, 7);
        let r = t.check_invariants();
        assert!(r.orthogonality_error <= 1e-8);
        assert!(r.co_orthogonality_error <= 1e-8);
        assert!((r.determinant - 1.0).abs() <= 1e-6);
        assert!(r.qtq_offdiag_relative <= 1e-8);
        assert!(!t.flipped_last());
    }

    #[test]
    fn roundtrip_and_zero() {
        let (_, _, t) = setup(10, 2);
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let z = flr_to_whitenoise(&y, &t, 1.0).unwrap();
        let back = whitenoise_to_flr(&z, &t).unwrap();
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let zero = flr_to_whitenoise(&[0.0; 10], &t, 1.0).unwrap();
        assert!(zero.z.iter().all(|v| *v == 0.0));
        assert!(flr_to_whitenoise(&[0.0; 9], &t, 1.0).is_err());
    }

    #[test]
    fn noiseless_coordinates_match_drift() {
        let (s, cov, t) = setup(12, 5);
        let theta = GridFunction::from_fn(s.grid_size(), |x| (2.0 * x).cos() - x).unwrap();
        let y = simulate_flr(&s, &theta, 0.0, 1).unwrap();
        let z = flr_to_whitenoise(&y, &t, 0.0).unwrap();
        let direct = simulate_empirical_wn(&theta, &s, &cov, 0.0, 9).unwrap();
        for (a, b) in z.z.iter().zip(&direct.z) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn likelihood_reduction() {
        let (s, cov, t) = setup(8, 11);
        let theta = GridFunction::from_fn(s.grid_size(), |x| x * x).unwrap();
        let y = simulate_flr(&s, &theta, 0.7, 4).unwrap();
        let f = drift_coefficients(&cov, &theta).unwrap();
        let a = conditional_loglik(&y, &s, &theta, 0.7).unwrap();
        let b = reduced_loglik(&y, &t, &f, 0.7).unwrap();
        assert!((a - b).abs() < 1e-8);
        assert!(conditional_loglik(&y, &s, &theta, 0.0).is_err());
    }

    #[test]
    fn zero_residual_loglik() {
        let (s, _, _) = setup(1, 1);
        let theta = GridFunction::from_fn(s.grid_size(), |x| x).unwrap();
        let y = simulate_flr(&s, &theta, 0.0, 0).unwrap();
        let l1 = conditional_loglik(&y, &s, &theta, 1.3).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI * 1.3 * 1.3).ln();
        assert!((l1 - want).abs() < 1e-12);
        let l2 = conditional_loglik(&y, &s, &theta, 2.6).unwrap();
        assert!((l1 - l2 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_design_is_rejected() {
        let spec = DesignSpec::basis_expansion(2.0).with_truncation(4);
        let s = sample_basis_design(&spec, 6, 1).unwrap();
        let cov = empirical_covariance(&s).unwrap();
        assert!(matches!(
            GramTransform::build(&s, &cov),
            Err(Error::DegenerateDesign { rank: 4, n: 6 })
        ));
    }

    #[test]
    fn rendered_path_starts_at_zero() {
        let (s, cov, t) = setup(5, 2);
        let theta = GridFunction::from_fn(s.grid_size(), |x| x).unwrap();
        let y = simulate_flr(&s, &theta, 1.0, 3).unwrap();
        let z = flr_to_whitenoise(&y, &t, 1.0).unwrap();
        let p = render_path(&z, &cov, 1).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert!(p.values().iter().all(|v| v.is_finite()));
    }
}
