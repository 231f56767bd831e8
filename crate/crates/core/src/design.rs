//! Random design functions `X_1, …, X_n` with known covariance operators.
//!
//! Two families are provided. The basis expansion
//! `X = Σ_{j≤J} j^{-α/2} G_j φ_j` over the Fourier basis has covariance
//! eigenpairs `(j^{-α}, φ_j)` exactly; its samples are stored as Fourier
//! coefficients so that inner products and covariances never touch the grid.
//! The integrated Gaussian process `X(t) = ∫_0^t σ_X(s) dW(s)` is stored on the
//! grid.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::CovOperator;
use crate::error::{Error, Result};
use crate::function_space::{
    fmt_f64, fourier_table, grid_nodes, sidecar_path, trapezoid_weights, weighted_dot,
    GridFunction, DEFAULT_GRID_SIZE,
};
use crate::rng;

/// Upper bound on the default expansion length.
pub const MAX_DEFAULT_TRUNCATION: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    BasisExpansion,
    IntegratedGaussian,
}

/// Law of the expansion coefficients `G_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum CoefficientLaw {
    Uniform { lo: f64, hi: f64 },
    Triangular { half_width: f64 },
}

impl Default for CoefficientLaw {
    fn default() -> Self {
        let a = 3f64.sqrt();
        CoefficientLaw::Uniform { lo: -a, hi: a }
    }
}

impl CoefficientLaw {
    fn mean(&self) -> f64 {
        match *self {
            CoefficientLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            CoefficientLaw::Triangular { .. } => 0.0,
        }
    }

    fn variance(&self) -> f64 {
        match *self {
            CoefficientLaw::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            CoefficientLaw::Triangular { half_width } => half_width * half_width / 6.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bounded = match *self {
            CoefficientLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            CoefficientLaw::Triangular { half_width } => half_width.is_finite() && half_width > 0.0,
        };
        if !bounded {
            return Err(Error::Spec(format!(
                "coefficient law {self:?} must be a continuous law on a compact interval"
            )));
        }
        if self.mean().abs() > 1e-12 {
            return Err(Error::Spec(format!("coefficient law has mean {} (need 0)", self.mean())));
        }
        if (self.variance() - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!(
                "coefficient law has variance {} (need 1)",
                self.variance()
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut rng::Rng) -> f64 {
        match *self {
            CoefficientLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CoefficientLaw::Triangular { half_width } => {
                half_width * (rng.random::<f64>() - rng.random::<f64>())
            }
        }
    }
}

/// Parameters of a synthetic design process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    /// Eigenvalue decay exponent; only used by the basis expansion.
    pub alpha: f64,
    /// Expansion length `J`; `None` selects `min(2n, 128)`.
    pub truncation: Option<usize>,
    pub coefficient_law: CoefficientLaw,
    /// Diffusion `σ_X` on the grid; `None` means `σ_X ≡ 1`.
    #[serde(skip)]
    pub diffusion: Option<GridFunction>,
    pub grid_size: usize,
}

impl DesignSpec {
    pub fn basis_expansion(alpha: f64) -> Self {
        Self {
            kind: DesignKind::BasisExpansion,
            alpha,
            truncation: None,
            coefficient_law: CoefficientLaw::default(),
            diffusion: None,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn integrated_gaussian() -> Self {
        Self {
            kind: DesignKind::IntegratedGaussian,
            alpha: 2.0,
            truncation: None,
            coefficient_law: CoefficientLaw::default(),
            diffusion: None,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn with_truncation(mut self, j: usize) -> Self {
        self.truncation = Some(j);
        self
    }

    pub fn with_grid_size(mut self, d: usize) -> Self {
        self.grid_size = d;
        self
    }

    pub fn with_diffusion(mut self, sigma_x: GridFunction) -> Self {
        self.grid_size = sigma_x.grid_size();
        self.diffusion = Some(sigma_x);
        self
    }

    /// Expansion length used for a sample of size `n`.
    pub fn truncation_for(&self, n: usize) -> usize {
        self.truncation
            .unwrap_or_else(|| (2 * n).clamp(1, MAX_DEFAULT_TRUNCATION))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Spec(format!("grid size {} < 2", self.grid_size)));
        }
        match self.kind {
            DesignKind::BasisExpansion => {
                if !(self.alpha >= 2.0) || !self.alpha.is_finite() {
                    return Err(Error::Spec(format!("alpha = {} (need alpha >= 2)", self.alpha)));
                }
                if self.truncation == Some(0) {
                    return Err(Error::Spec("truncation must be positive".into()));
                }
                self.coefficient_law.validate()
            }
            DesignKind::IntegratedGaussian => {
                if let Some(s) = &self.diffusion {
                    if s.grid_size() != self.grid_size {
                        return Err(Error::Spec("diffusion grid differs from grid_size".into()));
                    }
                    if let Some(v) = s.values().iter().find(|v| **v <= 0.0) {
                        return Err(Error::Spec(format!(
                            "diffusion must be positive everywhere, found {v}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn diffusion_values(&self) -> Vec<f64> {
        match &self.diffusion {
            Some(s) => s.values().to_vec(),
            None => vec![1.0; self.grid_size],
        }
    }

    fn constant_diffusion(&self) -> Option<f64> {
        match &self.diffusion {
            None => Some(1.0),
            Some(s) => {
                let v0 = s.values()[0];
                s.values().iter().all(|v| *v == v0).then_some(v0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum DesignRepr {
    /// Row `i` holds `X_i` on the grid.
    Grid(DMatrix<f64>),
    /// Row `i` holds the Fourier coefficients of `X_i`.
    Fourier(DMatrix<f64>),
}

/// `n` design functions sharing one grid.
#[derive(Debug, Clone)]
pub struct DesignSample {
    grid_size: usize,
    repr: DesignRepr,
}

impl DesignSample {
    pub fn from_functions(functions: &[GridFunction]) -> Result<Self> {
        let first = functions
            .first()
            .ok_or_else(|| Error::invalid("empty design sample"))?;
        let d = first.grid_size();
        let mut m = DMatrix::zeros(functions.len(), d);
        for (i, f) in functions.iter().enumerate() {
            if f.grid_size() != d {
                return Err(Error::dim("design grid size", d, f.grid_size()));
            }
            m.row_mut(i).copy_from_slice(f.values());
        }
        Ok(Self {
            grid_size: d,
            repr: DesignRepr::Grid(m),
        })
    }

    /// Sample given by Fourier coefficients (`n × J`) on a grid of `grid_size` nodes.
    pub fn from_fourier_coeffs(coeffs: DMatrix<f64>, grid_size: usize) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::invalid("empty design sample"));
        }
        if grid_size < 2 * coeffs.ncols() {
            return Err(Error::Resolution {
                count: coeffs.ncols(),
                grid_size,
                needed: 2 * coeffs.ncols(),
            });
        }
        Ok(Self {
            grid_size,
            repr: DesignRepr::Fourier(coeffs),
        })
    }

    pub fn n(&self) -> usize {
        match &self.repr {
            DesignRepr::Grid(m) | DesignRepr::Fourier(m) => m.nrows(),
        }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn repr(&self) -> &DesignRepr {
        &self.repr
    }

    pub fn fourier_coeffs(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            DesignRepr::Fourier(c) => Some(c),
            DesignRepr::Grid(_) => None,
        }
    }

    pub fn function(&self, i: usize) -> GridFunction {
        match &self.repr {
            DesignRepr::Grid(m) => GridFunction::from_values(m.row(i).iter().copied().collect()),
            DesignRepr::Fourier(c) => {
                let basis = fourier_table(c.ncols(), self.grid_size)
                    .expect("resolution checked at construction");
                let coeffs: Vec<f64> = c.row(i).iter().copied().collect();
                basis.reconstruct(&coeffs).expect("coefficient count fits basis")
            }
        }
    }

    pub fn functions(&self) -> Vec<GridFunction> {
        (0..self.n()).map(|i| self.function(i)).collect()
    }

    /// Rows `range` as a new sample.
    pub fn rows(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n() {
            return Err(Error::invalid(format!(
                "row range {range:?} invalid for a sample of {}",
                self.n()
            )));
        }
        let len = range.end - range.start;
        let repr = match &self.repr {
            DesignRepr::Grid(m) => DesignRepr::Grid(m.rows(range.start, len).into_owned()),
            DesignRepr::Fourier(c) => DesignRepr::Fourier(c.rows(range.start, len).into_owned()),
        };
        Ok(Self {
            grid_size: self.grid_size,
            repr,
        })
    }

    /// `(⟨X_1, f⟩, …, ⟨X_n, f⟩)`.
    pub fn inner_products(&self, f: &GridFunction) -> Result<DVector<f64>> {
        if f.grid_size() != self.grid_size {
            return Err(Error::dim("grid size", self.grid_size, f.grid_size()));
        }
        Ok(match &self.repr {
            DesignRepr::Grid(m) => {
                let wf = weighted_values(f.values());
                m * DVector::from_vec(wf)
            }
            DesignRepr::Fourier(c) => {
                let basis = fourier_table(c.ncols(), self.grid_size)?;
                let proj: Vec<f64> = basis
                    .functions()
                    .iter()
                    .map(|phi| weighted_dot(phi.values(), f.values()))
                    .collect();
                c * DVector::from_vec(proj)
            }
        })
    }

    /// Gram matrix `⟨X_i, X_j⟩`.
    pub fn gram(&self) -> DMatrix<f64> {
        match &self.repr {
            DesignRepr::Grid(m) => {
                let w = trapezoid_weights(self.grid_size);
                let mut mw = m.clone();
                for (mut col, wt) in mw.column_iter_mut().zip(&w) {
                    col *= *wt;
                }
                let g = &mw * m.transpose();
                symmetrize(g)
            }
            DesignRepr::Fourier(c) => symmetrize(c * c.transpose()),
        }
    }

    pub fn norms(&self) -> Vec<f64> {
        match &self.repr {
            DesignRepr::Grid(m) => m
                .row_iter()
                .map(|r| {
                    let v: Vec<f64> = r.iter().copied().collect();
                    weighted_dot(&v, &v).sqrt()
                })
                .collect(),
            DesignRepr::Fourier(c) => c.row_iter().map(|r| r.norm()).collect(),
        }
    }

    pub fn mean_function(&self) -> GridFunction {
        let n = self.n() as f64;
        match &self.repr {
            DesignRepr::Grid(m) => {
                GridFunction::from_values(m.row_sum().iter().map(|v| v / n).collect())
            }
            DesignRepr::Fourier(c) => {
                let mean: Vec<f64> = c.row_sum().iter().map(|v| v / n).collect();
                fourier_table(c.ncols(), self.grid_size)
                    .and_then(|b| b.reconstruct(&mean))
                    .expect("resolution checked at construction")
            }
        }
    }

    /// One row per grid node, one column per `X_i`, plus a JSON sidecar.
    pub fn write_csv(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n()).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        let columns = self.functions();
        for (k, t) in grid_nodes(self.grid_size).iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(columns.iter().map(|f| fmt_f64(f.values()[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        let side = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(side, meta)?;
        Ok(())
    }
}

pub(crate) fn weighted_values(v: &[f64]) -> Vec<f64> {
    trapezoid_weights(v.len())
        .iter()
        .zip(v)
        .map(|(w, x)| w * x)
        .collect()
}

pub(crate) fn symmetrize(g: DMatrix<f64>) -> DMatrix<f64> {
    let gt = g.transpose();
    (g + gt) * 0.5
}

/// `X_i = Σ_{j≤J} j^{-α/2} G_{ij} φ_j` over the Fourier basis.
pub fn sample_basis_design(spec: &DesignSpec, n: usize, seed: u64) -> Result<DesignSample> {
    spec.validate()?;
    if spec.kind != DesignKind::BasisExpansion {
        return Err(Error::Spec("sample_basis_design needs a basis-expansion spec".into()));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let j = spec.truncation_for(n);
    let mut rng = rng::from_seed(seed);
    let scales: Vec<f64> = (1..=j).map(|k| (k as f64).powf(-spec.alpha / 2.0)).collect();
    let mut c = DMatrix::zeros(n, j);
    for i in 0..n {
        for (k, s) in scales.iter().enumerate() {
            c[(i, k)] = s * spec.coefficient_law.draw(&mut rng);
        }
    }
    DesignSample::from_fourier_coeffs(c, spec.grid_size)
}

/// Left-point discretization of `X(t) = ∫_0^t σ_X(s) dW(s)`.
pub fn sample_gaussian_design(spec: &DesignSpec, n: usize, seed: u64) -> Result<DesignSample> {
    spec.validate()?;
    if spec.kind != DesignKind::IntegratedGaussian {
        return Err(Error::Spec("sample_gaussian_design needs an integrated-gaussian spec".into()));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let d = spec.grid_size;
    let sigma = spec.diffusion_values();
    let sqrt_h = (1.0 / (d - 1) as f64).sqrt();
    let mut rng = rng::from_seed(seed);
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut x = 0.0;
        for k in 1..d {
            let dw: f64 = StandardNormal.sample(&mut rng);
            x += sigma[k - 1] * sqrt_h * dw;
            m[(i, k)] = x;
        }
    }
    Ok(DesignSample {
        grid_size: d,
        repr: DesignRepr::Grid(m),
    })
}

/// Draws a sample of whichever kind `spec` describes.
pub fn sample_design(spec: &DesignSpec, n: usize, seed: u64) -> Result<DesignSample> {
    match spec.kind {
        DesignKind::BasisExpansion => sample_basis_design(spec, n, seed),
        DesignKind::IntegratedGaussian => sample_gaussian_design(spec, n, seed),
    }
}

/// Leading `k` eigenpairs of the design covariance operator.
pub fn true_covariance(spec: &DesignSpec, k: usize) -> Result<CovOperator> {
    spec.validate()?;
    if k == 0 {
        return Err(Error::invalid("need at least one eigenpair"));
    }
    let d = spec.grid_size;
    match spec.kind {
        DesignKind::BasisExpansion => {
            let j = spec.truncation.unwrap_or(MAX_DEFAULT_TRUNCATION);
            if k > j {
                return Err(Error::invalid(format!("K = {k} exceeds the truncation J = {j}")));
            }
            let lambdas: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-spec.alpha)).collect();
            CovOperator::from_fourier_spectrum(lambdas, d)
        }
        DesignKind::IntegratedGaussian => match spec.constant_diffusion() {
            Some(c) => {
                let lambdas: Vec<f64> = (1..=k)
                    .map(|j| c * c / (PI * PI * (j as f64 - 0.5).powi(2)))
                    .collect();
                let functions = (1..=k)
                    .map(|j| {
                        GridFunction::from_fn(d, |t| {
                            std::f64::consts::SQRT_2 * ((j as f64 - 0.5) * PI * t).sin()
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                CovOperator::from_eigenpairs(lambdas, functions)
            }
            None => {
                let kernel = integrated_gaussian_kernel(&spec.diffusion_values());
                CovOperator::from_kernel(kernel)?.truncated(k)
            }
        },
    }
}

/// `K(s,t) = Σ_{l < min(i_s, i_t)} σ_X(t_l)² h`, the covariance of the
/// left-point discretization.
pub fn integrated_gaussian_kernel(sigma: &[f64]) -> DMatrix<f64> {
    let d = sigma.len();
    let h = 1.0 / (d - 1) as f64;
    let mut cum = vec![0.0; d];
    for k in 1..d {
        cum[k] = cum[k - 1] + sigma[k - 1] * sigma[k - 1] * h;
    }
    DMatrix::from_fn(d, d, |i, j| cum[i.min(j)])
}

#[derive(Debug, Clone, Serialize)]
pub struct TailFrequency {
    pub x: f64,
    pub frequency: f64,
}

/// Diagnostics for the tail, centering and rank requirements on the design law.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionXReport {
    pub n: usize,
    pub tail: Vec<TailFrequency>,
    pub mean_norm: f64,
    /// `E‖X‖ / √n`, estimated by the sample mean of the norms.
    pub mean_norm_scale: f64,
    pub gram_rank: usize,
    pub full_rank: bool,
    /// Set when the expansion length is below `n`, which caps the rank.
    pub truncation_limits_rank: bool,
    /// Set when fewer than 100 designs were supplied.
    pub small_sample: bool,
}

pub fn verify_condition_x(spec: &DesignSpec, sample: &DesignSample) -> Result<ConditionXReport> {
    let n = sample.n();
    let norms = sample.norms();
    let mean_abs = norms.iter().sum::<f64>() / n as f64;
    let rms = (norms.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let tail = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0]
        .iter()
        .map(|c| {
            let x = c * rms;
            let hits = norms.iter().filter(|v| **v >= x).count();
            TailFrequency {
                x,
                frequency: hits as f64 / n as f64,
            }
        })
        .collect();
    let mean = sample.mean_function();
    let mean_norm = crate::function_space::norm(&mean, 2.0)?;

    let gram = sample.gram();
    let eig = gram.symmetric_eigenvalues();
    let top = eig.iter().fold(0.0f64, |m, v| m.max(*v));
    let gram_rank = eig.iter().filter(|v| **v > 1e-10 * top).count();
    let expansion = match sample.repr() {
        DesignRepr::Fourier(c) => Some(c.ncols()),
        DesignRepr::Grid(_) => None,
    };
    let truncation_limits_rank = spec.kind == DesignKind::BasisExpansion
        && expansion.is_some_and(|j| j < n);
    Ok(ConditionXReport {
        n,
        tail,
        mean_norm,
        mean_norm_scale: mean_abs / (n as f64).sqrt(),
        gram_rank,
        full_rank: gram_rank == n,
        truncation_limits_rank,
        small_sample: n < 100,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::{inner_product, norm};

    #[test]
    fn degenerate_law_is_rejected() {
        let mut spec = DesignSpec::basis_expansion(2.0);
        spec.coefficient_law = CoefficientLaw::Uniform { lo: 0.0, hi: 0.0 };
        assert!(matches!(sample_basis_design(&spec, 5, 1), Err(Error::Spec(_))));
        spec.coefficient_law = CoefficientLaw::Uniform { lo: -1.0, hi: 1.0 };
        assert!(spec.validate().is_err());
        spec.coefficient_law = CoefficientLaw::Triangular {
            half_width: 6f64.sqrt(),
        };
        assert!(spec.validate().is_ok());
        let low_alpha = DesignSpec::basis_expansion(1.5);
        assert!(low_alpha.validate().is_err());
    }

    #[test]
    fn single_draw_single_coefficient() {
        let spec = DesignSpec::basis_expansion(2.0).with_truncation(1);
        let s = sample_basis_design(&spec, 1, 9).unwrap();
        let g = s.fourier_coeffs().unwrap()[(0, 0)];
        assert!(g.abs() <= 3f64.sqrt());
        let x = s.function(0);
        assert!((norm(&x, 2.0).unwrap() - g.abs()).abs() < 1e-12);
    }

    #[test]
    fn basis_design_is_seed_deterministic() {
        let spec = DesignSpec::basis_expansion(2.0);
        let a = sample_basis_design(&spec, 20, 3).unwrap();
        let b = sample_basis_design(&spec, 20, 3).unwrap();
        let c = sample_basis_design(&spec, 20, 4).unwrap();
        assert_eq!(a.fourier_coeffs(), b.fourier_coeffs());
        assert_ne!(a.fourier_coeffs(), c.fourier_coeffs());
    }

    #[test]
    fn inner_products_agree_between_representations() {
        let spec = DesignSpec::basis_expansion(2.0).with_grid_size(256);
        let s = sample_basis_design(&spec, 6, 11).unwrap();
        let grid = DesignSample::from_functions(&s.functions()).unwrap();
        let f = GridFunction::from_fn(256, |t| (3.0 * t).cos() + t).unwrap();
        let a = s.inner_products(&f).unwrap();
        let b = grid.inner_products(&f).unwrap();
        assert!((&a - &b).amax() < 1e-12);
        assert!((s.gram() - grid.gram()).amax() < 1e-12);
        for i in 0..6 {
            let direct = inner_product(&s.function(i), &f).unwrap();
            assert!((direct - a[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_design_starts_at_zero_and_rejects_bad_diffusion() {
        let spec = DesignSpec::integrated_gaussian().with_grid_size(65);
        let s = sample_gaussian_design(&spec, 4, 2).unwrap();
        for i in 0..4 {
            assert_eq!(s.function(i).values()[0], 0.0);
        }
        let zero = GridFunction::zeros(65).unwrap();
        let bad = DesignSpec::integrated_gaussian().with_diffusion(zero);
        assert!(matches!(sample_gaussian_design(&bad, 4, 2), Err(Error::Spec(_))));
    }

    #[test]
    fn true_covariance_basis_spectrum() {
        let spec = DesignSpec::basis_expansion(2.0).with_truncation(16).with_grid_size(64);
        let cov = true_covariance(&spec, 4).unwrap();
        let want = [1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0];
        for (a, b) in cov.eigenvalues().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(true_covariance(&spec, 17).is_err());
        for w in cov.eigenvalues().windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn brownian_first_eigenvalue_matches_kernel_solve() {
        let d = 257;
        let spec = DesignSpec::integrated_gaussian().with_grid_size(d);
        let analytic = true_covariance(&spec, 3).unwrap();
        assert!((analytic.eigenvalues()[0] - 4.0 / (PI * PI)).abs() < 1e-15);
        let solved = CovOperator::from_kernel(integrated_gaussian_kernel(&vec![1.0; d])).unwrap();
        assert!((solved.eigenvalues()[0] - 4.0 / (PI * PI)).abs() < 1e-3);
        for w in solved.eigenvalues()[..10].windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn condition_x_rank_reporting() {
        let spec = DesignSpec::basis_expansion(2.0);
        let s = sample_basis_design(&spec, 100, 5).unwrap();
        let r = verify_condition_x(&spec, &s).unwrap();
        assert_eq!(r.gram_rank, 100);
        assert!(r.full_rank && !r.truncation_limits_rank && !r.small_sample);

        let short = spec.clone().with_truncation(40);
        let s = sample_basis_design(&short, 120, 5).unwrap();
        let r = verify_condition_x(&short, &s).unwrap();
        assert_eq!(r.gram_rank, 40);
        assert!(!r.full_rank && r.truncation_limits_rank);
        assert!(r.tail.windows(2).all(|w| w[0].frequency >= w[1].frequency));
    }
}
