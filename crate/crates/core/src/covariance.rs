//! Covariance operators and their spectra.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::design::{weighted_values, DesignRepr, DesignSample};
use crate::error::{Error, Result};
use crate::function_space::{
    fmt_f64, fourier_table, trapezoid_weights, weighted_dot, Basis, BasisKind, GridFunction,
};

/// Eigenvalues below this multiple of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Size of the Fourier reference basis used to fix eigenfunction signs.
pub const SIGN_REFERENCE_SIZE: usize = 64;

#[derive(Debug, Clone)]
enum Kernel {
    /// `K(s,t) = (1/n) Σ X_i(s) X_i(t)`.
    Sample(DesignSample),
    /// Kernel values on the grid.
    Matrix(DMatrix<f64>),
    /// Only the eigenpairs are known.
    Spectral,
}

/// A covariance operator on `L2([0,1])` with its retained eigenpairs.
#[derive(Debug, Clone)]
pub struct CovOperator {
    grid_size: usize,
    eigenvalues: Vec<f64>,
    eigenfunctions: Basis,
    /// Column `k` holds the Fourier coefficients of `φ_k`, when exact.
    fourier_coords: Option<DMatrix<f64>>,
    kernel: Kernel,
    source_n: Option<usize>,
    /// Signed dual eigenvectors `V`, with `⟨X_i, φ̂_k⟩ = √(nλ̂_k) V_{ik}`,
    /// kept for a full-rank empirical operator.
    sample_vectors: Option<DMatrix<f64>>,
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

fn numerical_rank(values: &[f64]) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().take_while(|v| **v > RANK_TOLERANCE * top).count()
}

/// Index of the first entry of largest magnitude.
fn leading_index(c: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, v) in c.enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    best
}

fn fourier_matrix(j: usize, d: usize) -> Result<DMatrix<f64>> {
    let table = fourier_table(j, d)?;
    let mut m = DMatrix::zeros(j, d);
    for (r, f) in table.functions().iter().enumerate() {
        m.row_mut(r).copy_from_slice(f.values());
    }
    Ok(m)
}

fn functions_from_rows(m: &DMatrix<f64>) -> Vec<GridFunction> {
    m.row_iter()
        .map(|r| GridFunction::from_values(r.iter().copied().collect()))
        .collect()
}

/// Sign of each grid eigenfunction under the Fourier reference convention.
fn reference_signs(functions: &[GridFunction], d: usize) -> Result<Vec<f64>> {
    let j_ref = SIGN_REFERENCE_SIZE.min(d / 2).max(1);
    let table = fourier_table(j_ref, d)?;
    Ok(functions
        .iter()
        .map(|f| {
            let c: Vec<f64> = table
                .functions()
                .iter()
                .map(|psi| weighted_dot(psi.values(), f.values()))
                .collect();
            let i = leading_index(c.iter().copied());
            if c[i] < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect())
}

fn coordinate_signs(coords: &DMatrix<f64>) -> Vec<f64> {
    coords
        .column_iter()
        .map(|col| {
            let i = leading_index(col.iter().copied());
            if col[i] < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

impl CovOperator {
    /// Operator with eigenpairs `(λ_k, ψ_k)` over the leading Fourier functions.
    pub fn from_fourier_spectrum(eigenvalues: Vec<f64>, grid_size: usize) -> Result<Self> {
        let k = eigenvalues.len();
        check_spectrum(&eigenvalues)?;
        let table = fourier_table(k, grid_size)?;
        Ok(Self {
            grid_size,
            eigenvalues,
            eigenfunctions: Basis::new(BasisKind::Eigen, table.functions().to_vec())?,
            fourier_coords: Some(DMatrix::identity(k, k)),
            kernel: Kernel::Spectral,
            source_n: None,
            sample_vectors: None,
        })
    }

    /// Operator given by explicit eigenpairs; signs are normalized.
    pub fn from_eigenpairs(eigenvalues: Vec<f64>, functions: Vec<GridFunction>) -> Result<Self> {
        if eigenvalues.len() != functions.len() {
            return Err(Error::dim("eigenfunction count", eigenvalues.len(), functions.len()));
        }
        check_spectrum(&eigenvalues)?;
        let d = functions
            .first()
            .ok_or_else(|| Error::invalid("no eigenpairs"))?
            .grid_size();
        let signs = reference_signs(&functions, d)?;
        let functions = functions
            .iter()
            .zip(signs)
            .map(|(f, s)| f.scaled(s))
            .collect();
        Ok(Self {
            grid_size: d,
            eigenvalues,
            eigenfunctions: Basis::new(BasisKind::Eigen, functions)?,
            fourier_coords: None,
            kernel: Kernel::Spectral,
            source_n: None,
            sample_vectors: None,
        })
    }

    /// Eigen-solves a kernel sampled on the grid, via `W^{1/2} K W^{1/2}`.
    pub fn from_kernel(kernel: DMatrix<f64>) -> Result<Self> {
        let d = kernel.nrows();
        if kernel.ncols() != d {
            return Err(Error::dim("kernel columns", d, kernel.ncols()));
        }
        if d < 2 {
            return Err(Error::invalid("kernel grid needs at least 2 nodes"));
        }
        let sw: Vec<f64> = trapezoid_weights(d).iter().map(|w| w.sqrt()).collect();
        let b = DMatrix::from_fn(d, d, |i, j| {
            0.5 * (kernel[(i, j)] + kernel[(j, i)]) * sw[i] * sw[j]
        });
        let (values, vectors) = sorted_eigen(b);
        let r = numerical_rank(&values);
        let mut functions = Vec::with_capacity(r);
        for k in 0..r {
            let v: Vec<f64> = (0..d).map(|i| vectors[(i, k)] / sw[i]).collect();
            functions.push(GridFunction::from_values(v));
        }
        let signs = reference_signs(&functions, d)?;
        let functions = functions
            .iter()
            .zip(signs)
            .map(|(f, s)| f.scaled(s))
            .collect();
        Ok(Self {
            grid_size: d,
            eigenvalues: values[..r].to_vec(),
            eigenfunctions: Basis::new(BasisKind::Eigen, functions)?,
            fourier_coords: None,
            kernel: Kernel::Matrix(kernel),
            source_n: None,
            sample_vectors: None,
        })
    }

    /// Keeps the leading `k` eigenpairs; the kernel becomes spectral.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.rank() {
            return Err(Error::invalid(format!(
                "cannot keep {k} eigenpairs of an operator of rank {}",
                self.rank()
            )));
        }
        Ok(Self {
            grid_size: self.grid_size,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfunctions: Basis::new(
                BasisKind::Eigen,
                self.eigenfunctions.functions()[..k].to_vec(),
            )?,
            fourier_coords: self.fourier_coords.as_ref().map(|c| c.columns(0, k).into_owned()),
            kernel: Kernel::Spectral,
            source_n: self.source_n,
            sample_vectors: None,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Retained (nonzero) eigenvalues, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_k` for 1-based `k`, zero beyond the retained rank.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues.get(k.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn eigenfunctions(&self) -> &Basis {
        &self.eigenfunctions
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn fourier_coords(&self) -> Option<&DMatrix<f64>> {
        self.fourier_coords.as_ref()
    }

    /// Signed dual eigenvectors of a full-rank empirical operator.
    pub fn sample_vectors(&self) -> Option<&DMatrix<f64>> {
        self.sample_vectors.as_ref()
    }

    /// Sample size of an empirical operator.
    pub fn source_n(&self) -> Option<usize> {
        self.source_n
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if f.grid_size() != self.grid_size {
            return Err(Error::dim("grid size", self.grid_size, f.grid_size()));
        }
        Ok(())
    }

    /// `(⟨f, φ_1⟩, …, ⟨f, φ_r⟩)`.
    pub fn coefficients(&self, f: &GridFunction) -> Result<Vec<f64>> {
        self.check_grid(f)?;
        Ok(self
            .eigenfunctions
            .functions()
            .iter()
            .map(|phi| weighted_dot(phi.values(), f.values()))
            .collect())
    }

    fn spectral_apply(&self, f: &GridFunction, power: f64) -> Result<GridFunction> {
        let c = self.coefficients(f)?;
        let scaled: Vec<f64> = c
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * l.powf(power))
            .collect();
        self.eigenfunctions.reconstruct(&scaled)
    }

    /// `Γf` computed from the kernel representation.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check_grid(f)?;
        match &self.kernel {
            Kernel::Sample(s) => {
                let ip = s.inner_products(f)?;
                let n = s.n() as f64;
                let out = match s.repr() {
                    DesignRepr::Grid(m) => m.transpose() * ip / n,
                    DesignRepr::Fourier(c) => {
                        let coeffs = c.transpose() * ip / n;
                        let psi = fourier_matrix(c.ncols(), self.grid_size)?;
                        psi.transpose() * coeffs
                    }
                };
                Ok(GridFunction::from_values(out.iter().copied().collect()))
            }
            Kernel::Matrix(k) => {
                let wf = DVector::from_vec(weighted_values(f.values()));
                let out = k * wf;
                Ok(GridFunction::from_values(out.iter().copied().collect()))
            }
            Kernel::Spectral => self.spectral_apply(f, 1.0),
        }
    }

    /// `Γ^{1/2} f` over the retained eigenpairs.
    pub fn sqrt_apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.spectral_apply(f, 0.5)
    }

    /// Kernel values `K(t_i, t_j)` on the grid.
    pub fn kernel_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.grid_size;
        match &self.kernel {
            Kernel::Sample(s) => {
                let n = s.n() as f64;
                Ok(match s.repr() {
                    DesignRepr::Grid(m) => m.transpose() * m / n,
                    DesignRepr::Fourier(c) => {
                        let psi = fourier_matrix(c.ncols(), d)?;
                        let x = c * psi;
                        x.transpose() * x / n
                    }
                })
            }
            Kernel::Matrix(k) => Ok(k.clone()),
            Kernel::Spectral => {
                let mut phi = DMatrix::zeros(self.rank(), d);
                for (r, f) in self.eigenfunctions.functions().iter().enumerate() {
                    let s = self.eigenvalues[r].sqrt();
                    for (c, v) in f.values().iter().enumerate() {
                        phi[(r, c)] = s * v;
                    }
                }
                Ok(phi.transpose() * phi)
            }
        }
    }

    /// Kernel in Fourier coefficient space (`J × J`), when exact coordinates exist.
    fn coefficient_kernel(&self, j: usize) -> Option<DMatrix<f64>> {
        let c = self.fourier_coords.as_ref()?;
        let mut padded = DMatrix::zeros(j, c.ncols());
        padded.rows_mut(0, c.nrows()).copy_from(c);
        let scaled = DMatrix::from_fn(j, c.ncols(), |r, k| padded[(r, k)] * self.eigenvalues[k]);
        Some(scaled * padded.transpose())
    }

    pub fn write_csv(&self, eigenvalue_path: &Path, eigenfunction_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(eigenvalue_path)?;
        w.write_record(["k", "lambda"])?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            w.write_record([(k + 1).to_string(), fmt_f64(*l)])?;
        }
        w.flush()?;
        self.eigenfunctions.write_csv(eigenfunction_path)
    }
}

fn check_spectrum(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
    }
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("eigenvalues must be non-increasing"));
    }
    Ok(())
}

/// Which eigen-solve produced an empirical operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// `n × n` Gram matrix `⟨X_i, X_j⟩ / n`.
    Dual,
    /// Coefficient-space or grid covariance matrix.
    Primal,
}

/// The route `empirical_covariance` takes for a sample.
pub fn route_for(sample: &DesignSample) -> Route {
    let width = match sample.repr() {
        DesignRepr::Fourier(c) => c.ncols(),
        DesignRepr::Grid(m) => m.ncols(),
    };
    if sample.n() <= width {
        Route::Dual
    } else {
        Route::Primal
    }
}

/// `Γ̂ = (1/n) Σ X_i ⊗ X_i` with its eigendecomposition.
///
/// When the rank equals `n` the dual eigenvector matrix has determinant +1
/// after sign normalization; the last eigenfunction absorbs the flip.
pub fn empirical_covariance(sample: &DesignSample) -> Result<CovOperator> {
    let n = sample.n();
    if n == 0 {
        return Err(Error::invalid("empty sample"));
    }
    let d = sample.grid_size();
    let nf = n as f64;
    let route = route_for(sample);
    let (eigenvalues, functions, coords, dual_v) = match (sample.repr(), route) {
        (DesignRepr::Fourier(c), Route::Dual) => {
            let (mu, v) = dual_eigen(sample.gram() / nf)?;
            let mut coords = c.transpose() * &v;
            for (k, m) in mu.iter().enumerate() {
                coords.column_mut(k).scale_mut(1.0 / (nf * m).sqrt());
            }
            (mu, None, Some(coords), Some(v))
        }
        (DesignRepr::Fourier(c), Route::Primal) => {
            let s = crate::design::symmetrize(c.transpose() * c / nf);
            let (values, vectors) = sorted_eigen(s);
            let r = numerical_rank(&values);
            let mut coords = vectors.columns(0, r).into_owned();
            for (k, sign) in coordinate_signs(&coords).into_iter().enumerate() {
                coords.column_mut(k).scale_mut(sign);
            }
            (values[..r].to_vec(), None, Some(coords), None)
        }
        (DesignRepr::Grid(m), Route::Dual) => {
            let (mu, v) = dual_eigen(sample.gram() / nf)?;
            let mut phi = v.transpose() * m;
            for (k, m) in mu.iter().enumerate() {
                phi.row_mut(k).scale_mut(1.0 / (nf * m).sqrt());
            }
            (mu, Some(functions_from_rows(&phi)), None, Some(v))
        }
        (DesignRepr::Grid(m), Route::Primal) => {
            let op = CovOperator::from_kernel(m.transpose() * m / nf)?;
            (op.eigenvalues, Some(op.eigenfunctions.functions().to_vec()), None, None)
        }
    };

    let functions = match (functions, &coords) {
        (Some(f), _) => f,
        (None, Some(c)) => {
            let psi = fourier_matrix(c.nrows(), d)?;
            functions_from_rows(&(c.transpose() * psi))
        }
        (None, None) => unreachable!("every route yields functions or coordinates"),
    };

    // Signs: the Fourier reference convention, then the determinant rule.
    let mut signs = match &coords {
        Some(c) => coordinate_signs(c),
        None => reference_signs(&functions, d)?,
    };
    let r = eigenvalues.len();
    let mut sample_vectors = dual_v.filter(|_| r == n);
    if let Some(v) = &sample_vectors {
        // On the dual route A equals the eigenvector matrix V, so
        // det A = det V · Π signs.
        let det_v = v.determinant();
        let prod: f64 = signs.iter().product();
        if det_v * prod < 0.0 {
            signs[r - 1] = -signs[r - 1];
        }
    }
    if let Some(v) = sample_vectors.as_mut() {
        for (k, s) in signs.iter().enumerate() {
            v.column_mut(k).scale_mut(*s);
        }
    }
    let functions: Vec<GridFunction> = functions
        .iter()
        .zip(&signs)
        .map(|(f, s)| f.scaled(*s))
        .collect();
    let coords = coords.map(|mut c| {
        for (k, s) in signs.iter().enumerate() {
            c.column_mut(k).scale_mut(*s);
        }
        c
    });

    Ok(CovOperator {
        grid_size: d,
        eigenvalues,
        eigenfunctions: Basis::new(BasisKind::Eigen, functions)?,
        fourier_coords: coords,
        kernel: Kernel::Sample(sample.clone()),
        source_n: Some(n),
        sample_vectors,
    })
}

fn dual_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (values, vectors) = sorted_eigen(m);
    let r = numerical_rank(&values);
    if r == 0 {
        return Err(Error::DegenerateDesign { rank: 0, n: values.len() });
    }
    Ok((values[..r].to_vec(), vectors.columns(0, r).into_owned()))
}

/// Nonzero eigenvalues of `Γ̂` only.
pub fn empirical_spectrum(sample: &DesignSample) -> Result<Vec<f64>> {
    let n = sample.n();
    if n == 0 {
        return Err(Error::invalid("empty sample"));
    }
    let nf = n as f64;
    let values = match (sample.repr(), route_for(sample)) {
        (_, Route::Dual) => sample.gram().symmetric_eigenvalues() / nf,
        (DesignRepr::Fourier(c), Route::Primal) => {
            crate::design::symmetrize(c.transpose() * c / nf).symmetric_eigenvalues()
        }
        (DesignRepr::Grid(m), Route::Primal) => {
            let sw: Vec<f64> = trapezoid_weights(m.ncols()).iter().map(|w| w.sqrt()).collect();
            let mut ms = m.clone();
            for (mut col, s) in ms.column_iter_mut().zip(&sw) {
                col *= *s;
            }
            crate::design::symmetrize(ms.transpose() * ms / nf).symmetric_eigenvalues()
        }
    };
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let r = numerical_rank(&v);
    v.truncate(r);
    Ok(v)
}

/// Hilbert–Schmidt norm of `a − b`.
pub fn hs_distance(a: &CovOperator, b: &CovOperator) -> Result<f64> {
    if a.grid_size != b.grid_size {
        return Err(Error::dim("grid size", a.grid_size, b.grid_size));
    }
    if let (Some(ca), Some(cb)) = (&a.fourier_coords, &b.fourier_coords) {
        let j = ca.nrows().max(cb.nrows());
        let ka = a.coefficient_kernel(j).expect("coordinates present");
        let kb = b.coefficient_kernel(j).expect("coordinates present");
        return Ok((ka - kb).norm());
    }
    let diff = a.kernel_matrix()? - b.kernel_matrix()?;
    let w = trapezoid_weights(a.grid_size);
    let mut total = 0.0;
    for j in 0..diff.ncols() {
        for i in 0..diff.nrows() {
            total += w[i] * w[j] * diff[(i, j)] * diff[(i, j)];
        }
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `min_j (λ_j − λ_{j+1}) j^{α+1}` over consecutive retained pairs.
    pub min_scaled_gap: f64,
    /// The 1-based `j` attaining the minimum.
    pub argmin: usize,
    pub scaled_gaps: Vec<f64>,
    pub threshold: f64,
    pub flagged: bool,
}

/// Eigenvalue spacing diagnostic; flags when the scaled gap drops below `threshold`.
pub fn eigen_gap_check(op: &CovOperator, alpha: f64, threshold: f64) -> GapReport {
    let scaled_gaps: Vec<f64> = op
        .eigenvalues
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[0] - w[1]) * ((i + 1) as f64).powf(alpha + 1.0))
        .collect();
    let (argmin, min_scaled_gap) = scaled_gaps
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| {
            if *v < bv {
                (i + 1, *v)
            } else {
                (bi, bv)
            }
        });
    GapReport {
        min_scaled_gap,
        argmin,
        scaled_gaps,
        threshold,
        flagged: min_scaled_gap < threshold,
    }
}
