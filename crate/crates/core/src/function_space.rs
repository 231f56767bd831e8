//! Grid arithmetic for `L2([0,1])`.
//!
//! Functions are sampled on `D` equispaced nodes `t_i = i/(D-1)` (both
//! endpoints included) and integrated with the composite trapezoid rule. The
//! trapezoid rule on this grid integrates trigonometric polynomials of degree
//! below `D-1` exactly, so the Fourier basis is orthonormal to machine
//! precision whenever `D >= 2J`.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 1024;

/// Node positions of a grid with `d` nodes.
pub fn grid_nodes(d: usize) -> Vec<f64> {
    let h = 1.0 / (d - 1) as f64;
    (0..d).map(|i| i as f64 * h).collect()
}

/// Trapezoid weights of a grid with `d` nodes.
pub fn trapezoid_weights(d: usize) -> Vec<f64> {
    let h = 1.0 / (d - 1) as f64;
    let mut w = vec![h; d];
    w[0] = 0.5 * h;
    w[d - 1] = 0.5 * h;
    w
}

/// A real function on `[0,1]` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "grid needs at least 2 nodes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {i}")));
        }
        Ok(Self { values })
    }

    /// Unchecked constructor for values produced by arithmetic on valid inputs.
    pub(crate) fn from_values(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        Self { values }
    }

    pub fn from_fn(d: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 nodes, got {d}")));
        }
        Self::new(grid_nodes(d).into_iter().map(f).collect())
    }

    pub fn constant(d: usize, c: f64) -> Result<Self> {
        Self::from_fn(d, |_| c)
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::constant(d, 0.0)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_values(self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        check_same_grid(self, other)?;
        Ok(Self::from_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "value"])?;
        for (t, v) in grid_nodes(self.grid_size()).iter().zip(&self.values) {
            w.write_record([fmt_f64(*t), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec
                .get(1)
                .ok_or_else(|| Error::invalid("missing value column"))?
                .parse()
                .map_err(|e| Error::invalid(format!("bad value: {e}")))?;
            values.push(v);
        }
        Self::new(values)
    }
}

/// Shortest round-trip formatting, so CSV bodies are byte-stable.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn check_same_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid_size() != g.grid_size() {
        return Err(Error::dim("grid size", f.grid_size(), g.grid_size()));
    }
    Ok(())
}

/// Trapezoid approximation of `∫ f g`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(weighted_dot(&f.values, &g.values))
}

/// Trapezoid-weighted dot product of two equally long node vectors.
pub(crate) fn weighted_dot(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let interior: f64 = a[1..d - 1]
        .iter()
        .zip(&b[1..d - 1])
        .map(|(x, y)| x * y)
        .sum();
    let ends = 0.5 * (a[0] * b[0] + a[d - 1] * b[d - 1]);
    (interior + ends) / (d - 1) as f64
}

/// Quadrature `L_p` norm for `p ∈ {1, 2, ∞}`.
pub fn norm(f: &GridFunction, p: f64) -> Result<f64> {
    if p == 1.0 {
        let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
        let ones = vec![1.0; abs.len()];
        Ok(weighted_dot(&abs, &ones))
    } else if p == 2.0 {
        Ok(weighted_dot(&f.values, &f.values).max(0.0).sqrt())
    } else if p == f64::INFINITY {
        Ok(f.values.iter().fold(0.0, |m, v| m.max(v.abs())))
    } else {
        Err(Error::invalid(format!("unsupported norm exponent p = {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Fourier,
    Eigen,
    Custom,
}

/// A finite family of grid functions, orthonormal for the built-in kinds.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    functions: Vec<GridFunction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisMeta {
    kind: BasisKind,
    count: usize,
    grid_size: usize,
}

impl Basis {
    pub fn new(kind: BasisKind, functions: Vec<GridFunction>) -> Result<Self> {
        if let Some(first) = functions.first() {
            for f in &functions[1..] {
                check_same_grid(first, f)?;
            }
        }
        Ok(Self { kind, functions })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn count(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn grid_size(&self) -> Option<usize> {
        self.functions.first().map(GridFunction::grid_size)
    }

    pub fn functions(&self) -> &[GridFunction] {
        &self.functions
    }

    pub fn get(&self, k: usize) -> &GridFunction {
        &self.functions[k]
    }

    /// Matrix of inner products `⟨φ_i, φ_j⟩`.
    pub fn gram_matrix(&self) -> nalgebra::DMatrix<f64> {
        let j = self.count();
        let mut g = nalgebra::DMatrix::zeros(j, j);
        for a in 0..j {
            for b in a..j {
                let v = weighted_dot(self.functions[a].values(), self.functions[b].values());
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// `Σ_k c_k φ_k` over the first `coeffs.len()` functions.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<GridFunction> {
        if coeffs.len() > self.count() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of {} functions",
                coeffs.len(),
                self.count()
            )));
        }
        let d = self
            .grid_size()
            .ok_or_else(|| Error::invalid("empty basis has no grid"))?;
        let mut out = vec![0.0; d];
        for (c, f) in coeffs.iter().zip(&self.functions) {
            if *c != 0.0 {
                for (o, v) in out.iter_mut().zip(f.values()) {
                    *o += c * v;
                }
            }
        }
        Ok(GridFunction::from_values(out))
    }

    /// Writes `path` (columns `t, phi_1, …`) and a `path.json` metadata sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self
            .grid_size()
            .ok_or_else(|| Error::invalid("empty basis"))?;
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.count()).map(|k| format!("phi_{k}")));
        w.write_record(&header)?;
        for (i, t) in grid_nodes(d).iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(self.functions.iter().map(|f| fmt_f64(f.values()[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        let meta = BasisMeta {
            kind: self.kind,
            count: self.count(),
            grid_size: d,
        };
        let mut side = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(&mut side, &meta)?;
        writeln!(side)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta: BasisMeta =
            serde_json::from_reader(std::fs::File::open(sidecar_path(path))?)?;
        let mut r = csv::Reader::from_path(path)?;
        let mut cols = vec![Vec::with_capacity(meta.grid_size); meta.count];
        for rec in r.records() {
            let rec = rec?;
            for (k, col) in cols.iter_mut().enumerate() {
                let v: f64 = rec
                    .get(k + 1)
                    .ok_or_else(|| Error::invalid("short basis row"))?
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad basis value: {e}")))?;
                col.push(v);
            }
        }
        let functions = cols
            .into_iter()
            .map(GridFunction::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(meta.kind, functions)
    }
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Value of the `j`-th (0-based) Fourier function at `t`:
/// `1, √2 cos 2πt, √2 sin 2πt, √2 cos 4πt, …`.
pub fn fourier_value(j: usize, t: f64) -> f64 {
    if j == 0 {
        1.0
    } else {
        let freq = j.div_ceil(2) as f64;
        if j % 2 == 1 {
            SQRT_2 * (2.0 * PI * freq * t).cos()
        } else {
            SQRT_2 * (2.0 * PI * freq * t).sin()
        }
    }
}

/// The first `j` trigonometric functions on a grid of `d` nodes.
pub fn fourier_basis(j: usize, d: usize) -> Result<Basis> {
    if j == 0 {
        return Err(Error::invalid("basis needs at least one function"));
    }
    if d < 2 * j {
        return Err(Error::Resolution {
            count: j,
            grid_size: d,
            needed: 2 * j,
        });
    }
    let nodes = grid_nodes(d);
    let functions = (0..j)
        .map(|k| GridFunction::from_values(nodes.iter().map(|&t| fourier_value(k, t)).collect()))
        .collect();
    Basis::new(BasisKind::Fourier, functions)
}

/// Shared Fourier tables; construction is pure so caching is invisible to callers.
pub(crate) fn fourier_table(j: usize, d: usize) -> Result<Arc<Basis>> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<Basis>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("fourier cache poisoned").get(&(j, d)) {
        return Ok(Arc::clone(b));
    }
    let basis = Arc::new(fourier_basis(j, d)?);
    let mut guard = cache.lock().expect("fourier cache poisoned");
    if guard.len() > 64 {
        guard.clear();
    }
    guard.insert((j, d), Arc::clone(&basis));
    Ok(basis)
}

/// Coefficients `(⟨f, φ_1⟩, …, ⟨f, φ_J⟩)`.
pub fn project(f: &GridFunction, basis: &Basis, j: usize) -> Result<Vec<f64>> {
    if j > basis.count() {
        return Err(Error::invalid(format!(
            "requested {j} coefficients from a basis of {} functions",
            basis.count()
        )));
    }
    basis.functions()[..j]
        .iter()
        .map(|phi| inner_product(f, phi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inner_product_examples() {
        let one = GridFunction::constant(1024, 1.0).unwrap();
        assert!(close(inner_product(&one, &one).unwrap(), 1.0, 1e-14));

        let s = GridFunction::from_fn(1024, |t| SQRT_2 * (2.0 * PI * t).sin()).unwrap();
        let c = GridFunction::from_fn(1024, |t| SQRT_2 * (2.0 * PI * t).cos()).unwrap();
        assert!(inner_product(&s, &c).unwrap().abs() < 1e-8);

        let t = GridFunction::from_fn(1024, |t| t).unwrap();
        assert!(close(inner_product(&t, &t).unwrap(), 1.0 / 3.0, 1e-6));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = GridFunction::zeros(10).unwrap();
        let b = GridFunction::zeros(11).unwrap();
        assert!(matches!(inner_product(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn norm_examples() {
        let c = GridFunction::constant(257, -2.5).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            assert!(close(norm(&c, p).unwrap(), 2.5, 1e-12));
        }
        let s = GridFunction::from_fn(1024, |t| SQRT_2 * (2.0 * PI * t).sin()).unwrap();
        assert!(close(norm(&s, 2.0).unwrap(), 1.0, 1e-8));
        let t = GridFunction::from_fn(1024, |t| t).unwrap();
        assert_eq!(norm(&t, f64::INFINITY).unwrap(), 1.0);
        assert!(norm(&t, 3.0).is_err());
        let n2 = norm(&t, 2.0).unwrap();
        assert!(close(n2 * n2, inner_product(&t, &t).unwrap(), 1e-10));
    }

    #[test]
    fn fourier_basis_examples() {
        let b1 = fourier_basis(1, 16).unwrap();
        assert!(b1.get(0).values().iter().all(|&v| v == 1.0));

        let b3 = fourier_basis(3, 512).unwrap();
        let g = b3.gram_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(close(g[(i, j)], want, 1e-8));
            }
        }
        assert!(matches!(fourier_basis(5, 8), Err(Error::Resolution { .. })));
    }

    #[test]
    fn fourier_gram_is_identity_up_to_64() {
        let b = fourier_basis(64, 1024).unwrap();
        let g = b.gram_matrix();
        let dev = (g - nalgebra::DMatrix::identity(64, 64)).amax();
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn project_examples() {
        let b = fourier_basis(5, 512).unwrap();
        let c = project(b.get(1), &b, 5).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!(close(*v, if k == 1 { 1.0 } else { 0.0 }, 1e-8));
        }
        let z = GridFunction::zeros(512).unwrap();
        assert!(project(&z, &b, 5).unwrap().iter().all(|&v| v == 0.0));

        let f = b.get(0).scaled(3.0).axpy(-2.0, b.get(2)).unwrap();
        let c = project(&f, &b, 3).unwrap();
        assert!(close(c[0], 3.0, 1e-7) && close(c[1], 0.0, 1e-7) && close(c[2], -2.0, 1e-7));
        assert!(project(&f, &b, 6).is_err());
    }

    #[test]
    fn reconstruct_inverts_project_on_span() {
        let b = fourier_basis(9, 256).unwrap();
        let coeffs = [0.3, -1.0, 0.0, 2.0, 0.5, 0.0, 0.0, -0.25, 1.5];
        let f = b.reconstruct(&coeffs).unwrap();
        let back = project(&f, &b, 9).unwrap();
        for (a, c) in back.iter().zip(coeffs) {
            assert!(close(*a, c, 1e-12));
        }
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        let pair = |d: usize| {
            let f = GridFunction::from_fn(d, |t| t.exp()).unwrap();
            let g = GridFunction::from_fn(d, |t| (2.0 * t).cos()).unwrap();
            inner_product(&f, &g).unwrap()
        };
        assert!((pair(1024) - pair(2048)).abs() < 1e-6);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = std::env::temp_dir().join(format!("flrwn-fs-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = GridFunction::from_fn(33, |t| (5.0 * t).sin()).unwrap();
        let p = dir.join("f.csv");
        f.write_csv(&p).unwrap();
        assert_eq!(GridFunction::read_csv(&p).unwrap(), f);

        let b = fourier_basis(4, 33).unwrap();
        let p = dir.join("basis.csv");
        b.write_csv(&p).unwrap();
        let back = Basis::read_csv(&p).unwrap();
        assert_eq!(back.kind(), BasisKind::Fourier);
        assert_eq!(back.functions(), b.functions());
        std::fs::remove_dir_all(&dir).ok();
    }
}
