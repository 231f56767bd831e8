//! Grid functions, quadrature and Fourier projection.

use flrwn::function_space::{fourier_basis, inner_product, norm, project, GridFunction, DEFAULT_GRID_SIZE};

fn main() -> flrwn::Result<()> {
    let d = DEFAULT_GRID_SIZE;
    let f = GridFunction::from_fn(d, |t| (2.0 * std::f64::consts::PI * t).sin() + t * t)?;
    let g = GridFunction::from_fn(d, |t| t)?;

    println!("<f, g>     = {:.6}", inner_product(&f, &g)?);
    println!("|f|_2      = {:.6}", norm(&f, 2.0)?);
    println!("|f|_inf    = {:.6}", norm(&f, f64::INFINITY)?);

    let basis = fourier_basis(32, d)?;
    let coeffs = project(&f, &basis, 32)?;
    let approx = basis.reconstruct(&coeffs)?;
    let energy: f64 = coeffs.iter().map(|c| c * c).sum();
    println!("sum c_j^2  = {energy:.6} (Parseval against |f|^2 = {:.6})", norm(&f, 2.0)?.powi(2));
    println!("|f - P32 f| = {:.3e}", norm(&f.sub(&approx)?, 2.0)?);
    Ok(())
}
