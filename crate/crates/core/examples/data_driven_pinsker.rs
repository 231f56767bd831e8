//! Pinsker estimation with γ chosen from training designs.

use flrwn::design::{sample_design, DesignSpec};
use flrwn::equivalence::simulate_flr;
use flrwn::estimators::{pinsker_data_driven, pinsker_gamma_oracle, Rho, Spectrum, ThetaClass, GAMMA_TOLERANCE};
use flrwn::function_space::{norm, GridFunction};

fn main() -> flrwn::Result<()> {
    let class = ThetaClass::new(4.0, 1.0)?;
    let sigma = 1.0;
    let spec = DesignSpec::basis_expansion(2.0);
    for n in [500, 2000] {
        let sample = sample_design(&spec, n, 11)?;
        let theta = GridFunction::from_fn(sample.grid_size(), |t| 0.3 * (2.0 * std::f64::consts::PI * t).cos())?;
        let y = simulate_flr(&sample, &theta, sigma, 12)?;
        let (est, g) = pinsker_data_driven(&sample, &y, &class, sigma, Rho::midpoint(2.0), 64)?;
        let oracle = pinsker_gamma_oracle(&Spectrum::PowerLaw { alpha: 2.0 }, &class, sigma, n, GAMMA_TOLERANCE)?;
        println!(
            "n = {n:5}: m = {}, γ̃ = {:.4e}, γ̂ = {:.4e} in [{:.4e}, {:.4e}], γ_n = {oracle:.4e}, |θ̂ − θ| = {:.4}",
            g.m,
            g.gamma_tilde,
            g.gamma_hat,
            g.lower,
            g.upper,
            norm(&est.function.sub(&theta)?, 2.0)?
        );
    }
    Ok(())
}
