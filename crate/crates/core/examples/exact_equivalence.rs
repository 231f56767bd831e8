//! Rotating regression responses into white-noise coordinates and back.

use flrwn::covariance::empirical_covariance;
use flrwn::design::{sample_design, DesignSpec};
use flrwn::equivalence::{
    conditional_loglik, drift_coefficients, flr_to_whitenoise, reduced_loglik, simulate_flr, whitenoise_to_flr,
    GramTransform,
};
use flrwn::function_space::GridFunction;

fn main() -> flrwn::Result<()> {
    let n = 40;
    let sigma = 0.5;
    let sample = sample_design(&DesignSpec::integrated_gaussian(), n, 1)?;
    let theta = GridFunction::from_fn(sample.grid_size(), |t| (3.0 * t).cos())?;
    let y = simulate_flr(&sample, &theta, sigma, 2)?;

    let cov = empirical_covariance(&sample)?;
    let t = GramTransform::build(&sample, &cov)?;
    println!("invariants: {}", serde_json::to_string(&t.check_invariants())?);

    let z = flr_to_whitenoise(&y, &t, sigma)?;
    let back = whitenoise_to_flr(&z, &t)?;
    let rt = back.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("roundtrip max error {rt:.2e}");

    let f = drift_coefficients(&cov, &theta)?;
    let l1 = conditional_loglik(&y, &sample, &theta, sigma)?;
    let l2 = reduced_loglik(&y, &t, &f, sigma)?;
    println!("log-likelihood: regression {l1:.10}, white noise {l2:.10}, difference {:.2e}", (l1 - l2).abs());
    Ok(())
}
