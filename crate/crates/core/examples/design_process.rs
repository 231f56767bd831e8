//! Sampling random designs and checking the tail-frequency condition.

use flrwn::design::{sample_design, verify_condition_x, DesignSpec};

fn main() -> flrwn::Result<()> {
    for spec in [DesignSpec::basis_expansion(2.0), DesignSpec::integrated_gaussian()] {
        let sample = sample_design(&spec, 200, 7)?;
        let norms = sample.norms();
        let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
        println!("{:?}: n = {}, grid = {}, mean |X_i| = {mean_norm:.4}", spec.kind, sample.n(), sample.grid_size());
        let report = verify_condition_x(&spec, &sample)?;
        println!("  condition check: {}", serde_json::to_string(&report)?);
    }
    Ok(())
}
