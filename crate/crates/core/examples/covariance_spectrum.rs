//! Empirical covariance operator against the true spectrum.

use flrwn::covariance::{eigen_gap_check, empirical_covariance, hs_distance, route_for};
use flrwn::design::{sample_design, true_covariance, DesignSpec};

fn main() -> flrwn::Result<()> {
    let spec = DesignSpec::basis_expansion(2.0);
    let truth = true_covariance(&spec, 64)?;
    for n in [50, 200, 800] {
        let sample = sample_design(&spec, n, 3)?;
        let cov = empirical_covariance(&sample)?;
        let lead: Vec<String> = cov.eigenvalues().iter().take(4).map(|l| format!("{l:.4}")).collect();
        println!(
            "n = {n:4} route {:?}: rank {}, leading eigenvalues [{}], |Γ̂ − Γ|_HS = {:.4}",
            route_for(&sample),
            cov.rank(),
            lead.join(", "),
            hs_distance(&cov, &truth)?
        );
    }
    let gaps = eigen_gap_check(&truth, 2.0, 0.75);
    println!("gap check on the true operator: {}", serde_json::to_string(&gaps)?);
    Ok(())
}
