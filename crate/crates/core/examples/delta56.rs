//! The gap between the empirical and the idealized white-noise models.

use flrwn::design::DesignSpec;
use flrwn::estimators::ThetaClass;
use flrwn::risk::{delta56_study, tv_bound, ModelKind, StudySpec, ThetaChoice};

fn main() -> flrwn::Result<()> {
    let spec = StudySpec::new(ModelKind::Flr, DesignSpec::basis_expansion(2.0), ThetaClass::new(3.0, 1.0)?, 1.0)
        .with_theta(ThetaChoice::Boundary);
    let report = delta56_study(&spec, &[256, 1024, 4096], 20, 8)?;
    for row in &report.rows {
        println!(
            "n = {:5}: E|Δ|² = {:.3e} ± {:.1e}, total variation bound {:.3e}",
            row.n, row.mean_sq, row.stderr, row.tv_bound
        );
    }
    println!("tv_bound(0.5, 1) = {:.4}", tv_bound(0.5, 1.0)?);
    Ok(())
}
