//! Convergence rate of the spectral cutoff estimator.

use flrwn::design::DesignSpec;
use flrwn::estimators::ThetaClass;
use flrwn::risk::{mise_monte_carlo, EstimatorKind, ModelKind, StudySpec, ThetaChoice};

fn main() -> flrwn::Result<()> {
    let spec = StudySpec::new(ModelKind::Flr, DesignSpec::basis_expansion(2.0), ThetaClass::new(2.0, 1.0)?, 1.0)
        .with_theta(ThetaChoice::CutoffSpike);
    let report = mise_monte_carlo(&spec, EstimatorKind::Cutoff, &[512, 1024, 2048, 4096], 20, 6)?;
    for row in &report.rows {
        println!("n = {:5}: MISE {:.4e} ± {:.1e}", row.n, row.mise, row.stderr);
    }
    if let Some(fit) = &report.slope {
        println!("log-log slope {:.3} (theory {:.3})", fit.slope, -4.0 / 7.0);
    }
    Ok(())
}
