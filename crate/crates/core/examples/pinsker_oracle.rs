//! The oracle Pinsker estimator and its sharp risk constant.

use flrwn::estimators::{PinskerPlan, Rho, Spectrum, SupportCap, ThetaClass};
use flrwn::risk::{mise_monte_carlo, EstimatorKind, ModelKind, StudySpec, ThetaChoice};
use flrwn::design::DesignSpec;

fn main() -> flrwn::Result<()> {
    let class = ThetaClass::new(4.0, 1.0)?;
    let spectrum = Spectrum::PowerLaw { alpha: 2.0 };
    for n in [100, 1000, 10_000] {
        let plan = PinskerPlan::oracle(&spectrum, &class, 1.0, n, Rho::midpoint(2.0), 64, SupportCap::FlagOnly)?;
        let support = plan.weights.iter().filter(|w| **w > 0.0).count();
        println!("n = {n:6}: γ_n = {:.4e}, a_n = {:.4e}, support {support}", plan.gamma, plan.a_n);
    }

    let spec = StudySpec::new(ModelKind::Flr, DesignSpec::basis_expansion(2.0), class, 1.0)
        .with_theta(ThetaChoice::Boundary);
    let report = mise_monte_carlo(&spec, EstimatorKind::PinskerOracle, &[256, 1024], 20, 4)?;
    for row in &report.rows {
        println!("n = {:5}: MISE {:.4e} ± {:.1e}, MISE / a_n = {:.3}", row.n, row.mise, row.stderr, row.ratio);
    }
    Ok(())
}
