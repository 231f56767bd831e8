use flrwn::covariance::{empirical_covariance, hs_distance};
use flrwn::design::{sample_design, true_covariance, verify_condition_x, DesignSpec};
use flrwn::equivalence::simulate_empirical_wn;
use flrwn::estimators::{
    flr_pinsker_estimator, least_favorable, pinsker_gamma_oracle, pinsker_weights, sample_theta, Rho, Spectrum,
    ThetaClass, ThetaMode, GAMMA_TOLERANCE,
};
use flrwn::function_space::{inner_product, GridFunction};
use flrwn::risk::{
    classifier_tv_proxy, decomposition_study, mise_monte_carlo, tv_bound, EstimatorKind, ModelKind, StudySpec,
    ThetaChoice,
};
use flrwn::rng::{derive_seed, stream};
use flrwn::stats::{mean_stderr, rate_regression, two_sample_equivalence_test};
use flrwn::whitenoise::{recombine_split, simulate_sequence, simulate_split};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn variance_with_se(v: &[f64], mean: f64) -> (f64, f64) {
    let sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    mean_stderr(&sq)
}

fn within(value: f64, target: f64, se: f64) -> bool {
    (value - target).abs() <= 3.0 * se
}

#[test]
fn basis_design_coordinate_variances() {
    let x = sample_design(&DesignSpec::basis_expansion(2.0).with_truncation(32), 500, 1).unwrap();
    let c = x.fourier_coeffs().unwrap();
    for j in 0..8 {
        let col: Vec<f64> = c.column(j).iter().copied().collect();
        let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        let target = ((j + 1) as f64).powi(-2);
        assert!((var / target - 1.0).abs() <= 0.15, "j = {}: {var} vs {target}", j + 1);
    }
}

#[test]
fn brownian_design_moments() {
    let d = 257;
    let spec = DesignSpec::integrated_gaussian().with_grid_size(d);
    let x = sample_design(&spec, 10_000, 2).unwrap();
    let nodes = [0.2, 0.4, 0.6, 0.8, 1.0];
    let idx: Vec<usize> = nodes.iter().map(|t| (t * (d - 1) as f64).round() as usize).collect();
    let values: Vec<Vec<f64>> = (0..x.n())
        .map(|i| {
            let f = x.function(i);
            idx.iter().map(|k| f.values()[*k]).collect()
        })
        .collect();
    for (a, s) in nodes.iter().enumerate() {
        for (b, t) in nodes.iter().enumerate() {
            let prods: Vec<f64> = values.iter().map(|v| v[a] * v[b]).collect();
            let (m, se) = mean_stderr(&prods);
            assert!(within(m, s.min(*t), se), "Cov at ({s}, {t}) = {m} ± {se}");
        }
    }
}

#[test]
fn mean_function_is_small() {
    let spec = DesignSpec::basis_expansion(2.0);
    let mut bad = 0;
    for seed in 0..100 {
        let x = sample_design(&spec, 100, derive_seed(3, "mean", seed)).unwrap();
        let report = verify_condition_x(&spec, &x).unwrap();
        if report.mean_norm >= 5.0 * report.mean_norm_scale {
            bad += 1;
        }
    }
    assert!(bad <= 1, "{bad} seeds out of 100");
}

#[test]
fn empirical_spectrum_is_consistent() {
    let x = sample_design(&DesignSpec::basis_expansion(2.0), 2000, 4).unwrap();
    let cov = empirical_covariance(&x).unwrap();
    for j in 0..5 {
        let target = ((j + 1) as f64).powi(-2);
        assert!((cov.eigenvalues()[j] / target - 1.0).abs() <= 0.2, "j = {}", j + 1);
    }
}

#[test]
fn empirical_operator_is_positive() {
    let x = sample_design(&DesignSpec::integrated_gaussian().with_grid_size(257), 30, 5).unwrap();
    let cov = empirical_covariance(&x).unwrap();
    let mut rng = stream(5, "positivity", 0);
    for _ in 0..1000 {
        let (a, b, c): (f64, f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..30.0));
        let f = GridFunction::from_fn(257, |t| a * (c * t).cos() + b * t).unwrap();
        let q = inner_product(&f, &cov.apply(&f).unwrap()).unwrap();
        assert!(q >= -1e-10, "{q}");
    }
}

#[test]
fn hilbert_schmidt_error_scales_like_one_over_n() {
    let spec = DesignSpec::basis_expansion(2.0).with_truncation(24);
    let truth = true_covariance(&spec, 24).unwrap();
    let mean_sq = |n: usize| {
        let v: Vec<f64> = (0..200)
            .map(|r| {
                let x = sample_design(&spec, n, derive_seed(6, &format!("hs-{n}"), r)).unwrap();
                hs_distance(&empirical_covariance(&x).unwrap(), &truth).unwrap().powi(2)
            })
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let ratio = mean_sq(50) / mean_sq(200);
    assert!((3.0..=5.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn empirical_white_noise_with_zero_drift() {
    let x = sample_design(&DesignSpec::basis_expansion(2.0), 10, 7).unwrap();
    let cov = empirical_covariance(&x).unwrap();
    let zero = GridFunction::zeros(x.grid_size()).unwrap();
    let sigma = 1.5;
    let draws: Vec<f64> = (0..10_000)
        .map(|r| simulate_empirical_wn(&zero, &x, &cov, sigma, derive_seed(7, "wn", r)).unwrap().z[3])
        .collect();
    let (v, se) = variance_with_se(&draws, 0.0);
    assert!(within(v, sigma * sigma, se), "{v} ± {se}");
}

#[test]
fn sequence_noise_is_standardized() {
    let (n, sigma) = (400, 2.0);
    let draws: Vec<f64> = (0..10_000)
        .map(|r| {
            let s = simulate_sequence(&[0.0; 3], &[1.0, 0.25, 0.1], n, sigma, derive_seed(8, "seq", r)).unwrap();
            s.y[1] * (n as f64).sqrt() / sigma
        })
        .collect();
    let (v, se) = variance_with_se(&draws, 0.0);
    assert!(within(v, 1.0, se), "{v} ± {se}");
}

#[test]
fn split_and_recombination_moments() {
    let (m, n, sigma) = (30, 100, 1.0);
    let lambda = [1.0, 0.25];
    let mut s12 = Vec::new();
    let mut t1v = Vec::new();
    let mut t12 = Vec::new();
    let mut t1_draws = Vec::new();
    let mut direct = Vec::new();
    for r in 0..10_000 {
        let (s1, s2) = simulate_split(&[0.0; 2], &lambda, m, n, sigma, derive_seed(9, "split", r)).unwrap();
        let (t1, t2) = recombine_split(&s1, &s2, m, n).unwrap();
        s12.push(s1.y[0] * s2.y[0] * ((m * (n - m)) as f64).sqrt());
        t1v.push(t1.y[0] * t1.y[0]);
        t12.push(t1.y[0] * t2.y[0]);
        t1_draws.push(t1.y.clone());
        direct.push(simulate_sequence(&[0.0; 2], &lambda, n, sigma, derive_seed(9, "direct", r)).unwrap().y);
    }
    let (c, se) = mean_stderr(&s12);
    assert!(within(c, 0.0, se), "split correlation {c} ± {se}");
    let (v, se) = mean_stderr(&t1v);
    assert!(within(v, sigma * sigma / n as f64, se), "Var T1 {v} ± {se}");
    let (c, se) = mean_stderr(&t12);
    assert!(within(c, 0.0, se), "Cov(T1, T2) {c} ± {se}");
    let ks = two_sample_equivalence_test(&t1_draws, &direct, 0.05).unwrap();
    assert!(!ks.any_rejected, "{:?}", ks.p_values);
}

#[test]
fn noiseless_plug_in_recovers_leading_coefficient() {
    let n = 2000;
    let rho = Rho::midpoint(2.0);
    let mut v = Vec::new();
    for r in 0..20 {
        let x = sample_design(&DesignSpec::basis_expansion(2.0), n, derive_seed(10, "plugin", r)).unwrap();
        let cov = empirical_covariance(&x).unwrap();
        let phi1 = cov.eigenfunctions().get(0).clone();
        let y: Vec<f64> = x.inner_products(&phi1).unwrap().iter().copied().collect();
        let est = flr_pinsker_estimator(&x, &y, &[1.0], rho).unwrap();
        v.push(inner_product(&est.function, &phi1).unwrap());
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 1.0).abs() <= 0.05, "{mean}");
}

#[test]
fn bias_variance_decomposition_matches_mise() {
    let spec = StudySpec::new(
        ModelKind::Flr,
        DesignSpec::basis_expansion(2.0),
        ThetaClass::new(4.0, 1.0).unwrap(),
        1.0,
    )
    .with_theta(ThetaChoice::LeastFavorable);
    let r = decomposition_study(&spec, 200, 400, 11).unwrap();
    let se = (r.mise_stderr.powi(2) + r.decomposition_stderr.powi(2)).sqrt();
    assert!(within(r.mise, r.decomposition, se), "{r:?}");
}

#[test]
fn gamma_scaling_exponent() {
    let (alpha, beta) = (2.0, 2.0);
    let class = ThetaClass::new(beta, 1.0).unwrap();
    let spectrum = Spectrum::PowerLaw { alpha };
    let ns: Vec<f64> = (0..8).map(|i| 10f64.powf(3.0 + i as f64 * 0.5)).collect();
    let g: Vec<f64> = ns
        .iter()
        .map(|n| pinsker_gamma_oracle(&spectrum, &class, 1.0, *n as usize, GAMMA_TOLERANCE).unwrap())
        .collect();
    let fit = rate_regression(&ns, &g).unwrap();
    let target = -beta / (2.0 * beta + alpha + 1.0);
    assert!((fit.slope - target).abs() <= 0.1, "slope {} vs {target}", fit.slope);
}

/// Exact risk of the linear filter `w` at `θ` in the sequence model.
fn filter_risk(w: &[f64], theta: &[f64], lambda: &[f64], sigma: f64, n: usize) -> f64 {
    theta
        .iter()
        .zip(lambda)
        .enumerate()
        .map(|(k, (t, l))| {
            let wk = w.get(k).copied().unwrap_or(0.0);
            (1.0 - wk).powi(2) * t * t + sigma * sigma / n as f64 * wk * wk / l
        })
        .sum()
}

#[test]
fn oracle_gamma_minimizes_worst_case_risk() {
    let (alpha, beta, sigma) = (2.0, 2.0, 1.0);
    let class = ThetaClass::new(beta, 1.0).unwrap();
    let spectrum = Spectrum::PowerLaw { alpha };
    let count = 400;
    let lambda = spectrum.first(count).unwrap();
    for n in [100usize, 1000, 10_000] {
        let gamma = pinsker_gamma_oracle(&spectrum, &class, sigma, n, GAMMA_TOLERANCE).unwrap();
        let thetas = [
            sample_theta(&class, ThetaMode::Boundary, &spectrum, sigma, n, count, 0).unwrap(),
            least_favorable(gamma, &spectrum, &class, sigma, n, count).unwrap(),
        ];
        let worst = |g: f64| {
            let w = pinsker_weights(g, &class, count);
            thetas.iter().map(|t| filter_risk(&w, t, &lambda, sigma, n)).fold(0.0, f64::max)
        };
        let at = worst(gamma);
        assert!(at <= worst(0.5 * gamma) && at <= worst(2.0 * gamma), "n = {n}");
    }
}

#[test]
fn doubling_replications_shrinks_stderr() {
    let spec = StudySpec::new(
        ModelKind::Sequence,
        DesignSpec::basis_expansion(2.0),
        ThetaClass::new(2.0, 1.0).unwrap(),
        1.0,
    )
    .with_theta(ThetaChoice::Boundary);
    let a = mise_monte_carlo(&spec, EstimatorKind::PinskerOracle, &[1000], 400, 12).unwrap();
    let b = mise_monte_carlo(&spec, EstimatorKind::PinskerOracle, &[1000], 800, 12).unwrap();
    let ratio = a.rows[0].stderr / b.rows[0].stderr;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn synthetic_rate_regression() {
    let mut rng = stream(13, "synthetic", 0);
    let ns: Vec<f64> = (9..=14).map(|e| 2f64.powi(e)).collect();
    let v: Vec<f64> = ns
        .iter()
        .map(|n| {
            let z: f64 = StandardNormal.sample(&mut rng);
            n.powf(-4.0 / 7.0) * (1.0 + 0.05 * z)
        })
        .collect();
    let fit = rate_regression(&ns, &v).unwrap();
    assert!((fit.slope + 4.0 / 7.0).abs() <= 0.05, "{}", fit.slope);
}

fn normal_draws(seed: u64, count: usize, coords: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "ks", 0);
    (0..count)
        .map(|_| {
            (0..coords)
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if c == 0 { z + shift } else { z }
                })
                .collect()
        })
        .collect()
}

#[test]
fn ks_battery_calibration() {
    let coords = 10;
    let trials = 200;
    let mut rejections = 0;
    for t in 0..trials {
        let a = normal_draws(derive_seed(14, "a", t), 500, coords, 0.0);
        let b = normal_draws(derive_seed(14, "b", t), 500, coords, 0.0);
        if two_sample_equivalence_test(&a, &b, 0.05).unwrap().any_rejected {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    let limit = 0.05 + 3.0 * (0.05 * 0.95 / trials as f64).sqrt();
    assert!(rate <= limit, "family-wise rejection rate {rate} > {limit}");
}

#[test]
fn ks_battery_power() {
    let trials = 100;
    let mut hits = 0;
    for t in 0..trials {
        let a = normal_draws(derive_seed(15, "a", t), 2000, 5, 1.0);
        let b = normal_draws(derive_seed(15, "b", t), 2000, 5, 0.0);
        if two_sample_equivalence_test(&a, &b, 0.05).unwrap().rejected[0] {
            hits += 1;
        }
    }
    assert!(hits >= 99, "{hits} of {trials}");
}

#[test]
fn classifier_proxy_respects_tv_bound() {
    let sigma = 1.0;
    for (i, scale) in [0.05, 0.2, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let delta: Vec<f64> = (1..=20).map(|k| scale * (k as f64).powf(-1.0)).collect();
        let norm_sq: f64 = delta.iter().map(|d| d * d).sum();
        let (proxy, se) = classifier_tv_proxy(&delta, sigma, 20_000, derive_seed(16, "tv", i as u64)).unwrap();
        let bound = tv_bound(norm_sq, sigma).unwrap();
        assert!(proxy <= bound + 3.0 * se, "scale {scale}: {proxy} ± {se} > {bound}");
    }
}
