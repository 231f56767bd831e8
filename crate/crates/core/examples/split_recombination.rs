//! Splitting a sequence observation in two and recombining it.

use flrwn::whitenoise::{recombine_split, simulate_split};

fn main() -> flrwn::Result<()> {
    let k = 20;
    let theta: Vec<f64> = (1..=k).map(|j| (j as f64).powf(-2.0)).collect();
    let lambda: Vec<f64> = (1..=k).map(|j| (j as f64).powf(-2.0)).collect();
    let (n, m, sigma) = (1000, 400, 1.0);

    let (s1, s2) = simulate_split(&theta, &lambda, m, n, sigma, 9)?;
    let (t1, t2) = recombine_split(&s1, &s2, m, n)?;
    for j in 0..4 {
        println!(
            "k = {}: drift {:.5}, S1 {:.5}, S2 {:.5}, T1 {:.5}, T2 {:.5}",
            j + 1,
            lambda[j].sqrt() * theta[j],
            s1.y[j],
            s2.y[j],
            t1.y[j],
            t2.y[j]
        );
    }
    Ok(())
}
