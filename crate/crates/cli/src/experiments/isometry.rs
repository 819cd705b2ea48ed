//! `verify-isometry`: the expansion maps preserve Wasserstein-2 distances.
//!
//! Three families of checks:
//!
//! * discrete: random equal-size empirical pairs, exact equality up to
//!   `check.discrete_tol`;
//! * continuous: random smooth densities, equality up to the quadrature error
//!   `check.continuous_factor / M`;
//! * continuous against discrete expansion: for a smooth `mu` and an
//!   empirical `mu_n`, `|W2(A mu, A_n mu_n) - W2(mu, mu_n)|` stays below
//!   `alpha / n + check.continuous_factor / M`.
//!
//! A brute-force oracle compares sorted matching with the best permutation
//! for small `n`.
//!
//! Keys: `isometry.pairs`, `isometry.max_n`, `isometry.alphas`,
//! `isometry.continuous_pairs`, `isometry.mass_grid`, `oracle.pairs`,
//! `oracle.max_n`, `check.discrete_tol`, `check.continuous_factor`,
//! `check.oracle_tol`.

use rand::Rng;
use rodflow::maps::{expand_density, expand_particles};
use rodflow::measures::{wasserstein2, wasserstein2_on};
use rodflow::rng::trajectory_rng;
use rodflow::EmpiricalMeasure;

use crate::setup::{finish, random_smooth_density, seed};
use crate::{Check, CliError, Config, Curve, Outcome};

fn random_points<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Mix scales and plant ties so that rank handling is exercised.
    let scale = rng.random_range(0.1..3.0);
    let shift = rng.random_range(-2.0..2.0);
    let mut v: Vec<f64> = (0..n).map(|_| shift + scale * rng.random_range(-1.0..1.0)).collect();
    if n > 2 && rng.random_bool(0.3) {
        v[1] = v[0];
    }
    v
}

/// `min over permutations s of ((1/n) sum |x_i - y_s(i)|^2)^{1/2}`.
pub fn brute_force_w2(x: &[f64], y: &[f64]) -> f64 {
    fn go(x: &[f64], y: &mut Vec<f64>, k: usize, best: &mut f64) {
        if k == y.len() {
            let s: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            *best = best.min(s);
            return;
        }
        for i in k..y.len() {
            y.swap(k, i);
            go(x, y, k + 1, best);
            y.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(x, &mut y.to_vec(), 0, &mut best);
    (best / x.len() as f64).sqrt()
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = seed(cfg)?;
    let pairs: usize = cfg.get("isometry.pairs", 1000)?;
    let max_n: usize = cfg.get("isometry.max_n", 1024)?;
    let alphas: Vec<f64> = cfg.list("isometry.alphas", &[0.1, 0.5, 0.9, 0.99])?;
    let cont_pairs: usize = cfg.get("isometry.continuous_pairs", 200)?;
    let m: usize = cfg.get("isometry.mass_grid", 2048)?;
    let oracle_pairs: usize = cfg.get("oracle.pairs", 500)?;
    let oracle_max_n: usize = cfg.get("oracle.max_n", 6)?;
    let discrete_tol: f64 = cfg.get("check.discrete_tol", 1e-10)?;
    let factor: f64 = cfg.get("check.continuous_factor", 3.0)?;
    let oracle_tol: f64 = cfg.get("check.oracle_tol", 1e-12)?;
    finish(cfg)?;
    if alphas.is_empty() || max_n == 0 || oracle_max_n == 0 {
        return Err(CliError::Usage("isometry needs alphas and positive sizes".into()));
    }

    let mut out = Outcome::default();
    let mut curve = Curve::new("isometry", &["pair", "n", "alpha", "w2", "w2_expanded", "deviation"]);

    // Discrete pairs. Pair 0 has n = 1.
    let mut worst = 0.0f64;
    let mut gap_violations = 0usize;
    let mut worst_gap_slack = f64::INFINITY;
    for k in 0..pairs {
        let mut rng = trajectory_rng(seed, k as u64);
        let n = if k == 0 { 1 } else { rng.random_range(1..=max_n) };
        let alpha = alphas[k % alphas.len()];
        let x = EmpiricalMeasure::new(random_points(&mut rng, n))?;
        let y = EmpiricalMeasure::new(random_points(&mut rng, n))?;
        let (ex, ey) = (expand_particles(&x, alpha)?, expand_particles(&y, alpha)?);
        let (d0, d1) = (wasserstein2(&x, &y), wasserstein2(&ex, &ey));
        let dev = (d1 - d0).abs();
        worst = worst.max(dev);
        curve.push(vec![k as f64, n as f64, alpha, d0, d1, dev]);

        // |W2(A mu, A_n x) - W2(mu, x)| <= alpha / n for a smooth mu.
        let mu = random_smooth_density(&mut rng, -8.0, 0.02, 800, 2.0)?;
        let lhs = (wasserstein2_on(&expand_density(&mu, alpha, m)?, &ex, m) - wasserstein2_on(&mu, &x, m)).abs();
        let slack = alpha / n as f64 + factor / m as f64 - lhs;
        worst_gap_slack = worst_gap_slack.min(slack);
        if slack < 0.0 {
            gap_violations += 1;
        }
    }
    out.check(Check::below("discrete max deviation", worst, discrete_tol));
    out.check(
        Check::holds("discrete-continuous gap bound", gap_violations == 0)
            .detail(format!("{gap_violations} violations, smallest slack {worst_gap_slack:e}")),
    );
    out.metric("discrete_pairs", pairs);
    out.metric("discrete_max_deviation", worst);
    out.metric("gap_smallest_slack", worst_gap_slack);

    // Continuous pairs.
    let mut worst_cont = 0.0f64;
    let mut cont_curve = Curve::new("isometry_continuous", &["pair", "alpha", "w2", "w2_expanded", "deviation"]);
    for k in 0..cont_pairs {
        let mut rng = trajectory_rng(seed ^ 0xC0_47, k as u64);
        let alpha = alphas[k % alphas.len()];
        let mu = random_smooth_density(&mut rng, -8.0, 0.01, 1600, 2.0)?;
        let nu = random_smooth_density(&mut rng, -8.0, 0.01, 1600, 2.0)?;
        let d0 = wasserstein2_on(&mu, &nu, m);
        let d1 = wasserstein2_on(&expand_density(&mu, alpha, m)?, &expand_density(&nu, alpha, m)?, m);
        let dev = (d1 - d0).abs();
        worst_cont = worst_cont.max(dev);
        cont_curve.push(vec![k as f64, alpha, d0, d1, dev]);
    }
    out.check(Check::below("continuous max deviation", worst_cont, factor / m as f64));
    out.metric("continuous_max_deviation", worst_cont);

    // Brute-force oracle.
    let mut worst_oracle = 0.0f64;
    for k in 0..oracle_pairs {
        let mut rng = trajectory_rng(seed ^ 0x0_4AC1E, k as u64);
        let n = rng.random_range(1..=oracle_max_n);
        let a = random_points(&mut rng, n);
        let b = random_points(&mut rng, n);
        let sorted = wasserstein2(&EmpiricalMeasure::new(a.clone())?, &EmpiricalMeasure::new(b.clone())?);
        worst_oracle = worst_oracle.max((sorted - brute_force_w2(&a, &b)).abs());
    }
    out.check(Check::below("sorted matching vs permutation oracle", worst_oracle, oracle_tol));
    out.metric("oracle_pairs", oracle_pairs);
    out.metric("oracle_max_deviation", worst_oracle);

    out.curves.push(curve);
    out.curves.push(cont_curve);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_w2(&[0.0], &[3.0]), 3.0);
        // The best permutation does not depend on the input order.
        let d = brute_force_w2(&[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(d, 0.0);
        let d = brute_force_w2(&[0.0, 2.0], &[1.0, 3.0]);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_run_passes() {
        let cfg = Config::parse(
            "isometry.pairs = 30\nisometry.max_n = 40\nisometry.continuous_pairs = 4\noracle.pairs = 20",
        )
        .unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }
}
