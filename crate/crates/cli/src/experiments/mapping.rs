//! `verify-mapping`: simulating the rods directly and expanding simulated
//! point particles give the same law.
//!
//! Both ensembles start from the same admissible rod configuration and use
//! independent random streams. For each trajectory the first and second
//! moments of the empirical measure at the final time are compared with a
//! two-sample Kolmogorov–Smirnov test. A negative control runs the
//! compressed system with `mapping.control_alpha` instead of `model.alpha`;
//! the test must reject it.
//!
//! Keys: `mapping.n`, `mapping.spread`, `mapping.control_alpha` (negative
//! disables the control), `check.level`, plus the `model.*` and `sim.*`
//! sections.

use rodflow::maps::{compress_particles, expand_particles};
use rodflow::simulate::{simulate_compressed_ensemble, simulate_expanded_ensemble};
use rodflow::{EmpiricalMeasure, Measure, ModelParams, SimConfig};

use crate::setup::{finish, ks_two_sample, model, seed, sim, Family, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

fn moments(states: &[EmpiricalMeasure]) -> (Vec<f64>, Vec<f64>) {
    states.iter().map(|s| (s.moment(1), s.moment(2))).unzip()
}

fn mapped(init: &EmpiricalMeasure, params: &ModelParams, sc: &SimConfig) -> Result<Vec<EmpiricalMeasure>, CliError> {
    let x0 = compress_particles(init, params.alpha)?;
    let paths = simulate_compressed_ensemble(&x0, params, sc)?;
    Ok(paths.iter().map(|p| expand_particles(p.last(), params.alpha)).collect::<rodflow::Result<_>>()?)
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = seed(cfg)?;
    let params = model(
        cfg,
        ModelDefaults { alpha: 0.5, v: Family::Huber { c: 1.0, s: 1.0 }, w: Family::Gaussian { w0: 0.5, sigma: 0.5 } },
    )?;
    let mut defaults = SimConfig::new(1e-4, 1.0, seed);
    defaults.trajectories = 10_000;
    let sc = sim(cfg, defaults)?;
    let n: usize = cfg.get("mapping.n", 10)?;
    let spread: f64 = cfg.get("mapping.spread", 1.5)?;
    let control_alpha: f64 = cfg.get("mapping.control_alpha", 0.4)?;
    let level: f64 = cfg.get("check.level", 0.01)?;
    finish(cfg)?;
    if n == 0 {
        return Err(CliError::Usage("mapping.n must be positive".into()));
    }

    // Evenly spaced rods on [-spread, spread].
    let init = if n == 1 {
        EmpiricalMeasure::point_mass(0.0)
    } else {
        EmpiricalMeasure::new((0..n).map(|i| -spread + 2.0 * spread * i as f64 / (n - 1) as f64).collect())?
    };

    let direct: Vec<EmpiricalMeasure> =
        simulate_expanded_ensemble(&init, &params, &sc)?.into_iter().map(|p| p.last().clone()).collect();
    let sc_mapped = SimConfig { seed: sc.seed.wrapping_add(1), ..sc.clone() };
    let via = mapped(&init, &params, &sc_mapped)?;

    let (d1, d2) = moments(&direct);
    let (v1, v2) = moments(&via);
    let (ks1, p1) = ks_two_sample(&d1, &v1);
    let (ks2, p2) = ks_two_sample(&d2, &v2);

    let mut out = Outcome::default();
    out.check(Check::above("first moment KS p-value", p1, level).detail(format!("D = {ks1:.5}")));
    out.check(Check::above("second moment KS p-value", p2, level).detail(format!("D = {ks2:.5}")));
    out.metric("trajectories", sc.trajectories);
    out.metric("ks_first", ks1);
    out.metric("ks_second", ks2);

    let mut curve = Curve::new("mapping", &["trajectory", "m1_direct", "m2_direct", "m1_mapped", "m2_mapped"]);
    for k in 0..direct.len() {
        curve.push(vec![k as f64, d1[k], d2[k], v1[k], v2[k]]);
    }
    out.curves.push(curve);

    if control_alpha >= 0.0 && n > 1 {
        let wrong = params.with_alpha(control_alpha)?;
        let sc_control = SimConfig { seed: sc.seed.wrapping_add(2), ..sc.clone() };
        let ctrl = mapped(&init, &wrong, &sc_control)?;
        let (c1, c2) = moments(&ctrl);
        let (k1, q1) = ks_two_sample(&d1, &c1);
        let (k2, q2) = ks_two_sample(&d2, &c2);
        let p = q1.min(q2);
        out.check(
            Check::below("negative control rejected (smaller p-value)", p, level)
                .detail(format!("alpha = {control_alpha}, D = {k1:.5} / {k2:.5}")),
        );
        out.metric("control_alpha", control_alpha);
        out.metric("control_p_first", q1);
        out.metric("control_p_second", q2);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rod_passes() {
        let cfg = Config::parse("mapping.n = 1\nsim.trajectories = 400\nsim.dt = 0.01\nsim.t_final = 0.5").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }
}
