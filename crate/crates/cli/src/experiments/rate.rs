//! `rate-functional`: the gradient-flow path from the tilted minimizer has
//! zero cost, and pushing it with a constant extra drift `delta` costs
//! `delta^2 T / 2`.
//!
//! For each tilt amplitude in `rate.tilts` (tilt `a tanh(y / rate.scale)`),
//! the limit equation is started from the minimizer of the tilted free
//! energy, once as is and once for each `delta` in `rate.deltas` with the
//! drift shifted by `delta`. Every perturbed path must cost more than the
//! unperturbed one, and the increment must be within `check.increment_rel`
//! of `delta^2 T / 2`.
//!
//! Keys: `rate.tilts`, `rate.scale`, `rate.deltas`,
//! `check.unperturbed_max`, `check.increment_rel`, plus `model.*` and
//! `pde.*`.

use rodflow::functionals::{rate_functional_path, tilted_free_energy, tilted_minimizer};
use rodflow::pde::solve_limit_pde;
use rodflow::{Kind, PdeConfig, Potential, Profile};

use crate::setup::{finish, model, pde, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let params = model(cfg, ModelDefaults::default())?;
    let pc = pde(cfg, PdeConfig::new(-14.0, 14.0, 0.01, 1.0))?;
    let tilts: Vec<f64> = cfg.list("rate.tilts", &[0.1, -0.1, 0.2, -0.2, 0.3])?;
    let scale: f64 = cfg.get("rate.scale", 1.0)?;
    let deltas: Vec<f64> = cfg.list("rate.deltas", &[0.2, -0.2])?;
    let unperturbed_max: f64 = cfg.get("check.unperturbed_max", 0.05)?;
    let inc_rel: f64 = cfg.get("check.increment_rel", 0.2)?;
    finish(cfg)?;
    if !params.w.is_zero() {
        return Err(CliError::Usage("the tilted minimizer is computed without interaction; set model.w.family = zero".into()));
    }

    let mut out = Outcome::default();
    let mut curve = Curve::new("rate_functional", &["tilt", "delta", "value", "increment", "predicted"]);
    let mut worst_base = 0.0f64;
    let mut all_larger = true;
    let mut worst_rel = 0.0f64;
    for &a in &tilts {
        let f = Potential::new(Profile::Tanh { a, scale }, Kind::Tilt)?;
        let rho_f = tilted_minimizer(&params, &f, pc.grid())?;
        let c_tilt = -tilted_free_energy(&rho_f, &params, &f).total_unnormalized;
        let base_path = solve_limit_pde(&rho_f, &params, &pc)?;
        let base = rate_functional_path(&base_path, &params, &f, c_tilt)?.rate_value.unwrap_or(f64::INFINITY);
        worst_base = worst_base.max(base.abs());
        curve.push(vec![a, 0.0, base, 0.0, 0.0]);
        for &delta in &deltas {
            let pushed = PdeConfig { extra_drift: delta, ..pc.clone() };
            let path = solve_limit_pde(&rho_f, &params, &pushed)?;
            let value = rate_functional_path(&path, &params, &f, c_tilt)?.rate_value.unwrap_or(f64::INFINITY);
            let predicted = 0.5 * delta * delta * pc.t_final;
            let inc = value - base;
            all_larger &= value > base;
            worst_rel = worst_rel.max((inc - predicted).abs() / predicted);
            curve.push(vec![a, delta, value, inc, predicted]);
        }
    }
    out.check(Check::below("largest unperturbed rate value", worst_base, unperturbed_max));
    out.check(Check::holds("perturbed paths cost more", all_larger));
    out.check(Check::below("largest relative error of the increment", worst_rel, inc_rel));
    out.metric("paths", tilts.len() * (1 + deltas.len()));
    out.curves.push(curve);
    Ok(out)
}
