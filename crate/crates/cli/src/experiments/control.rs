//! `control-recovery`: the extra drift of a compressed Fokker–Planck path
//! can be read off the path itself.
//!
//! The uncontrolled equation is solved at `pde.dy` and at half that width
//! (with twice the snapshots); the recovered action of the refined path must
//! be below `check.action_max`. Then a constant drift `control.u` is
//! injected on the refined grid and recovered; the largest relative error
//! over faces carrying at least `control.threshold` of the peak density must
//! be below `check.sup_rel_max`.
//!
//! Keys: `control.u`, `control.threshold`, `control.center`,
//! `control.width`, `check.action_max`, `check.sup_rel_max`, plus `model.*`
//! and `pde.*`.

use rodflow::functionals::recover_control;
use rodflow::pde::{solve_compressed_fp, ControlField};
use rodflow::{ModelParams, PdeConfig};

use crate::setup::{finish, model, pde, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

fn path(params: &ModelParams, pc: &PdeConfig, center: f64, width: f64, u: f64) -> Result<rodflow::DensityPath, CliError> {
    let mu0 = pc.discretize(|x| (-(x - center).powi(2) / (2.0 * width * width)).exp())?;
    let field = if u == 0.0 { ControlField::Zero } else { ControlField::Constant(u) };
    Ok(solve_compressed_fp(&mu0, params, pc, &field)?)
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let params = model(cfg, ModelDefaults::default())?;
    let mut d = PdeConfig::new(-10.0, 10.0, 0.02, 0.5);
    d.snapshots = 100;
    let pc = pde(cfg, d)?;
    let u: f64 = cfg.get("control.u", 0.3)?;
    let threshold: f64 = cfg.get("control.threshold", 1e-3)?;
    let center: f64 = cfg.get("control.center", 0.5)?;
    let width: f64 = cfg.get("control.width", 0.6)?;
    let action_max: f64 = cfg.get("check.action_max", 1e-3)?;
    let sup_max: f64 = cfg.get("check.sup_rel_max", 0.05)?;
    finish(cfg)?;
    if u == 0.0 {
        return Err(CliError::Usage("control.u must be nonzero".into()));
    }

    let fine = PdeConfig { dy: pc.dy / 2.0, dt: pc.dt.map(|d| d / 4.0), snapshots: pc.snapshots * 2, ..pc.clone() };
    let coarse_action = recover_control(&path(&params, &pc, center, width, 0.0)?, &params)?.action;
    let fine_action = recover_control(&path(&params, &fine, center, width, 0.0)?, &params)?.action;

    let driven = recover_control(&path(&params, &fine, center, width, u)?, &params)?;
    let sup_rel = driven.sup_error(u, threshold) / u.abs();
    let injected_action = 0.5 * u * u * fine.t_final;

    let mut out = Outcome::default();
    out.check(Check::below("recovered action without control (refined)", fine_action, action_max));
    out.check(Check::below("relative sup error of the recovered drift", sup_rel, sup_max));
    out.metric("action_coarse", coarse_action);
    out.metric("action_fine", fine_action);
    out.metric("action_driven", driven.action);
    out.metric("action_driven_expected", injected_action);

    let last = driven.u.len() - 1;
    let mut curve = Curve::new("control_recovery", &["x", "u_mid", "u_final", "mu_final"]);
    let mid = last / 2;
    for (f, &x) in driven.faces.iter().enumerate() {
        curve.push(vec![x, driven.u[mid][f], driven.u[last][f], driven.face_density[last][f]]);
    }
    out.curves.push(curve);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_run_recovers() {
        let cfg = Config::parse("pde.dy = 0.05\npde.snapshots = 40\npde.t_final = 0.2\ncheck.action_max = 1e-2\ncheck.sup_rel_max = 0.1").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }
}
