//! `edp-check`: solutions of the limit equation satisfy the
//! energy-dissipation balance.
//!
//! The equation is solved from a Gaussian bump at `pde.dy` and again with the
//! cell width halved and twice as many snapshots (the time step follows the
//! stability limit, so it shrinks as well). The relative residual must be
//! below `check.relative_max` on the coarse run and shrink by at least
//! `check.shrink_min`. The free energy must not increase between
//! snapshots.
//!
//! Keys: `edp.center`, `edp.width`, `edp.refine`, `check.relative_max`,
//! `check.shrink_min`, plus `model.*` and `pde.*`.

use rodflow::functionals::{edp_residual, free_energy, PathReport};
use rodflow::pde::solve_limit_pde;
use rodflow::{ModelParams, PdeConfig};

use crate::setup::{finish, model, pde, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

fn run_once(params: &ModelParams, pc: &PdeConfig, center: f64, width: f64) -> Result<(PathReport, Vec<f64>, Vec<f64>), CliError> {
    let rho0 = pc.discretize(|y| (-(y - center).powi(2) / (2.0 * width * width)).exp())?;
    let path = solve_limit_pde(&rho0, params, pc)?;
    let fe: Vec<f64> = path.states.iter().map(|s| free_energy(s, params).total_unnormalized).collect();
    Ok((edp_residual(&path, params)?, path.times.clone(), fe))
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let params = model(cfg, ModelDefaults::default())?;
    let pc = pde(cfg, PdeConfig::new(-14.0, 14.0, 0.005, 0.5))?;
    let center: f64 = cfg.get("edp.center", 1.0)?;
    let width: f64 = cfg.get("edp.width", 0.5)?;
    let refine: bool = cfg.get("edp.refine", true)?;
    let rel_max: f64 = cfg.get("check.relative_max", 0.05)?;
    let shrink_min: f64 = cfg.get("check.shrink_min", 1.5)?;
    finish(cfg)?;

    let mut out = Outcome::default();
    let (coarse, times, fe) = run_once(&params, &pc, center, width)?;
    let rel = coarse.relative_residual.map_or(f64::INFINITY, f64::abs);
    out.check(Check::below("relative EDP residual", rel, rel_max));
    let increases = fe.windows(2).filter(|w| w[1] > w[0]).count();
    out.check(Check::holds("free energy non-increasing", increases == 0).detail(format!("{increases} increases")));
    out.metric("coarse", &coarse);

    let mut curve = Curve::new("edp_free_energy", &["t", "free_energy"]);
    for (t, f) in times.iter().zip(&fe) {
        curve.push(vec![*t, *f]);
    }
    out.curves.push(curve);

    if refine {
        let fine_cfg = PdeConfig {
            dy: pc.dy / 2.0,
            dt: pc.dt.map(|d| d / 4.0),
            snapshots: pc.snapshots * 2,
            ..pc.clone()
        };
        let (fine, _, fe_fine) = run_once(&params, &fine_cfg, center, width)?;
        let rel_fine = fine.relative_residual.map_or(f64::INFINITY, f64::abs);
        let shrink = rel / rel_fine;
        out.check(Check::at_least("residual shrink factor under refinement", shrink, shrink_min));
        let inc = fe_fine.windows(2).filter(|w| w[1] > w[0]).count();
        out.check(Check::holds("free energy non-increasing (refined)", inc == 0));
        out.metric("fine", &fine);
        out.metric("shrink", shrink);
    }
    Ok(out)
}
