//! `steady-state`: minimizer of the free energy and its diagnostics.
//!
//! Solves the self-consistency equation on `grid.*`, then reports the spread
//! of `xi` over the support (zero at an exact minimizer), the free energy,
//! the local slope and the mass in the two wall cells.
//!
//! Keys: `grid.left`, `grid.right`, `grid.dy`, `steady.max_iterations`,
//! `steady.tolerance`, `steady.damping`, `check.xi_spread_max`,
//! `check.slope_max`, `check.wall_max`, plus `model.*` (including an optional
//! tilt `model.f.*`).

use rodflow::functionals::{free_energy, xi_field};
use rodflow::maps::Grid;
use rodflow::pde::{steady_state_with, SteadyConfig};

use crate::setup::{finish, model, profile, Family, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let params = model(cfg, ModelDefaults::default())?;
    let tilt = if cfg.contains("model.f.family") {
        Some(rodflow::Potential::new(profile(cfg, "model.f", Family::Zero)?, rodflow::Kind::Tilt)?)
    } else {
        None
    };
    let grid = Grid::new(cfg.get("grid.left", -14.0)?, cfg.get("grid.right", 14.0)?, cfg.get("grid.dy", 0.01)?)?;
    let d = SteadyConfig::default();
    let opts = SteadyConfig {
        max_iterations: cfg.get("steady.max_iterations", d.max_iterations)?,
        tolerance: cfg.get("steady.tolerance", d.tolerance)?,
        damping: cfg.get("steady.damping", d.damping)?,
    };
    let xi_max: f64 = cfg.get("check.xi_spread_max", 1e-6)?;
    let slope_max: f64 = cfg.get("check.slope_max", 1e-4)?;
    let wall_max: f64 = cfg.get("check.wall_max", 1e-10)?;
    finish(cfg)?;

    let rho = steady_state_with(&params, tilt.as_ref(), grid, &opts)?;
    // With a tilt the minimizer makes `xi + f/2` constant.
    let mut xi = xi_field(&rho, &params)?;
    if let Some(f) = &tilt {
        for (j, x) in xi.values.iter_mut().enumerate() {
            *x += 0.5 * f.value(rho.center(j));
        }
    }
    let on: Vec<f64> = xi.values.iter().zip(&xi.support).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
    let spread = on.iter().copied().fold(f64::NEG_INFINITY, f64::max) - on.iter().copied().fold(f64::INFINITY, f64::min);
    let slope = face_slope(&rho, &xi.values, &xi.support);
    let v = rho.values();
    let wall = v[0].max(v[v.len() - 1]);

    let mut out = Outcome::default();
    out.check(Check::below("xi spread on the support", spread, xi_max));
    out.check(Check::below("local slope", slope, slope_max));
    out.check(Check::below("wall density", wall, wall_max));
    out.metric("free_energy", free_energy(&rho, &params));
    out.metric("max_density", rho.max_value());
    out.metric("packing", params.alpha * rho.max_value());
    let mut curve = Curve::new("steady_state", &["y", "rho"]);
    for j in 0..rho.len() {
        curve.push(vec![rho.center(j), v[j]]);
    }
    out.curves.push(curve);
    Ok(out)
}

/// Same face-based slope as `metric_slope`, for a shifted `xi`.
fn face_slope(rho: &rodflow::GridDensity, xi: &[f64], support: &[bool]) -> f64 {
    let (r, dy) = (rho.values(), rho.dy());
    let mut s = 0.0;
    for j in 0..r.len() - 1 {
        if support[j] && support[j + 1] {
            let g = (xi[j + 1] - xi[j]) / dy;
            s += 0.5 * (r[j] + r[j + 1]) * g * g;
        }
    }
    (s * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_passes() {
        let cfg = Config::parse("grid.dy = 0.02\nmodel.w.family = gaussian\nmodel.w.w0 = 0.3\nmodel.w.sigma = 0.5").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }

    #[test]
    fn tilted_minimizer_passes() {
        let cfg = Config::parse("grid.dy = 0.02\nmodel.f.family = tanh\nmodel.f.a = 0.5\nmodel.f.scale = 1").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }
}
