//! `bruna-chapman`: the small-`alpha` approximation with diffusion
//! `1/2 + alpha rho` differs from the limit equation by `O(alpha^2)`.
//!
//! For each `alpha` in `bc.alphas` both equations are solved from the same
//! initial density, and `gap(alpha) = sup |rho_full - rho_approx|` at the
//! final time is divided by `alpha^2`. The largest ratio over the smallest
//! must stay below `check.ratio_spread_max`.
//!
//! Keys: `bc.alphas`, `bc.center`, `bc.width`, `check.ratio_spread_max`,
//! plus `model.v.*`, `model.w.*` and `pde.*`. `model.w` must be zero.

use rodflow::pde::{solve_bruna_chapman, solve_limit_pde};
use rodflow::PdeConfig;

use crate::setup::{finish, model, pde, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let base = model(cfg, ModelDefaults::default())?;
    let pc = pde(cfg, PdeConfig::new(-8.0, 8.0, 0.01, 0.5))?;
    let alphas: Vec<f64> = cfg.list("bc.alphas", &[0.025, 0.05, 0.1])?;
    let center: f64 = cfg.get("bc.center", 0.5)?;
    let width: f64 = cfg.get("bc.width", 0.4)?;
    let spread_max: f64 = cfg.get("check.ratio_spread_max", 2.0)?;
    finish(cfg)?;
    if alphas.len() < 2 || alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(CliError::Usage("bc.alphas needs at least two positive values".into()));
    }

    let rho0 = pc.discretize(|y| (-(y - center).powi(2) / (2.0 * width * width)).exp())?;
    let mut out = Outcome::default();
    let mut curve = Curve::new("bruna_chapman", &["alpha", "gap", "gap_over_alpha2"]);
    let mut ratios = Vec::new();
    let mut profiles = Vec::new();
    for &a in &alphas {
        let params = base.with_alpha(a)?;
        let full = solve_limit_pde(&rho0, &params, &pc)?;
        let approx = solve_bruna_chapman(&rho0, &params, &pc)?;
        let (f, g) = (full.last(), approx.last());
        let gap = f.values().iter().zip(g.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ratios.push(gap / (a * a));
        curve.push(vec![a, gap, gap / (a * a)]);
        profiles.push((f.clone(), g.clone()));
    }
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    out.check(Check::below("spread of gap / alpha^2", hi / lo, spread_max).detail(format!("{ratios:?}")));
    out.metric("alphas", &alphas);
    out.metric("gap_over_alpha2", &ratios);
    out.curves.push(curve);

    let mut cols = vec!["y".to_string()];
    for a in &alphas {
        cols.push(format!("full_{a}"));
        cols.push(format!("approx_{a}"));
    }
    let mut prof = Curve { name: "bruna_chapman_profiles".into(), columns: cols, rows: Vec::new() };
    for j in 0..rho0.len() {
        let mut row = vec![rho0.center(j)];
        for (f, g) in &profiles {
            row.push(f.values()[j]);
            row.push(g.values()[j]);
        }
        prof.push(row);
    }
    out.curves.push(prof);
    Ok(out)
}
