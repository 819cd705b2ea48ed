//! `invariant-ldp`: a sample of the invariant measure concentrates on the
//! minimizer of the free energy.
//!
//! A Metropolis chain at `invariant.n` particles is run in compressed
//! coordinates, its final state expanded and histogrammed, and compared with
//! the steady state of the limit equation.
//!
//! Keys: `invariant.n`, `grid.left`, `grid.right`, `grid.dy`,
//! `check.w2_max`, plus `model.*` and `chain.*`.

use rodflow::maps::{expand_particles, Grid};
use rodflow::measures::{histogram, wasserstein2, wasserstein2_on};
use rodflow::pde::steady_state;
use rodflow::simulate::{sample_invariant_mcmc, ChainConfig};

use crate::setup::{chain, finish, model, seed, Family, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = seed(cfg)?;
    let params = model(cfg, ModelDefaults { alpha: 0.5, v: Family::Huber { c: 3.0, s: 1.0 }, w: Family::Zero })?;
    let cc = chain(cfg, ChainConfig { seed, ..ChainConfig::default() })?;
    let n: usize = cfg.get("invariant.n", 1000)?;
    let grid = Grid::new(cfg.get("grid.left", -8.0)?, cfg.get("grid.right", 8.0)?, cfg.get("grid.dy", 0.01)?)?;
    let w2_max: f64 = cfg.get("check.w2_max", 0.05)?;
    finish(cfg)?;

    let rho_star = steady_state(&params, grid)?;
    let (x, stats) = sample_invariant_mcmc(&params, n, &cc)?;
    let y = expand_particles(&x, params.alpha)?;
    let hist = histogram(&y, grid.left, grid.dy, grid.count)?;
    let d_hist = wasserstein2(&hist, &rho_star);
    let d_emp = wasserstein2_on(&y, &rho_star, 2048.max(16 * n));

    let mut out = Outcome::default();
    out.check(Check::below("W2(histogram, steady state)", d_hist, w2_max));
    out.metric("w2_histogram", d_hist);
    out.metric("w2_empirical", d_emp);
    out.metric("acceptance", stats.acceptance);
    out.metric("proposal_scale", stats.proposal_scale);
    if let Some(w) = stats.warning {
        out.warnings.push(w);
    }
    let mut curve = Curve::new("invariant", &["y", "histogram", "steady_state"]);
    for j in 0..grid.count {
        curve.push(vec![grid.center(j), hist.values()[j], rho_star.values()[j]]);
    }
    out.curves.push(curve);
    Ok(out)
}
