//! `functional-identity`: `H(mu | Q^mu) / 2 + gamma(mu) / 2 = Ent_V(mu)`
//! for compressed densities `mu`.
//!
//! The constants in `gamma` and `Ent_V` come from a single calibration at the
//! interaction-free minimizer. `H` is computed against `Q^mu` discretized and
//! normalized on the grid of `mu`, while `log Z` in `gamma` is integrated on
//! its own wider window with step `identity.z_dx`.
//!
//! Keys: `identity.samples`, `grid.left`, `grid.right`, `grid.dy`,
//! `identity.z_dx`, `check.tol`, plus `model.*`.

use rodflow::functionals::{entropy_v, gamma_z, q_measure, relative_entropy, Calibration, ZWindow};
use rodflow::maps::Grid;
use rodflow::rng::trajectory_rng;

use crate::setup::{finish, model, random_smooth_density, seed, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = seed(cfg)?;
    let params = model(cfg, ModelDefaults::default())?;
    let samples: usize = cfg.get("identity.samples", 20)?;
    let grid = Grid::new(cfg.get("grid.left", -12.0)?, cfg.get("grid.right", 12.0)?, cfg.get("grid.dy", 0.01)?)?;
    let z_dx: f64 = cfg.get("identity.z_dx", 1e-3)?;
    let tol: f64 = cfg.get("check.tol", 1e-3)?;
    finish(cfg)?;

    let window = ZWindow::Auto { dx: z_dx };
    let cal = Calibration::compute(&params, grid, None, window)?;
    let mut out = Outcome::default();
    let mut curve = Curve::new("functional_identity", &["sample", "lhs", "ent_v", "difference"]);
    let mut worst = 0.0f64;
    for k in 0..samples {
        let mut rng = trajectory_rng(seed, k as u64);
        let mu = random_smooth_density(&mut rng, grid.left, grid.dy, grid.count, 2.0)?;
        let (log_z, _) = gamma_z(&mu, &params, window)?;
        // Q^mu discretized on the grid of mu, normalized there.
        let q = q_measure(&mu, &params, ZWindow::Fixed { left: grid.left, right: grid.right(), dx: grid.dy })?;
        let h = relative_entropy(&mu, &q.density)?;
        let lhs = 0.5 * h + 0.5 * cal.gamma(log_z);
        let ent = entropy_v(&mu, &params).total_unnormalized + cal.c_entropy;
        let diff = (lhs - ent).abs();
        worst = worst.max(diff);
        curve.push(vec![k as f64, lhs, ent, diff]);
    }
    out.check(Check::below("largest |H/2 + gamma/2 - Ent_V|", worst, tol));
    out.metric("c_entropy", cal.c_entropy);
    out.metric("c_gamma", cal.c_gamma);
    out.curves.push(curve);
    Ok(out)
}
