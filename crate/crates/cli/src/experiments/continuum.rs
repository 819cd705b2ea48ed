//! `continuum-limit`: expanded empirical measures of the particle system
//! approach the solution of the limit equation as `n` grows.
//!
//! Two initial conditions:
//!
//! * `continuum.init = uniform`: i.i.d. compressed draws whose expanded law
//!   is uniform on `[continuum.a, continuum.b]`; the PDE starts from the
//!   exact cell averages of that uniform density.
//! * `continuum.init = tilted`: the tilted invariant sampler with tilt
//!   `model.f.*`; the PDE starts from the minimizer of the tilted free
//!   energy.
//!
//! For each `n` in `continuum.ns` the distance `W2(rho_n(T), rho(T))` is
//! averaged over `continuum.seeds` runs. The averages must decrease strictly
//! and the last one must be below `check.final_max`.
//!
//! Keys: `continuum.ns`, `continuum.seeds`, `continuum.init`, `continuum.a`,
//! `continuum.b`, `check.final_max`, plus `model.*`, `sim.*`, `pde.*` and
//! `chain.*`.

use rand::Rng;
use rodflow::functionals::tilted_minimizer;
use rodflow::maps::{compress_particles, expand_particles};
use rodflow::measures::wasserstein2_on;
use rodflow::pde::solve_limit_pde;
use rodflow::rng::trajectory_rng;
use rodflow::simulate::{ensemble, sample_tilted_initial, simulate_compressed, ChainConfig};
use rodflow::{EmpiricalMeasure, PdeConfig, SimConfig};

use crate::setup::{chain, finish, model, pde, seed, sim, tilt, Family, ModelDefaults};
use crate::{Check, CliError, Config, Curve, Outcome};

enum Init {
    Uniform { a: f64, b: f64 },
    Tilted,
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = seed(cfg)?;
    let init = match cfg.string("continuum.init", "uniform").as_str() {
        "uniform" => Init::Uniform { a: cfg.get("continuum.a", 0.0)?, b: cfg.get("continuum.b", 1.0)? },
        "tilted" => Init::Tilted,
        other => return Err(CliError::Usage(format!("unknown initial condition `{other}`"))),
    };
    let params = model(cfg, ModelDefaults { alpha: 0.5, v: Family::Zero, w: Family::Zero })?;
    let f = match init {
        Init::Tilted => Some(tilt(cfg, Family::Tanh { a: 0.5, scale: 1.0 })?),
        Init::Uniform { .. } => None,
    };
    let chain_cfg = match init {
        Init::Tilted => Some(chain(cfg, ChainConfig::default())?),
        Init::Uniform { .. } => None,
    };
    let sc = sim(cfg, SimConfig::new(0.005, 0.5, seed))?;
    let pc = pde(cfg, PdeConfig::new(-5.5, 6.5, 0.005, sc.t_final))?;
    let ns: Vec<usize> = cfg.list("continuum.ns", &[100, 400, 1600])?;
    let seeds: usize = cfg.get("continuum.seeds", 20)?;
    let final_max: f64 = cfg.get("check.final_max", 0.05)?;
    finish(cfg)?;
    if ns.is_empty() || seeds == 0 || ns.contains(&0) {
        return Err(CliError::Usage("continuum needs particle counts and seeds".into()));
    }
    if (pc.t_final - sc.t_final).abs() > 1e-12 {
        return Err(CliError::Usage("pde.t_final and sim.t_final must agree".into()));
    }

    let rho0 = match (&init, &f) {
        (Init::Uniform { a, b }, _) => {
            if !(b - a > params.alpha) {
                return Err(CliError::Usage("the uniform interval must be longer than alpha".into()));
            }
            pc.uniform(*a, *b)?
        }
        (Init::Tilted, Some(f)) => tilted_minimizer(&params, f, pc.grid())?,
        _ => unreachable!(),
    };
    let limit = solve_limit_pde(&rho0, &params, &pc)?;
    let rho_t = limit.last();

    let mut out = Outcome::default();
    let mut curve = Curve::new("continuum", &["n", "mean_w2", "std_w2"]);
    let mut means = Vec::new();
    for &n in &ns {
        let m = 2048.max(16 * n);
        let run_seed = seed.wrapping_add(n as u64);
        let dists = ensemble(seeds, |s| {
            let x0 = match (&init, &f, &chain_cfg) {
                (Init::Uniform { a, b }, _, _) => {
                    // Expanded density 1/(b-a) on [a, b] compresses to
                    // 1/(b-a-alpha) on [a, b-alpha].
                    let mut rng = trajectory_rng(run_seed ^ 0x1417, s);
                    let hi = b - params.alpha;
                    EmpiricalMeasure::new((0..n).map(|_| rng.random_range(*a..hi)).collect())?
                }
                (Init::Tilted, Some(f), Some(c)) => {
                    let c = ChainConfig { seed: run_seed ^ (s << 20), ..c.clone() };
                    compress_particles(&sample_tilted_initial(&params, f, n, &c)?.0, params.alpha)?
                }
                _ => unreachable!(),
            };
            let path = simulate_compressed(&x0, &params, &SimConfig { seed: run_seed, ..sc.clone() }, s)?;
            let y = expand_particles(path.last(), params.alpha)?;
            Ok(wasserstein2_on(&y, rho_t, m))
        })?;
        let mean = dists.iter().sum::<f64>() / seeds as f64;
        let var = dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (seeds.max(2) - 1) as f64;
        curve.push(vec![n as f64, mean, var.sqrt()]);
        means.push(mean);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    out.check(Check::holds("mean distance strictly decreasing in n", decreasing).detail(format!("{means:?}")));
    out.check(Check::below("mean distance at the largest n", *means.last().unwrap_or(&f64::NAN), final_max));
    out.metric("ns", &ns);
    out.metric("mean_w2", &means);

    let mut density = Curve::new("continuum_density", &["y", "rho0", "rho_t"]);
    for j in 0..rho_t.len() {
        density.push(vec![rho_t.center(j), rho0.values()[j], rho_t.values()[j]]);
    }
    out.curves.push(curve);
    out.curves.push(density);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_runs() {
        let cfg = Config::parse("continuum.ns = 20, 200\ncontinuum.seeds = 4\npde.dy = 0.02\ncheck.final_max = 0.2").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
    }

    #[test]
    fn rejects_short_interval() {
        let cfg = Config::parse("continuum.a = 0\ncontinuum.b = 0.4\ncontinuum.ns = 10\ncontinuum.seeds = 1").unwrap();
        assert!(matches!(run(&cfg), Err(CliError::Usage(_))));
    }
}
