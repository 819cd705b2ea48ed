//! Config sections shared by the experiments.
//!
//! | key | meaning |
//! |-----|---------|
//! | `run.seed` | master seed (overridden by `--seed`) |
//! | `model.alpha` | total rod length |
//! | `model.v.family`, `model.v.<param>` | on-site potential |
//! | `model.w.family`, `model.w.<param>` | pair interaction |
//! | `model.f.family`, `model.f.<param>` | tilt |
//! | `model.pair_cutoff` | optional interaction cutoff |
//! | `sim.dt`, `sim.t_final`, `sim.trajectories`, `sim.restoration` | particle runs |
//! | `pde.left`, `pde.right`, `pde.dy`, `pde.t_final`, `pde.snapshots`, `pde.cfl`, `pde.dt`, `pde.face_mean`, `pde.boundary_limit` | PDE runs |
//! | `chain.sweeps`, `chain.burn_in`, `chain.proposal_scale`, `chain.adapt` | Metropolis chains |
//!
//! Families and their parameters: `zero`; `constant` (`value`); `linear`
//! (`slope`); `huber` (`c`, `s`); `gaussian` (`w0`, `sigma`); `tanh` (`a`,
//! `scale`); `table` (`path`, a CSV file with columns `y, V, V'`).

use rand::Rng;
use rodflow::pde::FaceMean;
use rodflow::simulate::{ChainConfig, Restoration};
use rodflow::{GridDensity, Kind, ModelParams, PdeConfig, Potential, Profile, SimConfig};

use crate::{CliError, Config};

pub fn seed(cfg: &Config) -> Result<u64, CliError> {
    cfg.get("run.seed", 0u64)
}

/// Defaults for one potential slot.
#[derive(Clone, Copy, Debug)]
pub enum Family {
    Zero,
    Huber { c: f64, s: f64 },
    Gaussian { w0: f64, sigma: f64 },
    Tanh { a: f64, scale: f64 },
}

impl Family {
    fn name(&self) -> &'static str {
        match self {
            Family::Zero => "zero",
            Family::Huber { .. } => "huber",
            Family::Gaussian { .. } => "gaussian",
            Family::Tanh { .. } => "tanh",
        }
    }
}

pub fn profile(cfg: &Config, prefix: &str, default: Family) -> Result<Profile, CliError> {
    let family = cfg.string(&format!("{prefix}.family"), default.name());
    let key = |k: &str| format!("{prefix}.{k}");
    // Defaults only apply when the family matches the built-in one.
    let d = |field: &str| -> f64 {
        match (default, field) {
            (Family::Huber { c, .. }, "c") => c,
            (Family::Huber { s, .. }, "s") => s,
            (Family::Gaussian { w0, .. }, "w0") => w0,
            (Family::Gaussian { sigma, .. }, "sigma") => sigma,
            (Family::Tanh { a, .. }, "a") => a,
            (Family::Tanh { scale, .. }, "scale") => scale,
            _ => 1.0,
        }
    };
    let same = family == default.name();
    let param = |field: &str| -> Result<f64, CliError> {
        if same {
            cfg.get(&key(field), d(field))
        } else {
            cfg.optional(&key(field))?
                .ok_or_else(|| CliError::Usage(format!("`{}` is required for family {family}", key(field))))
        }
    };
    Ok(match family.as_str() {
        "zero" => Profile::Zero,
        "constant" => Profile::Constant { value: param("value")? },
        "linear" => Profile::Linear { slope: param("slope")? },
        "huber" => Profile::Huber { c: param("c")?, s: param("s")? },
        "gaussian" => Profile::Gaussian { w0: param("w0")?, sigma: param("sigma")? },
        "tanh" => Profile::Tanh { a: param("a")?, scale: param("scale")? },
        "table" => {
            let path: String = cfg
                .optional(&key("path"))?
                .ok_or_else(|| CliError::Usage(format!("`{}` is required for tables", key("path"))))?;
            Profile::table_from_path(path)?
        }
        other => return Err(CliError::Usage(format!("unknown potential family `{other}` for {prefix}"))),
    })
}

pub struct ModelDefaults {
    pub alpha: f64,
    pub v: Family,
    pub w: Family,
}

impl Default for ModelDefaults {
    fn default() -> Self {
        Self { alpha: 0.5, v: Family::Huber { c: 1.0, s: 1.0 }, w: Family::Zero }
    }
}

pub fn model(cfg: &Config, d: ModelDefaults) -> Result<ModelParams, CliError> {
    let alpha = cfg.get("model.alpha", d.alpha)?;
    let v = Potential::new(profile(cfg, "model.v", d.v)?, Kind::Onsite)?;
    let w = Potential::new(profile(cfg, "model.w", d.w)?, Kind::Interaction)?;
    let mut p = ModelParams::new(alpha, v, w)?;
    if let Some(r) = cfg.optional::<f64>("model.pair_cutoff")? {
        p = p.with_pair_cutoff(r)?;
    }
    Ok(p)
}

/// Tilt `f`, read from `model.f.*`.
pub fn tilt(cfg: &Config, default: Family) -> Result<Potential, CliError> {
    Ok(Potential::new(profile(cfg, "model.f", default)?, Kind::Tilt)?)
}

pub fn pde(cfg: &Config, d: PdeConfig) -> Result<PdeConfig, CliError> {
    let face_mean = match cfg.string("pde.face_mean", "arithmetic").as_str() {
        "arithmetic" => FaceMean::Arithmetic,
        "harmonic" => FaceMean::Harmonic,
        other => return Err(CliError::Usage(format!("unknown face mean `{other}`"))),
    };
    let c = PdeConfig {
        left: cfg.get("pde.left", d.left)?,
        right: cfg.get("pde.right", d.right)?,
        dy: cfg.get("pde.dy", d.dy)?,
        dt: cfg.optional("pde.dt")?.or(d.dt),
        cfl: cfg.get("pde.cfl", d.cfl)?,
        t_final: cfg.get("pde.t_final", d.t_final)?,
        snapshots: cfg.get("pde.snapshots", d.snapshots)?,
        face_mean,
        boundary_limit: cfg.get("pde.boundary_limit", d.boundary_limit)?,
        extra_drift: d.extra_drift,
    };
    c.validate()?;
    Ok(c)
}

pub fn sim(cfg: &Config, d: SimConfig) -> Result<SimConfig, CliError> {
    let restoration = match cfg.string("sim.restoration", "mirror").as_str() {
        "mirror" => Restoration::Mirror,
        "project" => Restoration::Project,
        other => return Err(CliError::Usage(format!("unknown restoration `{other}`"))),
    };
    let dt = cfg.get("sim.dt", d.dt)?;
    let t_final = cfg.get("sim.t_final", d.t_final)?;
    let mut c = SimConfig::new(dt, t_final, d.seed);
    c.trajectories = cfg.get("sim.trajectories", d.trajectories)?;
    c.restoration = restoration;
    c.validate()?;
    Ok(c)
}

pub fn chain(cfg: &Config, d: ChainConfig) -> Result<ChainConfig, CliError> {
    Ok(ChainConfig {
        sweeps: cfg.get("chain.sweeps", d.sweeps)?,
        burn_in: cfg.get("chain.burn_in", d.burn_in)?,
        proposal_scale: cfg.get("chain.proposal_scale", d.proposal_scale)?,
        seed: d.seed,
        adapt: cfg.get("chain.adapt", d.adapt)?,
    })
}

/// Rejects keys that the experiment did not read. Call after all settings
/// are resolved and before the expensive part starts.
/// Rejects keys no experiment read. `run.seed` is always accepted, since
/// `--seed` is common to every subcommand.
pub fn finish(cfg: &Config) -> Result<(), CliError> {
    let unused: Vec<String> = cfg.unused().into_iter().filter(|k| k != "run.seed").collect();
    if unused.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("unknown config keys: {}", unused.join(", "))))
    }
}

/// Smooth random density: a mixture of up to three Gaussian bumps with
/// centers in `[-c, c]`.
pub fn random_smooth_density<R: Rng>(rng: &mut R, left: f64, dy: f64, count: usize, c: f64) -> rodflow::Result<GridDensity> {
    let k = rng.random_range(1..=3);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.random_range(0.2..1.0), rng.random_range(-c..c), rng.random_range(0.3..1.0)))
        .collect();
    GridDensity::from_fn(left, dy, count, |x| {
        bumps.iter().map(|(w, m, s)| w * (-(x - m) * (x - m) / (2.0 * s * s)).exp()).sum()
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
