//! Particle simulations.
//!
//! * [`simulate_compressed`]: Euler–Maruyama for point particles driven by the
//!   mean-field drift `b`. No constraints; particles may cross.
//! * [`simulate_expanded_direct`]: rods of length `alpha / n` with reflection at
//!   contact. Only used to cross-check the compressed system.
//! * [`sample_invariant_mcmc`], [`sample_tilted_initial`]: Metropolis sampling
//!   of the stationary (or tilted) law in compressed coordinates.
//! * [`sample_iid_q`], [`sample_iid_density`]: independent draws.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functionals::{q_measure, ZWindow};
use crate::maps::{expand_particles, Side};
use crate::measures::{EmpiricalMeasure, GridDensity};
use crate::potentials::{drift_b_all_into, DriftWorkspace, ModelParams, Potential};
use crate::rng::trajectory_rng;

/// How the rod simulator removes overlaps after an unconstrained step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restoration {
    /// Reflect the gap of each overlapping pair about `alpha / n`, keeping
    /// the pair's mean. Repeated until no pair overlaps.
    #[default]
    Mirror,
    /// Euclidean projection onto the admissible set.
    Project,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Steps between recorded snapshots. The final time is always recorded.
    pub record_every: usize,
    pub trajectories: usize,
    /// Multiplies the Brownian increments; `0` gives the deterministic flow.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default)]
    pub restoration: Restoration,
}

fn one() -> f64 {
    1.0
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, seed: u64) -> Self {
        let steps = (t_final / dt).round().max(1.0) as usize;
        Self { dt, t_final, seed, record_every: steps, trajectories: 1, noise_scale: 1.0, restoration: Restoration::Mirror }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt * (1.0 - 1e-12)) || !self.t_final.is_finite() {
            return Err(invalid(format!("t_final = {} must be at least dt = {}", self.t_final, self.dt)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        if self.trajectories == 0 {
            return Err(invalid("need at least one trajectory"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(invalid("noise_scale must be non-negative"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

/// Recorded particle trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticlePath {
    pub times: Vec<f64>,
    pub states: Vec<EmpiricalMeasure>,
    pub side: Side,
}

impl ParticlePath {
    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn last(&self) -> &EmpiricalMeasure {
        self.states.last().expect("paths hold at least the initial state")
    }

    /// Applies the expansion map to every snapshot.
    pub fn expanded(&self, alpha: f64) -> Result<ParticlePath> {
        if self.side != Side::Compressed {
            return Err(invalid("only compressed paths can be expanded"));
        }
        let states = self.states.iter().map(|s| expand_particles(s, alpha)).collect::<Result<_>>()?;
        Ok(ParticlePath { times: self.times.clone(), states, side: Side::Expanded })
    }
}

/// Runs `f(0), ..., f(count - 1)` on the rayon pool and returns the results
/// in index order.
pub fn ensemble<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

fn record(times: &mut Vec<f64>, states: &mut Vec<EmpiricalMeasure>, t: f64, x: &[f64]) -> Result<()> {
    times.push(t);
    states.push(EmpiricalMeasure::new(x.to_vec())?);
    Ok(())
}

/// Compressed system driven by caller-supplied Brownian increments.
///
/// `increments(step, dw)` must fill `dw` with the increments of the `n`
/// Brownian motions over step `step` (variance `dt` each). This is the
/// building block for common-random-number comparisons across step sizes.
pub fn simulate_compressed_driven<F>(
    init: &EmpiricalMeasure,
    params: &ModelParams,
    dt: f64,
    steps: usize,
    record_every: usize,
    mut increments: F,
) -> Result<ParticlePath>
where
    F: FnMut(usize, &mut [f64]),
{
    let n = init.len();
    let mut x = init.points().to_vec();
    let mut b = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut ws = DriftWorkspace::default();
    let mut times = Vec::new();
    let mut states = Vec::new();
    record(&mut times, &mut states, 0.0, &x)?;
    for step in 0..steps {
        drift_b_all_into(&x, params, &mut ws, &mut b);
        increments(step, &mut dw);
        for i in 0..n {
            x[i] += b[i] * dt + dw[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step + 1 });
        }
        if (step + 1) % record_every == 0 || step + 1 == steps {
            record(&mut times, &mut states, (step + 1) as f64 * dt, &x)?;
        }
    }
    Ok(ParticlePath { times, states, side: Side::Compressed })
}

fn gaussian_increments(rng: &mut ChaCha8Rng, scale: f64, dw: &mut [f64]) {
    for v in dw {
        let g: f64 = rng.sample(StandardNormal);
        *v = scale * g;
    }
}

/// Euler–Maruyama for the compressed system, trajectory `trajectory` of the
/// run `cfg.seed`.
pub fn simulate_compressed(
    init: &EmpiricalMeasure,
    params: &ModelParams,
    cfg: &SimConfig,
    trajectory: u64,
) -> Result<ParticlePath> {
    cfg.validate()?;
    let mut rng = trajectory_rng(cfg.seed, trajectory);
    let scale = cfg.noise_scale * cfg.dt.sqrt();
    simulate_compressed_driven(init, params, cfg.dt, cfg.steps(), cfg.record_every, |_, dw| {
        gaussian_increments(&mut rng, scale, dw)
    })
}

/// `cfg.trajectories` independent runs of [`simulate_compressed`].
pub fn simulate_compressed_ensemble(
    init: &EmpiricalMeasure,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<Vec<ParticlePath>> {
    cfg.validate()?;
    ensemble(cfg.trajectories, |k| simulate_compressed(init, params, cfg, k))
}

/// Rod drift `-V'(y_i) - (1/n) sum_j W'(y_i - y_j)` for sorted `y`.
fn rod_drift(y: &[f64], params: &ModelParams, out: &mut [f64]) {
    let n = y.len();
    for (o, &yi) in out.iter_mut().zip(y) {
        *o = -params.v.derivative(yi);
    }
    if params.w.profile().is_flat() {
        return;
    }
    let inv_n = 1.0 / n as f64;
    let cutoff = params.effective_cutoff(n).unwrap_or(f64::INFINITY);
    for k in 0..n {
        for l in k + 1..n {
            let d = y[k] - y[l];
            if -d > cutoff {
                break;
            }
            let f = params.w.derivative(d) * inv_n;
            out[k] -= f;
            out[l] += f;
        }
    }
}

/// Pool-adjacent-violators projection onto `{x : x_1 <= ... <= x_n}`.
fn isotonic(x: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for &v in x.iter() {
        let mut sum = v;
        let mut len = 1;
        while let Some(&(s, l)) = blocks.last() {
            if s / l as f64 > sum / len as f64 {
                sum += s;
                len += l;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, len));
    }
    let mut i = 0;
    for (s, l) in blocks {
        let mean = s / l as f64;
        for v in &mut x[i..i + l] {
            *v = mean;
        }
        i += l;
    }
}

/// Projects `y` (rod positions in label order) onto gaps `>= h`: subtract
/// `i h`, project onto ordered vectors, add back.
fn project_admissible(y: &mut [f64], h: f64) {
    for (i, v) in y.iter_mut().enumerate() {
        *v -= i as f64 * h;
    }
    isotonic(y);
    for (i, v) in y.iter_mut().enumerate() {
        *v += i as f64 * h;
    }
}

fn violated(y: &[f64], h: f64) -> bool {
    y.windows(2).any(|w| w[1] - w[0] < h - crate::maps::GAP_TOLERANCE)
}

/// Restores gaps `>= h` in place. Returns the number of sweeps used.
fn restore(y: &mut [f64], h: f64, mode: Restoration, step: usize) -> Result<usize> {
    let n = y.len();
    match mode {
        Restoration::Project => {
            if violated(y, h) {
                project_admissible(y, h);
            }
            Ok(1)
        }
        Restoration::Mirror => {
            let max_sweeps = 10 * n.max(1);
            for sweep in 0..max_sweeps {
                let mut changed = false;
                for i in 0..n.saturating_sub(1) {
                    let g = y[i + 1] - y[i];
                    if g < h {
                        let c = 0.5 * (y[i] + y[i + 1]);
                        let g2 = 2.0 * h - g;
                        y[i] = c - 0.5 * g2;
                        y[i + 1] = c + 0.5 * g2;
                        changed = true;
                    }
                }
                if !changed {
                    return Ok(sweep);
                }
            }
            if violated(y, h) {
                Err(Error::Projection { step, sweeps: max_sweeps })
            } else {
                Ok(max_sweeps)
            }
        }
    }
}

/// Rods with reflection at contact. `init` must have all gaps at least
/// `alpha / n`.
pub fn simulate_expanded_direct(
    init: &EmpiricalMeasure,
    params: &ModelParams,
    cfg: &SimConfig,
    trajectory: u64,
) -> Result<ParticlePath> {
    cfg.validate()?;
    let n = init.len();
    let h = params.alpha / n as f64;
    // Admissibility check on the initial condition.
    crate::maps::compress_particles(init, params.alpha)?;
    let mut rng = trajectory_rng(cfg.seed, trajectory);
    let scale = cfg.noise_scale * cfg.dt.sqrt();
    let steps = cfg.steps();
    let mut y = init.points().to_vec();
    let mut b = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut times = Vec::new();
    let mut states = Vec::new();
    record(&mut times, &mut states, 0.0, &y)?;
    for step in 0..steps {
        rod_drift(&y, params, &mut b);
        gaussian_increments(&mut rng, scale, &mut dw);
        for i in 0..n {
            y[i] += b[i] * cfg.dt + dw[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step + 1 });
        }
        restore(&mut y, h, cfg.restoration, step + 1)?;
        if (step + 1) % cfg.record_every == 0 || step + 1 == steps {
            record(&mut times, &mut states, (step + 1) as f64 * cfg.dt, &y)?;
        }
    }
    Ok(ParticlePath { times, states, side: Side::Expanded })
}

pub fn simulate_expanded_ensemble(
    init: &EmpiricalMeasure,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<Vec<ParticlePath>> {
    cfg.validate()?;
    ensemble(cfg.trajectories, |k| simulate_expanded_direct(init, params, cfg, k))
}

// ---------------------------------------------------------------------------
// Metropolis sampling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Sweeps (of `n` single-site proposals each) kept after burn-in.
    pub sweeps: usize,
    pub burn_in: usize,
    pub proposal_scale: f64,
    pub seed: u64,
    /// Tune the proposal scale during burn-in towards 40% acceptance.
    #[serde(default = "yes")]
    pub adapt: bool,
}

fn yes() -> bool {
    true
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { sweeps: 2000, burn_in: 1000, proposal_scale: 0.5, seed: 0, adapt: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub acceptance: f64,
    pub proposal_scale: f64,
    pub warning: Option<String>,
}

/// Unnormalized log-density of the sampled law, evaluated on sorted
/// compressed coordinates `s` through the expanded positions
/// `y_k = s_k + alpha k / n`:
/// `-sum_k U(y_k) - (2/n) sum_{k<l} W(y_k - y_l)`.
struct Target<'a> {
    alpha: f64,
    onsite: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    w: Option<&'a Potential>,
}

impl Target<'_> {
    fn log_density(&self, s: &[f64]) -> f64 {
        let n = s.len();
        let h = self.alpha / n as f64;
        let y: Vec<f64> = s.iter().enumerate().map(|(k, v)| v + k as f64 * h).collect();
        let mut e: f64 = y.iter().map(|&v| (self.onsite)(v)).sum();
        if let Some(w) = self.w {
            let mut pair = 0.0;
            for k in 0..n {
                for l in k + 1..n {
                    pair += w.value(y[k] - y[l]);
                }
            }
            e += 2.0 * pair / n as f64;
        }
        -e
    }

    /// Change in log-density when the particle at sorted index `k` moves to
    /// `new`. Returns the delta and the new sorted index.
    fn delta(&self, s: &[f64], k: usize, new: f64) -> (f64, usize) {
        let n = s.len();
        let h = self.alpha / n as f64;
        // New sorted index among the others.
        let r = if new >= s[k] {
            k + s[k + 1..].partition_point(|&v| v < new)
        } else {
            s[..k].partition_point(|&v| v <= new)
        };
        // Particles whose rank shifts: indices between r and k (exclusive of k).
        let (lo, hi, shift) = if r > k { (k + 1, r + 1, -h) } else { (r, k, h) };
        let old_y = s[k] + k as f64 * h;
        let new_y = new + r as f64 * h;
        let mut de = (self.onsite)(new_y) - (self.onsite)(old_y);
        for j in lo..hi {
            let yj = s[j] + j as f64 * h;
            de += (self.onsite)(yj + shift) - (self.onsite)(yj);
        }
        if let Some(w) = self.w {
            let inv = 2.0 / n as f64;
            // Moved particle against everyone else (old positions of others
            // for the old term, new positions for the new term).
            let pos = |j: usize, moved: bool| -> f64 {
                let y = s[j] + j as f64 * h;
                if moved && j >= lo && j < hi {
                    y + shift
                } else {
                    y
                }
            };
            let mut dp = 0.0;
            for j in 0..n {
                if j == k {
                    continue;
                }
                dp += w.value(new_y - pos(j, true)) - w.value(old_y - pos(j, false));
            }
            // Pairs among the shifted block are unchanged; shifted versus
            // fixed (not k) change.
            for j in lo..hi {
                let (a_old, a_new) = (pos(j, false), pos(j, true));
                for l in 0..n {
                    if l == k || (l >= lo && l < hi) {
                        continue;
                    }
                    let yl = pos(l, false);
                    dp += w.value(a_new - yl) - w.value(a_old - yl);
                }
            }
            de += inv * dp;
        }
        (-de, r)
    }
}

fn move_to(s: &mut [f64], k: usize, r: usize, new: f64) {
    if r > k {
        s.copy_within(k + 1..=r, k);
    } else if r < k {
        s.copy_within(r..k, r + 1);
    }
    s[r] = new;
}

fn run_chain(target: &Target, n: usize, chain: &ChainConfig) -> Result<(Vec<f64>, ChainStats)> {
    if n == 0 {
        return Err(invalid("need at least one particle"));
    }
    if !(chain.proposal_scale > 0.0) {
        return Err(invalid("proposal scale must be positive"));
    }
    let mut rng = trajectory_rng(chain.seed, 0);
    // Start from the rods packed around the origin.
    let mut s = vec![-0.5 * target.alpha; n];
    let mut scale = chain.proposal_scale;
    let sweep = |s: &mut Vec<f64>, scale: f64, rng: &mut ChaCha8Rng| -> usize {
        let mut accepted = 0;
        for _ in 0..n {
            let k = rng.random_range(0..n);
            let g: f64 = rng.sample(StandardNormal);
            let new = s[k] + scale * g;
            let (dlog, r) = target.delta(s, k, new);
            let u: f64 = rng.random();
            if dlog >= 0.0 || u.ln() < dlog {
                move_to(s, k, r, new);
                accepted += 1;
            }
        }
        accepted
    };
    let block = 20;
    let mut acc_block = 0;
    for b in 0..chain.burn_in {
        acc_block += sweep(&mut s, scale, &mut rng);
        if chain.adapt && (b + 1) % block == 0 {
            let rate = acc_block as f64 / (block * n) as f64;
            scale *= ((rate - 0.4) * 2.0).exp();
            acc_block = 0;
        }
    }
    let mut accepted = 0;
    for _ in 0..chain.sweeps {
        accepted += sweep(&mut s, scale, &mut rng);
    }
    let total = (chain.sweeps * n).max(1);
    let acceptance = accepted as f64 / total as f64;
    let warning = (!(0.05..=0.95).contains(&acceptance) && chain.sweeps > 0)
        .then(|| format!("acceptance rate {acceptance:.3} outside [0.05, 0.95]; adjust proposal_scale"));
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: chain.burn_in + chain.sweeps });
    }
    Ok((s, ChainStats { acceptance, proposal_scale: scale, warning }))
}

/// Metropolis sample of the stationary law of the compressed `n`-particle
/// system: density proportional to
/// `exp(-2 sum V(T x_i) - (1/n) sum_{i,j} W(T x_i - T x_j))`.
pub fn sample_invariant_mcmc(
    params: &ModelParams,
    n: usize,
    chain: &ChainConfig,
) -> Result<(EmpiricalMeasure, ChainStats)> {
    let v = &params.v;
    let target = Target {
        alpha: params.alpha,
        onsite: Box::new(move |y| 2.0 * v.value(y)),
        w: (!params.w.profile().is_flat()).then_some(&params.w),
    };
    let (s, stats) = run_chain(&target, n, chain)?;
    Ok((EmpiricalMeasure::new(s)?, stats))
}

/// Sample of the tilted, interaction-free law with density proportional to
/// `exp(-sum f(T x_i) - 2 sum V(T x_i))`, returned in expanded coordinates.
pub fn sample_tilted_initial(
    params: &ModelParams,
    f: &Potential,
    n: usize,
    chain: &ChainConfig,
) -> Result<(EmpiricalMeasure, ChainStats)> {
    let v = &params.v;
    let target = Target {
        alpha: params.alpha,
        onsite: Box::new(move |y| 2.0 * v.value(y) + f.value(y)),
        w: None,
    };
    let (s, stats) = run_chain(&target, n, chain)?;
    Ok((expand_particles(&EmpiricalMeasure::new(s)?, params.alpha)?, stats))
}

/// Exposes the log-density used by the samplers (sorted compressed input).
pub fn invariant_log_density(params: &ModelParams, sorted: &[f64]) -> f64 {
    let v = &params.v;
    let target = Target {
        alpha: params.alpha,
        onsite: Box::new(move |y| 2.0 * v.value(y)),
        w: (!params.w.profile().is_flat()).then_some(&params.w),
    };
    target.log_density(sorted)
}

/// `n` independent draws from a grid density by exact inversion of its
/// piecewise-linear CDF.
pub fn sample_iid_density<R: Rng + ?Sized>(g: &GridDensity, n: usize, rng: &mut R) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    let cum = g.cumulative();
    let total = cum[g.len()];
    let pts = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let j = (cum.partition_point(|&c| c <= u).max(1) - 1).min(g.len() - 1);
            let v = g.values()[j];
            if v > 0.0 {
                (g.edge(j) + (u - cum[j]) / v).min(g.edge(j + 1))
            } else {
                g.center(j)
            }
        })
        .collect();
    EmpiricalMeasure::new(pts)
}

/// `n` independent draws from the measure with density proportional to
/// `exp(-2 V(T_nu x))`.
pub fn sample_iid_q(
    nu: &GridDensity,
    params: &ModelParams,
    n: usize,
    window: ZWindow,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let q = q_measure(nu, params, window)?;
    let mut rng = trajectory_rng(seed, 0);
    sample_iid_density(&q.density, n, &mut rng)
}
