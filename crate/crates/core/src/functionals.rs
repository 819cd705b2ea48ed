//! Free energies, transport quantities along paths, and rate functionals.
//!
//! Conventions:
//!
//! * Densities in expanded coordinates are written `rho`, in compressed
//!   coordinates `mu`. Both are [`GridDensity`] values.
//! * Free energies are returned unnormalized. The constants that make their
//!   minimum zero are computed separately by [`Calibration`].
//! * Path functionals use the trapezoid rule on the recorded time grid.

use serde::{Deserialize, Serialize};

use crate::conv::Convolver;
use crate::error::{invalid, Error, Result};
use crate::maps::{compress_grid, Grid, Side};
use crate::measures::{wasserstein2_on, GridDensity};
use crate::pde::{compressed_drift_at_faces, steady_state_with, DensityPath, SteadyConfig};
use crate::potentials::{ModelParams, Potential};

/// Densities below this are outside the support.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// Minimum number of snapshots for path functionals.
pub const MIN_SNAPSHOTS: usize = 20;

/// Faces whose density is below this fraction of the peak are left out of
/// control recovery; there the flux is dominated by rounding.
pub const RECOVERY_FLOOR: f64 = 1e-8;

/// Mass grid used for Wasserstein distances between snapshots.
pub const PATH_MASS_GRID: usize = 8192;

/// Itemized free energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub entropy_term: f64,
    pub onsite_term: f64,
    pub interaction_term: f64,
    pub total_unnormalized: f64,
    /// Additive constant making the minimum zero, when known.
    pub normalization: Option<f64>,
    /// `false` when the density reaches `1 / alpha` somewhere.
    pub finite: bool,
}

impl FunctionalReport {
    fn assemble(entropy: f64, onsite: f64, interaction: f64, finite: bool) -> Self {
        let total = if finite { entropy + onsite + interaction } else { f64::INFINITY };
        Self {
            entropy_term: if finite { entropy } else { f64::INFINITY },
            onsite_term: onsite,
            interaction_term: interaction,
            total_unnormalized: total,
            normalization: None,
            finite,
        }
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = Some(c);
        self
    }

    /// `total_unnormalized + normalization`, if the constant is known.
    pub fn normalized(&self) -> Option<f64> {
        self.normalization.map(|c| self.total_unnormalized + c)
    }
}

fn xlogx_half(rho: f64, alpha: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else {
        0.5 * rho * (rho / (1.0 - alpha * rho)).ln()
    }
}

fn at_ceiling(rho: &GridDensity, alpha: f64) -> bool {
    alpha > 0.0 && rho.values().iter().any(|&r| r >= 1.0 / alpha - 1e-12)
}

/// `(W * rho)` at the cell centers.
fn convolve(rho: &GridDensity, w: &Potential) -> Option<Vec<f64>> {
    match w.profile() {
        _ if w.is_zero() => None,
        crate::potentials::Profile::Constant { value } => Some(vec![*value * rho.mass(); rho.len()]),
        _ => Some(Convolver::new(rho.len(), rho.dy(), |y| w.value(y)).apply(rho.values())),
    }
}

/// `int rho [ log(rho / (1 - alpha rho)) / 2 + V ] + (1/2) int int W(y - y') rho rho'`.
pub fn free_energy(rho: &GridDensity, params: &ModelParams) -> FunctionalReport {
    let alpha = params.alpha;
    let dy = rho.dy();
    let finite = !at_ceiling(rho, alpha);
    let entropy: f64 = if finite { rho.values().iter().map(|&r| xlogx_half(r, alpha)).sum::<f64>() * dy } else { 0.0 };
    let onsite: f64 =
        rho.values().iter().enumerate().map(|(j, &r)| r * params.v.value(rho.center(j))).sum::<f64>() * dy;
    let interaction = match convolve(rho, &params.w) {
        Some(c) => 0.5 * rho.values().iter().zip(&c).map(|(r, w)| r * w).sum::<f64>() * dy,
        None => 0.0,
    };
    FunctionalReport::assemble(entropy, onsite, interaction, finite)
}

/// Positions `T_mu x_j` of the cell centers of a compressed density.
pub fn t_positions(mu: &GridDensity, alpha: f64) -> Vec<f64> {
    let cum = mu.cumulative();
    (0..mu.len()).map(|j| mu.center(j) + alpha * (cum[j] + 0.5 * mu.values()[j] * mu.dy())).collect()
}

/// The same free energy in compressed coordinates:
/// `int mu [ log(mu) / 2 + V(T_mu x) ] + (1/2) int int W(T_mu x - T_mu x') mu mu'`.
pub fn free_energy_compressed(mu: &GridDensity, params: &ModelParams) -> FunctionalReport {
    let dx = mu.dy();
    let t = t_positions(mu, params.alpha);
    let m = mu.values();
    let entropy: f64 = m.iter().map(|&v| xlogx_half(v, 0.0)).sum::<f64>() * dx;
    let onsite: f64 = m.iter().zip(&t).map(|(v, &y)| v * params.v.value(y)).sum::<f64>() * dx;
    let interaction = if params.w.profile().is_flat() {
        if let crate::potentials::Profile::Constant { value } = params.w.profile() {
            0.5 * value
        } else {
            0.0
        }
    } else {
        let support: Vec<usize> = (0..m.len()).filter(|&j| m[j] > 0.0).collect();
        let mut s = 0.0;
        for &j in &support {
            let mut row = 0.0;
            for &k in &support {
                row += params.w.value(t[j] - t[k]) * m[k];
            }
            s += m[j] * row;
        }
        0.5 * s * dx * dx
    };
    FunctionalReport::assemble(entropy, onsite, interaction, true)
}

/// `int rho log(rho / (1 - alpha rho)) / 2 + int (f/2 + V) rho`.
pub fn tilted_free_energy(rho: &GridDensity, params: &ModelParams, f: &Potential) -> FunctionalReport {
    let alpha = params.alpha;
    let dy = rho.dy();
    let finite = !at_ceiling(rho, alpha);
    let entropy: f64 = if finite { rho.values().iter().map(|&r| xlogx_half(r, alpha)).sum::<f64>() * dy } else { 0.0 };
    let onsite: f64 = rho
        .values()
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let y = rho.center(j);
            r * (params.v.value(y) + 0.5 * f.value(y))
        })
        .sum::<f64>()
        * dy;
    FunctionalReport::assemble(entropy, onsite, 0.0, finite)
}

/// Interaction-free free energy in compressed coordinates,
/// `int mu [ log(mu) / 2 + V(T_mu x) ]`.
pub fn entropy_v(mu: &GridDensity, params: &ModelParams) -> FunctionalReport {
    free_energy_compressed(mu, &params.without_interaction())
}

/// `sum dy mu log(mu / nu)`; `+inf` when `mu` charges a cell where `nu`
/// vanishes.
pub fn relative_entropy(mu: &GridDensity, nu: &GridDensity) -> Result<f64> {
    if !mu.same_grid(nu) {
        return Err(Error::GridMismatch);
    }
    let mut s = 0.0;
    for (&a, &b) in mu.values().iter().zip(nu.values()) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += a * (a / b).ln();
        }
    }
    Ok(s * mu.dy())
}

// ---------------------------------------------------------------------------
// The reference measures Q^nu

/// Integration window for the normalization of `exp(-2 V(T_nu x))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ZWindow {
    /// Window from the coercivity bound of `V`, wide enough that the tails
    /// carry less than `1e-10`.
    Auto { dx: f64 },
    Fixed { left: f64, right: f64, dx: f64 },
}

/// Probability density proportional to `exp(-2 V(T_nu x))` and its
/// normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QMeasure {
    pub density: GridDensity,
    pub log_z: f64,
}

/// Tail truncation half-width for the `Auto` window: the mass of
/// `exp(-2 V(T x))` outside `[-L, L]` is at most
/// `exp(2 c2 + 2 c1 alpha - 2 c1 L) / c1`.
pub fn tail_half_width(params: &ModelParams, tail: f64) -> Result<f64> {
    let c = params.v.coercivity().ok_or(Error::NotCoercive("the automatic integration window"))?;
    Ok(params.alpha + (2.0 * c.c2 + (1.0 / (c.c1 * tail)).ln()) / (2.0 * c.c1))
}

pub fn q_measure(nu: &GridDensity, params: &ModelParams, window: ZWindow) -> Result<QMeasure> {
    let (left, right, dx) = match window {
        ZWindow::Auto { dx } => {
            let l = tail_half_width(params, 1e-10)?;
            (nu.left().min(-l), nu.right().max(l), dx)
        }
        ZWindow::Fixed { left, right, dx } => (left, right, dx),
    };
    let grid = Grid::new(left, right, dx)?;
    // Rescale the cell width so the window is covered exactly.
    let dx = (right - left) / grid.count as f64;
    let cum = nu.cumulative();
    let log_w: Vec<f64> = (0..grid.count)
        .map(|j| {
            let x = left + (j as f64 + 0.5) * dx;
            -2.0 * params.v.value(x + params.alpha * nu.cdf_with(&cum, x))
        })
        .collect();
    let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_w.iter().map(|l| (l - peak).exp()).sum::<f64>() * dx;
    let log_z = peak + sum.ln();
    let density = GridDensity::new(left, dx, log_w.iter().map(|l| (l - log_z).exp()).collect())?;
    Ok(QMeasure { density, log_z })
}

/// `(log Z, -log Z)` with `Z = int exp(-2 V(T_nu x)) dx`; the second entry is
/// the uncalibrated `gamma(nu)`.
pub fn gamma_z(nu: &GridDensity, params: &ModelParams, window: ZWindow) -> Result<(f64, f64)> {
    let q = q_measure(nu, params, window)?;
    Ok((q.log_z, -q.log_z))
}

/// `H(mu | Q^mu)` with `log Z` supplied, evaluated on the grid of `mu`.
pub fn relative_entropy_to_q(mu: &GridDensity, params: &ModelParams, log_z: f64) -> f64 {
    let cum = mu.cumulative();
    mu.values()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(j, &m)| {
            let x = mu.center(j);
            let tx = x + params.alpha * mu.cdf_with(&cum, x);
            m * (m.ln() + 2.0 * params.v.value(tx) + log_z)
        })
        .sum::<f64>()
        * mu.dy()
}

// ---------------------------------------------------------------------------
// Calibration

/// Additive constants that make each functional vanish at its minimizer,
/// computed on a truncated grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub grid: Grid,
    /// `-F(rho*)` for the minimizer `rho*` of the free energy.
    pub c_free_energy: f64,
    /// `-Ent_V(mu*)` at the interaction-free minimizer.
    pub c_entropy: f64,
    /// `log Z(mu*) - H(mu* | Q^{mu*})`.
    pub c_gamma: f64,
    /// `-F^f(rho_f)` at the minimizer of the tilted free energy.
    pub c_tilt: Option<f64>,
}

impl Calibration {
    pub fn compute(params: &ModelParams, grid: Grid, tilt: Option<&Potential>, window: ZWindow) -> Result<Self> {
        let opts = SteadyConfig::default();
        let rho_star = steady_state_with(params, None, grid, &opts)?;
        let c_free_energy = -free_energy(&rho_star, params).total_unnormalized;
        let free = params.without_interaction();
        let rho_free = steady_state_with(&free, None, grid, &opts)?;
        let mu_star = compress_grid(&rho_free, params.alpha, grid)?;
        let c_entropy = -entropy_v(&mu_star, params).total_unnormalized;
        let (log_z, _) = gamma_z(&mu_star, params, window)?;
        let c_gamma = log_z - relative_entropy_to_q(&mu_star, params, log_z);
        let c_tilt = match tilt {
            Some(f) => {
                let rho_f = steady_state_with(&free, Some(f), grid, &opts)?;
                Some(-tilted_free_energy(&rho_f, params, f).total_unnormalized)
            }
            None => None,
        };
        Ok(Self { grid, c_free_energy, c_entropy, c_gamma, c_tilt })
    }

    /// `gamma(mu) = C_gamma - log Z^{Q, mu}`.
    pub fn gamma(&self, log_z: f64) -> f64 {
        self.c_gamma - log_z
    }
}

/// Minimizer of the tilted free energy: the interaction-free steady state
/// with on-site potential `V + f/2`.
pub fn tilted_minimizer(params: &ModelParams, f: &Potential, grid: Grid) -> Result<GridDensity> {
    steady_state_with(&params.without_interaction(), Some(f), grid, &SteadyConfig::default())
}

// ---------------------------------------------------------------------------
// Slopes

/// `xi = log(rho / (1 - alpha rho)) / 2 + 1 / (2 (1 - alpha rho)) + V + W * rho`
/// on the support, with its derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiField {
    pub values: Vec<f64>,
    /// Centered differences inside the support, one-sided at its edges, zero
    /// outside.
    pub gradient: Vec<f64>,
    pub support: Vec<bool>,
}

pub fn xi_field(rho: &GridDensity, params: &ModelParams) -> Result<XiField> {
    let alpha = params.alpha;
    let support: Vec<bool> = rho.values().iter().map(|&r| r > SUPPORT_FLOOR).collect();
    if !support.iter().any(|&s| s) {
        return Err(Error::EmptySupport);
    }
    if at_ceiling(rho, alpha) {
        return Err(Error::InfiniteFreeEnergy { snapshot: 0 });
    }
    let conv = convolve(rho, &params.w);
    let values: Vec<f64> = rho
        .values()
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            if !support[j] {
                return f64::NAN;
            }
            let s = 1.0 - alpha * r;
            0.5 * (r / s).ln() + 0.5 / s + params.v.value(rho.center(j)) + conv.as_ref().map_or(0.0, |c| c[j])
        })
        .collect();
    let n = values.len();
    let dy = rho.dy();
    let gradient = (0..n)
        .map(|j| {
            if !support[j] {
                return 0.0;
            }
            let l = j > 0 && support[j - 1];
            let r = j + 1 < n && support[j + 1];
            match (l, r) {
                (true, true) => (values[j + 1] - values[j - 1]) / (2.0 * dy),
                (false, true) => (values[j + 1] - values[j]) / dy,
                (true, false) => (values[j] - values[j - 1]) / dy,
                (false, false) => 0.0,
            }
        })
        .collect();
    Ok(XiField { values, gradient, support })
}

/// Local slope `(int |d_y xi|^2 rho)^{1/2}`. The derivative is taken across
/// each cell face and weighted by the face density, which matches the
/// dissipation of the finite-volume scheme.
pub fn metric_slope(rho: &GridDensity, params: &ModelParams) -> Result<f64> {
    let xi = xi_field(rho, params)?;
    let r = rho.values();
    let dy = rho.dy();
    let mut s = 0.0;
    for j in 0..r.len() - 1 {
        if xi.support[j] && xi.support[j + 1] {
            let g = (xi.values[j + 1] - xi.values[j]) / dy;
            s += 0.5 * (r[j] + r[j + 1]) * g * g;
        }
    }
    Ok((s * dy).sqrt())
}

/// The same slope from the explicit minimal-norm element
/// `d_y rho / (2 rho (1 - alpha rho)^2) + V' + W' * rho`, cell-centered,
/// skipping support-edge cells below `1e-8`.
pub fn minimal_norm_slope(rho: &GridDensity, params: &ModelParams) -> Result<f64> {
    let alpha = params.alpha;
    let r = rho.values();
    let n = r.len();
    let dy = rho.dy();
    if !r.iter().any(|&v| v > SUPPORT_FLOOR) {
        return Err(Error::EmptySupport);
    }
    let dconv = (!params.w.profile().is_flat())
        .then(|| Convolver::new(n, dy, |y| params.w.derivative(y)).apply(r));
    let mut s = 0.0;
    for j in 1..n - 1 {
        if r[j] <= SUPPORT_FLOOR {
            continue;
        }
        let edge = r[j - 1] <= SUPPORT_FLOOR || r[j + 1] <= SUPPORT_FLOOR;
        if edge && r[j] < 1e-8 {
            continue;
        }
        let drho = (r[j + 1] - r[j - 1]) / (2.0 * dy);
        let sat = 1.0 - alpha * r[j];
        let w = drho / (2.0 * r[j] * sat * sat)
            + params.v.derivative(rho.center(j))
            + dconv.as_ref().map_or(0.0, |c| c[j]);
        s += r[j] * w * w;
    }
    Ok((s * dy).sqrt())
}

// ---------------------------------------------------------------------------
// Path functionals

fn check_path(path: &DensityPath) -> Result<()> {
    if path.states.len() != path.times.len() {
        return Err(invalid("path times and states differ in length"));
    }
    if path.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("path times must be strictly increasing"));
    }
    Ok(())
}

/// Metric derivative at interior snapshot `k`:
/// `W2(rho_{k+1}, rho_{k-1}) / (t_{k+1} - t_{k-1})`.
pub fn metric_derivative(path: &DensityPath, k: usize) -> Result<f64> {
    check_path(path)?;
    if k == 0 || k + 1 >= path.len() {
        return Err(Error::BoundaryIndex { index: k, len: path.len() });
    }
    let w = wasserstein2_on(&path.states[k + 1], &path.states[k - 1], PATH_MASS_GRID);
    Ok(w / (path.times[k + 1] - path.times[k - 1]))
}

/// Metric derivative at every snapshot, one-sided at the two ends.
pub fn metric_speeds(path: &DensityPath) -> Result<Vec<f64>> {
    check_path(path)?;
    let n = path.len();
    if n < 2 {
        return Err(Error::TooFewSnapshots { got: n, need: 2 });
    }
    let one_sided = |a: usize, b: usize| {
        wasserstein2_on(&path.states[a], &path.states[b], PATH_MASS_GRID) / (path.times[b] - path.times[a])
    };
    let mut v = Vec::with_capacity(n);
    v.push(one_sided(0, 1));
    for k in 1..n - 1 {
        v.push(metric_derivative(path, k)?);
    }
    v.push(one_sided(n - 2, n - 1));
    Ok(v)
}

fn trapezoid(times: &[f64], f: &[f64]) -> f64 {
    times.windows(2).zip(f.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// Terms of the energy-dissipation balance along a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub fe_initial: f64,
    pub fe_final: f64,
    /// `(1/2) int |rho'|^2 dt`.
    pub action_velocity: f64,
    /// `(1/2) int |dF|^2 dt`.
    pub action_slope: f64,
    /// `fe_final - fe_initial + action_velocity + action_slope`.
    pub edp_residual: f64,
    /// Residual divided by the free-energy drop, when the drop is nonzero.
    pub relative_residual: Option<f64>,
    /// Normalized tilted free energy of the initial state.
    pub tilted_initial: Option<f64>,
    /// `2 tilted_initial + edp_residual`; `+inf` when a term is infinite.
    pub rate_value: Option<f64>,
}

/// Energy-dissipation residual of an expanded-coordinate path.
pub fn edp_residual(path: &DensityPath, params: &ModelParams) -> Result<PathReport> {
    check_path(path)?;
    if path.side != Side::Expanded {
        return Err(invalid("the energy-dissipation balance is evaluated in expanded coordinates"));
    }
    if path.len() < MIN_SNAPSHOTS {
        return Err(Error::TooFewSnapshots { got: path.len(), need: MIN_SNAPSHOTS });
    }
    let mut fe = Vec::with_capacity(path.len());
    let mut slope2 = Vec::with_capacity(path.len());
    for (k, s) in path.states.iter().enumerate() {
        let f = free_energy(s, params);
        if !f.finite {
            return Err(Error::InfiniteFreeEnergy { snapshot: k });
        }
        fe.push(f.total_unnormalized);
        slope2.push(metric_slope(s, params)?.powi(2));
    }
    let speed2: Vec<f64> = metric_speeds(path)?.iter().map(|v| v * v).collect();
    let action_velocity = 0.5 * trapezoid(&path.times, &speed2);
    let action_slope = 0.5 * trapezoid(&path.times, &slope2);
    let fe_initial = fe[0];
    let fe_final = fe[fe.len() - 1];
    let edp_residual = fe_final - fe_initial + action_velocity + action_slope;
    let drop = fe_initial - fe_final;
    Ok(PathReport {
        fe_initial,
        fe_final,
        action_velocity,
        action_slope,
        edp_residual,
        relative_residual: (drop != 0.0).then(|| edp_residual / drop.abs()),
        tilted_initial: None,
        rate_value: None,
    })
}

/// Path rate functional
/// `2 F^f(rho_0) + F(rho_T) - F(rho_0) + (1/2) int |rho'|^2 + (1/2) int |dF|^2`
/// with `F^f` normalized by `c_tilt`.
pub fn rate_functional_path(path: &DensityPath, params: &ModelParams, f: &Potential, c_tilt: f64) -> Result<PathReport> {
    let tilted = tilted_free_energy(&path.states[0], params, f);
    if !tilted.finite {
        let mut r = edp_residual(path, params).unwrap_or(PathReport {
            fe_initial: f64::INFINITY,
            fe_final: f64::NAN,
            action_velocity: f64::NAN,
            action_slope: f64::NAN,
            edp_residual: f64::NAN,
            relative_residual: None,
            tilted_initial: None,
            rate_value: None,
        });
        r.tilted_initial = Some(f64::INFINITY);
        r.rate_value = Some(f64::INFINITY);
        return Ok(r);
    }
    let mut r = edp_residual(path, params)?;
    let tilted_initial = tilted.total_unnormalized + c_tilt;
    r.tilted_initial = Some(tilted_initial);
    r.rate_value = Some(2.0 * tilted_initial + (r.fe_final - r.fe_initial + r.action_velocity + r.action_slope));
    Ok(r)
}

// ---------------------------------------------------------------------------
// Control recovery

/// Extra drift recovered from a compressed-coordinate path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRecovery {
    pub times: Vec<f64>,
    /// Interior face positions.
    pub faces: Vec<f64>,
    /// `u[k][f]` at snapshot `k`, face `f`; zero below the density floor.
    pub u: Vec<Vec<f64>>,
    /// Face densities `mu_f` at each snapshot.
    pub face_density: Vec<Vec<f64>>,
    /// `(1/2) int int u^2 mu`.
    pub action: f64,
}

impl ControlRecovery {
    /// Largest `|u - target|` over faces where the density is at least
    /// `threshold` times its maximum at that time.
    pub fn sup_error(&self, target: f64, threshold: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (u, m) in self.u.iter().zip(&self.face_density) {
            let cut = threshold * m.iter().copied().fold(0.0, f64::max);
            for (a, &b) in u.iter().zip(m) {
                if b >= cut {
                    worst = worst.max((a - target).abs());
                }
            }
        }
        worst
    }
}

/// Three-point Lagrange weights for the time derivative at snapshot `k`:
/// centered inside, one-sided at the ends.
fn derivative_weights(times: &[f64], k: usize) -> ([usize; 3], [f64; 3]) {
    let n = times.len();
    let i0 = k.saturating_sub(1).min(n - 3);
    let idx = [i0, i0 + 1, i0 + 2];
    let t = idx.map(|i| times[i]);
    let x = times[k];
    let mut w = [0.0; 3];
    for a in 0..3 {
        let mut denom = 1.0;
        let mut num = 0.0;
        for b in 0..3 {
            if b != a {
                denom *= t[a] - t[b];
                let mut prod = 1.0;
                for c in 0..3 {
                    if c != a && c != b {
                        prod *= x - t[c];
                    }
                }
                num += prod;
            }
        }
        w[a] = num / denom;
    }
    (idx, w)
}

/// Recovers `u` in `d_t mu = mu_xx / 2 - d_x [ (b(., mu) + u) mu ]` from a
/// path: the flux `J = v mu` through each face is minus the time derivative
/// of the CDF there, and `u = v + d_x mu / (2 mu) - b`.
pub fn recover_control(path: &DensityPath, params: &ModelParams) -> Result<ControlRecovery> {
    check_path(path)?;
    if path.side != Side::Compressed {
        return Err(invalid("control recovery needs a compressed-coordinate path"));
    }
    let n_t = path.len();
    if n_t < 3 {
        return Err(Error::TooFewSnapshots { got: n_t, need: 3 });
    }
    let first = &path.states[0];
    let support0: Vec<bool> = first.values().iter().map(|&v| v > 0.0).collect();
    for (k, s) in path.states.iter().enumerate() {
        if !s.same_grid(first) {
            return Err(Error::GridMismatch);
        }
        if s.values().iter().zip(&support0).any(|(&v, &p)| (v > 0.0) != p) {
            return Err(Error::SupportMismatch { snapshot: k });
        }
    }
    let dx = first.dy();
    let n = first.len();
    let cums: Vec<Vec<f64>> = path.states.iter().map(|s| s.cumulative()).collect();
    // Mass to the right of each face, summed from the right so that small
    // tails keep their relative precision.
    let tails: Vec<Vec<f64>> = path
        .states
        .iter()
        .map(|s| {
            let mut t = vec![0.0; n + 1];
            for j in (0..n).rev() {
                t[j] = t[j + 1] + s.values()[j] * dx;
            }
            t
        })
        .collect();
    let faces: Vec<f64> = (1..n).map(|f| first.edge(f)).collect();
    let mut us = Vec::with_capacity(n_t);
    let mut mfs = Vec::with_capacity(n_t);
    let mut density_action = Vec::with_capacity(n_t);
    for k in 0..n_t {
        let (stencil, weights) = derivative_weights(&path.times, k);
        let mu = path.states[k].values();
        let drift = compressed_drift_at_faces(mu, first.left(), dx, params);
        let mut u = Vec::with_capacity(n - 1);
        let mut mf = Vec::with_capacity(n - 1);
        let mut act = 0.0;
        let floor = RECOVERY_FLOOR * mu.iter().copied().fold(0.0, f64::max);
        for f in 1..n {
            let m_face = 0.5 * (mu[f - 1] + mu[f]);
            let d_dt = |c: &[Vec<f64>]| stencil.iter().zip(&weights).map(|(&i, w)| w * c[i][f]).sum::<f64>();
            let flux = if cums[k][f] <= tails[k][f] { -d_dt(&cums) } else { d_dt(&tails) };
            let val = if m_face > floor && m_face > 0.0 {
                flux / m_face + (mu[f] - mu[f - 1]) / (2.0 * dx * m_face) - drift[f - 1]
            } else {
                0.0
            };
            act += val * val * m_face * dx;
            u.push(val);
            mf.push(m_face);
        }
        us.push(u);
        mfs.push(mf);
        density_action.push(act);
    }
    let action = 0.5 * trapezoid(&path.times, &density_action);
    Ok(ControlRecovery { times: path.times.clone(), faces, u: us, face_density: mfs, action })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::expand_grid;
    use crate::pde::{solve_limit_pde, steady_state, PdeConfig};
    use crate::potentials::{Kind, Profile};

    fn huber(alpha: f64) -> ModelParams {
        ModelParams::new(alpha, Potential::huber(1.0, 1.0).unwrap(), Potential::zero(Kind::Interaction)).unwrap()
    }

    #[test]
    fn free_energy_examples() {
        let u = GridDensity::uniform(0.0, 1.0, 100).unwrap();
        let f = free_energy(&u, &ModelParams::free(0.5).unwrap());
        assert!((f.entropy_term - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((f.entropy_term - 0.346574).abs() < 1e-6);
        let w = Potential::interaction(Profile::Constant { value: 0.8 }).unwrap();
        let p = ModelParams::new(0.5, Potential::zero(Kind::Onsite), w).unwrap();
        assert!((free_energy(&u, &p).interaction_term - 0.4).abs() < 1e-12);
        let sat = GridDensity::uniform(0.0, 0.5, 10).unwrap();
        assert!(!free_energy(&sat, &ModelParams::free(0.5).unwrap()).finite);
        assert!(free_energy(&sat, &ModelParams::free(0.5).unwrap()).total_unnormalized.is_infinite());
    }

    #[test]
    fn compressed_free_energy_examples() {
        let u = GridDensity::uniform(0.0, 1.0, 100).unwrap();
        assert_eq!(free_energy_compressed(&u, &ModelParams::free(0.5).unwrap()).total_unnormalized, 0.0);
        let p = ModelParams::new(0.0, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.5, 0.5).unwrap()).unwrap();
        let mu = GridDensity::from_fn(-4.0, 0.01, 800, |x| (-(x * x)).exp()).unwrap();
        let a = free_energy_compressed(&mu, &p);
        let b = free_energy(&mu, &p);
        assert!((a.total_unnormalized - b.total_unnormalized).abs() < 1e-12);
    }

    #[test]
    fn compressed_and_expanded_free_energies_agree() {
        let p = ModelParams::new(0.5, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.4, 0.6).unwrap()).unwrap();
        let grid = Grid { left: -6.0, dy: 0.005, count: 2400 };
        for shift in [-0.5, 0.0, 0.7] {
            let mu = GridDensity::from_fn(grid.left, grid.dy, grid.count, |x| {
                (-(x - shift).powi(2)).exp() + 0.5 * (-(x + 1.0).powi(2) * 3.0).exp()
            })
            .unwrap();
            let rho = expand_grid(&mu, 0.5, Grid::new(-6.0, 7.0, 0.005).unwrap()).unwrap();
            let a = free_energy_compressed(&mu, &p).total_unnormalized;
            let b = free_energy(&rho, &p).total_unnormalized;
            assert!((a - b).abs() < 5e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn tilted_free_energy_examples() {
        let p = huber(0.4);
        let rho = GridDensity::from_fn(-5.0, 0.01, 1000, |y| (-(y * y)).exp()).unwrap();
        let zero = Potential::zero(Kind::Tilt);
        assert_eq!(tilted_free_energy(&rho, &p, &zero).total_unnormalized, free_energy(&rho, &p).total_unnormalized);
        let k = Potential::tilt(Profile::Constant { value: 3.0 }).unwrap();
        let diff = tilted_free_energy(&rho, &p, &k).total_unnormalized - free_energy(&rho, &p).total_unnormalized;
        assert!((diff - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tilted_minimizer_beats_perturbations() {
        use rand::{Rng, SeedableRng};
        let p = huber(0.5);
        let f = Potential::tilt(Profile::Tanh { a: 0.5, scale: 1.0 }).unwrap();
        let grid = Grid::new(-12.0, 12.0, 0.02).unwrap();
        let rho_f = tilted_minimizer(&p, &f, grid).unwrap();
        let best = tilted_free_energy(&rho_f, &p, &f).total_unnormalized;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = rng.random_range(-0.2..0.2);
            let c = rng.random_range(-2.0..2.0);
            let values: Vec<f64> = rho_f
                .values()
                .iter()
                .enumerate()
                .map(|(j, &r)| r * (1.0 + a * (-(rho_f.center(j) - c).powi(2)).exp()))
                .collect();
            let pert = GridDensity::new(grid.left, grid.dy, values).unwrap();
            assert!(tilted_free_energy(&pert, &p, &f).total_unnormalized >= best - 1e-12);
        }
    }

    #[test]
    fn relative_entropy_examples() {
        let a = GridDensity::uniform(0.0, 1.0, 10).unwrap();
        assert_eq!(relative_entropy(&a, &a).unwrap(), 0.0);
        let half = GridDensity::new(0.0, 0.1, [vec![2.0; 5], vec![0.0; 5]].concat()).unwrap();
        assert!((relative_entropy(&half, &a).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(relative_entropy(&a, &half).unwrap(), f64::INFINITY);
        let other = GridDensity::uniform(0.0, 2.0, 10).unwrap();
        assert!(matches!(relative_entropy(&a, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn gamma_z_examples() {
        let nu = GridDensity::uniform(0.0, 1.0, 10).unwrap();
        let (log_z, g) = gamma_z(&nu, &ModelParams::free(0.5).unwrap(), ZWindow::Fixed { left: -3.0, right: 3.0, dx: 0.01 }).unwrap();
        assert!((log_z - 6f64.ln()).abs() < 1e-12);
        assert_eq!(g, -log_z);
        // alpha = 0: T is the identity, so nu does not matter.
        let p = huber(0.0);
        let other = GridDensity::uniform(-2.0, 0.0, 10).unwrap();
        let a = gamma_z(&nu, &p, ZWindow::Auto { dx: 1e-3 }).unwrap().0;
        let b = gamma_z(&other, &p, ZWindow::Auto { dx: 1e-3 }).unwrap().0;
        assert!((a - b).abs() < 1e-9);
        assert!(gamma_z(&nu, &ModelParams::free(0.5).unwrap(), ZWindow::Auto { dx: 1e-3 }).is_err());
    }

    #[test]
    fn q_normalization_refines() {
        let p = huber(0.5);
        let nu = GridDensity::from_fn(-3.0, 0.01, 600, |x| (-(x * x)).exp()).unwrap();
        let z = |dx: f64| q_measure(&nu, &p, ZWindow::Auto { dx }).unwrap();
        let (a, b, c) = (z(1e-3), z(5e-4), z(2.5e-4));
        let (e1, e2) = ((a.log_z - c.log_z).abs(), (b.log_z - c.log_z).abs());
        // Midpoint rule: second order once dx resolves the CDF kinks of nu.
        assert!(e2 < 1e-8 && e1 / e2 > 3.5, "{e1} {e2}");
        assert!((b.density.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xi_and_slope_at_steady_state() {
        let p = ModelParams::new(0.5, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.4, 0.5).unwrap()).unwrap();
        let rho = steady_state(&p, Grid::new(-15.0, 15.0, 0.02).unwrap()).unwrap();
        let xi = xi_field(&rho, &p).unwrap();
        let mut vals: Vec<f64> = xi.values.iter().zip(&xi.support).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
        vals.sort_by(f64::total_cmp);
        let median = vals[vals.len() / 2];
        assert!(vals.iter().all(|v| (v - median).abs() < 1e-6));
        assert!(xi.gradient.iter().all(|g| g.abs() < 1e-5));
        assert!(metric_slope(&rho, &p).unwrap() < 1e-4);
    }

    #[test]
    fn xi_reduces_without_exclusion() {
        let p = huber(0.0);
        let rho = GridDensity::from_fn(-4.0, 0.01, 800, |y| (-(y * y)).exp()).unwrap();
        let xi = xi_field(&rho, &p).unwrap();
        for j in (0..800).step_by(37) {
            let expected = 0.5 * rho.values()[j].ln() + 0.5 + p.v.value(rho.center(j));
            assert!((xi.values[j] - expected).abs() < 1e-12);
        }
        let empty = GridDensity::uniform(0.0, 1.0, 4).unwrap().with_values(vec![0.0; 4]);
        assert!(matches!(xi_field(&empty, &p), Err(Error::EmptySupport)));
    }

    #[test]
    fn slope_translates_with_potential() {
        let shift = 0.75;
        let p = huber(0.3);
        let table = |s: f64| {
            let rows: String = (-400..=400)
                .map(|k| {
                    let y = k as f64 * 0.05;
                    let v = Potential::huber(1.0, 1.0).unwrap();
                    format!("{},{},{}\n", y + s, v.value(y), v.derivative(y))
                })
                .collect();
            Potential::onsite(Profile::table_from_csv(&rows).unwrap()).unwrap()
        };
        let q = ModelParams::new(0.3, table(shift), Potential::zero(Kind::Interaction)).unwrap();
        let rho = GridDensity::from_fn(-6.0, 0.01, 1200, |y| (-(y - 0.3).powi(2)).exp()).unwrap();
        let moved = GridDensity::new(-6.0 + shift, 0.01, rho.values().to_vec()).unwrap();
        let a = metric_slope(&rho, &p).unwrap();
        let b = metric_slope(&moved, &q).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn slope_of_gaussian_in_quadratic_well() {
        // V ~ k y^2 / 2 near the origin, rho = N(0, s^2):
        // d xi = -y / (2 s^2) + k y, slope^2 = s^2 (k - 1/(2 s^2))^2.
        let (k, s) = (1.0, 0.4);
        let p = ModelParams::new(0.0, Potential::huber(1e4 * k, 1e4).unwrap(), Potential::zero(Kind::Interaction)).unwrap();
        let rho = GridDensity::from_fn(-4.0, 0.002, 4000, |y| (-y * y / (2.0 * s * s)).exp()).unwrap();
        let exact = s * (k - 1.0 / (2.0 * s * s)).abs();
        assert!((metric_slope(&rho, &p).unwrap() - exact).abs() < 1e-3);
    }

    #[test]
    fn slope_matches_minimal_norm_element() {
        let p = ModelParams::new(0.6, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.5, 0.5).unwrap()).unwrap();
        let run = |dy: f64| {
            let n = (12.0 / dy).round() as usize;
            let rho = GridDensity::from_fn(-6.0, dy, n, |y| (-(y - 0.5).powi(2)).exp() + 0.3 * (-(y + 1.0).powi(2) * 4.0).exp())
                .unwrap();
            (metric_slope(&rho, &p).unwrap().powi(2) - minimal_norm_slope(&rho, &p).unwrap().powi(2)).abs()
        };
        let (e1, e2) = (run(0.02), run(0.01));
        assert!(e1 < 0.02 && e2 < e1, "{e1} {e2}");
    }

    #[test]
    fn metric_derivative_examples() {
        let rho = GridDensity::from_fn(-5.0, 0.01, 1000, |y| (-(y * y)).exp()).unwrap();
        let times: Vec<f64> = (0..25).map(|k| k as f64 * 0.1).collect();
        let still = DensityPath::stationary(rho.clone(), times.clone(), Side::Expanded);
        assert_eq!(metric_derivative(&still, 3).unwrap(), 0.0);
        assert!(matches!(metric_derivative(&still, 0), Err(Error::BoundaryIndex { .. })));
        let v = 0.8;
        let moving = DensityPath {
            states: times.iter().map(|t| GridDensity::new(-5.0 + v * t, 0.01, rho.values().to_vec()).unwrap()).collect(),
            times,
            side: Side::Expanded,
        };
        assert!((metric_derivative(&moving, 5).unwrap() - v).abs() < 1e-10);
    }

    #[test]
    fn heat_flow_speed() {
        // N(0, s0^2 + t): the quantiles scale by sqrt(var), so the speed is
        // d/dt sqrt(var) = 1 / (2 sqrt(var)).
        let p = ModelParams::free(0.0).unwrap();
        let mut cfg = PdeConfig::new(-8.0, 8.0, 0.01, 1.0);
        cfg.snapshots = 40;
        let s0 = 0.5f64;
        let rho0 = cfg.discretize(|y| (-y * y / (2.0 * s0 * s0)).exp()).unwrap();
        let path = solve_limit_pde(&rho0, &p, &cfg).unwrap();
        let k = 20;
        let var = s0 * s0 + path.times[k];
        assert!((metric_derivative(&path, k).unwrap() - 0.5 / var.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn edp_stationary_and_reversed() {
        let p = huber(0.5);
        let grid = Grid::new(-12.0, 12.0, 0.02).unwrap();
        let rho = steady_state(&p, grid).unwrap();
        let times: Vec<f64> = (0..30).map(|k| k as f64 * 0.05).collect();
        let r = edp_residual(&DensityPath::stationary(rho, times, Side::Expanded), &p).unwrap();
        assert!(r.edp_residual.abs() < 1e-6);
        assert!(r.relative_residual.is_none());

        let mut cfg = PdeConfig::new(-10.0, 10.0, 0.01, 1.0);
        cfg.snapshots = 40;
        let rho0 = cfg.discretize(|y| (-(y - 1.5).powi(2) * 2.0).exp()).unwrap();
        let path = solve_limit_pde(&rho0, &p, &cfg).unwrap();
        let fwd = edp_residual(&path, &p).unwrap();
        assert!(fwd.relative_residual.unwrap().abs() < 0.05);
        let back = edp_residual(&path.reversed(), &p).unwrap();
        // Running a gradient flow backwards doubles the deficit instead of
        // cancelling it.
        let expected = 2.0 * (fwd.action_velocity + fwd.action_slope);
        assert!((back.edp_residual - expected).abs() < 0.05 * expected, "{} vs {expected}", back.edp_residual);
    }

    #[test]
    fn too_few_snapshots() {
        let rho = GridDensity::uniform(0.0, 1.0, 10).unwrap();
        let path = DensityPath::stationary(rho, vec![0.0, 1.0, 2.0], Side::Expanded);
        assert!(matches!(edp_residual(&path, &huber(0.1)), Err(Error::TooFewSnapshots { .. })));
    }

    #[test]
    fn stationary_compressed_path_has_no_control() {
        let p = huber(0.5);
        let grid = Grid::new(-10.0, 10.0, 0.02).unwrap();
        let rho = steady_state(&p, grid).unwrap();
        let mu = compress_grid(&rho, 0.5, grid).unwrap();
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.1).collect();
        let path = DensityPath::stationary(mu.clone(), times, Side::Compressed);
        let rec = recover_control(&path, &p).unwrap();
        // The discrete steady state of the compressed equation differs from
        // the compressed continuum minimizer by O(dx).
        assert!(rec.action < 1e-3);
        assert!(recover_control(&DensityPath::stationary(mu, vec![0.0, 1.0, 2.0], Side::Expanded), &p).is_err());
    }

    #[test]
    fn derivative_weights_exact_on_quadratics() {
        let times = [0.0, 0.1, 0.25, 0.3, 0.7];
        let f = |t: f64| 2.0 - 3.0 * t + 5.0 * t * t;
        for k in 0..times.len() {
            let (idx, w) = derivative_weights(&times, k);
            let d: f64 = idx.iter().zip(&w).map(|(&i, w)| w * f(times[i])).sum();
            assert!((d - (-3.0 + 10.0 * times[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn support_mismatch() {
        let a = GridDensity::uniform(0.0, 1.0, 10).unwrap();
        let b = GridDensity::new(0.0, 0.1, [vec![2.0; 5], vec![0.0; 5]].concat()).unwrap();
        let path = DensityPath { times: vec![0.0, 1.0, 2.0], states: vec![a.clone(), b, a], side: Side::Compressed };
        assert!(matches!(recover_control(&path, &huber(0.5)), Err(Error::SupportMismatch { snapshot: 1 })));
    }

    #[test]
    fn calibration_identities() {
        let p = huber(0.5);
        let grid = Grid::new(-12.0, 12.0, 0.01).unwrap();
        let f = Potential::tilt(Profile::Tanh { a: 0.3, scale: 1.0 }).unwrap();
        let cal = Calibration::compute(&p, grid, Some(&f), ZWindow::Auto { dx: 1e-3 }).unwrap();
        // With W = 0 the two minimizers coincide, so C_gamma = 2 C_Ent up to
        // quadrature.
        assert!((cal.c_gamma - 2.0 * cal.c_entropy).abs() < 1e-6);
        let k = Potential::tilt(Profile::Tanh { a: 0.3, scale: 1.0 }).unwrap();
        let rho_f = tilted_minimizer(&p, &k, grid).unwrap();
        let normalized = tilted_free_energy(&rho_f, &p, &k).total_unnormalized + cal.c_tilt.unwrap();
        assert!(normalized.abs() < 1e-12);
    }
}
