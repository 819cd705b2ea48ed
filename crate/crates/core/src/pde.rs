//! Deterministic solvers on a uniform grid with zero-flux walls.
//!
//! * [`solve_limit_pde`]: `d_t rho = d_y [ D(rho) d_y rho + rho d_y (V + W * rho) ]`
//!   with `D(rho) = 1 / (2 (1 - alpha rho)^2)`.
//! * [`solve_bruna_chapman`]: the small-`alpha` approximation with
//!   `D(rho) = 1/2 + alpha rho` and `W = 0`.
//! * [`solve_compressed_fp`]: the Fokker–Planck equation of the compressed
//!   particle system, `d_t mu = mu_xx / 2 - d_x [ (b(., mu) + u) mu ]`.
//! * [`steady_state`]: the minimizer of the free energy.
//!
//! All time stepping is Heun's method (explicit second-order Runge–Kutta)
//! with a step size limited by the current diffusion coefficient and drift.

use serde::{Deserialize, Serialize};

use crate::conv::Convolver;
use crate::error::{invalid, Error, Result};
use crate::maps::{Grid, Side};
use crate::measures::GridDensity;
use crate::potentials::{ModelParams, Potential};

/// How face densities are formed from the two neighbouring cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceMean {
    #[default]
    Arithmetic,
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub left: f64,
    pub right: f64,
    pub dy: f64,
    /// Fixed time step. When absent, each step uses `cfl` times the current
    /// stability limit.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_final: f64,
    /// Number of equal intervals between recorded snapshots.
    pub snapshots: usize,
    pub face_mean: FaceMean,
    /// Largest density tolerated in the two wall cells.
    pub boundary_limit: f64,
    /// Constant velocity added to the drift; zero for the actual equation.
    pub extra_drift: f64,
}

impl PdeConfig {
    pub fn new(left: f64, right: f64, dy: f64, t_final: f64) -> Self {
        Self {
            left,
            right,
            dy,
            dt: None,
            cfl: 0.4,
            t_final,
            snapshots: 40,
            face_mean: FaceMean::Arithmetic,
            boundary_limit: 1e-10,
            extra_drift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.right > self.left) {
            return Err(invalid(format!("empty domain [{}, {}]", self.left, self.right)));
        }
        if !(self.dy > 0.0) || self.dy > self.right - self.left {
            return Err(invalid(format!("bad cell width {}", self.dy)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(invalid("t_final must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid("cfl must lie in (0, 1]"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(invalid("dt must be positive"));
            }
        }
        if self.snapshots == 0 {
            return Err(invalid("need at least one snapshot interval"));
        }
        if !self.extra_drift.is_finite() {
            return Err(invalid("extra drift must be finite"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        let count = ((self.right - self.left) / self.dy).round().max(1.0) as usize;
        Grid { left: self.left, dy: self.dy, count }
    }

    /// Samples `f` at the cell centers of the configured grid and normalizes.
    pub fn discretize(&self, f: impl Fn(f64) -> f64) -> Result<GridDensity> {
        let g = self.grid();
        GridDensity::from_fn(g.left, g.dy, g.count, f)
    }

    /// Exact cell averages of the uniform density on `[a, b]`.
    pub fn uniform(&self, a: f64, b: f64) -> Result<GridDensity> {
        let g = self.grid();
        let values = (0..g.count)
            .map(|j| {
                let (l, r) = (g.edge(j), g.edge(j + 1));
                (r.min(b) - l.max(a)).max(0.0)
            })
            .collect();
        GridDensity::new(g.left, g.dy, values)
    }
}

/// Snapshots of a deterministic evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub states: Vec<GridDensity>,
    pub side: Side,
}

impl DensityPath {
    pub fn last(&self) -> &GridDensity {
        self.states.last().expect("paths hold at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The same snapshots traversed backwards in time.
    pub fn reversed(&self) -> DensityPath {
        let t_end = *self.times.last().unwrap_or(&0.0);
        DensityPath {
            times: self.times.iter().rev().map(|t| t_end - t).collect(),
            states: self.states.iter().rev().cloned().collect(),
            side: self.side,
        }
    }

    /// Constant path at `rho` with the given times.
    pub fn stationary(rho: GridDensity, times: Vec<f64>, side: Side) -> DensityPath {
        DensityPath { states: vec![rho; times.len()], times, side }
    }
}

fn face(a: f64, b: f64, mean: FaceMean) -> f64 {
    match mean {
        FaceMean::Arithmetic => 0.5 * (a + b),
        FaceMean::Harmonic => {
            if a + b > 0.0 {
                2.0 * a * b / (a + b)
            } else {
                0.0
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Diffusion {
    Limit,
    BrunaChapman,
}

/// Right-hand side of the expanded-coordinate equations.
struct Expanded {
    alpha: f64,
    diffusion: Diffusion,
    face_mean: FaceMean,
    dy: f64,
    v: Vec<f64>,
    conv: Option<Convolver>,
    extra: f64,
}

/// Upper bounds gathered while evaluating a right-hand side, used for the
/// step-size limit: `dt (2 D / dy^2 + |u| / dy) <= 1`.
#[derive(Default)]
struct Rates {
    d_max: f64,
    u_max: f64,
}

impl Rates {
    fn limit(&self, dy: f64) -> f64 {
        1.0 / (2.0 * self.d_max / (dy * dy) + self.u_max / dy)
    }
}

impl Expanded {
    fn rhs(&self, rho: &[f64], out: &mut [f64], step: usize) -> Result<Rates> {
        let n = rho.len();
        let dy = self.dy;
        let c: Vec<f64> = match &self.conv {
            Some(conv) => conv.apply(rho).iter().zip(&self.v).map(|(w, v)| w + v).collect(),
            None => self.v.clone(),
        };
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut rates = Rates::default();
        for j in 0..n - 1 {
            let (a, b) = (rho[j], rho[j + 1]);
            let rf = face(a, b, self.face_mean);
            let d = match self.diffusion {
                Diffusion::Limit => {
                    let s = 1.0 - self.alpha * rf;
                    if s <= 0.0 {
                        return Err(Error::Stability { step, dt: f64::NAN, suggested_dt: 0.0 });
                    }
                    0.5 / (s * s)
                }
                Diffusion::BrunaChapman => 0.5 + self.alpha * rf,
            };
            let u = -(c[j + 1] - c[j]) / dy + self.extra;
            // Central advection while the cell Peclet number allows it,
            // upwind otherwise; both keep the update monotone.
            let advect = if u.abs() * dy <= 2.0 * d {
                0.5 * u * (a + b)
            } else if u > 0.0 {
                u * a
            } else {
                u * b
            };
            let flux = -d * (b - a) / dy + advect;
            out[j] -= flux / dy;
            out[j + 1] += flux / dy;
            rates.d_max = rates.d_max.max(d);
            rates.u_max = rates.u_max.max(u.abs());
        }
        Ok(rates)
    }
}

/// Heun integration of `d_t rho = rhs(rho)` with snapshots.
fn integrate<F>(rho0: &GridDensity, cfg: &PdeConfig, side: Side, mut rhs: F) -> Result<DensityPath>
where
    F: FnMut(&[f64], &mut [f64], usize) -> Result<Rates>,
{
    cfg.validate()?;
    let grid = cfg.grid();
    if rho0.len() != grid.count
        || (rho0.dy() - grid.dy).abs() > 1e-12 * grid.dy
        || (rho0.left() - grid.left).abs() > 1e-9 * grid.dy
    {
        return Err(Error::GridMismatch);
    }
    let n = rho0.len();
    if n < 3 {
        return Err(invalid("need at least three cells"));
    }
    let mut rho = rho0.values().to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    audit_walls(rho0, cfg)?;
    let mut t = 0.0;
    let mut step = 0;
    for snap in 1..=cfg.snapshots {
        let t_next = cfg.t_final * snap as f64 / cfg.snapshots as f64;
        while t < t_next * (1.0 - 1e-14) {
            step += 1;
            let rates = rhs(&rho, &mut k1, step)?;
            let limit = rates.limit(cfg.dy);
            let mut dt = match cfg.dt {
                Some(dt) => {
                    if dt > limit {
                        return Err(Error::Stability { step, dt, suggested_dt: cfg.cfl * limit });
                    }
                    dt
                }
                None => cfg.cfl * limit,
            };
            if t + dt > t_next {
                dt = t_next - t;
            }
            for j in 0..n {
                stage[j] = rho[j] + dt * k1[j];
            }
            rhs(&stage, &mut k2, step)?;
            for j in 0..n {
                rho[j] += 0.5 * dt * (k1[j] + k2[j]);
            }
            for (j, v) in rho.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v < -1e-12 || !v.is_finite() {
                        return Err(Error::Positivity { step, index: j, value: *v });
                    }
                    *v = 0.0;
                }
            }
            t += dt;
        }
        t = t_next;
        let state = GridDensity::from_normalized(rho0.left(), rho0.dy(), rho.clone())
            .map_err(|_| Error::Divergence { step })?;
        audit_walls(&state, cfg)?;
        times.push(t);
        states.push(state);
    }
    Ok(DensityPath { times, states, side })
}

fn audit_walls(rho: &GridDensity, cfg: &PdeConfig) -> Result<()> {
    let v = rho.values();
    let wall = v[0].max(v[v.len() - 1]);
    if wall > cfg.boundary_limit {
        return Err(Error::BoundaryMass { value: wall, limit: cfg.boundary_limit });
    }
    Ok(())
}

fn expanded_scheme(params: &ModelParams, cfg: &PdeConfig, diffusion: Diffusion) -> Expanded {
    let g = cfg.grid();
    let v = (0..g.count).map(|j| params.v.value(g.center(j))).collect();
    let conv = (!params.w.profile().is_flat()).then(|| Convolver::new(g.count, g.dy, |y| params.w.value(y)));
    Expanded {
        alpha: params.alpha,
        diffusion,
        face_mean: cfg.face_mean,
        dy: cfg.dy,
        v,
        conv,
        extra: cfg.extra_drift,
    }
}

/// Finite-volume solution of the hydrodynamic limit equation.
pub fn solve_limit_pde(rho0: &GridDensity, params: &ModelParams, cfg: &PdeConfig) -> Result<DensityPath> {
    if params.alpha * rho0.max_value() >= 1.0 {
        return Err(Error::DensityCeiling { index: 0, slope: 1.0 / rho0.max_value(), alpha: params.alpha });
    }
    let scheme = expanded_scheme(params, cfg, Diffusion::Limit);
    integrate(rho0, cfg, Side::Expanded, |r, o, s| scheme.rhs(r, o, s))
}

/// Small-`alpha` approximation `d_t rho = d_y [ rho_y / 2 + alpha rho rho_y + V' rho ]`.
pub fn solve_bruna_chapman(rho0: &GridDensity, params: &ModelParams, cfg: &PdeConfig) -> Result<DensityPath> {
    if !params.w.is_zero() {
        return Err(invalid("the small-alpha approximation is only defined for W = 0"));
    }
    let scheme = expanded_scheme(params, cfg, Diffusion::BrunaChapman);
    integrate(rho0, cfg, Side::Expanded, |r, o, s| scheme.rhs(r, o, s))
}

// ---------------------------------------------------------------------------
// Compressed Fokker–Planck equation

/// Extra drift `u` added to `b` in the compressed Fokker–Planck equation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum ControlField {
    #[default]
    Zero,
    Constant(f64),
    /// Time-independent values at the interior cell faces (`count - 1`).
    Faces(Vec<f64>),
}

impl ControlField {
    fn at(&self, f: usize) -> f64 {
        match self {
            ControlField::Zero => 0.0,
            ControlField::Constant(u) => *u,
            ControlField::Faces(v) => v[f],
        }
    }
}

/// Mean-field drift of the compressed system at the interior faces of a
/// grid density: `b(x_f) = -V'(T x_f) - sum_k W'(T x_f - T x_k) mu_k dx`
/// with `T x = x + alpha mu((-inf, x))`.
pub fn compressed_drift_at_faces(mu: &[f64], left: f64, dx: f64, params: &ModelParams) -> Vec<f64> {
    let n = mu.len();
    let a = params.alpha;
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for m in mu {
        acc += m * dx;
        cum.push(acc);
    }
    let flat = params.w.profile().is_flat();
    let tcell: Vec<f64> = if flat {
        Vec::new()
    } else {
        (0..n).map(|k| left + (k as f64 + 0.5) * dx + a * (cum[k] + 0.5 * mu[k] * dx)).collect()
    };
    (1..n)
        .map(|f| {
            let tx = left + f as f64 * dx + a * cum[f];
            let mut b = -params.v.derivative(tx);
            if !flat {
                let s: f64 = tcell.iter().zip(mu).map(|(&tk, &m)| params.w.derivative(tx - tk) * m).sum();
                b -= s * dx;
            }
            b
        })
        .collect()
}

/// Fokker–Planck equation of the compressed particle system with an extra
/// drift `control`, central fluxes with arithmetic face densities.
pub fn solve_compressed_fp(
    mu0: &GridDensity,
    params: &ModelParams,
    cfg: &PdeConfig,
    control: &ControlField,
) -> Result<DensityPath> {
    let n = mu0.len();
    if let ControlField::Faces(v) = control {
        if v.len() + 1 != n {
            return Err(invalid("control field must have one value per interior face"));
        }
    }
    let (left, dx) = (mu0.left(), mu0.dy());
    let extra = cfg.extra_drift;
    let rhs = |mu: &[f64], out: &mut [f64], _step: usize| -> Result<Rates> {
        let b = compressed_drift_at_faces(mu, left, dx, params);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut rates = Rates { d_max: 0.5, u_max: 0.0 };
        for j in 0..n - 1 {
            let u = b[j] + control.at(j) + extra;
            let flux = -0.5 * (mu[j + 1] - mu[j]) / dx + u * 0.5 * (mu[j] + mu[j + 1]);
            out[j] -= flux / dx;
            out[j + 1] += flux / dx;
            rates.u_max = rates.u_max.max(u.abs());
        }
        Ok(rates)
    };
    integrate(mu0, cfg, Side::Compressed, rhs)
}

// ---------------------------------------------------------------------------
// Steady state

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Weight of the new iterate in the damped Picard update.
    pub damping: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-10, damping: 0.5 }
    }
}

/// Solves `h(u) = z` for `h(u) = u/2 + 1/2 + alpha e^u / 2`, where
/// `u = log(rho / (1 - alpha rho))`. Newton's method from the right of the
/// root converges monotonically because `h` is convex and increasing.
fn invert_h(z: f64, alpha: f64) -> f64 {
    let linear = 2.0 * z - 1.0;
    if alpha == 0.0 {
        return linear;
    }
    let mut u = if linear > 700.0 { (2.0 * z / alpha).ln().max(0.0) } else { linear };
    // Make sure we start at or to the right of the root.
    while 0.5 * u + 0.5 + 0.5 * alpha * u.exp() < z {
        u += 1.0;
    }
    for _ in 0..200 {
        let e = alpha * u.exp();
        let f = 0.5 * u + 0.5 + 0.5 * e - z;
        let step = f / (0.5 + 0.5 * e);
        u -= step;
        if step.abs() <= 1e-15 * (1.0 + u.abs()) {
            break;
        }
    }
    u
}

/// `rho = g(z)`, the inverse of `rho -> log(rho/(1-alpha rho))/2 + 1/(2(1-alpha rho))`.
pub fn invert_chemical_potential(z: f64, alpha: f64) -> f64 {
    let u = invert_h(z, alpha);
    if u > 0.0 {
        1.0 / ((-u).exp() + alpha)
    } else {
        let e = u.exp();
        e / (1.0 + alpha * e)
    }
}

/// Density `g(lambda - c_j)` with `lambda` chosen for unit mass.
fn fill_to_unit_mass(c: &[f64], alpha: f64, dy: f64) -> Vec<f64> {
    let mass = |lambda: f64| -> f64 { c.iter().map(|&cj| invert_chemical_potential(lambda - cj, alpha)).sum::<f64>() * dy };
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = cmin - 1.0;
    while mass(lo) >= 1.0 {
        lo -= 2.0 * (lo - cmin).abs().max(1.0);
    }
    let mut hi = cmin + 1.0;
    while mass(hi) < 1.0 {
        hi += 2.0 * (hi - cmin).abs().max(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let rho: Vec<f64> = c.iter().map(|&cj| invert_chemical_potential(lambda - cj, alpha)).collect();
    let m: f64 = rho.iter().sum::<f64>() * dy;
    rho.into_iter().map(|r| r / m).collect()
}

/// Minimizer of the free energy on `grid`.
pub fn steady_state(params: &ModelParams, grid: Grid) -> Result<GridDensity> {
    steady_state_with(params, None, grid, &SteadyConfig::default())
}

/// Minimizer of the free energy with on-site potential `V + f/2` (when a
/// tilt is given), by damped Picard iteration on `c = V + W * rho`.
pub fn steady_state_with(
    params: &ModelParams,
    tilt: Option<&Potential>,
    grid: Grid,
    opts: &SteadyConfig,
) -> Result<GridDensity> {
    if grid.count < 2 || !(grid.dy > 0.0) {
        return Err(invalid("steady state needs a grid with at least two cells"));
    }
    let v: Vec<f64> = (0..grid.count)
        .map(|j| {
            let y = grid.center(j);
            params.v.value(y) + tilt.map_or(0.0, |f| 0.5 * f.value(y))
        })
        .collect();
    let alpha = params.alpha;
    if params.w.profile().is_flat() {
        let rho = fill_to_unit_mass(&v, alpha, grid.dy);
        return GridDensity::from_normalized(grid.left, grid.dy, rho);
    }
    let conv = Convolver::new(grid.count, grid.dy, |y| params.w.value(y));
    let mut rho = fill_to_unit_mass(&v, alpha, grid.dy);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let c: Vec<f64> = conv.apply(&rho).iter().zip(&v).map(|(w, v)| w + v).collect();
        let next = fill_to_unit_mass(&c, alpha, grid.dy);
        residual = next.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for (r, n) in rho.iter_mut().zip(&next) {
            *r += opts.damping * (n - *r);
        }
        if residual < opts.tolerance {
            let m: f64 = rho.iter().sum::<f64>() * grid.dy;
            let rho = rho.into_iter().map(|r| r / m).collect();
            return GridDensity::from_normalized(grid.left, grid.dy, rho);
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{wasserstein2, Measure};
    use crate::potentials::{Kind, Potential};

    fn huber(alpha: f64) -> ModelParams {
        ModelParams::new(alpha, Potential::huber(1.0, 1.0).unwrap(), Potential::zero(Kind::Interaction)).unwrap()
    }

    fn l1(a: &GridDensity, b: &GridDensity) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.dy()
    }

    #[test]
    fn chemical_potential_inverse() {
        for &alpha in &[0.0, 0.3, 0.9, 0.999] {
            for k in -40..40 {
                let rho = if alpha > 0.0 { (k as f64 + 40.5) / 81.0 / alpha } else { (k as f64 * 0.3).exp() };
                let s = 1.0 - alpha * rho;
                let z = 0.5 * (rho / s).ln() + 0.5 / s;
                let back = invert_chemical_potential(z, alpha);
                assert!((back - rho).abs() < 1e-12 * (1.0 + rho), "alpha {alpha} rho {rho} back {back}");
            }
        }
        assert_eq!(invert_chemical_potential(-1e4, 0.5), 0.0);
        assert!(invert_chemical_potential(1e6, 0.5) < 2.0);
    }

    #[test]
    fn heat_kernel() {
        let params = ModelParams::free(0.0).unwrap();
        let mut cfg = PdeConfig::new(-6.0, 6.0, 0.01, 0.5);
        cfg.snapshots = 1;
        let s0: f64 = 0.5;
        let gauss = |var: f64| move |y: f64| (-y * y / (2.0 * var)).exp();
        let rho0 = cfg.discretize(gauss(s0 * s0)).unwrap();
        let path = solve_limit_pde(&rho0, &params, &cfg).unwrap();
        // Heat equation with diffusivity 1/2: variance grows by t.
        let exact = cfg.discretize(gauss(s0 * s0 + 0.5)).unwrap();
        assert!(l1(path.last(), &exact) < 1e-3);
    }

    #[test]
    fn rost_uniform_data() {
        let params = ModelParams::free(0.5).unwrap();
        let mut cfg = PdeConfig::new(-5.5, 6.5, 0.01, 0.5);
        cfg.snapshots = 10;
        let rho0 = cfg.uniform(0.0, 1.0).unwrap();
        let path = solve_limit_pde(&rho0, &params, &cfg).unwrap();
        let mut prev_max = f64::INFINITY;
        for s in &path.states {
            assert!((s.mass() - 1.0).abs() < 1e-10);
            assert!(s.values().iter().all(|&v| v >= 0.0));
            assert!(s.max_value() <= prev_max + 1e-12);
            prev_max = s.max_value();
        }
    }

    #[test]
    fn steady_state_is_fixed() {
        let params = ModelParams::new(0.5, Potential::huber(2.0, 1.0).unwrap(), Potential::gaussian(0.3, 0.5).unwrap())
            .unwrap();
        let mut cfg = PdeConfig::new(-8.0, 8.0, 0.02, 1.0);
        cfg.snapshots = 4;
        let rho = steady_state(&params, cfg.grid()).unwrap();
        let path = solve_limit_pde(&rho, &params, &cfg).unwrap();
        for s in &path.states {
            let d = wasserstein2(s, &rho);
            assert!(d < 1e-4, "{d}");
        }
    }

    #[test]
    fn steady_state_gibbs_limit() {
        let params = huber(0.0);
        let grid = Grid::new(-15.0, 15.0, 0.01).unwrap();
        let rho = steady_state(&params, grid).unwrap();
        let gibbs = GridDensity::from_fn(grid.left, grid.dy, grid.count, |y| (-2.0 * params.v.value(y)).exp()).unwrap();
        assert!(l1(&rho, &gibbs) < 1e-6);
    }

    #[test]
    fn steady_state_symmetry() {
        let params = ModelParams::new(0.7, Potential::huber(1.0, 0.5).unwrap(), Potential::gaussian(-0.5, 0.4).unwrap())
            .unwrap();
        let rho = steady_state(&params, Grid::new(-10.0, 10.0, 0.02).unwrap()).unwrap();
        let v = rho.values();
        for j in 0..v.len() {
            assert!((v[j] - v[v.len() - 1 - j]).abs() < 1e-10);
        }
    }

    #[test]
    fn steady_state_reports_non_convergence() {
        let params = ModelParams::new(0.3, Potential::huber(1.0, 0.5).unwrap(), Potential::gaussian(-3.0, 0.4).unwrap())
            .unwrap();
        let opts = SteadyConfig { max_iterations: 3, ..SteadyConfig::default() };
        let r = steady_state_with(&params, None, Grid::new(-10.0, 10.0, 0.05).unwrap(), &opts);
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 3, .. })));
    }

    #[test]
    fn bruna_chapman_at_zero_alpha_is_linear_fp() {
        let params = huber(0.0);
        let mut cfg = PdeConfig::new(-8.0, 8.0, 0.02, 0.5);
        cfg.snapshots = 2;
        let rho0 = cfg.discretize(|y| (-(y - 1.0).powi(2)).exp()).unwrap();
        let a = solve_limit_pde(&rho0, &params, &cfg).unwrap();
        let b = solve_bruna_chapman(&rho0, &params, &cfg).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() < 1e-8);
            }
            assert!((y.mass() - 1.0).abs() < 1e-12);
        }
        let with_w = ModelParams::new(0.1, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(1.0, 1.0).unwrap()).unwrap();
        assert!(solve_bruna_chapman(&rho0, &with_w, &cfg).is_err());
    }

    #[test]
    fn fixed_dt_stability_error() {
        let params = ModelParams::free(0.5).unwrap();
        let mut cfg = PdeConfig::new(-3.0, 4.0, 0.01, 0.1);
        cfg.dt = Some(1e-3);
        let rho0 = cfg.uniform(0.0, 1.0).unwrap();
        match solve_limit_pde(&rho0, &params, &cfg) {
            Err(Error::Stability { suggested_dt, .. }) => assert!(suggested_dt < 1e-4),
            other => panic!("expected a stability error, got {other:?}"),
        }
    }

    #[test]
    fn narrow_domain_fails_wall_audit() {
        let params = ModelParams::free(0.5).unwrap();
        let cfg = PdeConfig::new(-1.0, 2.0, 0.01, 0.5);
        let rho0 = cfg.uniform(0.0, 1.0).unwrap();
        assert!(matches!(solve_limit_pde(&rho0, &params, &cfg), Err(Error::BoundaryMass { .. })));
    }

    #[test]
    fn grid_mismatch() {
        let params = ModelParams::free(0.5).unwrap();
        let cfg = PdeConfig::new(-5.0, 5.0, 0.01, 0.1);
        let rho0 = GridDensity::uniform(0.0, 1.0, 100).unwrap();
        assert!(matches!(solve_limit_pde(&rho0, &params, &cfg), Err(Error::GridMismatch)));
    }

    #[test]
    fn grid_convergence_first_order() {
        let params = ModelParams::new(0.5, Potential::huber(1.0, 1.0).unwrap(), Potential::zero(Kind::Interaction)).unwrap();
        let run = |dy: f64| {
            let mut cfg = PdeConfig::new(-8.0, 8.0, dy, 0.3);
            cfg.snapshots = 1;
            let rho0 = cfg.discretize(|y| 0.6 * (-(y - 1.0).powi(2) * 2.0).exp() + 0.4 * (-(y + 1.0).powi(2) * 4.0).exp()).unwrap();
            solve_limit_pde(&rho0, &params, &cfg).unwrap().last().clone()
        };
        let fine = run(0.005);
        let coarse_to_fine = |g: &GridDensity| -> f64 {
            // L1 distance after averaging the reference onto the coarser grid.
            let r = (g.dy() / fine.dy()).round() as usize;
            g.values()
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let avg: f64 = fine.values()[j * r..(j + 1) * r].iter().sum::<f64>() / r as f64;
                    (v - avg).abs()
                })
                .sum::<f64>()
                * g.dy()
        };
        let e1 = coarse_to_fine(&run(0.04));
        let e2 = coarse_to_fine(&run(0.02));
        assert!(e1 / e2 >= 1.7, "errors {e1} {e2}");
    }

    #[test]
    fn compressed_fp_steady_state_is_fixed() {
        let params = huber(0.5);
        let rho = steady_state(&params, Grid::new(-14.0, 14.0, 0.01).unwrap()).unwrap();
        let mu = crate::maps::compress_grid(&rho, 0.5, Grid::new(-14.0, 14.0, 0.02).unwrap()).unwrap();
        let mut cfg = PdeConfig::new(-14.0, 14.0, 0.02, 0.5);
        cfg.snapshots = 2;
        let path = solve_compressed_fp(&mu, &params, &cfg, &ControlField::Zero).unwrap();
        assert!(wasserstein2(path.last(), &mu) < 1e-3);
        assert!((path.last().mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compressed_fp_expands_to_limit_pde() {
        // The compressed and expanded evolutions describe the same flow.
        let params = ModelParams::new(0.5, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.5, 0.5).unwrap()).unwrap();
        let mut cfg = PdeConfig::new(-7.0, 7.0, 0.02, 0.3);
        cfg.snapshots = 1;
        let mu0 = cfg.discretize(|x| (-(x * x)).exp()).unwrap();
        let rho0 = crate::maps::expand_grid(&mu0, 0.5, cfg.grid()).unwrap();
        let a = solve_compressed_fp(&mu0, &params, &cfg, &ControlField::Zero).unwrap();
        let b = solve_limit_pde(&rho0, &params, &cfg).unwrap();
        let ea = crate::maps::expand_grid(a.last(), 0.5, cfg.grid()).unwrap();
        let d = wasserstein2(&ea, b.last());
        assert!(d < 0.01, "{d}");
        assert!((ea.moment(1) - b.last().moment(1)).abs() < 0.01);
    }
}
