//! Compression and expansion between point particles and hard rods.
//!
//! A configuration of `n` rods of length `alpha / n` on the line is turned
//! into `n` point particles by removing the volume to the left of each rod:
//! the `i`-th rod (in sorted order) moves left by `(i - 1) alpha / n`. On
//! densities the same operation reads `Y(m) = X(m) + alpha m` in quantile
//! coordinates. Both maps preserve Wasserstein-2 distances.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, GridDensity, Icdf, Measure};

/// Which description a measure lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Point particles (the `X`/`Z` description).
    Compressed,
    /// Rods of positive length (the `Y` description).
    Expanded,
}

/// Absolute tolerance on rod gaps.
pub const GAP_TOLERANCE: f64 = 1e-12;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be a finite non-negative number, got {alpha}")));
    }
    Ok(())
}

/// `y_i = x_i + (i - 1) alpha / n` on the sorted points.
pub fn expand_particles(x: &EmpiricalMeasure, alpha: f64) -> Result<EmpiricalMeasure> {
    check_alpha(alpha)?;
    let step = alpha / x.len() as f64;
    let y = x.points().iter().enumerate().map(|(i, p)| p + i as f64 * step).collect();
    Ok(EmpiricalMeasure::from_sorted(y))
}

/// Inverse of [`expand_particles`]. Fails unless every gap is at least
/// `alpha / n`.
pub fn compress_particles(y: &EmpiricalMeasure, alpha: f64) -> Result<EmpiricalMeasure> {
    check_alpha(alpha)?;
    let required = alpha / y.len() as f64;
    if let Some(i) = y.points().windows(2).position(|w| w[1] - w[0] < required - GAP_TOLERANCE) {
        let p = y.points();
        return Err(Error::Admissibility { index: i + 1, gap: p[i + 1] - p[i], required });
    }
    let x = y.points().iter().enumerate().map(|(i, p)| p - i as f64 * required);
    // Gaps at the tolerance edge can come out as -1e-13; keep the order exact.
    let mut out = Vec::with_capacity(y.len());
    for v in x {
        let last = out.last().copied().unwrap_or(f64::NEG_INFINITY);
        out.push(v.max(last));
    }
    Ok(EmpiricalMeasure::from_sorted(out))
}

/// `Y(m_k) = X(m_k) + alpha m_k` on a mass grid of size `m`.
pub fn expand_density<M: Measure + ?Sized>(mu: &M, alpha: f64, m: usize) -> Result<Icdf> {
    check_alpha(alpha)?;
    let x = crate::measures::icdf_of(mu, m)?;
    let y = x.values().iter().enumerate().map(|(k, v)| v + alpha * x.mass(k)).collect();
    Ok(Icdf::from_values_unchecked(y))
}

/// `X(m_k) = Y(m_k) - alpha m_k`. The quantile function must grow faster
/// than `alpha` between neighbouring mass points, i.e. the density stays
/// below `1 / alpha`.
pub fn compress_density(rho: &Icdf, alpha: f64) -> Result<Icdf> {
    check_alpha(alpha)?;
    let m = rho.len() as f64;
    let y = rho.values();
    for (k, w) in y.windows(2).enumerate() {
        let slope = (w[1] - w[0]) * m;
        if alpha > 0.0 && slope <= alpha * (1.0 + 1e-9) {
            return Err(Error::DensityCeiling { index: k, slope, alpha });
        }
    }
    let x = y.iter().enumerate().map(|(k, v)| v - alpha * rho.mass(k)).collect();
    Ok(Icdf::from_values_unchecked(x))
}

/// `T_mu(x) = x + alpha mu((-inf, x))`.
pub fn t_mu<M: Measure + ?Sized>(mu: &M, x: f64, alpha: f64) -> f64 {
    x + alpha * mu.cdf_left(x)
}

/// Target grid for [`expand_grid`] and [`compress_grid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub left: f64,
    pub dy: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(left: f64, right: f64, dy: f64) -> Result<Self> {
        if !(right > left) || !(dy > 0.0) {
            return Err(invalid(format!("bad grid [{left}, {right}] with dy = {dy}")));
        }
        let count = ((right - left) / dy - 1e-9).ceil() as usize;
        Ok(Self { left, dy, count })
    }

    pub fn of(g: &GridDensity) -> Self {
        Self { left: g.left(), dy: g.dy(), count: g.len() }
    }

    pub fn right(&self) -> f64 {
        self.left + self.count as f64 * self.dy
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.left + j as f64 * self.dy
    }

    pub fn center(&self, j: usize) -> f64 {
        self.left + (j as f64 + 0.5) * self.dy
    }
}

/// Resamples a piecewise-linear CDF given by knots `(xs, fs)` onto `grid`.
fn cdf_knots_to_grid(xs: &[f64], fs: &[f64], grid: Grid) -> Result<GridDensity> {
    let total = fs[fs.len() - 1];
    let eval = |x: f64| -> f64 {
        if x <= xs[0] {
            return 0.0;
        }
        if x >= xs[xs.len() - 1] {
            return total;
        }
        let i = xs.partition_point(|&v| v <= x);
        let (x0, x1) = (xs[i - 1], xs[i]);
        if x1 == x0 {
            return fs[i];
        }
        fs[i - 1] + (fs[i] - fs[i - 1]) * (x - x0) / (x1 - x0)
    };
    let lost = eval(grid.left) + (total - eval(grid.right()));
    if lost > 1e-12 {
        let x = if eval(grid.left) > 0.0 { xs[0] } else { xs[xs.len() - 1] };
        return Err(Error::DomainCoverage { x, left: grid.left, right: grid.right() });
    }
    let mut prev = 0.0;
    let values = (1..=grid.count)
        .map(|j| {
            let f = eval(grid.edge(j));
            let v = (f - prev).max(0.0) / grid.dy;
            prev = f;
            v
        })
        .collect();
    GridDensity::new(grid.left, grid.dy, values)
}

/// Expands a grid density and resamples it onto `grid`, exactly: the
/// expanded CDF is piecewise linear with knots at the images of the cell
/// edges under `T_mu`.
pub fn expand_grid(mu: &GridDensity, alpha: f64, grid: Grid) -> Result<GridDensity> {
    check_alpha(alpha)?;
    let cum = mu.cumulative();
    let xs: Vec<f64> = (0..=mu.len()).map(|j| mu.edge(j) + alpha * cum[j]).collect();
    cdf_knots_to_grid(&xs, &cum, grid)
}

/// Inverse of [`expand_grid`]; every cell must satisfy `alpha rho < 1`.
pub fn compress_grid(rho: &GridDensity, alpha: f64, grid: Grid) -> Result<GridDensity> {
    check_alpha(alpha)?;
    if let Some(j) = rho.values().iter().position(|&v| alpha * v >= 1.0) {
        return Err(Error::DensityCeiling { index: j, slope: 1.0 / rho.values()[j], alpha });
    }
    let cum = rho.cumulative();
    let xs: Vec<f64> = (0..=rho.len()).map(|j| rho.edge(j) - alpha * cum[j]).collect();
    cdf_knots_to_grid(&xs, &cum, grid)
}
