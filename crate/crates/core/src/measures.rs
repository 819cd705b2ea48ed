//! Probability measures on the real line.
//!
//! Three representations are used throughout the crate:
//!
//! * [`EmpiricalMeasure`]: `n` atoms of mass `1/n` (a particle configuration),
//! * [`GridDensity`]: a piecewise-constant density on a uniform grid,
//! * [`Icdf`]: the quantile function sampled at the midpoints
//!   `m_k = (k + 1/2) / M` of a uniform mass grid.
//!
//! In one dimension the optimal coupling between two measures is the monotone
//! one, so transport distances are `L^p(0, 1)` norms of quantile differences.
//! Everything here is expressed through that fact.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of mass midpoints used for quadrature in mass coordinates.
pub const DEFAULT_MASS_GRID: usize = 2048;

/// Operations shared by every representation.
pub trait Measure {
    /// Quantile function `X(m) = inf { x : F(x) > m }` at the midpoints of
    /// a uniform mass grid of size `m`.
    fn icdf(&self, m: usize) -> Icdf;

    /// `F(x) = mu((-inf, x])`.
    fn cdf(&self, x: f64) -> f64;

    /// `mu((-inf, x))`.
    fn cdf_left(&self, x: f64) -> f64;

    /// Points where the CDF may jump or change slope.
    fn breakpoints(&self) -> Vec<f64>;

    /// `int x^k mu(dx)`.
    fn moment(&self, k: u32) -> f64;

    fn as_empirical(&self) -> Option<&EmpiricalMeasure> {
        None
    }
}

// ---------------------------------------------------------------------------
// Empirical measures

/// Uniform atomic measure `(1/n) sum_i delta_{x_i}`, points kept sorted.
///
/// Coincident points are allowed. Sorting is stable, so a block of equal
/// points keeps its input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("empirical measure needs at least one point"));
        }
        if let Some(x) = points.iter().find(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite particle position {x}")));
        }
        points.sort_by(f64::total_cmp);
        Ok(Self { points })
    }

    /// Caller guarantees the points are finite and sorted.
    pub(crate) fn from_sorted(points: Vec<f64>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] <= w[1]));
        Self { points }
    }

    pub fn point_mass(x: f64) -> Self {
        Self { points: vec![x] }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    pub fn shifted(&self, a: f64) -> Self {
        Self::from_sorted(self.points.iter().map(|x| x + a).collect())
    }

    /// Number of points strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        self.points.partition_point(|&p| p < x)
    }
}

impl Measure for EmpiricalMeasure {
    fn icdf(&self, m: usize) -> Icdf {
        assert!(m >= 1, "mass grid must have at least one point");
        let n = self.points.len() as u128;
        let xs = (0..m as u128)
            .map(|k| {
                // X(m_k) is the order statistic of index floor(n m_k) + 1, in
                // exact integer arithmetic: m_k = (2k + 1) / (2M).
                let i = (n * (2 * k + 1)) / (2 * m as u128);
                self.points[(i as usize).min(self.points.len() - 1)]
            })
            .collect();
        Icdf { x_values: xs }
    }

    fn cdf(&self, x: f64) -> f64 {
        self.points.partition_point(|&p| p <= x) as f64 / self.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.count_below(x) as f64 / self.len() as f64
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.points.clone();
        b.dedup();
        b
    }

    fn moment(&self, k: u32) -> f64 {
        self.points.iter().map(|x| x.powi(k as i32)).sum::<f64>() / self.len() as f64
    }

    fn as_empirical(&self) -> Option<&EmpiricalMeasure> {
        Some(self)
    }
}

// ---------------------------------------------------------------------------
// Grid densities

/// Piecewise-constant density on cells `[left + j dy, left + (j+1) dy)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    left: f64,
    dy: f64,
    values: Vec<f64>,
}

impl GridDensity {
    /// Builds a density and rescales it to unit mass.
    pub fn new(left: f64, dy: f64, values: Vec<f64>) -> Result<Self> {
        Self::check(left, dy, &values)?;
        let mass: f64 = values.iter().sum::<f64>() * dy;
        if mass <= 0.0 {
            return Err(Error::EmptySupport);
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { left, dy, values })
    }

    /// Builds a density whose values already integrate to one (within 1e-8);
    /// the values are stored untouched.
    pub fn from_normalized(left: f64, dy: f64, values: Vec<f64>) -> Result<Self> {
        Self::check(left, dy, &values)?;
        let mass: f64 = values.iter().sum::<f64>() * dy;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(invalid(format!("density has mass {mass}, expected 1")));
        }
        Ok(Self { left, dy, values })
    }

    /// Samples `f` at cell centers and normalizes.
    pub fn from_fn(left: f64, dy: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..count).map(|j| f(left + (j as f64 + 0.5) * dy)).collect();
        Self::new(left, dy, values)
    }

    /// Uniform density on `[a, b]` on a grid whose edges include `a` and `b`.
    pub fn uniform(a: f64, b: f64, count: usize) -> Result<Self> {
        if !(b > a) || count == 0 {
            return Err(invalid("uniform density needs a < b and at least one cell"));
        }
        let dy = (b - a) / count as f64;
        Self::new(a, dy, vec![1.0; count])
    }

    fn check(left: f64, dy: f64, values: &[f64]) -> Result<()> {
        if !left.is_finite() || !(dy > 0.0) || !dy.is_finite() {
            return Err(invalid(format!("bad grid: left = {left}, dy = {dy}")));
        }
        if values.is_empty() {
            return Err(invalid("grid density needs at least one cell"));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("cell {j} has invalid density {v}")));
        }
        Ok(())
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn right(&self) -> f64 {
        self.left + self.values.len() as f64 * self.dy
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn center(&self, j: usize) -> f64 {
        self.left + (j as f64 + 0.5) * self.dy
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.left + j as f64 * self.dy
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.center(j)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dy
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Same grid (left edge, width and cell count) up to `1e-12` relative.
    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.len() == other.len()
            && (self.dy - other.dy).abs() <= 1e-12 * self.dy
            && (self.left - other.left).abs() <= 1e-12 * self.dy.max(self.left.abs())
    }

    /// CDF at the cell edges: `cum[0] = 0`, `cum[len] = mass`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for v in &self.values {
            acc += v * self.dy;
            cum.push(acc);
        }
        cum
    }

    /// Evaluates the (continuous) CDF at `x` given precomputed edge values.
    pub(crate) fn cdf_with(&self, cum: &[f64], x: f64) -> f64 {
        if x <= self.left {
            return 0.0;
        }
        let t = (x - self.left) / self.dy;
        let j = t.floor() as usize;
        if j >= self.len() {
            return cum[self.len()];
        }
        cum[j] + self.values[j] * (x - self.edge(j))
    }

    #[cfg(test)]
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self { left: self.left, dy: self.dy, values }
    }
}

impl Measure for GridDensity {
    fn icdf(&self, m: usize) -> Icdf {
        let cum = self.cumulative();
        let last_pos = self.values.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        let mut xs = Vec::with_capacity(m);
        let mut j = 0;
        for k in 0..m {
            let mk = (k as f64 + 0.5) / m as f64;
            while j < self.len() && cum[j + 1] <= mk {
                j += 1;
            }
            let x = if j >= self.len() {
                // Rounding left the total mass just below m_k.
                self.edge(last_pos + 1)
            } else {
                self.edge(j) + (mk - cum[j]) / self.values[j]
            };
            xs.push(x.min(self.edge(j.min(self.len() - 1) + 1)));
        }
        Icdf { x_values: xs }
    }

    fn cdf(&self, x: f64) -> f64 {
        self.cdf_with(&self.cumulative(), x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..=self.len()).map(|j| self.edge(j)).collect()
    }

    fn moment(&self, k: u32) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| v * self.center(j).powi(k as i32))
            .sum::<f64>()
            * self.dy
    }
}

// ---------------------------------------------------------------------------
// Quantile functions

/// Quantile function sampled at mass midpoints `m_k = (k + 1/2) / M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Icdf {
    x_values: Vec<f64>,
}

impl Icdf {
    pub fn new(x_values: Vec<f64>) -> Result<Self> {
        if x_values.len() < 2 {
            return Err(invalid("an icdf needs at least two mass points"));
        }
        if x_values.iter().any(|x| !x.is_finite()) {
            return Err(invalid("icdf values must be finite"));
        }
        if let Some(k) = x_values.windows(2).position(|w| w[1] < w[0]) {
            return Err(invalid(format!("icdf decreases at mass index {k}")));
        }
        Ok(Self { x_values })
    }

    pub(crate) fn from_values_unchecked(x_values: Vec<f64>) -> Self {
        Self { x_values }
    }

    pub fn values(&self) -> &[f64] {
        &self.x_values
    }

    pub fn len(&self) -> usize {
        self.x_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_values.is_empty()
    }

    pub fn mass(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.len() as f64
    }

    pub fn mass_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.mass(k)).collect()
    }

    /// Knots of the piecewise-linear quantile function: the sampled midpoints
    /// plus linear extrapolation to `m = 0` and `m = 1`.
    fn knots(&self) -> (Vec<f64>, Vec<f64>) {
        let xs = &self.x_values;
        let m = xs.len();
        let mut kx = Vec::with_capacity(m + 2);
        let mut km = Vec::with_capacity(m + 2);
        kx.push(xs[0] - 0.5 * (xs[1] - xs[0]));
        km.push(0.0);
        for (k, &x) in xs.iter().enumerate() {
            kx.push(x);
            km.push(self.mass(k));
        }
        kx.push(xs[m - 1] + 0.5 * (xs[m - 1] - xs[m - 2]));
        km.push(1.0);
        (kx, km)
    }

    /// Quantile at an arbitrary mass level by linear interpolation.
    pub fn quantile(&self, m: f64) -> f64 {
        let (kx, km) = self.knots();
        let i = km.partition_point(|&v| v <= m).clamp(1, km.len() - 1);
        let (m0, m1) = (km[i - 1], km[i]);
        kx[i - 1] + (kx[i] - kx[i - 1]) * (m - m0) / (m1 - m0)
    }

    /// Piecewise-constant density implied by the interpolated quantile
    /// function, averaged onto the given grid.
    pub fn to_grid(&self, left: f64, dy: f64, count: usize) -> Result<GridDensity> {
        let right = left + count as f64 * dy;
        let (kx, _) = self.knots();
        let tol = 1e-9 * dy;
        if kx[0] < left - tol || kx[kx.len() - 1] > right + tol {
            let x = if kx[0] < left { kx[0] } else { kx[kx.len() - 1] };
            return Err(Error::DomainCoverage { x, left, right });
        }
        let mut prev = 0.0;
        let values = (1..=count)
            .map(|j| {
                let f = self.cdf(left + j as f64 * dy);
                let v = (f - prev).max(0.0) / dy;
                prev = f;
                v
            })
            .collect();
        GridDensity::new(left, dy, values)
    }
}

impl Measure for Icdf {
    fn icdf(&self, m: usize) -> Icdf {
        if m == self.len() {
            return self.clone();
        }
        Icdf {
            x_values: (0..m).map(|k| self.quantile((k as f64 + 0.5) / m as f64)).collect(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let (kx, km) = self.knots();
        if x < kx[0] {
            return 0.0;
        }
        if x >= kx[kx.len() - 1] {
            return 1.0;
        }
        let i = kx.partition_point(|&v| v <= x) - 1;
        km[i] + (km[i + 1] - km[i]) * (x - kx[i]) / (kx[i + 1] - kx[i])
    }

    fn cdf_left(&self, x: f64) -> f64 {
        let (kx, km) = self.knots();
        let i = kx.partition_point(|&v| v < x);
        if i == 0 {
            return 0.0;
        }
        if i >= kx.len() {
            return 1.0;
        }
        km[i - 1] + (km[i] - km[i - 1]) * (x - kx[i - 1]) / (kx[i] - kx[i - 1])
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.knots().0;
        b.dedup();
        b
    }

    fn moment(&self, k: u32) -> f64 {
        self.x_values.iter().map(|x| x.powi(k as i32)).sum::<f64>() / self.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Tagged union

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Measure1D {
    Empirical(EmpiricalMeasure),
    Grid(GridDensity),
    Icdf(Icdf),
}

impl Measure1D {
    fn inner(&self) -> &dyn Measure {
        match self {
            Measure1D::Empirical(e) => e,
            Measure1D::Grid(g) => g,
            Measure1D::Icdf(i) => i,
        }
    }
}

impl Measure for Measure1D {
    fn icdf(&self, m: usize) -> Icdf {
        self.inner().icdf(m)
    }
    fn cdf(&self, x: f64) -> f64 {
        self.inner().cdf(x)
    }
    fn cdf_left(&self, x: f64) -> f64 {
        self.inner().cdf_left(x)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner().breakpoints()
    }
    fn moment(&self, k: u32) -> f64 {
        self.inner().moment(k)
    }
    fn as_empirical(&self) -> Option<&EmpiricalMeasure> {
        self.inner().as_empirical()
    }
}

impl From<EmpiricalMeasure> for Measure1D {
    fn from(e: EmpiricalMeasure) -> Self {
        Measure1D::Empirical(e)
    }
}

impl From<GridDensity> for Measure1D {
    fn from(g: GridDensity) -> Self {
        Measure1D::Grid(g)
    }
}

impl From<Icdf> for Measure1D {
    fn from(i: Icdf) -> Self {
        Measure1D::Icdf(i)
    }
}

/// Quantile function of `mu` on `m` mass midpoints.
pub fn icdf_of<M: Measure + ?Sized>(mu: &M, m: usize) -> Result<Icdf> {
    if m < 2 {
        return Err(invalid("mass grid needs M >= 2"));
    }
    Ok(mu.icdf(m))
}

// ---------------------------------------------------------------------------
// Distances

fn equal_size_empirical<'a, A, B>(mu: &'a A, nu: &'a B) -> Option<(&'a [f64], &'a [f64])>
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    match (mu.as_empirical(), nu.as_empirical()) {
        (Some(a), Some(b)) if a.len() == b.len() => Some((a.points(), b.points())),
        _ => None,
    }
}

fn quantile_pair<A, B>(mu: &A, nu: &B, m: usize) -> (Icdf, Icdf)
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    (mu.icdf(m), nu.icdf(m))
}

/// Wasserstein-2 distance with the default mass grid.
pub fn wasserstein2<A, B>(mu: &A, nu: &B) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    wasserstein2_on(mu, nu, DEFAULT_MASS_GRID)
}

/// Wasserstein-2 distance: `(int_0^1 |X_mu - X_nu|^2 dm)^{1/2}`.
///
/// Equal-size empirical measures use the exact sorted matching; everything
/// else uses midpoint quadrature on `m` mass points.
pub fn wasserstein2_on<A, B>(mu: &A, nu: &B, m: usize) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    if let Some((a, b)) = equal_size_empirical(mu, nu) {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return (s / a.len() as f64).sqrt();
    }
    let (x, y) = quantile_pair(mu, nu, m);
    let s: f64 = x.values().iter().zip(y.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / m as f64).sqrt()
}

pub fn wasserstein1<A, B>(mu: &A, nu: &B) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    wasserstein1_on(mu, nu, DEFAULT_MASS_GRID)
}

/// Wasserstein-1 distance `int_0^1 |X_mu - X_nu| dm`, an upper bound for the
/// bounded-Lipschitz distance.
pub fn wasserstein1_on<A, B>(mu: &A, nu: &B, m: usize) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    if let Some((a, b)) = equal_size_empirical(mu, nu) {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let (x, y) = quantile_pair(mu, nu, m);
    x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / m as f64
}

/// Kolmogorov–Smirnov distance `sup_x |F_mu(x) - F_nu(x)|`.
pub fn ks_distance<A, B>(mu: &A, nu: &B) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    let mut pts = mu.breakpoints();
    pts.extend(nu.breakpoints());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.iter()
        .map(|&x| {
            let right = (mu.cdf(x) - nu.cdf(x)).abs();
            let left = (mu.cdf_left(x) - nu.cdf_left(x)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
        .min(1.0)
}

/// Path-level distance: the largest Wasserstein-2 distance over paired
/// snapshots. This is stronger than the weak topology used for the path
/// large-deviation principle.
pub fn sup_wasserstein2<A: Measure, B: Measure>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid("paths have different numbers of snapshots"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| wasserstein2(x, y)).fold(0.0, f64::max))
}

/// Histogram density estimate: `(#points in cell) / (n dy)`.
pub fn histogram(emp: &EmpiricalMeasure, left: f64, dy: f64, count: usize) -> Result<GridDensity> {
    if !(dy > 0.0) || count == 0 {
        return Err(invalid("histogram needs dy > 0 and at least one cell"));
    }
    let right = left + count as f64 * dy;
    let mut counts = vec![0usize; count];
    for &x in emp.points() {
        if x < left || x > right {
            return Err(Error::DomainCoverage { x, left, right });
        }
        let j = (((x - left) / dy).floor() as usize).min(count - 1);
        counts[j] += 1;
    }
    let scale = 1.0 / (emp.len() as f64 * dy);
    GridDensity::from_normalized(left, dy, counts.into_iter().map(|c| c as f64 * scale).collect())
}

pub fn moment<M: Measure + ?Sized>(mu: &M, k: u32) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return Err(invalid(format!("moment order {k} not supported (use 1 or 2)")));
    }
    Ok(mu.moment(k))
}
