//! On-site and interaction potentials and the mean-field drift of the
//! compressed particle system.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, Measure};

/// Functional form of a potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `k y`; only meaningful as a tilt.
    Linear { slope: f64 },
    /// `c (sqrt(s^2 + y^2) - s)`: quadratic near zero, linear in the tails.
    Huber { c: f64, s: f64 },
    /// `w0 exp(-y^2 / (2 sigma^2))`.
    Gaussian { w0: f64, sigma: f64 },
    /// `a tanh(y / scale)`.
    Tanh { a: f64, scale: f64 },
    /// Cubic Hermite interpolation of tabulated `(y, V, V')`, extended
    /// linearly beyond the table.
    Table { y: Vec<f64>, v: Vec<f64>, dv: Vec<f64> },
}

impl Profile {
    pub fn value(&self, y: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Linear { slope } => slope * y,
            Profile::Huber { c, s } => c * (s.hypot(y) - s),
            Profile::Gaussian { w0, sigma } => w0 * (-0.5 * (y / sigma).powi(2)).exp(),
            Profile::Tanh { a, scale } => a * (y / scale).tanh(),
            Profile::Table { y: ref ys, ref v, ref dv } => hermite(ys, v, dv, y).0,
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match *self {
            Profile::Zero | Profile::Constant { .. } => 0.0,
            Profile::Linear { slope } => slope,
            Profile::Huber { c, s } => c * y / s.hypot(y),
            Profile::Gaussian { w0, sigma } => {
                let z = y / sigma;
                -w0 * z / sigma * (-0.5 * z * z).exp()
            }
            Profile::Tanh { a, scale } => {
                let t = (y / scale).tanh();
                a / scale * (1.0 - t * t)
            }
            Profile::Table { y: ref ys, ref v, ref dv } => hermite(ys, v, dv, y).1,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Constant { value } => *value == 0.0,
            Profile::Linear { slope } => *slope == 0.0,
            Profile::Huber { c, .. } => *c == 0.0,
            Profile::Gaussian { w0, .. } => *w0 == 0.0,
            Profile::Tanh { a, .. } => *a == 0.0,
            Profile::Table { v, dv, .. } => v.iter().chain(dv).all(|&x| x == 0.0),
        }
    }

    /// Derivative is identically zero.
    pub fn is_flat(&self) -> bool {
        matches!(self, Profile::Constant { .. }) || self.is_zero()
    }

    /// Parses a table from CSV text with columns `y, V, V'` (header optional,
    /// `#` comments ignored).
    pub fn table_from_csv(text: &str) -> Result<Self> {
        let (mut ys, mut v, mut dv) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", lineno + 1)));
            }
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(row) => {
                    ys.push(row[0]);
                    v.push(row[1]);
                    dv.push(row[2]);
                }
                Err(_) if ys.is_empty() => continue, // header
                Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
            }
        }
        if ys.len() < 2 {
            return Err(Error::Parse("potential table needs at least two rows".into()));
        }
        if ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("potential table abscissae must be strictly increasing".into()));
        }
        if ys.iter().chain(&v).chain(&dv).any(|x| !x.is_finite()) {
            return Err(Error::Parse("potential table contains non-finite values".into()));
        }
        Ok(Profile::Table { y: ys, v, dv })
    }

    pub fn table_from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::table_from_csv(&std::fs::read_to_string(path)?)
    }
}

fn hermite(ys: &[f64], v: &[f64], dv: &[f64], y: f64) -> (f64, f64) {
    let last = ys.len() - 1;
    if y <= ys[0] {
        return (v[0] + dv[0] * (y - ys[0]), dv[0]);
    }
    if y >= ys[last] {
        return (v[last] + dv[last] * (y - ys[last]), dv[last]);
    }
    let i = ys.partition_point(|&p| p <= y) - 1;
    let h = ys[i + 1] - ys[i];
    let t = (y - ys[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * v[i] + h10 * h * dv[i] + h01 * v[i + 1] + h11 * h * dv[i + 1];
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    let deriv = d00 * v[i] + d10 * dv[i] + d01 * v[i + 1] + d11 * dv[i + 1];
    (value, deriv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Onsite,
    Interaction,
    Tilt,
}

/// Lower bound `V(y) >= c1 |y| - c2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coercivity {
    pub c1: f64,
    pub c2: f64,
}

/// A potential together with the bounds checked at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialRepr", into = "PotentialRepr")]
pub struct Potential {
    profile: Profile,
    kind: Kind,
    lipschitz_bound: f64,
    sup_bound: Option<f64>,
    coercivity: Option<Coercivity>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PotentialRepr {
    kind: Kind,
    #[serde(flatten)]
    profile: Profile,
}

impl TryFrom<PotentialRepr> for Potential {
    type Error = Error;
    fn try_from(s: PotentialRepr) -> Result<Self> {
        Potential::new(s.profile, s.kind)
    }
}

impl From<Potential> for PotentialRepr {
    fn from(p: Potential) -> Self {
        PotentialRepr { kind: p.kind, profile: p.profile }
    }
}

/// Points where the kind checks are evaluated.
fn audit_grid() -> impl Iterator<Item = f64> {
    let near = (-2000..=2000).map(|k| k as f64 * 0.01);
    let far = (1..=60).flat_map(|k| {
        let y = 20.0 * 1.25f64.powi(k);
        [y, -y]
    });
    near.chain(far)
}

impl Potential {
    pub fn new(profile: Profile, kind: Kind) -> Result<Self> {
        Self::check_profile(&profile)?;
        let lipschitz_bound = match profile {
            Profile::Zero | Profile::Constant { .. } => 0.0,
            Profile::Linear { slope } => slope.abs(),
            Profile::Huber { c, .. } => c.abs(),
            Profile::Gaussian { w0, sigma } => w0.abs() / (sigma * std::f64::consts::E.sqrt()),
            Profile::Tanh { a, scale } => a.abs() / scale,
            Profile::Table { .. } => audit_grid().map(|y| profile.derivative(y).abs()).fold(0.0, f64::max),
        };
        let sup_bound = match profile {
            Profile::Zero => Some(0.0),
            Profile::Constant { value } => Some(value.abs()),
            Profile::Gaussian { w0, .. } => Some(w0.abs()),
            Profile::Tanh { a, .. } => Some(a.abs()),
            Profile::Linear { slope: 0.0 } => Some(0.0),
            Profile::Table { ref dv, .. } if dv[0] == 0.0 && dv[dv.len() - 1] == 0.0 => {
                Some(audit_grid().map(|y| profile.value(y).abs()).fold(0.0, f64::max))
            }
            _ => None,
        };
        let coercivity = match profile {
            // sqrt(s^2 + y^2) >= |y|, so V >= c |y| - c s exactly.
            Profile::Huber { c, s } if c > 0.0 => Some(Coercivity { c1: c, c2: c * s }),
            Profile::Table { ref y, ref v, ref dv } if dv[0] < 0.0 && dv[dv.len() - 1] > 0.0 => {
                let c1 = (-dv[0]).min(dv[dv.len() - 1]);
                let c2 = audit_grid()
                    .chain(y.iter().copied())
                    .filter(|t| (y[0]..=y[y.len() - 1]).contains(t))
                    .map(|t| c1 * t.abs() - profile.value(t))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(c1 * y[0].abs() - v[0])
                    .max(c1 * y[y.len() - 1].abs() - v[v.len() - 1]);
                Some(Coercivity { c1, c2 })
            }
            _ => None,
        };
        let pot = Self { profile, kind, lipschitz_bound, sup_bound, coercivity };
        pot.audit()?;
        Ok(pot)
    }

    fn check_profile(profile: &Profile) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match *profile {
            Profile::Zero => true,
            Profile::Constant { value } => finite(&[value]),
            Profile::Linear { slope } => finite(&[slope]),
            Profile::Huber { c, s } => finite(&[c, s]) && c >= 0.0 && s > 0.0,
            Profile::Gaussian { w0, sigma } => finite(&[w0, sigma]) && sigma > 0.0,
            Profile::Tanh { a, scale } => finite(&[a, scale]) && scale > 0.0,
            Profile::Table { ref y, ref v, ref dv } => {
                y.len() >= 2 && y.len() == v.len() && y.len() == dv.len() && finite(y) && finite(v) && finite(dv)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid potential parameters: {profile:?}")))
        }
    }

    fn audit(&self) -> Result<()> {
        for y in audit_grid() {
            let d = self.derivative(y).abs();
            if d > self.lipschitz_bound * (1.0 + 1e-9) + 1e-12 {
                return Err(invalid(format!("|V'({y})| = {d} exceeds the Lipschitz bound")));
            }
        }
        match self.kind {
            Kind::Onsite => {
                if let Some(Coercivity { c1, c2 }) = self.coercivity {
                    if let Some(y) = audit_grid().find(|&y| self.value(y) < c1 * y.abs() - c2 - 1e-9) {
                        return Err(invalid(format!("coercivity bound fails at y = {y}")));
                    }
                }
            }
            Kind::Interaction => {
                if self.sup_bound.is_none() {
                    return Err(invalid("interaction potential must be bounded"));
                }
                for y in audit_grid() {
                    let (a, b) = (self.value(y), self.value(-y));
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                        return Err(invalid(format!("interaction potential is not even at y = {y}")));
                    }
                }
            }
            Kind::Tilt => {}
        }
        Ok(())
    }

    pub fn onsite(profile: Profile) -> Result<Self> {
        Self::new(profile, Kind::Onsite)
    }

    pub fn interaction(profile: Profile) -> Result<Self> {
        Self::new(profile, Kind::Interaction)
    }

    pub fn tilt(profile: Profile) -> Result<Self> {
        Self::new(profile, Kind::Tilt)
    }

    pub fn zero(kind: Kind) -> Self {
        Self::new(Profile::Zero, kind).expect("zero potential passes every audit")
    }

    /// `V(y) = c (sqrt(s^2 + y^2) - s)`.
    pub fn huber(c: f64, s: f64) -> Result<Self> {
        if !(c > 0.0) || !(s > 0.0) {
            return Err(invalid(format!("Huber potential needs c > 0 and s > 0, got c = {c}, s = {s}")));
        }
        Self::onsite(Profile::Huber { c, s })
    }

    /// `W(y) = w0 exp(-y^2 / (2 sigma^2))`.
    pub fn gaussian(w0: f64, sigma: f64) -> Result<Self> {
        Self::interaction(Profile::Gaussian { w0, sigma })
    }

    pub fn value(&self, y: f64) -> f64 {
        self.profile.value(y)
    }

    pub fn derivative(&self, y: f64) -> f64 {
        self.profile.derivative(y)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn coercivity(&self) -> Option<Coercivity> {
        self.coercivity
    }

    pub fn is_zero(&self) -> bool {
        self.profile.is_zero()
    }

    /// Radius beyond which `|W'|` drops below `1e-12` of its maximum, when
    /// such a radius exists in closed form.
    pub fn negligible_radius(&self) -> Option<f64> {
        match self.profile {
            Profile::Zero | Profile::Constant { .. } => Some(0.0),
            Profile::Gaussian { sigma, .. } => Some(10.0 * sigma),
            _ => None,
        }
    }
}

/// Rod volume fraction and potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub v: Potential,
    pub w: Potential,
    pub tilt: Option<Potential>,
    /// Ignore pairs farther apart than this in the drift sum.
    pub pair_cutoff: Option<f64>,
}

impl ModelParams {
    pub fn new(alpha: f64, v: Potential, w: Potential) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        if v.kind() != Kind::Onsite {
            return Err(invalid("V must be an on-site potential"));
        }
        if w.kind() != Kind::Interaction {
            return Err(invalid("W must be an interaction potential"));
        }
        Ok(Self { alpha, v, w, tilt: None, pair_cutoff: None })
    }

    /// Free rods: `V = W = 0`.
    pub fn free(alpha: f64) -> Result<Self> {
        Self::new(alpha, Potential::zero(Kind::Onsite), Potential::zero(Kind::Interaction))
    }

    pub fn with_tilt(mut self, f: Potential) -> Result<Self> {
        if f.kind() != Kind::Tilt {
            return Err(invalid("tilt must be built with Potential::tilt"));
        }
        self.tilt = Some(f);
        Ok(self)
    }

    pub fn with_pair_cutoff(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("pair cutoff must be positive"));
        }
        self.pair_cutoff = Some(r);
        Ok(self)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut p = Self::new(alpha, self.v.clone(), self.w.clone())?;
        p.tilt = self.tilt.clone();
        p.pair_cutoff = self.pair_cutoff;
        Ok(p)
    }

    pub fn without_interaction(&self) -> Self {
        let mut p = self.clone();
        p.w = Potential::zero(Kind::Interaction);
        p
    }

    /// Pair cutoff in use: the explicit one, or the closed-form negligible
    /// radius of `W` for `n` above 4096.
    pub fn effective_cutoff(&self, n: usize) -> Option<f64> {
        self.pair_cutoff.or_else(|| if n > 4096 { self.w.negligible_radius() } else { None })
    }
}

/// Mean-field drift of one particle:
/// `b = -V'(T x) - (1/n) sum_j W'(T x - T x_j)` with
/// `T y = y + alpha mu((-inf, y))`.
pub fn drift_b(x: f64, mu: &EmpiricalMeasure, params: &ModelParams) -> f64 {
    let a = params.alpha;
    let tx = x + a * mu.cdf_left(x);
    let mut b = -params.v.derivative(tx);
    if !params.w.profile().is_flat() {
        let n = mu.len() as f64;
        let s: f64 = mu
            .points()
            .iter()
            .map(|&xj| params.w.derivative(tx - (xj + a * mu.cdf_left(xj))))
            .sum();
        b -= s / n;
    }
    b
}

/// Scratch space for [`drift_b_all_into`].
#[derive(Clone, Debug, Default)]
pub struct DriftWorkspace {
    order: Vec<usize>,
    t: Vec<f64>,
    pair: Vec<f64>,
}

/// Drift of every particle, returned in input order. The input need not be
/// sorted.
pub fn drift_b_all(x: &[f64], params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    drift_b_all_into(x, params, &mut DriftWorkspace::default(), &mut out);
    out
}

pub fn drift_b_all_into(x: &[f64], params: &ModelParams, ws: &mut DriftWorkspace, out: &mut [f64]) {
    let n = x.len();
    let a = params.alpha;
    let inv_n = 1.0 / n as f64;
    ws.order.clear();
    ws.order.extend(0..n);
    ws.order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    // Positions after expansion, in sorted order; ties share the strict-left
    // rank.
    ws.t.clear();
    let mut rank = 0;
    for (k, &i) in ws.order.iter().enumerate() {
        if k > 0 && x[i] > x[ws.order[k - 1]] {
            rank = k;
        }
        ws.t.push(x[i] + a * rank as f64 * inv_n);
    }
    ws.pair.clear();
    ws.pair.resize(n, 0.0);
    if !params.w.profile().is_flat() {
        let cutoff = params.effective_cutoff(n).unwrap_or(f64::INFINITY);
        let t = &ws.t;
        for k in 0..n {
            for l in k + 1..n {
                let d = t[k] - t[l];
                if -d > cutoff {
                    break;
                }
                let f = params.w.derivative(d);
                ws.pair[k] += f;
                ws.pair[l] -= f;
            }
        }
    }
    for (k, &i) in ws.order.iter().enumerate() {
        out[i] = -params.v.derivative(ws.t[k]) - ws.pair[k] * inv_n;
    }
}

/// `mu((-inf, x))` for every support point of `mu`, i.e. the strict-left
/// rank divided by `n`.
pub fn left_masses(mu: &EmpiricalMeasure) -> Vec<f64> {
    mu.points().iter().map(|&x| mu.cdf_left(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emp(p: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(p.to_vec()).unwrap()
    }

    fn interacting(alpha: f64) -> ModelParams {
        ModelParams::new(alpha, Potential::huber(1.0, 1.0).unwrap(), Potential::gaussian(0.8, 0.3).unwrap()).unwrap()
    }

    #[test]
    fn huber_examples() {
        let v = Potential::huber(1.0, 1.0).unwrap();
        assert_eq!(v.value(0.0), 0.0);
        assert_eq!(v.derivative(0.0), 0.0);
        assert!((v.value(1e6) / 1e6 - 1.0).abs() < 1e-4);
        assert_eq!(v.coercivity(), Some(Coercivity { c1: 1.0, c2: 1.0 }));
        assert!(Potential::huber(0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let w = Potential::gaussian(0.7, 0.4).unwrap();
        assert_eq!(w.value(0.0), 0.7);
        for k in 0..100 {
            let y = k as f64 * 0.037;
            assert_eq!(w.value(y), w.value(-y));
        }
        // Simpson on [-10 sigma, 10 sigma].
        let (a, b, m) = (-4.0, 4.0, 4000);
        let h = (b - a) / m as f64;
        let s: f64 = (0..=m)
            .map(|k| {
                let wgt = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                wgt * w.value(a + k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((s - 0.7 * 0.4 * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn lipschitz_bound_of_gaussian_is_attained() {
        let w = Potential::gaussian(2.0, 0.5).unwrap();
        assert!((w.derivative(0.5).abs() - w.lipschitz_bound()).abs() < 1e-14);
    }

    #[test]
    fn kind_checks() {
        assert!(Potential::interaction(Profile::Huber { c: 1.0, s: 1.0 }).is_err());
        assert!(Potential::interaction(Profile::Tanh { a: 1.0, scale: 1.0 }).is_err());
        assert!(Potential::tilt(Profile::Linear { slope: 2.0 }).is_ok());
        assert!(ModelParams::new(1.0, Potential::huber(1.0, 1.0).unwrap(), Potential::zero(Kind::Interaction)).is_err());
    }

    #[test]
    fn table_reproduces_cubic() {
        // Hermite interpolation is exact on cubics.
        let f = |y: f64| y * y * y - 2.0 * y;
        let df = |y: f64| 3.0 * y * y - 2.0;
        let rows: String = (0..=10)
            .map(|k| {
                let y = -1.0 + 0.2 * k as f64;
                format!("{y},{},{}\n", f(y), df(y))
            })
            .collect();
        let p = Profile::table_from_csv(&format!("y,V,dV\n{rows}")).unwrap();
        for k in 0..50 {
            let y = -0.99 + 0.0397 * k as f64;
            assert!((p.value(y) - f(y)).abs() < 1e-12);
            assert!((p.derivative(y) - df(y)).abs() < 1e-11);
        }
    }

    #[test]
    fn table_potential_coercivity() {
        let rows: String = (-20..=20)
            .map(|k| {
                let y = k as f64 * 0.25;
                format!("{y},{},{}\n", 2.0 * (1.0 + y * y).sqrt(), 2.0 * y / (1.0 + y * y).sqrt())
            })
            .collect();
        let v = Potential::onsite(Profile::table_from_csv(&rows).unwrap()).unwrap();
        let c = v.coercivity().unwrap();
        assert!(c.c1 > 1.9);
        for k in -100..100 {
            let y = k as f64 * 0.3;
            assert!(v.value(y) >= c.c1 * y.abs() - c.c2 - 1e-9);
        }
    }

    #[test]
    fn table_parse_errors() {
        assert!(Profile::table_from_csv("0,1\n").is_err());
        assert!(Profile::table_from_csv("0,1,2\n").is_err());
        assert!(Profile::table_from_csv("1,0,0\n0,0,0\n").is_err());
    }

    #[test]
    fn potential_serde_round_trip() {
        let p = interacting(0.3);
        let text = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"kind":"interaction","family":"huber","c":1.0,"s":1.0}"#;
        assert!(serde_json::from_str::<Potential>(bad).is_err());
    }

    #[test]
    fn drift_examples() {
        let free = ModelParams::free(0.5).unwrap();
        assert_eq!(drift_b_all(&[0.3, -1.0, 2.0], &free), vec![0.0; 3]);

        let p = ModelParams::new(0.5, Potential::huber(1.0, 1.0).unwrap(), Potential::zero(Kind::Interaction)).unwrap();
        assert_eq!(drift_b(0.7, &emp(&[0.7]), &p), -p.v.derivative(0.7));
        let mu = emp(&[0.0, 1.0]);
        assert_eq!(drift_b(0.0, &mu, &p), 0.0);
        let b2 = drift_b(1.0, &mu, &p);
        assert!((b2 + 1.25 / (1.0f64 + 1.25 * 1.25).sqrt()).abs() < 1e-15);
        assert!((b2 + 0.78087).abs() < 1e-5);
    }

    #[test]
    fn drift_symmetric_pair() {
        let p = ModelParams::new(0.4, Potential::zero(Kind::Onsite), Potential::gaussian(1.0, 0.7).unwrap()).unwrap();
        let b = drift_b_all(&[-0.3, 0.3], &p);
        assert!((b[0] + b[1]).abs() < 1e-15);
        assert!(b[0] != 0.0);
    }

    #[test]
    fn drift_translation_invariant_without_onsite() {
        let p = ModelParams::new(0.4, Potential::zero(Kind::Onsite), Potential::gaussian(1.0, 0.7).unwrap()).unwrap();
        let x = [0.1, -0.5, 0.9, 0.2];
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.25).collect();
        let (a, b) = (drift_b_all(&x, &p), drift_b_all(&shifted, &p));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_all_matches_single_evaluations() {
        let p = interacting(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(1..60);
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            if n > 3 {
                x[2] = x[0]; // ties
            }
            let mu = emp(&x);
            let all = drift_b_all(&x, &p);
            for (i, &xi) in x.iter().enumerate() {
                assert!((all[i] - drift_b(xi, &mu, &p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cutoff_changes_nothing_beyond_negligible_radius() {
        let p = interacting(0.5);
        let q = p.clone().with_pair_cutoff(10.0 * 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (a, b) = (drift_b_all(&x, &p), drift_b_all(&x, &q));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn onsite_only_drift_depends_on_rank() {
        let p = ModelParams::new(0.5, Potential::huber(2.0, 0.5).unwrap(), Potential::zero(Kind::Interaction)).unwrap();
        let x = [0.0, 1.0, 2.0, 3.0];
        let b = drift_b_all(&x, &p);
        // Moving the others without changing ranks leaves particle 1 alone.
        let b2 = drift_b_all(&[-5.0, 1.0, 2.5, 9.0], &p);
        assert_eq!(b[1], b2[1]);
        assert_eq!(b[1], -p.v.derivative(1.0 + 0.5 / 4.0));
    }

    proptest! {
        #[test]
        fn drift_permutation_invariant(x in proptest::collection::vec(-3.0f64..3.0, 1..30), seed in any::<u64>()) {
            let p = interacting(0.6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..x.len()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let y: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let (bx, by) = (drift_b_all(&x, &p), drift_b_all(&y, &p));
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((by[k] - bx[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn drift_bounded(x in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = interacting(0.9);
            let bound = p.v.lipschitz_bound() + p.w.lipschitz_bound();
            for b in drift_b_all(&x, &p) {
                prop_assert!(b.abs() <= bound + 1e-12);
            }
        }
    }
}
