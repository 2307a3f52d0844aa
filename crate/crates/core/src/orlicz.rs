//! Orlicz functions, their conjugates, and the Luxemburg and Orlicz norms.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::distributions::{AtomicRV, QuantileRV};
use crate::error::{Error, Result};
use crate::quadrature::{agree, Integral, Level, PHI_CAP};

/// Relative bracket width at which the Luxemburg bisection stops for
/// quantile laws, where quadrature error dominates anyway.
pub const LUXEMBURG_RTOL: f64 = 1e-10;

/// Bracket width for atomic inputs, whose modular is exact up to rounding.
const ATOMIC_RTOL: f64 = 1e-14;

/// Grid-doubling agreement required for a modular to count as finite.
pub const HEART_RTOL: f64 = 1e-6;

const MAX_SCALE_STEPS: usize = 1200;

/// Piecewise-linear Orlicz function through `(t, phi_t)` knots starting at
/// the origin, extended past the last knot with the last slope.
#[derive(Clone, Debug, PartialEq)]
pub struct TableFunction {
    ts: Vec<f64>,
    phis: Vec<f64>,
}

impl TableFunction {
    pub fn new(mut ts: Vec<f64>, mut phis: Vec<f64>) -> Result<Self> {
        if ts.len() != phis.len() {
            return Err(Error::InvalidParameter("table columns differ in length".into()));
        }
        if ts.first() != Some(&0.0) {
            ts.insert(0, 0.0);
            phis.insert(0, 0.0);
        }
        if phis[0] != 0.0 {
            return Err(Error::InvalidParameter("table must satisfy phi(0) = 0".into()));
        }
        if ts.len() < 2 {
            return Err(Error::InvalidParameter("table needs a knot with t > 0".into()));
        }
        if ts.iter().chain(&phis).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table entries must be finite".into()));
        }
        let mut prev_slope = 0.0;
        for i in 1..ts.len() {
            let dt = ts[i] - ts[i - 1];
            if dt <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "t must be strictly increasing (row {i})"
                )));
            }
            if phis[i] < phis[i - 1] {
                return Err(Error::InvalidParameter(format!(
                    "phi_t must be nondecreasing (row {i})"
                )));
            }
            let slope = (phis[i] - phis[i - 1]) / dt;
            if slope < prev_slope - 1e-12 * slope.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "phi_t must be convex: slope drops at row {i}"
                )));
            }
            prev_slope = slope;
        }
        if phis[1] <= 0.0 {
            return Err(Error::InvalidParameter("phi(t) must be positive for t > 0".into()));
        }
        Ok(TableFunction { ts, phis })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.iter().copied().zip(self.phis.iter().copied())
    }

    fn last_slope(&self) -> f64 {
        let n = self.ts.len();
        (self.phis[n - 1] - self.phis[n - 2]) / (self.ts[n - 1] - self.ts[n - 2])
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.ts.len();
        let i = self.ts.partition_point(|&x| x <= t);
        if i >= n {
            return self.phis[n - 1] + self.last_slope() * (t - self.ts[n - 1]);
        }
        let (t0, t1) = (self.ts[i - 1], self.ts[i]);
        let (p0, p1) = (self.phis[i - 1], self.phis[i]);
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }

    /// Exact conjugate: the supremum of `ts - phi(t)` sits on a knot.
    fn conjugate(&self, s: f64) -> Result<f64> {
        if s > self.last_slope() {
            return Err(Error::ConjugateInfinite { s });
        }
        Ok(self
            .knots()
            .map(|(t, p)| t * s - p)
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrliczFamily {
    /// `t^p`
    Power { p: f64 },
    /// `t^p / p`
    PowerOverP { p: f64 },
    /// `e^t - 1`
    ExpMinusOne,
    /// `e^{t^2} - 1`
    ExpSquareMinusOne,
    Table(Arc<TableFunction>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Probed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Delta2 {
    Holds { k: f64 },
    Fails,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Delta2Verdict {
    #[serde(flatten)]
    pub delta2: Delta2,
    pub provenance: Provenance,
}

/// An Orlicz function `phi` with its conjugate `psi(s) = sup_t (ts - phi(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrliczFunction {
    family: OrliczFamily,
    label: String,
}

impl OrliczFunction {
    pub fn power(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(OrliczFunction {
            family: OrliczFamily::Power { p },
            label: format!("power:p={p}"),
        })
    }

    pub fn power_over_p(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(OrliczFunction {
            family: OrliczFamily::PowerOverP { p },
            label: format!("power_over_p:p={p}"),
        })
    }

    pub fn exp_minus_one() -> Self {
        OrliczFunction {
            family: OrliczFamily::ExpMinusOne,
            label: "exp_minus_one".into(),
        }
    }

    pub fn exp_square_minus_one() -> Self {
        OrliczFunction {
            family: OrliczFamily::ExpSquareMinusOne,
            label: "exp_square_minus_one".into(),
        }
    }

    pub fn table(table: TableFunction, label: impl Into<String>) -> Result<Self> {
        let phi = OrliczFunction {
            family: OrliczFamily::Table(Arc::new(table)),
            label: label.into(),
        };
        phi.validate()?;
        Ok(phi)
    }

    /// Parses `power:p=2`, `power_over_p:p=3`, `exp_minus_one`,
    /// `exp_square_minus_one` or `table:<path>`; the table file is read here.
    pub fn from_descriptor(descriptor: &str) -> Result<Self> {
        let (name, rest) = descriptor
            .split_once(':')
            .map_or((descriptor, None), |(n, r)| (n, Some(r)));
        match (name.trim(), rest) {
            ("power", Some(args)) => OrliczFunction::power(parse_p(args)?),
            ("power_over_p", Some(args)) => OrliczFunction::power_over_p(parse_p(args)?),
            ("exp_minus_one", None) => Ok(OrliczFunction::exp_minus_one()),
            ("exp_square_minus_one", None) => Ok(OrliczFunction::exp_square_minus_one()),
            ("table", Some(path)) => {
                let table = crate::io::read_phi_table(Path::new(path))?;
                OrliczFunction::table(table, format!("table:{path}"))
            }
            _ => Err(Error::Parse(format!("unknown Orlicz descriptor `{descriptor}`"))),
        }
    }

    pub fn family(&self) -> &OrliczFamily {
        &self.family
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn phi(&self, t: f64) -> f64 {
        match &self.family {
            OrliczFamily::Power { p } => t.powf(*p),
            OrliczFamily::PowerOverP { p } => t.powf(*p) / p,
            OrliczFamily::ExpMinusOne => t.exp_m1(),
            OrliczFamily::ExpSquareMinusOne => (t * t).exp_m1(),
            OrliczFamily::Table(table) => table.eval(t),
        }
    }

    /// Inverse of `phi` on `[0, inf)`.
    pub fn phi_inverse(&self, y: f64) -> f64 {
        match &self.family {
            OrliczFamily::Power { p } => y.powf(1.0 / p),
            OrliczFamily::PowerOverP { p } => (p * y).powf(1.0 / p),
            OrliczFamily::ExpMinusOne => y.ln_1p(),
            OrliczFamily::ExpSquareMinusOne => y.ln_1p().sqrt(),
            OrliczFamily::Table(_) => {
                let mut hi = 1.0;
                while self.phi(hi) < y {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.phi(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// Delta-2 status known from the family formula, if any.
    pub fn analytic_delta2(&self) -> Option<Delta2> {
        match &self.family {
            OrliczFamily::Power { p } | OrliczFamily::PowerOverP { p } => {
                Some(Delta2::Holds { k: p.exp2() })
            }
            OrliczFamily::ExpMinusOne | OrliczFamily::ExpSquareMinusOne => Some(Delta2::Fails),
            OrliczFamily::Table(_) => None,
        }
    }

    /// The conjugate `psi(s)`, in closed form where the family has one.
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidParameter(format!("conjugate needs s >= 0, got {s}")));
        }
        match &self.family {
            OrliczFamily::Power { p } if *p > 1.0 => {
                Ok(s * (1.0 - 1.0 / p) * (s / p).powf(1.0 / (p - 1.0)))
            }
            OrliczFamily::PowerOverP { p } if *p > 1.0 => {
                let q = p / (p - 1.0);
                Ok(s.powf(q) / q)
            }
            OrliczFamily::Power { .. } | OrliczFamily::PowerOverP { .. } => {
                if s <= 1.0 {
                    Ok(0.0)
                } else {
                    Err(Error::ConjugateInfinite { s })
                }
            }
            OrliczFamily::ExpMinusOne => {
                if s <= 1.0 {
                    Ok(0.0)
                } else {
                    Ok(s * s.ln() - s + 1.0)
                }
            }
            OrliczFamily::ExpSquareMinusOne => self.numeric_conjugate(s),
            OrliczFamily::Table(table) => table.conjugate(s),
        }
    }

    /// Conjugate by ternary search of the concave map `t -> ts - phi(t)`.
    pub fn numeric_conjugate(&self, s: f64) -> Result<f64> {
        legendre_sup(|t| Ok(self.phi(t)), s)
    }

    /// Checks `phi(0) = 0`, monotonicity, midpoint convexity and positivity
    /// on a 1024-point log grid.
    pub fn validate(&self) -> Result<()> {
        if self.phi(0.0) != 0.0 {
            return Err(Error::InvalidParameter(format!("{}: phi(0) != 0", self.label)));
        }
        let grid: Vec<f64> = (0..1024)
            .map(|k| (-20.0 + 40.0 * k as f64 / 1023.0).exp2())
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&t| self.phi(t)).collect();
        for (i, (&t, &v)) in grid.iter().zip(&vals).enumerate() {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{}: phi({t}) is not positive", self.label)));
            }
            if i > 0 && v < vals[i - 1] {
                return Err(Error::InvalidParameter(format!("{}: phi decreases at t = {t}", self.label)));
            }
        }
        for i in (0..1024).step_by(7) {
            for j in (i..1024).step_by(97) {
                let (a, b) = (grid[i], grid[j]);
                let (fa, fb) = (vals[i], vals[j]);
                if !fa.is_finite() || !fb.is_finite() {
                    continue;
                }
                let mid = self.phi(0.5 * (a + b));
                if mid > 0.5 * (fa + fb) + 1e-10 * (1.0 + fa.abs() + fb.abs()) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: midpoint convexity fails between {a} and {b}",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// `phi(t)/t` at `t = 2^k` until the overflow guard; superlinear when the
    /// ratio keeps increasing and has grown by three orders of magnitude.
    pub fn superlinearity_probe(&self) -> SuperlinearityProbe {
        let mut ratios = Vec::new();
        for k in 0..1000 {
            let t = (k as f64).exp2();
            let v = self.phi(t);
            if !v.is_finite() || v >= PHI_CAP {
                break;
            }
            ratios.push(v / t);
        }
        let increasing = ratios.windows(2).all(|w| w[1] >= w[0]);
        let growth = match (ratios.first(), ratios.last()) {
            (Some(first), Some(last)) if *first > 0.0 => last / first,
            _ => 1.0,
        };
        SuperlinearityProbe {
            superlinear: increasing && growth >= 1e3,
            last_ratio: ratios.last().copied().unwrap_or(0.0),
            steps: ratios.len(),
        }
    }
}

impl fmt::Display for OrliczFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuperlinearityProbe {
    pub superlinear: bool,
    pub last_ratio: f64,
    pub steps: usize,
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent must be >= 1, got {p}")))
    }
}

fn parse_p(args: &str) -> Result<f64> {
    let value = args
        .trim()
        .strip_prefix("p=")
        .ok_or_else(|| Error::Parse(format!("expected `p=<value>`, got `{args}`")))?;
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid exponent `{value}`")))
}

/// `sup_{t >= 0} (ts - f(t))` for convex `f` with `f(0) = 0`.
///
/// The bracket doubles while the objective still increases; an overflowing
/// bracket means the supremum is infinite.
pub fn legendre_sup(f: impl Fn(f64) -> Result<f64>, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("conjugate needs s >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let objective = |t: f64| -> f64 {
        match f(t) {
            Ok(v) if v.is_finite() => t * s - v,
            _ => f64::NEG_INFINITY,
        }
    };
    let mut hi = 1.0;
    while objective(2.0 * hi) > objective(hi) {
        hi *= 2.0;
        if hi > 1e150 {
            return Err(Error::ConjugateInfinite { s });
        }
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    for _ in 0..400 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if objective(m1) < objective(m2) {
            a = m1;
        } else {
            b = m2;
        }
        if b - a <= 1e-15 * b.max(1e-300) {
            break;
        }
    }
    Ok(objective(0.5 * (a + b)).max(0.0))
}

/// `phi(t) + psi(s) - ts`, nonnegative by Young's inequality.
pub fn young_gap(phi: &OrliczFunction, t: f64, s: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("young_gap needs t >= 0, got {t}")));
    }
    Ok(phi.phi(t) + phi.conjugate(s)? - t * s)
}

/// Outcome of a Luxemburg-norm bisection with its `(lambda, g(lambda))` trace.
#[derive(Clone, Debug, PartialEq)]
pub struct LuxemburgSolve {
    pub norm: f64,
    pub trace: Vec<(f64, f64)>,
}

impl LuxemburgSolve {
    /// `g` must not increase along increasing `lambda`.
    pub fn trace_is_monotone(&self) -> bool {
        let mut t = self.trace.clone();
        t.sort_by(|a, b| a.0.total_cmp(&b.0));
        t.windows(2)
            .all(|w| w[1].1 <= w[0].1 + 1e-12 * w[0].1.abs().max(1.0))
    }
}

/// Bisection for `inf { lambda > 0 : modular(lambda) <= 1 }`.
/// `max_growth` bounds the number of doublings of the upper bracket.
fn solve_gauge(modular: impl Fn(f64) -> f64, seed: f64, max_growth: usize, rtol: f64) -> Result<LuxemburgSolve> {
    let mut trace = Vec::new();
    let mut g = |lambda: f64| {
        let v = modular(lambda) - 1.0;
        trace.push((lambda, v));
        v
    };
    let mut hi = seed;
    let mut steps = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > max_growth || !hi.is_finite() {
            return Err(Error::NotInOrliczSpace);
        }
    }
    let mut lo = 0.5 * hi;
    steps = 0;
    while g(lo) <= 0.0 {
        hi = lo;
        lo *= 0.5;
        steps += 1;
        if steps > MAX_SCALE_STEPS || lo == 0.0 {
            return Err(Error::Numerical("modular never exceeds 1 as lambda shrinks".into()));
        }
    }
    while hi - lo > rtol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let solve = LuxemburgSolve { norm: hi, trace };
    debug_assert!(solve.trace_is_monotone(), "modular increased along the bisection trace");
    Ok(solve)
}

fn atomic_modular(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for &v in values {
        let y = f(v.abs());
        if !y.is_finite() || y >= PHI_CAP {
            return f64::INFINITY;
        }
        sum += y;
    }
    sum / values.len() as f64
}

pub fn luxemburg_norm(x: &AtomicRV, phi: &OrliczFunction) -> Result<f64> {
    Ok(luxemburg_solve(x, phi)?.norm)
}

pub fn luxemburg_solve(x: &AtomicRV, phi: &OrliczFunction) -> Result<LuxemburgSolve> {
    let max = x.max_abs();
    if max == 0.0 {
        return Ok(LuxemburgSolve { norm: 0.0, trace: vec![] });
    }
    let seed = max / phi.phi_inverse(1.0);
    solve_gauge(
        |lambda| atomic_modular(x.values(), |t| phi.phi(t / lambda)),
        seed,
        MAX_SCALE_STEPS,
        ATOMIC_RTOL,
    )
}

/// Luxemburg norm of a quantile-backed law. `NotInOrliczSpace` when the
/// modular diverges at every scale.
pub fn luxemburg_norm_quantile(x: &QuantileRV, phi: &OrliczFunction) -> Result<f64> {
    Ok(luxemburg_solve_quantile(x, phi)?.norm)
}

/// A quantile law whose modular only drops below 1 at `2^64` times its
/// first absolute moment is treated as outside the space: at such scales
/// the tail quadrature can no longer resolve the divergence.
const QUANTILE_GROWTH_STEPS: usize = 64;

pub fn luxemburg_solve_quantile(x: &QuantileRV, phi: &OrliczFunction) -> Result<LuxemburgSolve> {
    let cut = x.zero_cut();
    let first_moment = x
        .integrate_range(&|v| v.abs(), Level::ZERO, Level::ONE, &cut, x.grid())
        .fine;
    let seed = match first_moment {
        Integral::Divergent => return Err(Error::NotInOrliczSpace),
        Integral::Finite(m) if m == 0.0 => {
            return Ok(LuxemburgSolve { norm: 0.0, trace: vec![] });
        }
        Integral::Finite(m) => m,
    };
    let grid = x.grid();
    solve_gauge(
        |lambda| {
            let g = |v: f64| phi.phi(v.abs() / lambda);
            match crate::quadrature::integrate(
                grid,
                &|l: Level| g(x.eval(l)),
                Level::ZERO,
                Level::ONE,
                &[x.breakpoints(), &cut].concat(),
            ) {
                Integral::Finite(v) => v,
                Integral::Divergent => f64::INFINITY,
            }
        },
        seed,
        QUANTILE_GROWTH_STEPS,
        LUXEMBURG_RTOL,
    )
}

/// Orlicz (Amemiya) norm `inf_k (1 + E[psi(k|Z|)]) / k` of an atomic `Z`,
/// checked against the sandwich `L <= N <= 2L` where `L` is the Luxemburg
/// norm of `Z` under `psi`.
pub fn orlicz_norm(z: &AtomicRV, phi: &OrliczFunction) -> Result<f64> {
    let max = z.max_abs();
    if max == 0.0 {
        return Ok(0.0);
    }
    let psi_modular = |k: f64| -> f64 {
        let mut sum = 0.0;
        for &v in z.values() {
            match phi.conjugate(k * v.abs()) {
                Ok(y) if y.is_finite() && y < PHI_CAP => sum += y,
                _ => return f64::INFINITY,
            }
        }
        sum / z.len() as f64
    };
    let lux = solve_gauge(|lambda| psi_modular(1.0 / lambda), max, MAX_SCALE_STEPS, ATOMIC_RTOL)?.norm;

    let h = |log_k: f64| {
        let k = log_k.exp();
        (1.0 + psi_modular(k)) / k
    };
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((0.25 / lux).ln(), (1e3 / lux).ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..300 {
        if fc.is_infinite() && fd.is_infinite() {
            b = c;
        } else if fd.is_infinite() || fc <= fd {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
        fc = h(c);
        fd = h(d);
        if b - a < 1e-14 {
            break;
        }
    }
    let norm = [h(a), h(b), fc, fd].into_iter().fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * lux;
    if !(norm >= lux - slack && norm <= 2.0 * lux + slack) {
        return Err(Error::Numerical(format!(
            "Orlicz norm {norm} outside the sandwich [{lux}, {}]",
            2.0 * lux
        )));
    }
    Ok(norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class", content = "value", rename_all = "snake_case")]
pub enum ModularClass {
    Finite(f64),
    Divergent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeartEntry {
    pub lambda: f64,
    pub modular: ModularClass,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeartReport {
    pub entries: Vec<HeartEntry>,
    pub in_heart: bool,
}

/// Classifies `E[phi(|X|/lambda)]` for each `lambda` as finite (stable over
/// two grid doublings) or divergent.
pub fn heart_membership_probe(
    x: &QuantileRV,
    phi: &OrliczFunction,
    lambdas: &[f64],
) -> Result<HeartReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("lambdas must be nonempty".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {bad}")));
    }
    let cut = x.zero_cut();
    let entries: Vec<HeartEntry> = lambdas
        .iter()
        .map(|&lambda| {
            let g = |v: f64| phi.phi(v.abs() / lambda);
            let g1 = x.integrate_range(&g, Level::ZERO, Level::ONE, &cut, x.grid());
            let g2 = x.integrate_range(&g, Level::ZERO, Level::ONE, &cut, x.grid().doubled().doubled());
            let modular = match (g1.coarse, g1.fine, g2.fine) {
                (Integral::Finite(a), Integral::Finite(b), Integral::Finite(c))
                    if agree(a, b, HEART_RTOL) && agree(b, c, HEART_RTOL) =>
                {
                    ModularClass::Finite(c)
                }
                _ => ModularClass::Divergent,
            };
            HeartEntry { lambda, modular }
        })
        .collect();
    let in_heart = entries
        .iter()
        .all(|e| matches!(e.modular, ModularClass::Finite(_)));
    Ok(HeartReport { entries, in_heart })
}

/// Sup of `phi(2t)/phi(t)` on a log grid over `[t0, t0 * 2^40]`, compared
/// with the doubled grid. Ignores the family's analytic status.
pub fn delta2_probe_numeric(phi: &OrliczFunction, t0: f64, grid: usize) -> Result<Delta2Verdict> {
    if !(t0 > 0.0) || grid < 16 {
        return Err(Error::InvalidParameter("delta2 probe needs t0 > 0 and grid >= 16".into()));
    }
    let sup_ratio = |points: usize| -> Option<f64> {
        let mut sup: f64 = 0.0;
        for i in 0..points {
            let t = t0 * (40.0 * i as f64 / (points - 1) as f64).exp2();
            let (num, den) = (phi.phi(2.0 * t), phi.phi(t));
            if !num.is_finite() || num >= PHI_CAP || !(den > 0.0) {
                return None;
            }
            sup = sup.max(num / den);
        }
        Some(sup)
    };
    let delta2 = match (sup_ratio(grid), sup_ratio(2 * grid)) {
        (Some(a), Some(b)) if (a - b).abs() <= 1e-3 * b => Delta2::Holds { k: b },
        _ => Delta2::Fails,
    };
    Ok(Delta2Verdict {
        delta2,
        provenance: Provenance::Probed,
    })
}

/// Delta-2 diagnostic; the family's analytic status overrides the probe.
pub fn delta2_probe(phi: &OrliczFunction, t0: f64, grid: usize) -> Result<Delta2Verdict> {
    let probed = delta2_probe_numeric(phi, t0, grid)?;
    Ok(match phi.analytic_delta2() {
        Some(delta2) => Delta2Verdict {
            delta2,
            provenance: Provenance::Analytic,
        },
        None => probed,
    })
}
