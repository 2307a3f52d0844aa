//! Panel quadrature over probability levels in (0, 1).
//!
//! The unit interval is split into a bulk `[a, b]` covered by uniform panels
//! and two tails that are covered by geometrically shrinking panels toward
//! the endpoints. Every panel is integrated with 8-point Gauss-Legendre.
//! Upper-tail points are addressed through their complement `1 - u` so that
//! levels within 1e-300 of 1 stay representable.

use std::cmp::Ordering;

/// Integrand values at or above this magnitude mark the integral divergent.
pub const PHI_CAP: f64 = 1e300;

const MIN_TAIL_LEVELS: usize = 16;
const MAX_TAIL_LEVELS: usize = 960;
const QUIET_LEVELS: usize = 3;
const PARAM_MAX: f64 = 1020.0;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// A probability level `u` stored together with `1 - u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    p: f64,
    c: f64,
}

impl Level {
    pub const ZERO: Level = Level { p: 0.0, c: 1.0 };
    pub const ONE: Level = Level { p: 1.0, c: 0.0 };

    pub fn new(p: f64) -> Self {
        Level { p, c: 1.0 - p }
    }

    pub fn from_complement(c: f64) -> Self {
        Level { p: 1.0 - c, c }
    }

    pub fn p(self) -> f64 {
        self.p
    }

    pub fn complement(self) -> f64 {
        self.c
    }

    /// The level `1 - u`.
    pub fn flip(self) -> Self {
        Level { p: self.c, c: self.p }
    }

    /// Monotone map from the real line onto (0, 1) that is dyadic in both
    /// tails; used for bisection in level space.
    pub(crate) fn from_param(z: f64) -> Self {
        if z <= 0.0 {
            Level::new((z - 1.0).exp2())
        } else {
            Level::from_complement((-z - 1.0).exp2())
        }
    }

    pub(crate) fn param_bounds() -> (f64, f64) {
        (-PARAM_MAX, PARAM_MAX)
    }
}

impl PartialOrd for Level {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.p.partial_cmp(&other.p)? {
            Ordering::Equal => other.c.partial_cmp(&self.c),
            ord => Some(ord),
        }
    }
}

/// Panel layout for the level quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub panels: usize,
    pub tail_split: f64,
}

impl Grid {
    pub fn new(panels: usize, tail_split: f64) -> Self {
        Grid { panels, tail_split }
    }

    pub fn doubled(self) -> Self {
        Grid {
            panels: self.panels * 2,
            ..self
        }
    }

    fn bulk(self) -> (f64, f64) {
        let s = self.tail_split;
        if s > 0.5 {
            (1.0 - s, s)
        } else {
            (s, 1.0 - s)
        }
    }

    fn sub_panels(self) -> usize {
        (self.panels / 64).max(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn finite(self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(v),
            Integral::Divergent => None,
        }
    }
}

/// Integrates `f` over the levels `(lo, hi)`. Panels are cut at every level
/// in `breaks` so that jumps and kinks of the integrand sit on panel edges.
pub fn integrate<F>(grid: Grid, f: &F, lo: Level, hi: Level, breaks: &[Level]) -> Integral
where
    F: Fn(Level) -> f64 + ?Sized,
{
    if !(lo < hi) {
        return Integral::Finite(0.0);
    }
    let (a, b) = grid.bulk();
    let mut lower_breaks: Vec<f64> = breaks.iter().map(|l| l.p).collect();
    lower_breaks.sort_by(f64::total_cmp);
    let mut upper_breaks: Vec<f64> = breaks.iter().map(|l| l.c).collect();
    upper_breaks.sort_by(f64::total_cmp);

    let mut total = 0.0;

    if lo.p < a {
        let end = hi.p.min(a);
        let eval = |x: f64| f(Level::new(x));
        match tail(grid, &eval, a, lo.p, end, &lower_breaks) {
            Some(v) => total += v,
            None => return Integral::Divergent,
        }
    }

    let x0 = lo.p.max(a);
    let x1 = hi.p.min(b);
    if x0 < x1 {
        let count = ((grid.panels as f64) * (x1 - x0) / (b - a)).ceil() as usize;
        let eval = |x: f64| f(Level::new(x));
        match panels(&eval, x0, x1, count.max(1), &lower_breaks) {
            Some(v) => total += v,
            None => return Integral::Divergent,
        }
    }

    let cb = 1.0 - b;
    if hi.c < cb {
        let end = lo.c.min(cb);
        let eval = |x: f64| f(Level::from_complement(x));
        match tail(grid, &eval, cb, hi.c, end, &upper_breaks) {
            Some(v) => total += v,
            None => return Integral::Divergent,
        }
    }

    Integral::Finite(total)
}

/// Integrates over `(inner, outer)` in a tail coordinate that shrinks toward
/// zero, using dyadic levels below `start`. `inner == 0` means the tail runs
/// all the way to the endpoint; the series is then truncated once the level
/// contributions become negligible, and reported divergent if they never do.
fn tail<F>(grid: Grid, f: &F, start: f64, inner: f64, outer: f64, breaks: &[f64]) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let sub = grid.sub_panels();
    let mut sum = 0.0;
    let mut quiet = 0;
    for k in 0..MAX_TAIL_LEVELS {
        let top = start * (-(k as f64)).exp2();
        let bottom = top * 0.5;
        if top <= inner {
            return Some(sum);
        }
        let x1 = top.min(outer);
        let x0 = bottom.max(inner);
        if x0 >= x1 {
            continue;
        }
        let part = panels(f, x0, x1, sub, breaks)?;
        sum += part;
        if inner > 0.0 {
            continue;
        }
        if k >= MIN_TAIL_LEVELS && part.abs() <= 1e-17 * sum.abs() + 1e-300 {
            quiet += 1;
            if quiet >= QUIET_LEVELS {
                return deep_tail_is_negligible(f, start, sum).then_some(sum);
            }
        } else {
            quiet = 0;
        }
    }
    if inner > 0.0 {
        Some(sum)
    } else {
        None
    }
}

/// Guards the truncated series against integrands that are still small at
/// the stopping level but blow up further out: `x f(x)` at the deepest
/// representable tail level must be negligible against the sum.
fn deep_tail_is_negligible<F>(f: &F, start: f64, sum: f64) -> bool
where
    F: Fn(f64) -> f64,
{
    let x = start * (-(MAX_TAIL_LEVELS as f64)).exp2();
    let v = f(x);
    v.is_finite() && v.abs() < PHI_CAP && (x * v).abs() <= 1e-12 * sum.abs() + 1e-300
}

fn panels<F>(f: &F, x0: f64, x1: f64, count: usize, breaks: &[f64]) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut cuts = Vec::with_capacity(2);
    cuts.push(x0);
    let first = breaks.partition_point(|&b| b <= x0);
    cuts.extend(breaks[first..].iter().copied().take_while(|&b| b < x1));
    cuts.push(x1);
    cuts.dedup();

    let width = x1 - x0;
    let mut sum = 0.0;
    for pair in cuts.windows(2) {
        let (s0, s1) = (pair[0], pair[1]);
        let n = ((count as f64) * (s1 - s0) / width).ceil().max(1.0) as usize;
        let h = (s1 - s0) / n as f64;
        for i in 0..n {
            let lo = s0 + h * i as f64;
            let hi = if i + 1 == n { s1 } else { lo + h };
            sum += gauss_legendre(f, lo, hi)?;
        }
    }
    Some(sum)
}

fn gauss_legendre<F>(f: &F, lo: f64, hi: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        let left = f(mid - half * x);
        let right = f(mid + half * x);
        if !left.is_finite() || !right.is_finite() || left.abs() >= PHI_CAP || right.abs() >= PHI_CAP
        {
            return None;
        }
        acc += w * (left + right);
    }
    Some(acc * half)
}

/// Result of integrating at a grid and at its doubling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refined {
    pub coarse: Integral,
    pub fine: Integral,
}

impl Refined {
    pub fn run<F>(grid: Grid, f: &F, lo: Level, hi: Level, breaks: &[Level]) -> Self
    where
        F: Fn(Level) -> f64 + ?Sized,
    {
        let coarse = integrate(grid, f, lo, hi, breaks);
        let fine = match coarse {
            Integral::Divergent => Integral::Divergent,
            Integral::Finite(_) => integrate(grid.doubled(), f, lo, hi, breaks),
        };
        Refined { coarse, fine }
    }

    /// The fine value if both runs are finite and agree within `rtol`.
    pub fn stable(self, rtol: f64) -> Option<f64> {
        match (self.coarse, self.fine) {
            (Integral::Finite(c), Integral::Finite(f)) if agree(c, f, rtol) => Some(f),
            _ => None,
        }
    }
}

pub(crate) fn agree(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + 1e-14
}
