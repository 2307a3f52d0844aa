//! Random variables on a uniform atomic space and quantile-backed laws.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Grid, Level, Refined};

/// Absolute tolerance for comparing law signatures.
pub const LAW_TOLERANCE: f64 = 1e-12;

/// Relative agreement required between the two quadrature grids of an
/// expectation.
pub const EXPECTATION_RTOL: f64 = 1e-8;

pub const DEFAULT_GRIDPOINTS: usize = 256;
pub const DEFAULT_TAIL_SPLIT: f64 = 0.9;

/// A random variable on `n` equally likely atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AtomicRV {
    values: Vec<f64>,
}

impl AtomicRV {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(AtomicRV { values })
    }

    pub fn constant(c: f64, n: usize) -> Result<Self> {
        AtomicRV::new(vec![c; n])
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn expectation(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Applies `f` entrywise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        AtomicRV::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn shift(&self, m: f64) -> Self {
        AtomicRV {
            values: self.values.iter().map(|v| v + m).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        AtomicRV {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &AtomicRV, lambda: f64) -> Result<Self> {
        self.check_same_len(other)?;
        Ok(AtomicRV {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect(),
        })
    }

    /// Each atom split into `k` equal atoms carrying the same value.
    pub fn replicate(&self, k: usize) -> Self {
        AtomicRV {
            values: self
                .values
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(k))
                .collect(),
        }
    }

    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: order.len(),
            });
        }
        AtomicRV::new(order.iter().map(|&i| self.values[i]).collect())
    }

    pub(crate) fn check_same_len(&self, other: &AtomicRV) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    /// Lifts the atomic law to a step quantile function.
    pub fn to_quantile(&self) -> QuantileRV {
        let sorted = law_signature(self).into_values();
        let n = sorted.len();
        let breakpoints = (1..n).map(|k| Level::new(k as f64 / n as f64)).collect();
        let table = Arc::new(sorted);
        let q = move |l: Level| {
            let idx = (l.p() * n as f64).floor() as usize;
            table[idx.min(n - 1)]
        };
        QuantileRV::from_parts(Arc::new(q), DEFAULT_GRIDPOINTS, DEFAULT_TAIL_SPLIT, breakpoints)
            .with_label(format!("atomic(n={n})"))
    }
}

impl TryFrom<Vec<f64>> for AtomicRV {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        AtomicRV::new(values)
    }
}

impl From<AtomicRV> for Vec<f64> {
    fn from(x: AtomicRV) -> Self {
        x.values
    }
}

/// Sorted atom values: the empirical quantile function at levels `k/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LawSignature(Vec<f64>);

impl LawSignature {
    pub fn sorted_values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

pub fn law_signature(x: &AtomicRV) -> LawSignature {
    let mut v = x.values.clone();
    v.sort_by(f64::total_cmp);
    LawSignature(v)
}

/// Compares laws after replicating the coarser variable onto the finer atom
/// count. Atom counts must divide one another.
pub fn equal_in_law(x: &AtomicRV, y: &AtomicRV) -> Result<bool> {
    let (n, m) = (x.len(), y.len());
    let (x, y) = if n == m {
        (x.clone(), y.clone())
    } else if m % n == 0 {
        (x.replicate(m / n), y.clone())
    } else if n % m == 0 {
        (x.clone(), y.replicate(n / m))
    } else {
        return Err(Error::IncomparableSupports { left: n, right: m });
    };
    let (sx, sy) = (law_signature(&x), law_signature(&y));
    Ok(sx
        .0
        .iter()
        .zip(&sy.0)
        .all(|(a, b)| (a - b).abs() <= LAW_TOLERANCE))
}

pub type QuantileFn = Arc<dyn Fn(Level) -> f64 + Send + Sync>;

/// An arbitrary (possibly unbounded) law given by its quantile function.
#[derive(Clone)]
pub struct QuantileRV {
    quantile: QuantileFn,
    gridpoints: usize,
    tail_split: f64,
    breakpoints: Vec<Level>,
    label: String,
}

impl fmt::Debug for QuantileRV {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantileRV")
            .field("label", &self.label)
            .field("gridpoints", &self.gridpoints)
            .field("tail_split", &self.tail_split)
            .field("breakpoints", &self.breakpoints.len())
            .finish()
    }
}

impl QuantileRV {
    /// Builds a quantile-backed law, checking monotonicity on 1024 levels.
    pub fn new(quantile: QuantileFn, gridpoints: usize, tail_split: f64) -> Result<Self> {
        let rv = QuantileRV::from_parts(quantile, gridpoints, tail_split, Vec::new());
        rv.validate()?;
        Ok(rv)
    }

    pub(crate) fn from_parts(
        quantile: QuantileFn,
        gridpoints: usize,
        tail_split: f64,
        breakpoints: Vec<Level>,
    ) -> Self {
        QuantileRV {
            quantile,
            gridpoints,
            tail_split,
            breakpoints,
            label: "custom".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gridpoints == 0 {
            return Err(Error::InvalidParameter("gridpoints must be positive".into()));
        }
        if !(self.tail_split > 0.0 && self.tail_split < 1.0) || self.tail_split == 0.5 {
            return Err(Error::InvalidParameter(format!(
                "tail_split must lie in (0, 1) and differ from 1/2, got {}",
                self.tail_split
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..1024 {
            let v = self.eval(Level::new((k as f64 + 0.5) / 1024.0));
            if v.is_nan() || v < prev {
                return Err(Error::InvalidParameter(format!(
                    "quantile is not nondecreasing near level {}",
                    (k as f64 + 0.5) / 1024.0
                )));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_grid(mut self, gridpoints: usize, tail_split: f64) -> Result<Self> {
        self.gridpoints = gridpoints;
        self.tail_split = tail_split;
        self.validate()?;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn gridpoints(&self) -> usize {
        self.gridpoints
    }

    pub fn tail_split(&self) -> f64 {
        self.tail_split
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.gridpoints, self.tail_split)
    }

    pub fn breakpoints(&self) -> &[Level] {
        &self.breakpoints
    }

    pub fn eval(&self, level: Level) -> f64 {
        (self.quantile)(level)
    }

    /// Exponential law with the given rate: `q(u) = -ln(1 - u) / rate`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
        }
        let q = move |l: Level| -l.complement().ln() / rate;
        Ok(
            QuantileRV::from_parts(Arc::new(q), DEFAULT_GRIDPOINTS, DEFAULT_TAIL_SPLIT, vec![])
                .with_label(format!("exp(rate={rate})")),
        )
    }

    pub fn constant(c: f64) -> Self {
        QuantileRV::from_parts(
            Arc::new(move |_| c),
            DEFAULT_GRIDPOINTS,
            DEFAULT_TAIL_SPLIT,
            vec![],
        )
        .with_label(format!("const({c})"))
    }

    /// The law of `shift + factor * X`.
    pub fn affine(&self, shift: f64, factor: f64) -> Self {
        let inner = Arc::clone(&self.quantile);
        let (q, breakpoints): (QuantileFn, Vec<Level>) = if factor >= 0.0 {
            (
                Arc::new(move |l| shift + factor * inner(l)),
                self.breakpoints.clone(),
            )
        } else {
            (
                Arc::new(move |l: Level| shift + factor * inner(l.flip())),
                self.breakpoints.iter().map(|l| l.flip()).collect(),
            )
        };
        QuantileRV {
            quantile: q,
            breakpoints,
            label: format!("{shift}+{factor}*{}", self.label),
            ..self.clone()
        }
    }

    pub fn negate(&self) -> Self {
        self.affine(0.0, -1.0)
    }

    pub fn shift(&self, m: f64) -> Self {
        self.affine(m, 1.0)
    }

    /// The law of `X^- = max(-X, 0)`.
    pub fn negative_part(&self) -> Self {
        let neg = self.negate();
        let inner = Arc::clone(&neg.quantile);
        let mut breakpoints = neg.breakpoints.clone();
        if let Some(l) = neg.crossing(0.0) {
            breakpoints.push(l);
        }
        QuantileRV {
            quantile: Arc::new(move |l| inner(l).max(0.0)),
            breakpoints,
            label: format!("neg_part({})", self.label),
            ..self.clone()
        }
    }

    /// Smallest level `u` with `q(u) >= value`, or `None` when the quantile
    /// stays strictly below `value`, or is at least `value` everywhere.
    pub fn crossing(&self, value: f64) -> Option<Level> {
        let l = self.first_level_at_least(value);
        if l == Level::ZERO || l == Level::ONE {
            None
        } else {
            Some(l)
        }
    }

    /// `inf { u : q(u) >= value }`, clamped to `[0, 1]`.
    pub fn first_level_at_least(&self, value: f64) -> Level {
        let (mut lo, mut hi) = Level::param_bounds();
        if self.eval(Level::from_param(lo)) >= value {
            return Level::ZERO;
        }
        if self.eval(Level::from_param(hi)) < value {
            return Level::ONE;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(Level::from_param(mid)) >= value {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
        }
        Level::from_param(hi)
    }

    /// `sup { u : q(u) <= value }`, clamped to `[0, 1]`.
    pub fn last_level_at_most(&self, value: f64) -> Level {
        self.negate().first_level_at_least(-value).flip()
    }

    /// Quantile `u -> min(q(u), n)`; `n = +inf` leaves the law unchanged.
    pub fn truncate_min(&self, n: f64) -> Result<Self> {
        if n.is_nan() || n <= 0.0 {
            return Err(Error::InvalidParameter(format!("truncation level must be positive, got {n}")));
        }
        if n == f64::INFINITY {
            return Ok(self.clone());
        }
        let inner = Arc::clone(&self.quantile);
        let mut breakpoints = self.breakpoints.clone();
        if let Some(l) = self.crossing(n) {
            breakpoints.push(l);
        }
        Ok(QuantileRV {
            quantile: Arc::new(move |l| inner(l).min(n)),
            breakpoints,
            label: format!("min({}, {n})", self.label),
            ..self.clone()
        })
    }

    /// Integrates `g(q(u))` over `(lo, hi)` at the configured grid and its
    /// doubling. `extra` adds panel cuts for kinks introduced by `g`.
    pub(crate) fn integrate_range(
        &self,
        g: &dyn Fn(f64) -> f64,
        lo: Level,
        hi: Level,
        extra: &[Level],
        grid: Grid,
    ) -> Refined {
        let mut breaks = self.breakpoints.clone();
        breaks.extend_from_slice(extra);
        let f = |l: Level| g(self.eval(l));
        Refined::run(grid, &f, lo, hi, &breaks)
    }

    /// Panel cut at the zero crossing, where `|x|` has its kink.
    pub(crate) fn zero_cut(&self) -> Vec<Level> {
        self.crossing(0.0).into_iter().collect()
    }

    /// Mean of the law by quadrature over (0, 1).
    pub fn expectation(&self) -> Result<f64> {
        let run = self.integrate_range(&|x| x, Level::ZERO, Level::ONE, &[], self.grid());
        run.stable(EXPECTATION_RTOL).ok_or_else(|| {
            Error::NotIntegrable(format!("quadrature of {} does not converge", self.label))
        })
    }

    /// Integral of `q` over the level range `(lo, hi)`.
    pub fn partial_integral(&self, lo: Level, hi: Level) -> Result<f64> {
        let run = self.integrate_range(&|x| x, lo, hi, &[], self.grid());
        run.stable(EXPECTATION_RTOL).ok_or_else(|| {
            Error::NotIntegrable(format!("partial integral of {} does not converge", self.label))
        })
    }

    /// Quantile values at `count` equally spaced interior levels.
    pub fn sample_levels(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|k| self.eval(Level::new((k as f64 + 0.5) / count as f64)))
            .collect()
    }
}

/// How a dominated sequence approaches its limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    MonotoneDown,
    Oscillating,
    NoiseDecay,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monotone_down" | "monotone-down" => Ok(Scheme::MonotoneDown),
            "oscillating" => Ok(Scheme::Oscillating),
            "noise_decay" | "noise-decay" => Ok(Scheme::NoiseDecay),
            other => Err(Error::Parse(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::MonotoneDown => "monotone_down",
            Scheme::Oscillating => "oscillating",
            Scheme::NoiseDecay => "noise_decay",
        })
    }
}

/// `X_1..X_count` converging entrywise to `x` with `|X_k| <= |x| + 1`.
pub fn dominated_sequence(x: &AtomicRV, scheme: Scheme, count: usize, seed: u64) -> Result<Vec<AtomicRV>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = (1..=count)
        .map(|k| {
            let k = k as f64;
            let values = match scheme {
                Scheme::MonotoneDown => x.values.iter().map(|v| v + 1.0 / k).collect(),
                Scheme::Oscillating => {
                    let sign = if k as u64 % 2 == 0 { 1.0 } else { -1.0 };
                    x.values.iter().map(|v| v + sign / k).collect()
                }
                Scheme::NoiseDecay => x
                    .values
                    .iter()
                    .map(|v| v + rng.gen_range(-1.0..=1.0) / k)
                    .collect(),
            };
            AtomicRV { values }
        })
        .collect();
    Ok(seq)
}
