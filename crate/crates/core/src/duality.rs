//! Duality on finite spaces: Fenchel conjugates, the density form of
//! Expected Shortfall, biconjugate lower bounds, Kusuoka penalties, and the
//! extension of a risk measure to unbounded laws through conditional
//! expectations on refining partitions.

use std::path::Path;

use serde::Serialize;

use crate::distributions::{AtomicRV, QuantileRV};
use crate::error::{Error, Result};
use crate::io::{serialize_extended, serialize_extended_vec};
use crate::orlicz::{luxemburg_norm_quantile, OrliczFunction};
use crate::partitions::{cecon_sequence, cond_exp, LevelGrid};
use crate::risk::{es, KusuokaCandidate, RiskKind, RiskMeasure};

/// Tolerance on the mean and bounds of a density.
pub const DENSITY_TOLERANCE: f64 = 1e-12;

/// Search values above this are reported as an infinite conjugate.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Coordinate ascent stops once the step falls below this.
pub const MIN_STEP: f64 = 1e-8;

/// A probability density `dQ/dP` on `n` equally likely atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Density {
    z: Vec<f64>,
    cap: Option<f64>,
}

impl Density {
    pub fn new(z: Vec<f64>, cap: Option<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("density value {} at index {i} is negative", z[i])));
        }
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        if (mean - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(Error::InvalidParameter(format!("density has mean {mean}, not 1")));
        }
        if let Some(c) = cap {
            if let Some(i) = z.iter().position(|v| *v > c + DENSITY_TOLERANCE) {
                return Err(Error::InvalidParameter(format!("density value {} at index {i} exceeds cap {c}", z[i])));
            }
        }
        Ok(Density { z, cap })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Density::new(vec![1.0; n], None)
    }

    pub fn from_csv(path: &Path, cap: Option<f64>) -> Result<Self> {
        Density::new(crate::io::read_z_column(path)?, cap)
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `E_Q[Y] = E[z Y]`.
    pub fn expect(&self, y: &AtomicRV) -> Result<f64> {
        if y.len() != self.z.len() {
            return Err(Error::DimensionMismatch {
                expected: self.z.len(),
                found: y.len(),
            });
        }
        Ok(pairing(&self.z, y.values()))
    }
}

fn pairing(z: &[f64], x: &[f64]) -> f64 {
    z.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / z.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Greedy,
    Search,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum Witness {
    /// A maximizing variable, or for an infinite conjugate a ray direction
    /// along which the objective grows without bound.
    Variable(AtomicRV),
    Density(Density),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugateReport {
    #[serde(serialize_with = "serialize_extended")]
    pub value: f64,
    pub witness: Witness,
    pub method: Method,
    /// True when `value` is only a lower bound of the supremum.
    pub lower_bound: bool,
}

/// Candidates and budget for the conjugate search.
#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub candidates: Vec<AtomicRV>,
    /// Maximum number of coordinate sweeps.
    pub sweeps: usize,
}

impl SearchOptions {
    pub fn new(candidates: Vec<AtomicRV>) -> Self {
        SearchOptions {
            candidates,
            sweeps: 400,
        }
    }
}

/// `rho*(Z) = sup_X (E[Z X] - rho(X))`.
///
/// For ES the value is `0` when `-Z` is a density bounded by `1/alpha` and
/// `+inf` otherwise. For any other measure the supremum is bounded below by
/// the best candidate refined by coordinate ascent.
pub fn fenchel_conjugate(rho: &RiskMeasure, z: &AtomicRV, search: &SearchOptions) -> Result<ConjugateReport> {
    if let RiskKind::Es { alpha } = rho.kind() {
        return Ok(es_conjugate(z, *alpha));
    }
    let n = z.len();
    for c in &search.candidates {
        z.check_same_len(c)?;
    }
    let objective = |x: &AtomicRV| -> Result<f64> {
        let r = rho.eval(x)?;
        Ok(if r.is_nan() { f64::NEG_INFINITY } else { pairing(z.values(), x.values()) - r })
    };
    let mut best = AtomicRV::constant(0.0, n)?;
    let mut best_value = objective(&best)?;
    for c in &search.candidates {
        let v = objective(c)?;
        if v > best_value {
            best = c.clone();
            best_value = v;
        }
    }

    let mut step = 1.0_f64.max(best.max_abs());
    let mut sweeps = 0;
    while step >= MIN_STEP && sweeps < search.sweeps && best_value <= DIVERGENCE_BOUND {
        sweeps += 1;
        let mut improved = false;
        let mut moves: Vec<AtomicRV> = Vec::with_capacity(2 * n + 4);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut v = best.values().to_vec();
                v[i] += sign * step;
                moves.push(AtomicRV::new(v)?);
            }
        }
        moves.push(best.shift(step));
        moves.push(best.shift(-step));
        let factor = 1.0 + step.min(1.0);
        moves.push(best.scale(factor));
        moves.push(best.scale(1.0 / factor));
        for m in moves {
            let v = objective(&m)?;
            if v > best_value {
                best = m;
                best_value = v;
                improved = true;
            }
        }
        step = if improved { step * 2.0 } else { step * 0.5 };
    }
    let value = if best_value > DIVERGENCE_BOUND { f64::INFINITY } else { best_value };
    Ok(ConjugateReport {
        value,
        witness: Witness::Variable(best),
        method: Method::Search,
        lower_bound: value.is_finite(),
    })
}

fn es_conjugate(z: &AtomicRV, alpha: f64) -> ConjugateReport {
    let cap = 1.0 / alpha;
    let n = z.len();
    let q: Vec<f64> = z.values().iter().map(|v| -v).collect();
    let mean = q.iter().sum::<f64>() / n as f64;
    let ray = |d: Vec<f64>| ConjugateReport {
        value: f64::INFINITY,
        witness: Witness::Variable(AtomicRV::new(d).expect("finite ray")),
        method: Method::ClosedForm,
        lower_bound: false,
    };
    // a constant ray gains c (E[Z] + 1) per unit of c
    if (mean - 1.0).abs() > DENSITY_TOLERANCE {
        let c = if mean < 1.0 { 1.0 } else { -1.0 };
        return ray(vec![c; n]);
    }
    if let Some(i) = q.iter().position(|v| *v < -DENSITY_TOLERANCE) {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        return ray(d);
    }
    if let Some(i) = q.iter().position(|v| *v > cap + DENSITY_TOLERANCE) {
        let mut d = vec![0.0; n];
        d[i] = -1.0;
        return ray(d);
    }
    let clean: Vec<f64> = q.iter().map(|v| v.clamp(0.0, cap)).collect();
    ConjugateReport {
        value: 0.0,
        witness: Witness::Density(Density { z: clean, cap: Some(cap) }),
        method: Method::ClosedForm,
        lower_bound: false,
    }
}

/// `max { E_Q[-X] : 0 <= dQ/dP <= 1/alpha }` by the greedy rule: the worst
/// atoms receive density `1/alpha` until the unit mass is spent.
pub fn es_dual_eval(x: &AtomicRV, alpha: f64) -> Result<ConjugateReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("ES level must lie in (0, 1], got {alpha}")));
    }
    let n = x.len();
    let cap = 1.0 / alpha;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x.values()[a].total_cmp(&x.values()[b]).then(a.cmp(&b)));
    let mut z = vec![0.0; n];
    let mut remaining = n as f64;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = cap.min(remaining);
        z[i] = take;
        remaining -= take;
    }
    let value = -pairing(&z, x.values());
    Ok(ConjugateReport {
        value,
        witness: Witness::Density(Density { z, cap: Some(cap) }),
        method: Method::Greedy,
        lower_bound: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiconjugateReport {
    #[serde(serialize_with = "serialize_extended")]
    pub lower: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub primal: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub gap: f64,
    /// Index of the density attaining `lower`, if any term was finite.
    pub best: Option<usize>,
}

/// `max_Q (E_Q[-X] - rho*(-dQ/dP))` over the given densities, a lower bound
/// of `rho(X)`. `X` is always offered to the conjugate search, which keeps
/// every term below `rho(X)` even when the conjugate is only bounded below.
pub fn biconjugate_check(rho: &RiskMeasure, x: &AtomicRV, densities: &[Density]) -> Result<BiconjugateReport> {
    let primal = rho.eval(x)?;
    let search = SearchOptions::new(vec![x.clone()]);
    let mut lower = f64::NEG_INFINITY;
    let mut best = None;
    for (k, d) in densities.iter().enumerate() {
        let gain = -d.expect(x)?;
        let z = AtomicRV::new(d.values().iter().map(|v| -v).collect())?;
        let conj = fenchel_conjugate(rho, &z, &search)?;
        let term = gain - conj.value;
        if term > lower {
            lower = term;
            best = Some(k);
        }
    }
    Ok(BiconjugateReport {
        lower,
        primal,
        gap: primal - lower,
        best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaEstimate {
    /// Lower bound of `sup { int ES dmu : rho(X) <= 0 }`.
    pub value: f64,
    pub accepted: usize,
    pub best_sample: usize,
}

/// Lower bound of the Kusuoka penalty of `mu` from accepted samples.
pub fn gamma_from_rho(rho: &RiskMeasure, mu: &KusuokaCandidate, samples: &[AtomicRV]) -> Result<GammaEstimate> {
    let mut best: Option<(f64, usize)> = None;
    let mut accepted = 0;
    for (k, x) in samples.iter().enumerate() {
        if rho.eval(x)? > 0.0 {
            continue;
        }
        accepted += 1;
        let v = mu.mixture(x)?;
        if best.map_or(true, |(b, _)| v > b) {
            best = Some((v, k));
        }
    }
    let (value, best_sample) = best.ok_or(Error::EmptyAcceptance)?;
    Ok(GammaEstimate {
        value,
        accepted,
        best_sample,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionStep {
    pub depth: usize,
    #[serde(serialize_with = "serialize_extended")]
    pub value: f64,
    pub blocks: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionTrace {
    pub atoms: usize,
    pub steps: Vec<ExtensionStep>,
    #[serde(serialize_with = "serialize_extended_vec")]
    pub values: Vec<f64>,
    pub stabilized: bool,
}

impl ExtensionTrace {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("trace is nonempty")
    }
}

/// `rho(E[X | pi_n])` along the tail-threshold partition sequence of `X`.
///
/// `X` is discretized on `2^depth` equally likely levels (each atom carries
/// the mean of `X` over its level range) and each partition is snapped to
/// that grid, so the conditional expectations are exact on the discretized
/// law and nested along the sequence.
pub fn extend_by_condexp(
    rho: &RiskMeasure,
    x: &QuantileRV,
    phi: &OrliczFunction,
    depth: usize,
) -> Result<ExtensionTrace> {
    if depth == 0 || depth > 24 {
        return Err(Error::InvalidParameter(format!("depth must lie in 1..=24, got {depth}")));
    }
    luxemburg_norm_quantile(x, phi)?;
    let seq = cecon_sequence(x, phi, depth)?;
    let atoms = 1usize << depth;
    let grid = LevelGrid::new(x, atoms)?;
    let xd = grid.to_atomic()?;
    let mut steps = Vec::with_capacity(depth);
    for lp in &seq.levels {
        let pi = grid.snapped_partition(lp)?;
        let value = rho.eval(&cond_exp(&xd, &pi)?)?;
        steps.push(ExtensionStep {
            depth: lp.n,
            value,
            blocks: pi.num_blocks(),
            threshold: lp.threshold,
        });
    }
    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
    let stabilized = match values.as_slice() {
        [.., a, b] => (b - a).abs() <= (1e-3 * b.abs()).max(1e-6),
        _ => false,
    };
    Ok(ExtensionTrace {
        atoms,
        steps,
        values,
        stabilized,
    })
}

/// ES through its density representation, for cross-checks.
pub fn es_primal_dual_gap(x: &AtomicRV, alpha: f64) -> Result<f64> {
    Ok((es(x, alpha)? - es_dual_eval(x, alpha)?.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{KusuokaSpec, Properties};

    fn fixture() -> AtomicRV {
        AtomicRV::new(vec![-10.0, -5.0, 0.0, 5.0]).unwrap()
    }

    #[test]
    fn density_validation() {
        assert!(Density::new(vec![2.0, 2.0, 0.0, 0.0], Some(2.0)).is_ok());
        assert!(Density::new(vec![2.0, 1.0], None).is_err());
        assert!(Density::new(vec![-1.0, 3.0], None).is_err());
        assert!(Density::new(vec![4.0, 0.0, 0.0, 0.0], Some(2.0)).is_err());
    }

    #[test]
    fn greedy_dual_examples() {
        let x = fixture();
        let r = es_dual_eval(&x, 0.5).unwrap();
        assert_eq!(r.value, 7.5);
        assert_eq!(r.witness, Witness::Density(Density::new(vec![2.0, 2.0, 0.0, 0.0], Some(2.0)).unwrap()));
        assert_eq!(es_dual_eval(&x, 1.0).unwrap().value, 2.5);
        assert_eq!(es_dual_eval(&x, 0.25).unwrap().value, 10.0);
        assert!((es_dual_eval(&x, 0.375).unwrap().value - es(&x, 0.375).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn es_conjugate_closed_form() {
        let es1 = RiskMeasure::es(1.0).unwrap();
        let z = AtomicRV::constant(-1.0, 4).unwrap();
        let r = fenchel_conjugate(&es1, &z, &SearchOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.method, Method::ClosedForm);

        let es_half = RiskMeasure::es(0.5).unwrap();
        let z = AtomicRV::new(vec![-3.0, -1.0, 0.0, 0.0]).unwrap();
        let r = fenchel_conjugate(&es_half, &z, &SearchOptions::default()).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        let Witness::Variable(d) = &r.witness else { panic!() };
        // the ray strictly gains: E[Z d] - ES(d) > 0
        assert!(pairing(z.values(), d.values()) - es(d, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn search_conjugates() {
        let zero = RiskMeasure::table("zero", |_| Ok(0.0), Properties::NONE);
        let r = fenchel_conjugate(&zero, &AtomicRV::constant(0.0, 3).unwrap(), &SearchOptions::new(vec![])).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.method, Method::Search);

        // Kusuoka with one ES(0.5) candidate: conjugate of a feasible -Z is 0,
        // and divergent off the density set
        let k = RiskMeasure::kusuoka(KusuokaSpec::new(vec![KusuokaCandidate::dirac(0.5, 0.0).unwrap()]).unwrap());
        let feasible = AtomicRV::new(vec![-2.0, -1.0, -1.0, 0.0]).unwrap();
        let r = fenchel_conjugate(&k, &feasible, &SearchOptions::new(vec![])).unwrap();
        assert!(r.value.abs() < 1e-9 && r.value >= 0.0, "{r:?}");
        let infeasible = AtomicRV::new(vec![-4.0, 0.0, 0.0, 0.0]).unwrap();
        let r = fenchel_conjugate(&k, &infeasible, &SearchOptions::new(vec![])).unwrap();
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn biconjugate_examples() {
        let x = fixture();
        let es_half = RiskMeasure::es(0.5).unwrap();
        let greedy = match es_dual_eval(&x, 0.5).unwrap().witness {
            Witness::Density(d) => d,
            _ => unreachable!(),
        };
        let r = biconjugate_check(&es_half, &x, &[Density::uniform(4).unwrap(), greedy]).unwrap();
        assert!(r.gap.abs() <= 1e-9, "{r:?}");
        let es1 = RiskMeasure::es(1.0).unwrap();
        let r = biconjugate_check(&es1, &x, &[Density::uniform(4).unwrap()]).unwrap();
        assert_eq!(r.lower, r.primal);

        let var = RiskMeasure::var(0.25).unwrap();
        let d = Density::new(vec![0.5, 1.5, 1.0, 1.0], None).unwrap();
        let r = biconjugate_check(&var, &x, &[d]).unwrap();
        assert!(r.lower <= r.primal + 1e-8);
    }

    #[test]
    fn gamma_examples() {
        let es_half = RiskMeasure::es(0.5).unwrap();
        let mu = KusuokaCandidate::dirac(0.5, 0.0).unwrap();
        let g = gamma_from_rho(&es_half, &mu, &[AtomicRV::constant(0.0, 4).unwrap(), fixture()]).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.accepted, 1);
        assert!(matches!(
            gamma_from_rho(&es_half, &mu, &[fixture()]),
            Err(Error::EmptyAcceptance)
        ));
        let tail = KusuokaCandidate::dirac(0.25, 0.0).unwrap();
        let crafted = AtomicRV::new(vec![-2.0, 2.0, 2.0, 2.0]).unwrap();
        let g = gamma_from_rho(&es_half, &tail, &[crafted]).unwrap();
        assert!(g.value > 0.0);
    }

    #[test]
    fn extension_of_atomic_law_reaches_value() {
        let x = fixture();
        let es_half = RiskMeasure::es(0.5).unwrap();
        let phi = OrliczFunction::power(2.0).unwrap();
        let trace = extend_by_condexp(&es_half, &x.to_quantile(), &phi, 5).unwrap();
        assert!((trace.last() - 7.5).abs() < 1e-9, "{trace:?}");
        assert!(trace.stabilized);
    }
}
