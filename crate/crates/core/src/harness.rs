//! Falsifiable probes: risk-measure axioms, the Fatou property, norm lower
//! semicontinuity, dilatation monotonicity, conditional-expectation decay
//! along refinement chains, and the order blow-up statistic.
//!
//! Every probe is a pure function of its inputs and seed. Trials may run in
//! parallel; their results are collected in trial order, so reports are
//! bit-reproducible regardless of thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::distributions::{dominated_sequence, AtomicRV, QuantileRV, Scheme};
use crate::error::{Error, Result};
use crate::io::{serialize_extended, write_values, KusuokaRow};
use crate::orlicz::{heart_membership_probe, luxemburg_norm, HeartReport, OrliczFunction};
use crate::partitions::{cond_exp, Partition};
use crate::quadrature::Level;
use crate::risk::{Properties, RiskMeasure, HEART_LAMBDAS};

/// Relative tolerance of the axiom checks.
pub const AXIOM_RTOL: f64 = 1e-9;
/// Slack of the Fatou inequality.
pub const FATOU_TOL: f64 = 1e-8;
/// Slack of the dilatation inequality.
pub const DILATATION_TOL: f64 = 1e-10;

/// Grid of mixing weights for the convexity check.
const CONVEX_GRID: usize = 11;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub property: String,
    pub trial: usize,
    /// First 16 hex digits of the SHA-256 of the offending input.
    pub input_digest: String,
    #[serde(serialize_with = "serialize_extended")]
    pub gap: f64,
    /// The offending input, kept so that the failure can be replayed.
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Extras(pub BTreeMap<String, f64>);

impl Serialize for Extras {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        struct Ext(f64);
        impl Serialize for Ext {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                serialize_extended(&self.0, s)
            }
        }
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, &Ext(*v))?;
        }
        m.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub probe_name: String,
    pub seed: u64,
    pub trials: usize,
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub extras: Extras,
}

impl ProbeReport {
    fn new(probe_name: &str, seed: u64, trials: usize, violations: Vec<Violation>, extras: Extras) -> Self {
        ProbeReport {
            probe_name: probe_name.to_string(),
            seed,
            trials,
            passed: violations.is_empty(),
            violations,
            extras,
        }
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.0.get(key).copied()
    }

    /// Writes each violation's witness as `<probe>_<digest>.csv` under `dir`.
    pub fn archive_witnesses(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.violations
            .iter()
            .map(|v| {
                let path = dir.join(format!("{}_{}.csv", self.probe_name, v.input_digest));
                write_values(&path, &AtomicRV::new(v.witness.clone())?)?;
                Ok(path)
            })
            .collect()
    }
}

pub fn digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn violation(property: &str, trial: usize, input: &AtomicRV, gap: f64) -> Violation {
    Violation {
        property: property.to_string(),
        trial,
        input_digest: digest(input.values()),
        gap,
        witness: input.values().to_vec(),
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn tol(scale: f64) -> f64 {
    AXIOM_RTOL * scale.abs().max(1.0)
}

fn check_trial(
    rho: &RiskMeasure,
    check: Properties,
    population: &[AtomicRV],
    seed: u64,
    trial: usize,
) -> Result<Vec<Violation>> {
    let mut rng = trial_rng(seed, trial);
    let x = &population[rng.gen_range(0..population.len())];
    let n = x.len();
    let peers: Vec<&AtomicRV> = population.iter().filter(|p| p.len() == n).collect();
    let y = {
        let pick = peers[rng.gen_range(0..peers.len())];
        if std::ptr::eq(pick, x) {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let shuffled = x.permuted(&order)?;
            shuffled.values().iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<f64>>()
        } else {
            pick.values().to_vec()
        }
    };
    let y = AtomicRV::new(y)?;
    let rx = rho.eval(x)?;
    let mut out = Vec::new();

    if check.monotone {
        let bump: Vec<f64> = x.values().iter().map(|v| v + rng.gen_range(0.0..2.0)).collect();
        let upper = AtomicRV::new(bump)?;
        let gap = rho.eval(&upper)? - rx;
        if gap > tol(rx) {
            out.push(violation("monotone", trial, x, gap));
        }
    }
    if check.cash_additive {
        let m: f64 = rng.gen_range(-10.0..10.0);
        let shifted = rho.eval(&x.shift(m))?;
        let gap = (shifted - (rx - m)).abs();
        if !(gap <= tol(rx.abs() + m.abs())) {
            out.push(violation("cash_additive", trial, x, gap));
        }
    }
    if check.convex {
        let ry = rho.eval(&y)?;
        let mut worst: f64 = f64::NEG_INFINITY;
        for k in 0..CONVEX_GRID {
            let lambda = k as f64 / (CONVEX_GRID - 1) as f64;
            let mixed = rho.eval(&x.mix(&y, lambda)?)?;
            let gap = mixed - (lambda * rx + (1.0 - lambda) * ry);
            if gap > tol(rx.abs() + ry.abs()) {
                worst = worst.max(gap);
            }
        }
        if worst > f64::NEG_INFINITY {
            let pair: Vec<f64> = x.values().iter().chain(y.values()).copied().collect();
            out.push(violation("convex", trial, &AtomicRV::new(pair)?, worst));
        }
    }
    if check.positively_homogeneous {
        let c: f64 = rng.gen_range(0.01..10.0);
        let gap = (rho.eval(&x.scale(c))? - c * rx).abs();
        if !(gap <= tol(c * rx)) {
            out.push(violation("positively_homogeneous", trial, x, gap));
        }
    }
    if check.law_invariant {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let gap = (rho.eval(&x.permuted(&order)?)? - rx).abs();
        if !(gap <= tol(rx)) {
            out.push(violation("law_invariant", trial, x, gap));
        }
    }
    Ok(out)
}

/// Tests the properties `rho` declares on `trials` randomized instances
/// drawn from `population`.
pub fn check_axioms(rho: &RiskMeasure, population: &[AtomicRV], trials: usize, seed: u64) -> Result<ProbeReport> {
    check_properties(rho, rho.properties(), population, trials, seed)
}

/// As [`check_axioms`], but for an explicitly requested property set.
pub fn check_properties(
    rho: &RiskMeasure,
    check: Properties,
    population: &[AtomicRV],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if population.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| check_trial(rho, check, population, seed, t))
        .collect::<Result<Vec<Vec<Violation>>>>()?;
    let violations: Vec<Violation> = per_trial.into_iter().flatten().collect();
    let mut extras = BTreeMap::new();
    for (name, on) in [
        ("monotone", check.monotone),
        ("cash_additive", check.cash_additive),
        ("convex", check.convex),
        ("positively_homogeneous", check.positively_homogeneous),
        ("law_invariant", check.law_invariant),
    ] {
        if on {
            let count = violations.iter().filter(|v| v.property == name).count();
            extras.insert(format!("violations.{name}"), count as f64);
        }
    }
    Ok(ProbeReport::new("axioms", seed, trials, violations, Extras(extras)))
}

/// `rho(X) <= liminf rho(X_k)` along dominated sequences, with the liminf
/// estimated by the minimum over the last quarter of each sequence
/// (see [`is_sup_lipschitz`] for the residual correction).
pub fn fatou_probe(
    rho: &RiskMeasure,
    xs: &[AtomicRV],
    schemes: &[Scheme],
    count: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if xs.is_empty() || schemes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let jobs: Vec<(usize, &AtomicRV, Scheme)> = xs
        .iter()
        .flat_map(|x| schemes.iter().map(move |&s| (x, s)))
        .enumerate()
        .map(|(i, (x, s))| (i, x, s))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, x, scheme)| -> Result<(f64, Option<Violation>)> {
            let seq = dominated_sequence(x, scheme, count, seed.wrapping_add(i as u64))?;
            let limit = rho.eval(x)?;
            let lipschitz = is_sup_lipschitz(rho);
            let values = seq
                .iter()
                .map(|xk| Ok(rho.eval(xk)? + if lipschitz { sup_distance(xk, x) } else { 0.0 }))
                .collect::<Result<Vec<f64>>>()?;
            let liminf = tail_min(&values);
            let gap = limit - liminf;
            let v = (gap > FATOU_TOL).then(|| violation(&format!("fatou/{scheme}"), i, x, gap));
            Ok((gap, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let violations = results.into_iter().filter_map(|r| r.1).collect();
    let mut extras = BTreeMap::new();
    extras.insert("worst_gap".to_string(), worst);
    Ok(ProbeReport::new("fatou", seed, jobs.len(), violations, Extras(extras)))
}

/// Monotone cash-additive measures satisfy `|rho(X) - rho(Y)| <= sup|X - Y|`,
/// so for them the residual distance of a finite sequence is added back
/// before taking the tail minimum; otherwise a sequence that has not yet
/// reached its limit would read as a violation.
fn is_sup_lipschitz(rho: &RiskMeasure) -> bool {
    let p = rho.properties();
    p.monotone && p.cash_additive
}

fn sup_distance(a: &AtomicRV, b: &AtomicRV) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

fn tail_min(values: &[f64]) -> f64 {
    let start = values.len() - values.len().div_ceil(4);
    values[start..].iter().copied().fold(f64::INFINITY, f64::min)
}

/// The dominated family `X_n = 1 - min(Y, n)`, `n = 1..=depth`, with
/// `Y ~ Exp(1)` and its limit `1 - Y`; `|X_n| <= 1 + Y`.
pub fn exp_truncation_family(depth: usize) -> Result<(Vec<QuantileRV>, QuantileRV)> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let y = QuantileRV::exponential(1.0)?;
    let seq = (1..=depth)
        .map(|n| Ok(y.truncate_min(n as f64)?.affine(1.0, -1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok((seq, y.affine(1.0, -1.0)))
}

/// Fatou check on a quantile-backed sequence: `rho(limit) <= liminf rho(X_n)`.
pub fn fatou_probe_quantile(
    rho: &RiskMeasure,
    sequence: &[QuantileRV],
    limit: &QuantileRV,
    seed: u64,
) -> Result<ProbeReport> {
    if sequence.is_empty() {
        return Err(Error::EmptyInput);
    }
    let values = sequence
        .par_iter()
        .map(|x| rho.eval_quantile(x))
        .collect::<Result<Vec<f64>>>()?;
    let at_limit = rho.eval_quantile(limit)?;
    let liminf = tail_min(&values);
    let gap = at_limit - liminf;
    let mut extras = BTreeMap::new();
    extras.insert("liminf".to_string(), liminf);
    extras.insert("limit_value".to_string(), at_limit);
    extras.insert("last_value".to_string(), *values.last().expect("nonempty"));
    let mut violations = Vec::new();
    if gap > FATOU_TOL {
        let samples = AtomicRV::new(limit.sample_levels(64).into_iter().map(|v| v.max(-1e300)).collect())?;
        violations.push(violation("fatou", sequence.len(), &samples, gap));
    }
    Ok(ProbeReport::new("fatou", seed, sequence.len(), violations, Extras(extras)))
}

/// Norm lower semicontinuity along `X + 2^-k`, `k = 1..=count`, whose
/// distance to `X` is `2^-k ||1||_phi`.
pub fn norm_lsc_probe(
    rho: &RiskMeasure,
    xs: &[QuantileRV],
    phi: &OrliczFunction,
    count: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if xs.is_empty() || count == 0 {
        return Err(Error::EmptyInput);
    }
    let unit = luxemburg_norm(&AtomicRV::constant(1.0, 1)?, phi)?;
    let results = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<(f64, Option<Violation>)> {
            let limit = rho.eval_quantile(x)?;
            let lipschitz = is_sup_lipschitz(rho);
            let values = (1..=count)
                .map(|k| {
                    let eps = (-(k as f64)).exp2();
                    Ok(rho.eval_quantile(&x.shift(eps))? + if lipschitz { eps } else { 0.0 })
                })
                .collect::<Result<Vec<f64>>>()?;
            let liminf = tail_min(&values);
            let gap = if limit == liminf { 0.0 } else { limit - liminf };
            let v = (gap > FATOU_TOL).then(|| {
                let samples = AtomicRV::new(x.sample_levels(64)).unwrap_or_else(|_| AtomicRV::constant(0.0, 1).expect("one atom"));
                violation("norm_lsc", i, &samples, gap)
            });
            Ok((gap, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut extras = BTreeMap::new();
    extras.insert("final_distance".to_string(), (-(count as f64)).exp2() * unit);
    let violations = results.into_iter().filter_map(|r| r.1).collect();
    Ok(ProbeReport::new("norm_lsc", seed, xs.len(), violations, Extras(extras)))
}

/// `rho(E[X | pi]) <= rho(X)` for each partition.
pub fn dilatation_probe(rho: &RiskMeasure, x: &AtomicRV, partitions: &[Partition], seed: u64) -> Result<ProbeReport> {
    let rx = rho.eval(x)?;
    let results = partitions
        .par_iter()
        .enumerate()
        .map(|(i, pi)| -> Result<Option<Violation>> {
            let smoothed = cond_exp(x, pi)?;
            let gap = rho.eval(&smoothed)? - rx;
            Ok((gap > DILATATION_TOL).then(|| violation("dilatation", i, &smoothed, gap)))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = results.into_iter().flatten().collect();
    let mut extras = BTreeMap::new();
    extras.insert("rho_x".to_string(), rx);
    Ok(ProbeReport::new("dilatation", seed, partitions.len(), violations, Extras(extras)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoexReport {
    pub values: Vec<f64>,
    /// Whether the sequence happened to be nonincreasing; refinement alone
    /// does not guarantee it.
    pub nonincreasing: bool,
}

/// `E[|E[X | pi_k] - X| Y]` along a refinement chain ending at singletons.
pub fn coex_probe(x: &AtomicRV, y: &AtomicRV, chain: &[Partition]) -> Result<CoexReport> {
    x.check_same_len(y)?;
    if let Some(i) = y.values().iter().position(|v| *v < 0.0) {
        return Err(Error::InvalidParameter(format!("weight is negative at index {i}")));
    }
    let last = chain.last().ok_or_else(|| Error::InvalidChain("chain is empty".into()))?;
    if !last.is_singletons() {
        return Err(Error::InvalidChain("chain must end at the singleton partition".into()));
    }
    for (k, w) in chain.windows(2).enumerate() {
        if !w[1].refines(&w[0]) {
            return Err(Error::InvalidChain(format!("member {} does not refine member {k}", k + 1)));
        }
    }
    let values = chain
        .iter()
        .map(|pi| {
            let c = cond_exp(x, pi)?;
            let n = x.len() as f64;
            Ok(c.values()
                .iter()
                .zip(x.values())
                .zip(y.values())
                .map(|((a, b), w)| (a - b).abs() * w)
                .sum::<f64>()
                / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    let nonincreasing = values.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(CoexReport { values, nonincreasing })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupReport {
    pub statistic: f64,
    pub k: f64,
    /// Probability of the tail part `A_1 ∩ {X > k}` of each mixed block.
    pub tail_mass: f64,
    /// Probability of the bulk part `B_i`.
    pub bulk_mass: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Largest block mean over random blocks `(A_1 ∩ {X > k}) ∪ B_i`, where `A_1`
/// is the top cell of the equal-probability partition into `base_levels`
/// cells and `B_i` is a random level interval outside `A_1` with half the
/// mass of the tail part. If `X` never exceeds `k` on `A_1`, the whole of
/// `A_1` is used.
pub fn order_blowup_probe(x: &QuantileRV, base_levels: usize, k: f64, trials: usize, seed: u64) -> Result<BlowupReport> {
    if trials == 0 || base_levels < 2 {
        return Err(Error::InvalidParameter("need trials >= 1 and at least two base cells".into()));
    }
    let top = Level::from_complement(1.0 / base_levels as f64);
    let cut = x.first_level_at_least(k);
    let start = if cut > top && cut < Level::ONE { cut } else { top };
    let tail_mass = start.complement();
    let tail_integral = x.partial_integral(start, Level::ONE)?;
    let bulk_mass = 0.5 * tail_mass;
    let room = top.p() - bulk_mass;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut statistic = f64::NEG_INFINITY;
    for _ in 0..trials {
        let u: f64 = rng.gen_range(0.0..=room.max(0.0));
        let b = x.partial_integral(Level::new(u), Level::new(u + bulk_mass))?;
        statistic = statistic.max((tail_integral + b) / (tail_mass + bulk_mass));
    }
    Ok(BlowupReport {
        statistic,
        k,
        tail_mass,
        bulk_mass,
        trials,
        seed,
    })
}

/// Heart verdict on the limit of the exponential truncation family.
pub fn counterexample_limit_heart(phi: &OrliczFunction) -> Result<HeartReport> {
    let (_, limit) = exp_truncation_family(1)?;
    let m = -limit.expectation()?;
    heart_membership_probe(&limit.shift(m).negative_part(), phi, &HEART_LAMBDAS)
}

/// Random population of `count` atomic variables with `min_n..=max_n` atoms.
pub fn random_population(count: usize, min_n: usize, max_n: usize, seed: u64) -> Result<Vec<AtomicRV>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(min_n..=max_n);
            let scale: f64 = rng.gen_range(0.1..20.0);
            AtomicRV::new((0..n).map(|_| rng.gen_range(-scale..scale)).collect())
        })
        .collect()
}

/// Random partition of `n` atoms into at most `max_blocks` nonempty blocks.
pub fn random_partition(n: usize, max_blocks: usize, rng: &mut impl Rng) -> Result<Partition> {
    let blocks = rng.gen_range(1..=max_blocks.clamp(1, n));
    let mut labels: Vec<u64> = (0..n).map(|i| (i % blocks) as u64).collect();
    labels.shuffle(rng);
    Partition::from_labels(&labels)
}

/// `count` seeded random partitions of `n` atoms.
pub fn random_partitions(n: usize, count: usize, max_blocks: usize, seed: u64) -> Result<Vec<Partition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_partition(n, max_blocks, &mut rng)).collect()
}

/// A Kusuoka row set for quick construction in probes and tests.
pub fn kusuoka_rows(rows: &[(&str, f64, f64, f64)]) -> Vec<KusuokaRow> {
    rows.iter()
        .map(|&(id, alpha, weight, gamma)| KusuokaRow {
            candidate_id: id.to_string(),
            alpha,
            weight,
            gamma,
        })
        .collect()
}
