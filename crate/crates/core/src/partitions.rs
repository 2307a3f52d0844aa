//! Finite partitions of the atom index set, conditional expectations, and
//! the refining partition sequences used to approximate unbounded laws.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::distributions::{equal_in_law, AtomicRV, QuantileRV};
use crate::error::{Error, Result};
use crate::orlicz::{luxemburg_norm_quantile, OrliczFunction};
use crate::quadrature::{integrate, Integral, Level};

/// A partition of `{0, .., n-1}` into nonempty blocks.
///
/// Blocks are stored sorted, and ordered by their smallest index, so two
/// partitions with the same blocks compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("atom count must be positive".into()));
        }
        let mut seen = vec![false; n];
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("index {i} out of range 0..{n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {i} is not covered")));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition { n, blocks })
    }

    pub fn trivial(n: usize) -> Result<Self> {
        Partition::new(n, vec![(0..n).collect()])
    }

    pub fn singletons(n: usize) -> Result<Self> {
        Partition::new(n, (0..n).map(|i| vec![i]).collect())
    }

    /// Blocks of consecutive indices with the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let blocks = sizes
            .iter()
            .map(|&s| {
                let b: Vec<usize> = (start..start + s).collect();
                start += s;
                b
            })
            .collect();
        Partition::new(start, blocks)
    }

    /// One block per distinct label; labels need not be contiguous.
    pub fn from_labels(labels: &[u64]) -> Result<Self> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        Partition::new(labels.len(), groups.into_values().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every atom.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (j, b) in self.blocks.iter().enumerate() {
            for &i in b {
                labels[i] = j;
            }
        }
        labels
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.n != coarser.n {
            return false;
        }
        let outer = coarser.labels();
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&i| outer[i] == outer[b[0]]))
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.len() == self.n
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: n,
            });
        }
        Ok(())
    }
}

/// `E[X | sigma(pi)]`: every atom replaced by the mean of its block.
pub fn cond_exp(x: &AtomicRV, pi: &Partition) -> Result<AtomicRV> {
    pi.check_len(x.len())?;
    let v = x.values();
    let mut out = vec![0.0; v.len()];
    for b in pi.blocks() {
        let mean = b.iter().map(|&i| v[i]).sum::<f64>() / b.len() as f64;
        for &i in b {
            out[i] = mean;
        }
    }
    AtomicRV::new(out)
}

/// Coarsest common refinement: nonempty pairwise block intersections.
pub fn refine(a: &Partition, b: &Partition) -> Result<Partition> {
    b.check_len(a.n())?;
    let (la, lb) = (a.labels(), b.labels());
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..a.n() {
        groups.entry((la[i], lb[i])).or_default().push(i);
    }
    Partition::new(a.n(), groups.into_values().collect())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cyclic rearrangements of `x` within each block of `pi`.
///
/// Returns `m = lcm(block sizes)` copies; copy `j` moves the value at block
/// position `(r + j) mod s` to position `r`. Every copy has the law of `x`
/// and their average is exactly `E[X | pi]`.
pub fn rearrangement_average(x: &AtomicRV, pi: &Partition) -> Result<Vec<AtomicRV>> {
    pi.check_len(x.len())?;
    let m = pi
        .blocks()
        .iter()
        .fold(1usize, |acc, b| acc / gcd(acc, b.len()) * b.len());
    let v = x.values();
    (0..m)
        .map(|j| {
            let mut out = vec![0.0; v.len()];
            for b in pi.blocks() {
                let s = b.len();
                for (r, &i) in b.iter().enumerate() {
                    out[i] = v[b[(r + j) % s]];
                }
            }
            AtomicRV::new(out)
        })
        .collect()
}

/// Entrywise mean of equally sized atomic variables.
pub fn average(xs: &[AtomicRV]) -> Result<AtomicRV> {
    let first = xs.first().ok_or(Error::EmptyInput)?;
    let mut acc = vec![0.0; first.len()];
    for x in xs {
        first.check_same_len(x)?;
        for (a, v) in acc.iter_mut().zip(x.values()) {
            *a += v;
        }
    }
    let k = xs.len() as f64;
    AtomicRV::new(acc.into_iter().map(|a| a / k).collect())
}

/// Checks the two defining properties of [`rearrangement_average`].
pub fn verify_rearrangements(x: &AtomicRV, pi: &Partition, copies: &[AtomicRV]) -> Result<bool> {
    for c in copies {
        if !equal_in_law(x, c)? {
            return Ok(false);
        }
    }
    let avg = average(copies)?;
    let target = cond_exp(x, pi)?;
    Ok(avg
        .values()
        .iter()
        .zip(target.values())
        .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    LowerTail,
    Bulk,
    UpperTail,
}

/// A block of a level partition: the levels `(lo, hi)` of the quantile axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelCell {
    #[serde(serialize_with = "ser_level")]
    pub lo: Level,
    #[serde(serialize_with = "ser_level")]
    pub hi: Level,
    pub kind: CellKind,
}

fn ser_level<S: serde::Serializer>(l: &Level, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(l.p())
}

impl LevelCell {
    pub fn mass(&self) -> f64 {
        if self.lo.p() > 0.5 {
            self.lo.complement() - self.hi.complement()
        } else {
            self.hi.p() - self.lo.p()
        }
    }
}

/// One member of the tail-threshold sequence: the tail `{|X| >= threshold}`
/// split into its lower and upper parts, plus bulk cells on which the
/// oscillation of `X` is at most `2^-n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelPartition {
    pub n: usize,
    pub threshold: f64,
    pub tail_mass: f64,
    pub oscillation: f64,
    pub cells: Vec<LevelCell>,
}

impl LevelPartition {
    /// Every cell boundary, in increasing order.
    pub fn boundaries(&self) -> Vec<Level> {
        let mut out: Vec<Level> = self.cells.iter().skip(1).map(|c| c.lo).collect();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CeconSequence {
    /// Factor `s` with `E[phi(2 s |X|)] < inf`; thresholds are in units of `X`.
    pub scale: f64,
    pub levels: Vec<LevelPartition>,
}

/// The refining sequence `pi_1, .., pi_depth` along which `E[X | pi_n]`
/// order-converges to `X`.
///
/// For each `n` the threshold `k_n` is the smallest multiple of `2^-n` with
/// `E[phi(2 s|X|) 1{|X| >= k_n}] <= 2^-n`, kept nondecreasing in `n`; the rest
/// of the axis is cut at the levels where `X` crosses multiples of `2^-n`.
/// Cells of `pi_{n+1}` therefore refine those of `pi_n`.
pub fn cecon_sequence(x: &QuantileRV, phi: &OrliczFunction, depth: usize) -> Result<CeconSequence> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let cut = x.zero_cut();
    let breaks = [x.breakpoints(), &cut].concat();
    let modular_at = |scale: f64| {
        integrate(
            x.grid(),
            &|l: Level| phi.phi(2.0 * scale * x.eval(l).abs()),
            Level::ZERO,
            Level::ONE,
            &breaks,
        )
    };
    let scale = match modular_at(1.0) {
        Integral::Finite(_) => 1.0,
        Integral::Divergent => {
            let norm = luxemburg_norm_quantile(x, phi)?;
            if norm == 0.0 {
                1.0
            } else {
                0.5 / norm
            }
        }
    };

    let tail_mass = |k: f64| -> Result<f64> {
        let lower = x.last_level_at_most(-k);
        let upper = x.first_level_at_least(k);
        let f = |l: Level| phi.phi(2.0 * scale * x.eval(l).abs());
        let mut total = 0.0;
        for (lo, hi) in [(Level::ZERO, lower), (upper, Level::ONE)] {
            match integrate(x.grid(), &f, lo, hi, &breaks) {
                Integral::Finite(v) => total += v,
                Integral::Divergent => return Err(Error::NotInOrliczSpace),
            }
        }
        Ok(total)
    };

    let mut levels = Vec::with_capacity(depth);
    let mut prev_threshold: f64 = 0.0;
    for n in 1..=depth {
        let step = (-(n as f64)).exp2();
        let target = step;
        let mut hi_units: u64 = ((prev_threshold / step).ceil() as u64).max(1);
        while tail_mass(hi_units as f64 * step)? > target {
            hi_units = hi_units.checked_mul(2).ok_or(Error::NotInOrliczSpace)?;
            if hi_units as f64 * step > 1e300 {
                return Err(Error::NotInOrliczSpace);
            }
        }
        let mut lo_units = (prev_threshold / step).ceil() as u64;
        if lo_units < hi_units && tail_mass(lo_units as f64 * step)? <= target {
            hi_units = lo_units;
        }
        while hi_units - lo_units > 1 {
            let mid = lo_units + (hi_units - lo_units) / 2;
            if tail_mass(mid as f64 * step)? <= target {
                hi_units = mid;
            } else {
                lo_units = mid;
            }
        }
        let threshold = (hi_units as f64 * step).max(prev_threshold);
        prev_threshold = threshold;
        let mass = tail_mass(threshold)?;
        levels.push(LevelPartition {
            n,
            threshold,
            tail_mass: mass,
            oscillation: step,
            cells: level_cells(x, threshold, step),
        });
    }
    Ok(CeconSequence { scale, levels })
}

fn level_cells(x: &QuantileRV, threshold: f64, step: f64) -> Vec<LevelCell> {
    // the same level search as the bulk cuts, so that the lower boundary of
    // one member reappears verbatim as a bulk cut of the next
    let a = x.first_level_at_least(-threshold);
    let b = x.first_level_at_least(threshold);
    let mut cells = Vec::new();
    if a > Level::ZERO {
        cells.push(LevelCell {
            lo: Level::ZERO,
            hi: a,
            kind: CellKind::LowerTail,
        });
    }
    if a < b {
        // bulk values lie in (-threshold, threshold); cut where X crosses j * step
        let qa = x.eval(a).max(-threshold);
        let qb = x.eval(b).min(threshold);
        let j0 = (qa / step).floor() as i64 + 1;
        let j1 = (qb / step).ceil() as i64 - 1;
        let mut lo = a;
        for j in j0..=j1.max(j0 - 1) {
            let cut = x.first_level_at_least(j as f64 * step);
            if cut > lo && cut < b {
                cells.push(LevelCell {
                    lo,
                    hi: cut,
                    kind: CellKind::Bulk,
                });
                lo = cut;
            }
        }
        cells.push(LevelCell {
            lo,
            hi: b,
            kind: CellKind::Bulk,
        });
    }
    if b < Level::ONE {
        cells.push(LevelCell {
            lo: b,
            hi: Level::ONE,
            kind: CellKind::UpperTail,
        });
    }
    cells
}

/// Uniform `2^depth`-atom discretization used to evaluate risk measures
/// along a level-partition sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGrid {
    atoms: usize,
    means: Vec<f64>,
}

impl LevelGrid {
    /// Atom `j` carries the mean of `X` over the levels `[j/N, (j+1)/N)`.
    pub fn new(x: &QuantileRV, atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::InvalidParameter("grid needs at least one atom".into()));
        }
        let n = atoms as f64;
        let level = |j: usize| {
            if j == 0 {
                Level::ZERO
            } else if j == atoms {
                Level::ONE
            } else if 2 * j <= atoms {
                Level::new(j as f64 / n)
            } else {
                Level::from_complement((atoms - j) as f64 / n)
            }
        };
        let means = (0..atoms)
            .map(|j| Ok(x.partial_integral(level(j), level(j + 1))? * n))
            .collect::<Result<Vec<f64>>>()?;
        Ok(LevelGrid { atoms, means })
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn to_atomic(&self) -> Result<AtomicRV> {
        AtomicRV::new(self.means.clone())
    }

    /// Snaps a level to the nearest grid boundary index.
    pub fn snap(&self, l: Level) -> usize {
        let n = self.atoms as f64;
        if l.p() <= 0.5 {
            (l.p() * n).round() as usize
        } else {
            self.atoms - (l.complement() * n).round() as usize
        }
    }

    /// The partition of grid atoms induced by `lp` after snapping every cell
    /// boundary to the grid; cells that snap to nothing are dropped.
    pub fn snapped_partition(&self, lp: &LevelPartition) -> Result<Partition> {
        let mut cuts: Vec<usize> = lp.boundaries().into_iter().map(|l| self.snap(l)).collect();
        cuts.retain(|&c| c > 0 && c < self.atoms);
        cuts.sort_unstable();
        cuts.dedup();
        let mut sizes = Vec::with_capacity(cuts.len() + 1);
        let mut prev = 0;
        for c in cuts.into_iter().chain(std::iter::once(self.atoms)) {
            sizes.push(c - prev);
            prev = c;
        }
        Partition::contiguous(&sizes)
    }
}
