//! Piecewise-constant densities on `[0, 1]` whose medians sit on a base-5
//! net, used as hard instances for median (absolute-loss) estimation.
//!
//! The building block is
//!
//! ```text
//! q(x) = 2    on [0, 0.2)
//!        0    on [0.2, 0.4)
//!        2/3  on [0.4, 1]
//! ```
//!
//! At level `k`, `q` (mirrored when `v_k = 1`) is squeezed into the gap left
//! by level `k - 1`, which starts at `a_{v,k-1}` and has length `5^{1-k}`.
//! Each level carries mass `4 * 5^{-k}` and leaves a new gap
//! `[a_{v,k}, a_{v,k} + 5^{-k})`. Truncating at depth `K` fills the last gap
//! with density 1, so the total mass is exactly one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BitPrefix, FamilyTag, Observations, SamplePath};
use crate::divergence::Nats;
use crate::error::{Error, Result};

const HIGH: f64 = 2.0;
const LOW: f64 = 2.0 / 3.0;
const RESIDUAL: f64 = 1.0;

/// `a_{v,k} = sum_{j<=k} (2 v_j + 1) 5^{-j}`.
pub fn median_family_center(v: &BitPrefix, k: usize) -> f64 {
    // Horner from the deepest digit.
    (1..=k)
        .rev()
        .fold(0.0, |acc, j| (acc + if v.bit(j) { 3.0 } else { 1.0 }) / 5.0)
}

/// A constant-density piece of a truncated median-family density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub density: f64,
    /// Construction level `k` that produced the piece; `None` for the
    /// depth-`K` residual.
    pub level: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn mass(&self) -> f64 {
        self.len() * self.density
    }
}

/// The median family member `P_v` truncated at depth `K`.
#[derive(Debug, Clone)]
pub struct MedianFamily {
    depth: usize,
    v: BitPrefix,
    segments: Vec<Segment>,
    cumulative: Vec<f64>,
    gap_start: f64,
}

impl MedianFamily {
    pub fn new(depth: usize, v: BitPrefix) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Argument("median family depth must be >= 1".into()));
        }
        if v.len() < depth {
            return Err(Error::Argument(format!(
                "prefix of length {} is shorter than depth {depth}",
                v.len()
            )));
        }

        let mut left = Vec::with_capacity(depth);
        let mut right = Vec::with_capacity(depth);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for k in 1..=depth {
            let width = hi - lo;
            let at = |fraction: f64| lo + fraction * width;
            let level = Some(k);
            let (low_piece, gap, high_piece) = if v.bit(k) {
                (
                    Segment { start: lo, end: at(0.6), density: LOW, level },
                    (at(0.6), at(0.8)),
                    Segment { start: at(0.8), end: hi, density: HIGH, level },
                )
            } else {
                (
                    Segment { start: lo, end: at(0.2), density: HIGH, level },
                    (at(0.2), at(0.4)),
                    Segment { start: at(0.4), end: hi, density: LOW, level },
                )
            };
            left.push(low_piece);
            right.push(high_piece);
            (lo, hi) = gap;
        }

        let mut segments = left;
        segments.push(Segment {
            start: lo,
            end: hi,
            density: RESIDUAL,
            level: None,
        });
        segments.extend(right.into_iter().rev());

        let mut cumulative = Vec::with_capacity(segments.len() + 1);
        cumulative.push(0.0);
        for s in &segments {
            cumulative.push(cumulative.last().unwrap() + s.mass());
        }

        Ok(MedianFamily {
            depth,
            v,
            segments,
            cumulative,
            gap_start: lo,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn index(&self) -> &BitPrefix {
        &self.v
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `a_{v,K}`: left end of the residual interval.
    pub fn center(&self) -> f64 {
        self.gap_start
    }

    /// The exact median of the truncated density (midpoint of the residual).
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn locate(&self, x: f64) -> usize {
        // Index of the last segment whose start is <= x; x = 1 falls in the last piece.
        self.segments
            .partition_point(|s| s.start <= x)
            .saturating_sub(1)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        Ok(self.segments[self.locate(x)].density)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.locate(x);
        let s = &self.segments[i];
        self.cumulative[i] + (x - s.start) * s.density
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self
            .cumulative
            .partition_point(|c| *c <= u)
            .clamp(1, self.segments.len())
            - 1;
        let s = &self.segments[i];
        (s.start + (u - self.cumulative[i]) / s.density).clamp(s.start, s.end)
    }

    /// Pieces contributed by level `k`, i.e. the support of `q_{v,k}`.
    pub fn level_support(&self, k: usize) -> Vec<(f64, f64)> {
        self.segments
            .iter()
            .filter(|s| s.level == Some(k))
            .map(|s| (s.start, s.end))
            .collect()
    }

    pub fn level_mass(&self, k: usize) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.level == Some(k))
            .map(Segment::mass)
            .sum()
    }

    /// `n` i.i.d. draws by inversion of the analytic CDF.
    pub fn sample(&self, n: usize, seed: u64) -> SamplePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| self.quantile(rng.random::<f64>())).collect();
        SamplePath {
            family: FamilyTag::Median,
            v: self.v.clone(),
            seed,
            values: Observations::Scalar(values),
        }
    }
}

/// Exact KL between two piecewise-constant densities on `[0, 1]`.
pub fn piecewise_kl(p: &MedianFamily, q: &MedianFamily) -> Nats {
    let (a, b) = (p.segments(), q.segments());
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let start = a[i].start.max(b[j].start);
        let end = a[i].end.min(b[j].end);
        if end > start {
            total += (end - start) * a[i].density * (a[i].density / b[j].density).ln();
        }
        if a[i].end <= b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    Nats::clamped(total)
}

/// KL between the depth-`K` truncations of `P_v` and `P_{v'}`, where the two
/// indices are required to agree on their first `k - 1` bits.
pub fn median_family_kl_numeric(v: &BitPrefix, v_prime: &BitPrefix, k: usize, depth: usize) -> Result<Nats> {
    if k == 0 || depth < k {
        return Err(Error::Argument(format!(
            "need 1 <= k <= depth, got k = {k}, depth = {depth}"
        )));
    }
    if !v.agrees_through(v_prime, k - 1) {
        return Err(Error::Argument(format!(
            "{v} and {v_prime} do not share a prefix of length {}",
            k - 1
        )));
    }
    let p = MedianFamily::new(depth, v.with_len(depth))?;
    let q = MedianFamily::new(depth, v_prime.with_len(depth))?;
    Ok(piecewise_kl(&p, &q))
}

/// The closeness bound `2 log 3 * 5^{-k}`.
pub fn median_closeness_bound(k: usize) -> f64 {
    2.0 * 3f64.ln() * 5f64.powi(-(k as i32))
}
