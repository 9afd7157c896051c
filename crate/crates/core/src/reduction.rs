//! Turning an estimator into a sequence of bit tests.
//!
//! Given a family with parameter separation `delta_k`, the `k`-th test waits
//! for `n_k = inf{n : t(n) < delta_k / 2}` samples, projects the estimate onto
//! the nearest Cantor point and reads off bit `k`. Errors are tallied
//! conditionally on all earlier bits being right, which is the quantity the
//! testing lower bound controls.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::WidthFn;
use crate::families::{BitPrefix, CantorFamily, Tail};

/// Largest sample size searched by [`compute_nk`] by default.
pub const DEFAULT_N_MAX: u64 = 1 << 50;

/// Widths are scanned one `n` at a time up to here; beyond it they are
/// assumed non-increasing and searched by bisection.
const LINEAR_SCAN_LIMIT: u64 = 64;

/// Depth-`depth` prefix of the Cantor point nearest to `theta_hat`.
///
/// Works digit by digit: the points with a given prefix lie in a closed
/// interval whose two child thirds hold the points extending it by 0 and 1.
/// The nearer child wins; a tie (estimate at the centre of the removed middle
/// third) goes to bit 0. The returned tail points towards the estimate within
/// the last interval.
pub fn project_vhat(theta_hat: f64, fam: &CantorFamily, depth: usize) -> BitPrefix {
    let mut bits = Vec::with_capacity(depth);
    let mut lo = fam.theta0();
    let mut third = fam.radius();
    for _ in 0..depth {
        third /= 3.0;
        // Midpoint of the removed middle third.
        let centre = lo + 1.5 * third;
        let bit = theta_hat > centre;
        if bit {
            lo += 2.0 * third;
        }
        bits.push(bit);
    }
    let tail = if theta_hat > lo + 0.5 * 3.0 * third {
        Tail::AllOnes
    } else {
        Tail::AllZeros
    };
    BitPrefix::new(bits, tail)
}

/// Bit `k` (1-based) of the projection of `theta_hat`.
pub fn derived_test_bit(theta_hat: f64, fam: &CantorFamily, k: usize) -> bool {
    project_vhat(theta_hat, fam, k).bit(k)
}

/// Smallest `n <= n_max` with `t(n) < delta_k / 2`.
///
/// Small `n` are scanned exhaustively; past that the width is assumed
/// non-increasing and the crossing is bracketed by doubling, then bisected.
pub fn compute_nk(width: &dyn WidthFn, delta_k: f64, n_max: u64) -> Result<u64> {
    if !(delta_k > 0.0) {
        return Err(Error::Domain(format!("separation must be positive, got {delta_k}")));
    }
    let target = delta_k / 2.0;
    let below = |n: u64| width.width(n) < target;
    let exhausted = || Error::ScheduleExhausted { target, n_max };

    let scan_end = LINEAR_SCAN_LIMIT.min(n_max);
    if let Some(n) = (1..=scan_end).find(|&n| below(n)) {
        return Ok(n);
    }
    if n_max <= scan_end {
        return Err(exhausted());
    }

    // Invariant: !below(lo), and below(hi) once bracketed.
    let mut lo = scan_end;
    let mut hi = loop {
        let next = lo.saturating_mul(2).min(n_max);
        if below(next) {
            break next;
        }
        if next == n_max {
            return Err(exhausted());
        }
        lo = next;
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Sample sizes `n_1 <= n_2 <= ...` at which the bit tests are run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSchedule {
    n_k: Vec<u64>,
}

impl TestSchedule {
    pub fn new(n_k: Vec<u64>) -> Result<Self> {
        if n_k.iter().any(|n| *n == 0) {
            return Err(Error::Argument("schedule entries must be >= 1".into()));
        }
        if n_k.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Argument(format!("schedule must be non-decreasing: {n_k:?}")));
        }
        Ok(TestSchedule { n_k })
    }

    /// `n_k` for `k = 1..=depth` from the family's separations.
    pub fn compute(width: &dyn WidthFn, fam: &CantorFamily, depth: usize, n_max: u64) -> Result<Self> {
        let n_k = (1..=depth as u32)
            .map(|k| compute_nk(width, crate::families::separation_delta(k, fam), n_max))
            .collect::<Result<Vec<_>>>()?;
        TestSchedule::new(n_k)
    }

    /// Like [`TestSchedule::compute`], but stops at the first depth whose
    /// `n_k` exceeds `n_max`, returning that error alongside the shorter schedule.
    pub fn compute_truncated(
        width: &dyn WidthFn,
        fam: &CantorFamily,
        depth: usize,
        n_max: u64,
    ) -> (Self, Option<Error>) {
        let mut n_k = Vec::with_capacity(depth);
        for k in 1..=depth as u32 {
            match compute_nk(width, crate::families::separation_delta(k, fam), n_max) {
                Ok(n) => n_k.push(n),
                Err(e) => return (TestSchedule { n_k }, Some(e)),
            }
        }
        (TestSchedule { n_k }, None)
    }

    pub fn depth(&self) -> usize {
        self.n_k.len()
    }

    /// `n_k` for 1-based `k`.
    pub fn n(&self, k: usize) -> u64 {
        self.n_k[k - 1]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.n_k
    }
}

/// Per-depth tallies of the sequential testing game.
///
/// `trials[k]` counts replications whose first `k - 1` derived bits were all
/// right; `errors[k]` counts those that then got bit `k` wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondErrLedger {
    trials: Vec<u64>,
    errors: Vec<u64>,
}

impl CondErrLedger {
    pub fn new(depth: usize) -> Self {
        CondErrLedger {
            trials: vec![0; depth],
            errors: vec![0; depth],
        }
    }

    pub fn depth(&self) -> usize {
        self.trials.len()
    }

    pub fn trials(&self, k: usize) -> u64 {
        self.trials[k - 1]
    }

    pub fn errors(&self, k: usize) -> u64 {
        self.errors[k - 1]
    }

    /// Records one replication with true index `v` and derived bits `vhat`.
    /// Only the first `min(depth, vhat.len())` depths are examined.
    pub fn record(&mut self, v: &BitPrefix, vhat: &BitPrefix) {
        let depth = self.depth().min(vhat.len());
        for k in 1..=depth {
            self.trials[k - 1] += 1;
            if v.bit(k) != vhat.bit(k) {
                self.errors[k - 1] += 1;
                break;
            }
        }
    }

    /// Pointwise sum of tallies.
    pub fn merge(&mut self, other: &CondErrLedger) -> Result<()> {
        if other.depth() != self.depth() {
            return Err(Error::Argument(format!(
                "cannot merge ledgers of depth {} and {}",
                self.depth(),
                other.depth()
            )));
        }
        for (a, b) in self.trials.iter_mut().zip(&other.trials) {
            *a += b;
        }
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        Ok(())
    }

    /// `errors(k) / trials(k)`, or `None` when depth `k` was never reached.
    pub fn cond_err_hat(&self, k: usize) -> Option<f64> {
        let trials = self.trials(k);
        (trials > 0).then(|| self.errors(k) as f64 / trials as f64)
    }

    /// Sum over depths of the estimated conditional errors (unobserved depths count as 0).
    pub fn total_cond_err(&self) -> f64 {
        (1..=self.depth()).filter_map(|k| self.cond_err_hat(k)).sum()
    }

    /// Monte Carlo standard error of [`CondErrLedger::total_cond_err`],
    /// treating depths as independent binomial proportions.
    pub fn total_cond_err_stderr(&self) -> f64 {
        (1..=self.depth())
            .filter_map(|k| {
                self.cond_err_hat(k)
                    .map(|p| p * (1.0 - p) / self.trials(k) as f64)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn unobserved_depths(&self) -> Vec<usize> {
        (1..=self.depth()).filter(|&k| self.trials(k) == 0).collect()
    }

    /// One row per depth; `floors[k - 1]` is the conditional-error floor to
    /// report alongside (NaN where not supplied).
    pub fn rows(&self, floors: &[f64]) -> Vec<LedgerRow> {
        (1..=self.depth())
            .map(|k| LedgerRow {
                k,
                trials: self.trials(k),
                errors: self.errors(k),
                cond_err_hat: self.cond_err_hat(k).unwrap_or(0.0),
                lower_bound_quarter_exp: floors.get(k - 1).copied().unwrap_or(f64::NAN),
            })
            .collect()
    }

    /// Writes the ledger as CSV with columns
    /// `k,trials,errors,cond_err_hat,lower_bound_quarter_exp`.
    pub fn write_csv<W: Write>(&self, out: W, floors: &[f64]) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in self.rows(floors) {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// One CSV row of a [`CondErrLedger`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub k: usize,
    pub trials: u64,
    pub errors: u64,
    pub cond_err_hat: f64,
    pub lower_bound_quarter_exp: f64,
}

/// Functional form of [`CondErrLedger::record`].
pub fn ledger_update(mut ledger: CondErrLedger, v: &BitPrefix, vhat: &BitPrefix) -> CondErrLedger {
    ledger.record(v, vhat);
    ledger
}

/// Upper bound `alpha / (1 - alpha)` on the summed conditional errors of any
/// test sequence that is right everywhere with probability `1 - alpha`.
pub fn cond_err_budget(alpha: f64) -> f64 {
    alpha / (1.0 - alpha)
}
