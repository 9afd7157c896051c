//! Time-uniform estimation by geometric epochs.
//!
//! The doubling estimator reports the sample mean computed at the most recent
//! power-of-two sample size and keeps it frozen until the next one. A union
//! bound over epochs turns a fixed-`n` deviation bound `F(t, n)` into the
//! time-uniform width
//!
//! ```text
//! t(n) = F(2 log(log2 n) + log(1/alpha) + 1/2, n/2)
//! ```
//!
//! Note the two logarithms: the epoch count uses `log2`, every other log is
//! natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::SamplePath;

/// A fixed-sample-size deviation bound: with probability at least
/// `1 - alpha`, `|theta_hat_n - theta| <= F(log(1/alpha), n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationBound {
    /// Sample mean of `sigma^2`-sub-Gaussian draws.
    SubGaussian { sigma: f64 },
}

impl DeviationBound {
    pub fn sub_gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(DeviationBound::SubGaussian { sigma })
    }

    /// `F(t, n)`. `n` may be fractional (the doubling width evaluates `n/2`).
    /// Increasing in `t`, decreasing in `n`.
    pub fn eval(&self, t: f64, n: f64) -> f64 {
        match *self {
            DeviationBound::SubGaussian { sigma } => sub_gaussian_raw(sigma, t, n),
        }
    }
}

fn sub_gaussian_raw(sigma: f64, t: f64, n: f64) -> f64 {
    (2.0 * sigma * sigma * (t + std::f64::consts::LN_2) / n).sqrt()
}

/// Sub-Gaussian mean deviation bound `sqrt(2 sigma^2 (t + log 2) / n)`, so that
/// `F(log(1/alpha), n) = sqrt(2 sigma^2 log(2/alpha) / n)`.
pub fn subgaussian_f(sigma: f64, t: f64, n: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be non-negative, got {t}")));
    }
    if !(n > 0.0) {
        return Err(Error::Domain(format!("sample size must be positive, got {n}")));
    }
    Ok(sub_gaussian_raw(sigma, t, n))
}

/// A width function `t(n)`: the radius an estimator guarantees after `n` samples.
pub trait WidthFn: Sync {
    fn width(&self, n: u64) -> f64;
}

impl<F> WidthFn for F
where
    F: Fn(u64) -> f64 + Sync,
{
    fn width(&self, n: u64) -> f64 {
        self(n)
    }
}

/// Width of the doubling estimator at level `alpha`.
///
/// Returns `+inf` for `n <= 1`, where `log log2 n` is undefined.
pub fn doubling_width(alpha: f64, bound: &DeviationBound, n: u64) -> f64 {
    if n <= 1 {
        return f64::INFINITY;
    }
    let n = n as f64;
    // log2(2) = 1 exactly, so the inner log vanishes at n = 2.
    let t = 2.0 * n.log2().ln() + (1.0 / alpha).ln() + 0.5;
    bound.eval(t, n / 2.0)
}

/// The time-uniform width of the doubling estimator as a [`WidthFn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingWidth {
    alpha: f64,
    bound: DeviationBound,
}

impl DoublingWidth {
    pub fn new(alpha: f64, bound: DeviationBound) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(DoublingWidth { alpha, bound })
    }

    pub fn sub_gaussian(alpha: f64, sigma: f64) -> Result<Self> {
        DoublingWidth::new(alpha, DeviationBound::sub_gaussian(sigma)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bound(&self) -> &DeviationBound {
        &self.bound
    }
}

impl WidthFn for DoublingWidth {
    fn width(&self, n: u64) -> f64 {
        doubling_width(self.alpha, &self.bound, n)
    }
}

/// The per-epoch radius `F(log(pi^2 k^2 / (6 alpha)), 2^k)` used in the union
/// bound; `k >= 1`.
pub fn per_epoch_bound(alpha: f64, bound: &DeviationBound, k: u32) -> f64 {
    let k_f = k as f64;
    let t = (std::f64::consts::PI.powi(2) * k_f * k_f / (6.0 * alpha)).ln();
    bound.eval(t, 2f64.powi(k as i32))
}

/// Failure probability spent on the first `terms` epochs:
/// `sum_k exp(-(2 log k + log(1/alpha) + log(pi^2/6)))`, which tends to `alpha`.
pub fn union_bound_total(alpha: f64, terms: u64) -> f64 {
    let log_basel = (std::f64::consts::PI.powi(2) / 6.0).ln();
    // Summed smallest-first to limit round-off.
    (1..=terms)
        .rev()
        .map(|k| (-(2.0 * (k as f64).ln() + (1.0 / alpha).ln() + log_basel)).exp())
        .sum()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Online state of the doubling estimator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DoublingMean {
    count: u64,
    sum: CompensatedSum,
    epoch_estimate: Option<f64>,
    epoch: u32,
}

impl DoublingMean {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one observation; refreshes the reported estimate exactly when the
    /// new count is a power of two.
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        if self.count.is_power_of_two() {
            self.epoch_estimate = Some(self.running_mean());
            self.epoch = self.count.trailing_zeros();
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `floor(log2 n)`: index of the epoch that produced the current estimate.
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Current (unfrozen) sample mean; NaN before any data.
    pub fn running_mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    /// The time-uniform estimate, i.e. the mean at the last power of two.
    pub fn estimate(&self) -> Option<f64> {
        self.epoch_estimate
    }
}

/// Functional form of [`DoublingMean::push`].
pub fn doubling_update(mut state: DoublingMean, x: f64) -> DoublingMean {
    state.push(x);
    state
}

/// First `n <= horizon` at which the doubling estimate leaves
/// `[theta - t(n), theta + t(n)]`, or `None` if it never does.
pub fn first_failure(values: &[f64], theta_true: f64, width: &dyn WidthFn, horizon: u64) -> Option<u64> {
    let mut state = DoublingMean::new();
    for (i, &x) in values.iter().take(horizon as usize).enumerate() {
        state.push(x);
        let n = i as u64 + 1;
        let estimate = state.estimate().expect("estimate exists after one draw");
        if !((estimate - theta_true).abs() <= width.width(n)) {
            return Some(n);
        }
    }
    None
}

/// Whether the doubling estimate stays within `t(n)` of `theta_true` for every
/// `n` up to the horizon (or the path length, if shorter).
pub fn coverage_event(path: &SamplePath, theta_true: f64, width: &dyn WidthFn, horizon: u64) -> bool {
    let values = path
        .scalars()
        .expect("coverage is defined for scalar location paths");
    first_failure(values, theta_true, width, horizon).is_none()
}
