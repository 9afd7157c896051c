//! Divergences on finite supports and for the closed-form parametric families,
//! together with the three two-point inequality primitives: Le Cam's testing
//! bound, the Bretagnolle–Huber bound and the conditional-KL bound.
//!
//! All divergences are in nats. KL divergences that are infinite (positive
//! mass where the reference has none) are returned as [`Nats::INFINITY`]
//! rather than as errors, since the inequality checks need to handle them.

pub mod fuzz;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`FiniteDist`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A KL divergence (or any information quantity) measured in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats(f64);

impl Nats {
    pub const ZERO: Nats = Nats(0.0);
    pub const INFINITY: Nats = Nats(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::Domain(format!("nats must be >= 0, got {value}")));
        }
        Ok(Nats(value))
    }

    /// Wraps a computed divergence, absorbing round-off below zero.
    pub(crate) fn clamped(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        Nats(value.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

/// A probability vector on `{0, .., support_size - 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {p}, expected a finite non-negative value"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "total mass {total} differs from 1"
            )));
        }
        Ok(FiniteDist { probs })
    }

    pub fn uniform(support_size: usize) -> Result<Self> {
        if support_size == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(FiniteDist {
            probs: vec![1.0 / support_size as f64; support_size],
        })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weights must be non-negative with positive finite total, got total {total}"
            )));
        }
        FiniteDist::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mass(&self, event: &EventSet) -> f64 {
        event.iter().map(|i| self.probs[i]).sum()
    }

    /// The distribution restricted to `event` and renormalized, indexed by the
    /// event's elements in increasing order.
    pub fn condition(&self, event: &EventSet) -> Result<FiniteDist> {
        event.check_support(self.support_size())?;
        let mass = self.mass(event);
        if mass <= 0.0 {
            return Err(Error::Conditioning("event has zero probability".into()));
        }
        Ok(FiniteDist {
            probs: event.iter().map(|i| self.probs[i] / mass).collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for FiniteDist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        FiniteDist::new(probs)
    }
}

impl From<FiniteDist> for Vec<f64> {
    fn from(dist: FiniteDist) -> Self {
        dist.probs
    }
}

/// A conditioning event: a non-empty set of support indices (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSet {
    indices: BTreeSet<usize>,
}

impl EventSet {
    pub fn new(indices: impl IntoIterator<Item = usize>, support_size: usize) -> Result<Self> {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        if indices.is_empty() {
            return Err(Error::Argument("event set must be non-empty".into()));
        }
        let event = EventSet { indices };
        event.check_support(support_size)?;
        Ok(event)
    }

    fn check_support(&self, support_size: usize) -> Result<()> {
        match self.indices.iter().next_back() {
            Some(&max) if max >= support_size => Err(Error::Argument(format!(
                "event index {max} outside support of size {support_size}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }
}

/// A finitely supported distribution over real values, e.g. regression
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomicDistRepr", into = "AtomicDistRepr")]
pub struct AtomicDist {
    values: Vec<f64>,
    weights: FiniteDist,
}

#[derive(Serialize, Deserialize)]
struct AtomicDistRepr {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicDist {
    pub fn new(values: Vec<f64>, weights: FiniteDist) -> Result<Self> {
        if values.len() != weights.support_size() {
            return Err(Error::Dimension {
                left: values.len(),
                right: weights.support_size(),
            });
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidDistribution(format!("atom {x} is not finite")));
        }
        Ok(AtomicDist { values, weights })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        AtomicDist::new(vec![value], FiniteDist::uniform(1)?)
    }

    /// Equal weight on each value.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let weights = FiniteDist::uniform(values.len())?;
        AtomicDist::new(values, weights)
    }

    /// Uniform on `{-1, +1}`, the default regression design (`E[X^2] = 1`).
    pub fn rademacher() -> Self {
        AtomicDist::uniform(vec![-1.0, 1.0]).expect("two atoms")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &FiniteDist {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.weights.probs().iter().copied())
    }

    pub fn second_moment(&self) -> f64 {
        self.iter().map(|(x, w)| w * x * x).sum()
    }
}

impl TryFrom<AtomicDistRepr> for AtomicDist {
    type Error = Error;

    fn try_from(repr: AtomicDistRepr) -> Result<Self> {
        AtomicDist::new(repr.values, FiniteDist::new(repr.weights)?)
    }
}

impl From<AtomicDist> for AtomicDistRepr {
    fn from(dist: AtomicDist) -> Self {
        AtomicDistRepr {
            values: dist.values,
            weights: dist.weights.into(),
        }
    }
}

fn same_support(p: &FiniteDist, q: &FiniteDist) -> Result<()> {
    if p.support_size() != q.support_size() {
        return Err(Error::Dimension {
            left: p.support_size(),
            right: q.support_size(),
        });
    }
    Ok(())
}

fn kl_terms(p: &[f64], q: &[f64]) -> Nats {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Nats::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    Nats::clamped(total)
}

/// `KL(p || q) = sum_i p_i log(p_i / q_i)`, with `0 log 0 = 0`.
pub fn kl_finite(p: &FiniteDist, q: &FiniteDist) -> Result<Nats> {
    same_support(p, q)?;
    Ok(kl_terms(p.probs(), q.probs()))
}

/// Total variation distance `(1/2) sum_i |p_i - q_i|`.
pub fn tv_finite(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    same_support(p, q)?;
    let l1: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

/// KL divergence between Bernoulli(p) and Bernoulli(q).
pub fn kl_bernoulli(p: f64, q: f64) -> Result<Nats> {
    for (name, x) in [("p", p), ("q", q)] {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!(
                "bernoulli parameter {name} = {x} must lie strictly inside (0, 1)"
            )));
        }
    }
    Ok(Nats::clamped(
        p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln(),
    ))
}

fn check_scale(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {sigma}")));
    }
    Ok(())
}

/// KL between two Gaussian location models `N(mu, sigma^2)` whose means
/// differ by `delta`: `delta^2 / (2 sigma^2)`.
pub fn kl_gaussian_loc(delta: f64, sigma: f64) -> Result<Nats> {
    check_scale(sigma)?;
    Ok(Nats::clamped(delta * delta / (2.0 * sigma * sigma)))
}

/// KL between two Cauchy location models with scale `sigma` and locations
/// `delta` apart: `log(1 + delta^2 / (4 sigma^2))`. The divergence is symmetric.
pub fn kl_cauchy_loc(delta: f64, sigma: f64) -> Result<Nats> {
    check_scale(sigma)?;
    Ok(Nats::clamped((delta * delta / (4.0 * sigma * sigma)).ln_1p()))
}

/// Quadratic upper bound `delta^2 / (4 sigma^2)` on [`kl_cauchy_loc`].
pub fn kl_cauchy_loc_quadratic_bound(delta: f64, sigma: f64) -> Result<Nats> {
    check_scale(sigma)?;
    Ok(Nats::clamped(delta * delta / (4.0 * sigma * sigma)))
}

/// Log-partition of the +/-1 logistic model at natural parameter `u = x theta`:
/// `log(e^{-u} + e^{u})`.
pub(crate) fn logistic_log_partition(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// KL between logistic regression models (labels in {-1, +1},
/// `P(Y = 1 | x) = e^{x theta} / (e^{x theta} + e^{-x theta})`) at parameters
/// `theta` and `theta_prime`, averaged over the covariate law. Computed as
/// the Bregman divergence of the log-partition.
pub fn kl_logistic_glm(theta: f64, theta_prime: f64, covariates: &AtomicDist) -> Nats {
    let step = theta_prime - theta;
    let total: f64 = covariates
        .iter()
        .map(|(x, w)| {
            let u = x * theta;
            let u_prime = x * theta_prime;
            let slope = x * u.tanh();
            w * (logistic_log_partition(u_prime) - logistic_log_partition(u) - slope * step)
        })
        .sum();
    Nats::clamped(total)
}

/// Bretagnolle–Huber: `TV(P, Q) <= 1 - exp(-KL(P || Q)) / 2`.
pub fn bh_tv_upper(kl: Nats) -> f64 {
    1.0 - 0.5 * (-kl.value()).exp()
}

/// Le Cam: any test between `P` and `Q` has summed error at least `1 - TV`.
pub fn le_cam_error_lower(tv: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tv) {
        return Err(Error::Domain(format!("total variation {tv} outside [0, 1]")));
    }
    Ok(1.0 - tv)
}

/// Exact KL between conditionals together with the bound `KL(P || Q) / P(S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalKl {
    pub kl_cond: Nats,
    pub bound: Nats,
}

impl ConditionalKl {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.kl_cond.value() <= self.bound.value() + tolerance
    }
}

/// Computes `KL(P_S || Q_S)` exactly and the conditional-KL bound
/// `KL(P || Q) / P(S)`.
pub fn kl_conditional_exact(p: &FiniteDist, q: &FiniteDist, s: &EventSet) -> Result<ConditionalKl> {
    same_support(p, q)?;
    s.check_support(p.support_size())?;
    let p_mass = p.mass(s);
    let q_mass = q.mass(s);
    if p_mass <= 0.0 || q_mass <= 0.0 {
        return Err(Error::Conditioning(format!(
            "P(S) = {p_mass}, Q(S) = {q_mass}; both must be positive"
        )));
    }
    let p_s = p.condition(s)?;
    let q_s = q.condition(s)?;
    let kl_cond = kl_terms(p_s.probs(), q_s.probs());
    let full = kl_terms(p.probs(), q.probs());
    Ok(ConditionalKl {
        kl_cond,
        bound: Nats::clamped(full.value() / p_mass),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> FiniteDist {
        FiniteDist::new(p.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kl_finite_examples() {
        let half = dist(&[0.5, 0.5]);
        assert_eq!(kl_finite(&half, &half).unwrap(), Nats::ZERO);

        let kl = kl_finite(&dist(&[0.6, 0.4]), &dist(&[0.4, 0.6])).unwrap();
        assert!(close(kl.value(), 0.081_093_021_621_632_86, 1e-15));

        let kl = kl_finite(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert!(kl.is_infinite());
    }

    #[test]
    fn kl_ignores_zero_mass_in_p() {
        let kl = kl_finite(&dist(&[0.0, 1.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!(close(kl.value(), 2f64.ln(), 1e-15));
    }

    #[test]
    fn mismatched_supports_are_rejected() {
        let err = kl_finite(&dist(&[1.0]), &dist(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Dimension { left: 1, right: 2 }));
        assert!(tv_finite(&dist(&[1.0]), &dist(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[0.6, 0.4]);
        assert_eq!(tv_finite(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_finite(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(close(tv_finite(&p, &dist(&[0.4, 0.6])).unwrap(), 0.2, 1e-15));
    }

    #[test]
    fn finite_dist_validation() {
        assert!(FiniteDist::new(vec![]).is_err());
        assert!(FiniteDist::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDist::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteDist::new(vec![f64::NAN, 1.0]).is_err());
        assert!(FiniteDist::new(vec![1.0 / 3.0; 3]).is_ok());
    }

    #[test]
    fn bernoulli_examples() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), Nats::ZERO);
        assert!(close(kl_bernoulli(0.6, 0.4).unwrap().value(), 0.081_093_021_621_632_86, 1e-15));
        assert!(close(kl_bernoulli(0.5, 0.25).unwrap().value(), 0.143_841_036_225_890_46, 1e-15));
        assert!(kl_bernoulli(0.0, 0.5).is_err());
        assert!(kl_bernoulli(0.5, 1.0).is_err());
    }

    #[test]
    fn bernoulli_agrees_with_finite_kl() {
        for (p, q) in [(0.1, 0.9), (0.3, 0.35), (0.75, 0.2)] {
            let direct = kl_bernoulli(p, q).unwrap().value();
            let finite = kl_finite(&dist(&[p, 1.0 - p]), &dist(&[q, 1.0 - q])).unwrap().value();
            assert!(close(direct, finite, 1e-14));
        }
    }

    #[test]
    fn gaussian_location_examples() {
        assert_eq!(kl_gaussian_loc(0.0, 1.0).unwrap(), Nats::ZERO);
        assert_eq!(kl_gaussian_loc(1.0, 1.0).unwrap().value(), 0.5);
        assert_eq!(kl_gaussian_loc(2.0, 2.0).unwrap().value(), 0.5);
        assert!(kl_gaussian_loc(1.0, 0.0).is_err());
        assert!(kl_gaussian_loc(1.0, -1.0).is_err());
    }

    #[test]
    fn cauchy_location_examples() {
        assert_eq!(kl_cauchy_loc(0.0, 1.0).unwrap(), Nats::ZERO);
        assert!(close(kl_cauchy_loc(2.0, 1.0).unwrap().value(), 2f64.ln(), 1e-15));
        assert!(close(
            kl_cauchy_loc(0.1, 1.0).unwrap().value(),
            0.002_496_880_198_587_199,
            1e-17
        ));
        assert!(kl_cauchy_loc(1.0, 0.0).is_err());
        for delta in [0.01, 0.5, 1.0, 3.0, 10.0] {
            let kl = kl_cauchy_loc(delta, 1.5).unwrap();
            assert!(kl <= kl_cauchy_loc_quadratic_bound(delta, 1.5).unwrap());
        }
    }

    #[test]
    fn fisher_taylor_limits() {
        let ratio = kl_cauchy_loc(0.01, 1.0).unwrap().value() / 1e-4;
        assert!((ratio - 0.25).abs() / 0.25 <= 1e-3);
        for sigma in [0.5, 1.0, 3.0] {
            let delta = 0.01 * sigma;
            let ratio = kl_cauchy_loc(delta, sigma).unwrap().value() / (delta * delta);
            let limit = 1.0 / (4.0 * sigma * sigma);
            assert!((ratio - limit).abs() / limit <= 1e-3);

            let fisher = 1.0 / (sigma * sigma);
            let gauss = kl_gaussian_loc(0.3, sigma).unwrap().value();
            assert!(close(gauss, 0.5 * fisher * 0.09, 1e-15));
        }
    }

    #[test]
    fn logistic_examples() {
        let x = AtomicDist::uniform(vec![-2.0, 0.5, 3.0]).unwrap();
        assert_eq!(kl_logistic_glm(1.0, 1.0, &x), Nats::ZERO);

        let one = AtomicDist::point_mass(1.0).unwrap();
        let kl = kl_logistic_glm(0.0, 1.0, &one).value();
        assert!(close(kl, 0.433_780_830_483_027_2, 1e-15));
    }

    #[test]
    fn logistic_matches_direct_label_kl() {
        // KL between the two label laws computed from probabilities directly.
        let x = AtomicDist::new(vec![-1.5, 0.25, 2.0], dist(&[0.2, 0.5, 0.3])).unwrap();
        let (theta, theta_prime) = (0.4, -0.7);
        let direct: f64 = x
            .iter()
            .map(|(xv, w)| {
                let p = 1.0 / (1.0 + (-2.0 * xv * theta).exp());
                let q = 1.0 / (1.0 + (-2.0 * xv * theta_prime).exp());
                w * kl_bernoulli(p, q).unwrap().value()
            })
            .sum();
        let bregman = kl_logistic_glm(theta, theta_prime, &x).value();
        assert!(close(direct, bregman, 1e-13));
    }

    #[test]
    fn logistic_partition_is_stable_for_large_arguments() {
        assert!(close(logistic_log_partition(800.0), 800.0, 1e-12));
        assert!(close(logistic_log_partition(-800.0), 800.0, 1e-12));
        assert!(close(logistic_log_partition(0.0), 2f64.ln(), 1e-15));
    }

    #[test]
    fn bh_and_le_cam_examples() {
        assert_eq!(bh_tv_upper(Nats::ZERO), 0.5);
        assert_eq!(bh_tv_upper(Nats::INFINITY), 1.0);
        assert!(close(bh_tv_upper(Nats::new(2f64.ln()).unwrap()), 0.75, 1e-15));

        assert_eq!(le_cam_error_lower(0.0).unwrap(), 1.0);
        assert_eq!(le_cam_error_lower(1.0).unwrap(), 0.0);
        assert!(close(le_cam_error_lower(0.2).unwrap(), 0.8, 1e-15));
        assert!(le_cam_error_lower(1.2).is_err());
        assert!(le_cam_error_lower(-0.1).is_err());
    }

    #[test]
    fn conditional_kl_examples() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let s = EventSet::new([0, 1], 3).unwrap();
        let same = kl_conditional_exact(&p, &p, &s).unwrap();
        assert_eq!(same.kl_cond, Nats::ZERO);
        assert_eq!(same.bound, Nats::ZERO);

        let q = FiniteDist::uniform(3).unwrap();
        let out = kl_conditional_exact(&p, &q, &s).unwrap();
        assert!(close(out.kl_cond.value(), 0.031_583_942_401_963_25, 1e-15));
        assert!(close(out.bound.value(), 0.086_199_093_254_420_2, 1e-15));
        assert!(out.holds(0.0));

        let p = dist(&[0.4, 0.4, 0.1, 0.1]);
        let q = FiniteDist::uniform(4).unwrap();
        let out = kl_conditional_exact(&p, &q, &EventSet::new([0, 1], 4).unwrap()).unwrap();
        assert_eq!(out.kl_cond, Nats::ZERO);
        assert!(out.bound.value() > 0.0);
    }

    #[test]
    fn conditioning_on_null_event_fails() {
        let p = dist(&[0.0, 0.5, 0.5]);
        let q = FiniteDist::uniform(3).unwrap();
        let s = EventSet::new([0], 3).unwrap();
        assert!(matches!(kl_conditional_exact(&p, &q, &s), Err(Error::Conditioning(_))));
        assert!(matches!(kl_conditional_exact(&q, &p, &s), Err(Error::Conditioning(_))));
    }

    #[test]
    fn event_set_validation() {
        assert!(EventSet::new([], 3).is_err());
        assert!(EventSet::new([3], 3).is_err());
        let s = EventSet::new([2, 0, 2], 3).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(2) && !s.contains(1));
    }

    #[test]
    fn atomic_dist_round_trips_through_json() {
        let x = AtomicDist::new(vec![-1.0, 2.0], dist(&[0.25, 0.75])).unwrap();
        let text = serde_json::to_string(&x).unwrap();
        let back: AtomicDist = serde_json::from_str(&text).unwrap();
        assert_eq!(back, x);
        assert!(close(back.second_moment(), 3.25, 1e-15));
        assert!(serde_json::from_str::<AtomicDist>(r#"{"values":[1.0],"weights":[0.5]}"#).is_err());
    }
}
