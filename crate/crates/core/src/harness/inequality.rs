use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::derive_seed;
use crate::divergence::fuzz::{all_events, random_dist, random_event};
use crate::divergence::{
    bh_tv_upper, kl_conditional_exact, kl_finite, le_cam_error_lower, tv_finite, AtomicDist, FiniteDist, Nats,
};
use crate::families::median::{median_closeness_bound, median_family_kl_numeric};
use crate::families::{cantor_theta, closeness_delta, separation_delta, BitPrefix, CantorFamily, Tail};

/// Slack allowed before a comparison counts as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub le_cam: f64,
    pub bretagnolle_huber: f64,
    pub conditional_kl: f64,
    /// Relative to the family radius.
    pub cantor_separation: f64,
    pub cantor_closeness: f64,
    pub median_kl: f64,
}

pub const DEFAULT_TOLERANCES: Tolerances = Tolerances {
    le_cam: 1e-12,
    bretagnolle_huber: 1e-12,
    conditional_kl: 1e-9,
    cantor_separation: 1e-12,
    cantor_closeness: 1e-12,
    median_kl: 1e-9,
};

/// Counterexamples kept per check.
const MAX_DUMPED: usize = 20;

const MAX_SUPPORT: usize = 8;
const CANTOR_DEPTH: usize = 16;
const MEDIAN_DEPTH: usize = 8;
const MEDIAN_MAX_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub trials: u64,
    pub violations: u64,
    /// Largest amount by which the inequality failed (negative when it never did).
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: String,
    pub trial: u64,
    pub excess: f64,
    pub witness: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub trials: u64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckSummary>,
    pub counterexamples: Vec<Counterexample>,
    pub passed: bool,
}

struct Check {
    summary: CheckSummary,
    dumped: Vec<Counterexample>,
}

impl Check {
    fn new(name: &str) -> Self {
        Check {
            summary: CheckSummary {
                name: name.into(),
                trials: 0,
                violations: 0,
                worst_excess: f64::NEG_INFINITY,
            },
            dumped: Vec::new(),
        }
    }

    /// Records that `lhs <= rhs` should hold up to `tol`.
    fn observe(&mut self, trial: u64, lhs: f64, rhs: f64, tol: f64, witness: impl FnOnce() -> serde_json::Value) {
        self.summary.trials += 1;
        let excess = lhs - rhs;
        if excess > self.summary.worst_excess || excess.is_nan() {
            self.summary.worst_excess = excess;
        }
        if !(excess <= tol) {
            self.summary.violations += 1;
            if self.dumped.len() < MAX_DUMPED {
                self.dumped.push(Counterexample {
                    check: self.summary.name.clone(),
                    trial,
                    excess,
                    witness: witness(),
                });
            }
        }
    }
}

fn rng_for(seed: u64, check: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, check))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (FiniteDist, FiniteDist) {
    let size = rng.random_range(2..=MAX_SUPPORT);
    (random_dist(rng, size), random_dist(rng, size))
}

/// Random Cantor family of each base type, with modest parameters.
fn random_family(rng: &mut ChaCha8Rng) -> CantorFamily {
    let theta0 = rng.random_range(-5.0..5.0);
    let r = rng.random_range(0.1..10.0);
    let scale = rng.random_range(0.2..5.0);
    match rng.random_range(0..3) {
        0 => CantorFamily::gaussian(theta0, r, scale),
        1 => CantorFamily::cauchy(theta0, r, scale),
        _ => {
            let atoms = rng.random_range(1..=4);
            let values = (0..atoms).map(|_| rng.random_range(-2.0..2.0)).collect();
            let weights = random_dist(rng, atoms);
            CantorFamily::logistic(theta0, r / 10.0, AtomicDist::new(values, weights).expect("valid atoms"))
        }
    }
    .expect("parameters are in range")
}

/// `v` with bit `k` flipped and the following bits redrawn.
fn diverge_at(rng: &mut ChaCha8Rng, v: &BitPrefix, k: usize) -> BitPrefix {
    let bits = (1..=v.len())
        .map(|j| match j.cmp(&k) {
            std::cmp::Ordering::Less => v.bit(j),
            std::cmp::Ordering::Equal => !v.bit(j),
            std::cmp::Ordering::Greater => rng.random(),
        })
        .collect();
    BitPrefix::new(bits, if rng.random() { Tail::AllOnes } else { Tail::AllZeros })
}

/// Randomized checks of Le Cam, Bretagnolle–Huber and the conditional-KL
/// bound on finite distributions, plus the separation and closeness of
/// Cantor families and the median family's KL bound.
pub fn run_inequality_suite(trials: u64, seed: u64) -> InequalityReport {
    run_inequality_suite_with(trials, seed, DEFAULT_TOLERANCES, &bh_tv_upper)
}

/// [`run_inequality_suite`] with explicit tolerances and a replaceable
/// Bretagnolle–Huber bound, so that a broken bound can be shown to be caught.
pub fn run_inequality_suite_with(
    trials: u64,
    seed: u64,
    tol: Tolerances,
    bh_bound: &dyn Fn(Nats) -> f64,
) -> InequalityReport {
    let mut checks = Vec::new();

    let mut check = Check::new("le_cam");
    let mut rng = rng_for(seed, "le_cam");
    for trial in 0..trials {
        let (p, q) = random_pair(&mut rng);
        let tv = tv_finite(&p, &q).expect("same support");
        let lower = le_cam_error_lower(tv).expect("tv in range");
        let best = all_events(p.support_size())
            .map(|a| 1.0 - p.mass(&a) + q.mass(&a))
            .fold(1.0, f64::min);
        check.observe(trial, lower, best, tol.le_cam, || json!({ "p": p, "q": q, "tv": tv, "best_summed_error": best }));
    }
    checks.push(check);

    let mut check = Check::new("bretagnolle_huber");
    let mut rng = rng_for(seed, "bretagnolle_huber");
    for trial in 0..trials {
        let (p, q) = random_pair(&mut rng);
        let tv = tv_finite(&p, &q).expect("same support");
        let kl = kl_finite(&p, &q).expect("same support");
        let bound = bh_bound(kl);
        check.observe(trial, tv, bound, tol.bretagnolle_huber, || {
            json!({ "p": p, "q": q, "tv": tv, "kl": kl, "bound": bound })
        });
    }
    checks.push(check);

    let mut check = Check::new("conditional_kl");
    let mut rng = rng_for(seed, "conditional_kl");
    for trial in 0..trials {
        let size = rng.random_range(1..=MAX_SUPPORT);
        let (p, q) = (random_dist(&mut rng, size), random_dist(&mut rng, size));
        let s = random_event(&mut rng, size);
        let ck = kl_conditional_exact(&p, &q, &s).expect("interior distributions");
        check.observe(trial, ck.kl_cond.value(), ck.bound.value(), tol.conditional_kl, || {
            json!({ "p": p, "q": q, "s": s.iter().collect::<Vec<_>>(), "kl_cond": ck.kl_cond, "bound": ck.bound })
        });
    }
    checks.push(check);

    let mut check = Check::new("cantor_separation");
    let mut rng = rng_for(seed, "cantor_separation");
    for trial in 0..trials {
        let fam = random_family(&mut rng);
        let k = rng.random_range(1..=12usize);
        let v = BitPrefix::random(&mut rng, CANTOR_DEPTH);
        let w = diverge_at(&mut rng, &v, k);
        let gap = (cantor_theta(&v, &fam) - cantor_theta(&w, &fam)).abs();
        let delta = separation_delta(k as u32, &fam);
        check.observe(trial, delta, gap, tol.cantor_separation * fam.radius(), || {
            json!({ "family": fam, "k": k, "v": v.to_string(), "w": w.to_string(), "gap": gap, "delta_k": delta })
        });
    }
    checks.push(check);

    let mut check = Check::new("cantor_closeness");
    let mut rng = rng_for(seed, "cantor_closeness");
    for trial in 0..trials {
        let fam = random_family(&mut rng);
        let k = rng.random_range(1..=12usize);
        let v = BitPrefix::random(&mut rng, CANTOR_DEPTH);
        let split = rng.random_range(k + 1..=CANTOR_DEPTH);
        let w = diverge_at(&mut rng, &v, split);
        let (a, b) = (cantor_theta(&v, &fam), cantor_theta(&w, &fam));
        let kl = fam.base().kl(a, b).value();
        let bound = closeness_delta(k as u32, &fam).value();
        check.observe(trial, kl, bound, tol.cantor_closeness, || {
            json!({ "family": fam, "k": k, "v": v.to_string(), "w": w.to_string(), "kl": kl, "closeness": bound })
        });
    }
    checks.push(check);

    let mut check = Check::new("median_kl");
    let mut rng = rng_for(seed, "median_kl");
    for trial in 0..trials {
        let k = rng.random_range(1..=MEDIAN_MAX_K);
        let v = BitPrefix::random(&mut rng, MEDIAN_DEPTH);
        let w = diverge_at(&mut rng, &v, k);
        let kl = median_family_kl_numeric(&v, &w, k, MEDIAN_DEPTH).expect("prefixes agree before k").value();
        let bound = median_closeness_bound(k);
        check.observe(trial, kl, bound, tol.median_kl, || {
            json!({ "k": k, "v": v.to_string(), "w": w.to_string(), "kl": kl, "bound": bound })
        });
    }
    checks.push(check);

    let passed = checks.iter().all(|c| c.summary.violations == 0);
    let mut counterexamples = Vec::new();
    let mut summaries = Vec::new();
    for c in checks {
        counterexamples.extend(c.dumped);
        summaries.push(c.summary);
    }
    InequalityReport {
        trials,
        seed,
        tolerances: tol,
        checks: summaries,
        counterexamples,
        passed,
    }
}
