//! Random finite distributions for inequality sweeps.
//!
//! Distributions are drawn as normalized exponentials of uniforms (a flat
//! Dirichlet), with every entry clamped below at [`INTERIOR_FLOOR`] so the
//! sweeps stay in the simplex interior and never produce infinite KL.

use rand::Rng;

use super::{EventSet, FiniteDist};

/// Lower clamp applied to every sampled probability.
pub const INTERIOR_FLOOR: f64 = 1e-9;

/// Draws a distribution on `support_size` points from the interior of the simplex.
pub fn random_dist<R: Rng + ?Sized>(rng: &mut R, support_size: usize) -> FiniteDist {
    assert!(support_size > 0, "support must be non-empty");
    let raw: Vec<f64> = (0..support_size)
        .map(|_| {
            // 1 - U lies in (0, 1], so the log is finite.
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let clamped: Vec<f64> = raw
        .iter()
        .map(|x| (x / total).max(INTERIOR_FLOOR))
        .collect();
    FiniteDist::from_weights(&clamped).expect("positive weights")
}

/// Draws a uniformly random non-empty subset of the support.
pub fn random_event<R: Rng + ?Sized>(rng: &mut R, support_size: usize) -> EventSet {
    assert!(support_size > 0 && support_size < 64);
    let full = (1u64 << support_size) - 1;
    let mask = rng.random_range(1..=full);
    EventSet::new(
        (0..support_size).filter(|i| mask & (1 << i) != 0),
        support_size,
    )
    .expect("mask is non-empty and in range")
}

/// Every non-empty subset of a support with fewer than 20 points.
pub fn all_events(support_size: usize) -> impl Iterator<Item = EventSet> {
    assert!(support_size > 0 && support_size < 20);
    (1u32..(1 << support_size)).map(move |mask| {
        EventSet::new(
            (0..support_size).filter(|i| mask & (1 << i) != 0),
            support_size,
        )
        .expect("mask is non-empty and in range")
    })
}
