//! `compute_nk` against a direct scan of an independently written width.

use anytime_core::estimators::DoublingWidth;
use anytime_core::families::{separation_delta, CantorFamily};
use anytime_core::reduction::{compute_nk, DEFAULT_N_MAX};

const ALPHA: f64 = 0.1;
const SIGMA: f64 = 1.0;

/// `sqrt(2 sigma^2 (2 ln log2 n + ln(1/alpha) + 1/2 + ln 2) / (n / 2))`, +inf for n <= 1.
fn reference_width(n: u64) -> f64 {
    if n <= 1 {
        return f64::INFINITY;
    }
    let n = n as f64;
    let t = 2.0 * n.log2().ln() + (1.0 / ALPHA).ln() + 0.5;
    (2.0 * SIGMA * SIGMA * (t + 2f64.ln()) / (n / 2.0)).sqrt()
}

fn scan(from: u64, to: u64, target: f64) -> Option<u64> {
    (from..=to).find(|&n| reference_width(n) < target)
}

fn setup() -> (CantorFamily, DoublingWidth) {
    (
        CantorFamily::gaussian(0.0, 1.0, SIGMA).unwrap(),
        DoublingWidth::sub_gaussian(ALPHA, SIGMA).unwrap(),
    )
}

#[test]
fn matches_full_scan_through_depth_six() {
    let (fam, width) = setup();
    let mut from = 1;
    for k in 1..=6 {
        let target = separation_delta(k, &fam) / 2.0;
        // Earlier depths have larger targets, so the scan can resume where it stopped.
        let expected = scan(from, u64::MAX, target).unwrap();
        assert_eq!(compute_nk(&width, 2.0 * target, DEFAULT_N_MAX).unwrap(), expected, "k = {k}");
        from = expected;
    }
}

#[test]
fn matches_windowed_scan_at_depths_seven_and_eight() {
    const WINDOW: u64 = 5_000_000;
    let (fam, width) = setup();
    for k in 7..=8 {
        let target = separation_delta(k, &fam) / 2.0;
        let n_k = compute_nk(&width, 2.0 * target, DEFAULT_N_MAX).unwrap();
        assert!(reference_width(n_k) < target);
        assert_eq!(scan(n_k - WINDOW, n_k, target), Some(n_k), "k = {k}");
    }
}
