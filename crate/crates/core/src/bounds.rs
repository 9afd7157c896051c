//! Closed-form lower bounds on time-uniform widths and testing errors.
//!
//! `log log n` means the natural logarithm applied twice. The doubling width
//! in [`crate::estimators`] counts epochs with `log2`; the two are unrelated.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::divergence::Nats;
use crate::error::{Error, Result};
use crate::estimators::WidthFn;
use crate::families::{closeness_delta, separation_delta, CantorFamily};
use crate::reduction::compute_nk;

/// Smallest `n` accepted by the `log log n` curves.
pub const LOGLOG_N_MIN: u64 = 16;

/// Largest Fisher matrix accepted by [`semiparam_constant`].
pub const MAX_FISHER_DIM: usize = 64;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
    }
}

fn loglog_rate(n: u64) -> Result<f64> {
    if n < LOGLOG_N_MIN {
        return Err(Error::Domain(format!("log log n bound needs n >= {LOGLOG_N_MIN}, got {n}")));
    }
    let n = n as f64;
    Ok((n.ln().ln() / n).sqrt())
}

/// `sqrt((1 - alpha) / (8 M)) * sqrt(log log n / n)`: no `(alpha, t)`-estimator
/// over a family with curvature `m` can have a smaller width at `n`.
pub fn lb_loglog(n: u64, alpha: f64, m: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("curvature", m)?;
    Ok(((1.0 - alpha) / (8.0 * m)).sqrt() * loglog_rate(n)?)
}

/// `1/2 sqrt(log(1 / (4 alpha)) / (M n))`, the fixed-`n` price of confidence `alpha < 1/4`.
pub fn lb_fixed_alpha(n: u64, alpha: f64, m: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("curvature", m)?;
    if alpha >= 0.25 {
        return Err(Error::Domain(format!("bound is vacuous for alpha >= 1/4, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(0.5 * ((1.0 / (4.0 * alpha)).ln() / (m * n as f64)).sqrt())
}

/// `1/4 exp(-n M delta^2)`: larger of the two error probabilities of any
/// test between parameters `delta` apart.
pub fn two_point_error_lb(n: u64, m: f64, delta: f64) -> f64 {
    0.25 * (-(n as f64) * m * delta * delta).exp()
}

/// `(1 - alpha) log(k) / Delta_k`, the sample size the `k`-th test must exceed
/// for infinitely many `k`.
pub fn testing_lb_threshold(k: u32, delta_k: Nats, alpha: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("threshold needs k >= 2, got {k}")));
    }
    if !(delta_k.value() > 0.0) {
        return Err(Error::Domain(format!("closeness must be positive, got {delta_k}")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok((1.0 - alpha) * f64::from(k).ln() / delta_k.value())
}

/// `1/4 exp(-Delta_k n_k / (1 - alpha))`, floor on the conditional error of the `k`-th test.
pub fn indiv_cond_err_lb(delta_k: Nats, n_k: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(0.25 * (-delta_k.value() * n_k as f64 / (1.0 - alpha)).exp())
}

/// `grad' I^{-1} grad` for a symmetric positive-definite Fisher matrix given by rows.
pub fn semiparam_constant(grad_phi: &[f64], fisher: &[Vec<f64>]) -> Result<f64> {
    let d = grad_phi.len();
    if d == 0 || d > MAX_FISHER_DIM {
        return Err(Error::Argument(format!("dimension must be in 1..={MAX_FISHER_DIM}, got {d}")));
    }
    if fisher.len() != d {
        return Err(Error::Dimension { left: d, right: fisher.len() });
    }
    if let Some(row) = fisher.iter().find(|row| row.len() != d) {
        return Err(Error::Dimension { left: d, right: row.len() });
    }
    let matrix = DMatrix::from_fn(d, d, |i, j| fisher[i][j]);
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    for i in 0..d {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::Decomposition(format!("fisher matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let chol = matrix
        .cholesky()
        .ok_or_else(|| Error::Decomposition("fisher matrix is not positive definite".into()))?;
    let g = DVector::from_column_slice(grad_phi);
    let c = g.dot(&chol.solve(&g));
    Ok(c.max(0.0))
}

/// A lower-bound curve `n -> bound`, defined for `n >= n_min`.
pub struct BoundCurve {
    label: String,
    n_min: u64,
    eval: Box<dyn Fn(u64) -> f64 + Send + Sync>,
}

impl BoundCurve {
    pub fn new(label: impl Into<String>, n_min: u64, eval: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        BoundCurve {
            label: label.into(),
            n_min,
            eval: Box::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_min(&self) -> u64 {
        self.n_min
    }

    pub fn eval(&self, n: u64) -> Result<f64> {
        if n < self.n_min {
            return Err(Error::Domain(format!("{} is defined for n >= {}, got {n}", self.label, self.n_min)));
        }
        Ok((self.eval)(n))
    }
}

impl std::fmt::Debug for BoundCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundCurve").field("label", &self.label).field("n_min", &self.n_min).finish()
    }
}

pub fn loglog_curve(alpha: f64, m: f64) -> Result<BoundCurve> {
    lb_loglog(LOGLOG_N_MIN, alpha, m)?;
    Ok(BoundCurve::new("lb_loglog", LOGLOG_N_MIN, move |n| {
        lb_loglog(n, alpha, m).expect("validated")
    }))
}

pub fn fixed_alpha_curve(alpha: f64, m: f64) -> Result<BoundCurve> {
    lb_fixed_alpha(1, alpha, m)?;
    Ok(BoundCurve::new("lb_fixed_alpha", 1, move |n| {
        lb_fixed_alpha(n, alpha, m).expect("validated")
    }))
}

/// `1/4 sqrt((1 - alpha) c) sqrt(log log n / n)` for a semiparametric constant `c`.
pub fn semiparam_lb_curve(alpha: f64, c: f64) -> Result<BoundCurve> {
    check_alpha(alpha)?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("constant must be non-negative, got {c}")));
    }
    let scale = 0.25 * ((1.0 - alpha) * c).sqrt();
    Ok(BoundCurve::new("lb_semiparam", LOGLOG_N_MIN, move |n| {
        scale * loglog_rate(n).expect("n checked by curve")
    }))
}

/// Summed error `2 Phi(-sqrt(n) delta / (2 sigma))` of the midpoint test between
/// `N(theta, sigma^2)` and `N(theta + delta, sigma^2)` from `n` samples.
pub fn gaussian_optimal_test_error(n: u64, delta: f64, sigma: f64) -> f64 {
    erfc((n as f64).sqrt() * delta / (2.0 * sigma * std::f64::consts::SQRT_2))
}

/// One depth of a [`necessary_condition_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryConditionRow {
    pub k: u32,
    pub n_k: u64,
    pub threshold: f64,
    pub satisfied: bool,
}

/// Compares each `n_k` implied by `width` with `(1 - alpha) log(k) / Delta_k`
/// for `k` in `k_range` (a subrange of `2..=20`).
pub fn necessary_condition_check(
    fam: &CantorFamily,
    width: &dyn WidthFn,
    alpha: f64,
    k_range: std::ops::RangeInclusive<u32>,
    n_max: u64,
) -> Result<Vec<NecessaryConditionRow>> {
    if *k_range.start() < 2 || *k_range.end() > 20 {
        return Err(Error::Argument(format!("k range must lie in [2, 20], got {k_range:?}")));
    }
    k_range
        .map(|k| {
            let n_k = compute_nk(width, separation_delta(k, fam), n_max)?;
            let threshold = testing_lb_threshold(k, closeness_delta(k, fam), alpha)?;
            Ok(NecessaryConditionRow {
                k,
                n_k,
                threshold,
                satisfied: n_k as f64 > threshold,
            })
        })
        .collect()
}

/// Depths below this may violate the necessary condition without counting against it.
pub const NECESSARY_CONDITION_K0: u32 = 3;

/// True when every row with `k >= k0` is satisfied.
pub fn necessary_condition_holds(rows: &[NecessaryConditionRow], k0: u32) -> bool {
    rows.iter().filter(|r| r.k >= k0).all(|r| r.satisfied)
}

/// `n_min ..= n_max` in `points` geometrically spaced integers, deduplicated.
pub fn log_grid(n_min: u64, n_max: u64, points: usize) -> Result<Vec<u64>> {
    if n_min == 0 || n_max < n_min || points == 0 {
        return Err(Error::Argument(format!(
            "need 1 <= n_min <= n_max and points >= 1, got {n_min}, {n_max}, {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![n_min]);
    }
    let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (x.exp().round() as u64).clamp(n_min, n_max)
        })
        .collect();
    grid.dedup();
    Ok(grid)
}

/// One row of the curve export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: u64,
    pub lb_loglog: f64,
    pub lb_fixed_alpha: f64,
    pub upper_width: f64,
}

/// Lower bounds and the doubling width on `grid`. Values outside a bound's
/// domain (including `lb_fixed_alpha` when `alpha >= 1/4`) are NaN.
pub fn curve_rows(grid: &[u64], alpha: f64, m: f64, width: &dyn WidthFn) -> Result<Vec<CurveRow>> {
    check_alpha(alpha)?;
    check_positive("curvature", m)?;
    Ok(grid
        .iter()
        .map(|&n| CurveRow {
            n,
            lb_loglog: lb_loglog(n, alpha, m).unwrap_or(f64::NAN),
            lb_fixed_alpha: lb_fixed_alpha(n, alpha, m).unwrap_or(f64::NAN),
            upper_width: width.width(n),
        })
        .collect())
}

/// Writes rows as CSV with header `n,lb_loglog,lb_fixed_alpha,upper_width`.
pub fn write_curves_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Result of comparing the doubling width against `lb_loglog` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub points: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub ratio_cap: f64,
    pub violations: Vec<u64>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `1 <= width(n) / lb_loglog(n) <= ratio_cap` at every grid point.
pub fn sandwich_check(grid: &[u64], alpha: f64, m: f64, width: &dyn WidthFn, ratio_cap: f64) -> Result<SandwichReport> {
    let mut report = SandwichReport {
        points: grid.len(),
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        ratio_cap,
        violations: Vec::new(),
    };
    for &n in grid {
        let lower = lb_loglog(n, alpha, m)?;
        let ratio = width.width(n) / lower;
        report.min_ratio = report.min_ratio.min(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
        if !(1.0..=ratio_cap).contains(&ratio) {
            report.violations.push(n);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::DoublingWidth;
    use crate::reduction::cond_err_budget;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn loglog_examples() {
        assert!(close(lb_loglog(1_000_000, 0.5, 0.5).unwrap(), 5.729_083_603_068_656e-4, 1e-12));
        assert!(lb_loglog(15, 0.5, 0.5).is_err());
        assert!(lb_loglog(16, 0.5, 0.5).unwrap() > 0.0);
        assert!(lb_loglog(1 << 20, 1.0 - 1e-12, 1.0).unwrap() < 1e-6);
        let a = lb_loglog(5000, 0.2, 0.3).unwrap();
        let b = lb_loglog(5000, 0.2, 1.2).unwrap();
        assert!(close(b, a / 2.0, 1e-14));
    }

    #[test]
    fn fixed_alpha_examples() {
        assert!(close(lb_fixed_alpha(100, 0.05, 0.5).unwrap(), 0.089_706_128_899_705_07, 1e-12));
        assert!(lb_fixed_alpha(100, 0.25, 0.5).is_err());
        assert!(lb_fixed_alpha(100, 0.25 - 1e-12, 0.5).unwrap() < 1e-6);
        let a = lb_fixed_alpha(100, 0.05, 0.5).unwrap();
        assert!(close(lb_fixed_alpha(400, 0.05, 0.5).unwrap(), a / 2.0, 1e-14));
    }

    #[test]
    fn two_point_examples() {
        assert!(close(two_point_error_lb(4, 0.5, 1.0), 0.033_833_820_809_153_17, 1e-14));
        assert_eq!(two_point_error_lb(0, 0.5, 1.0), 0.25);
        assert!(close(two_point_error_lb(10, 0.5, 1e-9), 0.25, 1e-12));
    }

    #[test]
    fn threshold_examples() {
        let t = testing_lb_threshold(2, Nats::new(1.0 / 18.0).unwrap(), 0.0).unwrap();
        assert!(close(t, 12.476_649_250_079_016, 1e-14));
        assert!(testing_lb_threshold(1, Nats::new(1.0).unwrap(), 0.1).is_err());
        assert!(testing_lb_threshold(5, Nats::new(1.0).unwrap(), 1.0 - 1e-12).unwrap() < 1e-10);
    }

    #[test]
    fn cond_err_floor_examples() {
        assert_eq!(indiv_cond_err_lb(Nats::ZERO, 100, 0.1).unwrap(), 0.25);
        let d = Nats::new(4f64.ln() * 0.5).unwrap();
        assert!(close(indiv_cond_err_lb(d, 1, 0.5).unwrap(), 1.0 / 16.0, 1e-14));
    }

    #[test]
    fn semiparam_examples() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(close(semiparam_constant(&[0.0, 1.0, 0.0], &id).unwrap(), 1.0, 1e-14));
        let diag = vec![vec![4.0, 0.0], vec![0.0, 1.0]];
        assert!(close(semiparam_constant(&[1.0, 0.0], &diag).unwrap(), 0.25, 1e-14));
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!(close(semiparam_constant(&[1.0, 1.0], &m).unwrap(), 2.0 / 3.0, 1e-14));

        let indefinite = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(semiparam_constant(&[1.0, 0.0], &indefinite), Err(Error::Decomposition(_))));
        let asym = vec![vec![2.0, 1.0], vec![0.0, 2.0]];
        assert!(matches!(semiparam_constant(&[1.0, 0.0], &asym), Err(Error::Decomposition(_))));
        assert!(matches!(semiparam_constant(&[1.0], &m), Err(Error::Dimension { .. })));
        assert!(semiparam_constant(&vec![1.0; 65], &vec![vec![0.0; 65]; 65]).is_err());
    }

    #[test]
    fn semiparam_curve_matches_loglog_for_parametric_case() {
        // Gaussian location with the mean as target: c = sigma^2.
        let sigma: f64 = 1.5;
        let c = semiparam_constant(&[1.0], &[vec![1.0 / (sigma * sigma)]]).unwrap();
        let curve = semiparam_lb_curve(0.1, c).unwrap();
        for n in [16u64, 1000, 1 << 30] {
            let expected = 0.25 * (0.9 * sigma * sigma).sqrt() * ((n as f64).ln().ln() / n as f64).sqrt();
            assert!(close(curve.eval(n).unwrap(), expected, 1e-13));
        }
        assert!(curve.eval(15).is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        // 30-digit reference values.
        let table = [
            (0.1, 0.887_537_083_981_715_108),
            (0.5, 0.479_500_122_186_953_462),
            (1.0, 0.157_299_207_050_285_131),
            (2.0, 0.004_677_734_981_047_265_84),
            (5.0, 1.537_459_794_428_034_85e-12),
            (10.0, 2.088_487_583_762_544_76e-45),
            (20.0, 5.395_865_611_607_900_93e-176),
        ];
        for (x, want) in table {
            assert!(close(erfc(x), want, 1e-12), "erfc({x}) = {:e}, rel {:e}", erfc(x), (erfc(x) - want).abs() / want);
        }
    }

    #[test]
    fn gaussian_test_error_dominates_two_point_floor() {
        for n in [1u64, 7, 100, 1000] {
            for i in 1..=200 {
                let delta = i as f64 * 0.01;
                let exact = gaussian_optimal_test_error(n, delta, 1.0);
                assert!(exact >= 0.5 * (-(n as f64) * delta * delta / 2.0).exp());
                assert!(exact >= 2.0 * two_point_error_lb(n, 0.5, delta));
            }
        }
        assert_eq!(gaussian_optimal_test_error(5, 0.0, 1.0), 1.0);
    }

    #[test]
    fn necessary_condition_examples() {
        let fam = CantorFamily::gaussian(0.0, 1.0, 1.0).unwrap();
        let width = DoublingWidth::sub_gaussian(0.1, 1.0).unwrap();
        let rows = necessary_condition_check(&fam, &width, 0.1, 2..=12, crate::reduction::DEFAULT_N_MAX).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(necessary_condition_holds(&rows, NECESSARY_CONDITION_K0));

        let rows = necessary_condition_check(&fam, &|_: u64| 0.0, 0.1, 2..=12, 100).unwrap();
        assert!(rows.iter().all(|r| r.n_k == 1));
        assert!(rows.iter().filter(|r| r.k >= 3).all(|r| !r.satisfied));

        assert!(necessary_condition_check(&fam, &width, 0.1, 1..=4, 100).is_err());
        assert!(necessary_condition_check(&fam, &width, 0.1, 2..=21, 100).is_err());
        assert!(matches!(
            necessary_condition_check(&fam, &width, 0.1, 2..=12, 1000),
            Err(Error::ScheduleExhausted { .. })
        ));
    }

    #[test]
    fn schedule_floors_fit_within_budget() {
        let alpha = 0.1;
        let fam = CantorFamily::gaussian(0.0, 1.0, 1.0).unwrap();
        let width = DoublingWidth::sub_gaussian(alpha, 1.0).unwrap();
        let total: f64 = (3..=12)
            .map(|k| {
                let n_k = compute_nk(&width, separation_delta(k, &fam), crate::reduction::DEFAULT_N_MAX).unwrap();
                indiv_cond_err_lb(closeness_delta(k, &fam), n_k, alpha).unwrap()
            })
            .sum();
        assert!(total <= cond_err_budget(alpha), "{total}");
    }

    #[test]
    fn grid_is_log_spaced_and_sorted() {
        let grid = log_grid(16, 1 << 20, 64).unwrap();
        assert_eq!(grid.first(), Some(&16));
        assert_eq!(grid.last(), Some(&(1 << 20)));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_grid(1, 10, 100).unwrap(), (1..=10).collect::<Vec<_>>());
        assert!(log_grid(10, 5, 3).is_err());
    }

    #[test]
    fn sandwich_and_csv() {
        let width = DoublingWidth::sub_gaussian(0.1, 1.0).unwrap();
        let grid = log_grid(16, 1 << 30, 200).unwrap();
        let report = sandwich_check(&grid, 0.1, 0.5, &width, 20.0).unwrap();
        assert!(report.holds(), "{report:?}");
        assert!(report.min_ratio >= 1.0 && report.max_ratio <= 20.0);
        assert!(!sandwich_check(&grid, 0.1, 0.5, &width, 2.0).unwrap().holds());

        let rows = curve_rows(&[16, 1024], 0.3, 0.5, &width).unwrap();
        assert!(rows.iter().all(|r| r.lb_fixed_alpha.is_nan()));
        let mut out = Vec::new();
        write_curves_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("n,lb_loglog,lb_fixed_alpha,upper_width\n16,"));
        assert_eq!(text.lines().count(), 3);
    }
}
