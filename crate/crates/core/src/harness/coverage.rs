use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create_file, derive_seed, map_replications, wilson_interval, write_csv_rows, write_json, ExperimentConfig};
use crate::bounds::indiv_cond_err_lb;
use crate::error::{Error, Result};
use crate::estimators::{first_failure, DoublingMean, DoublingWidth, WidthFn};
use crate::families::{cantor_theta, closeness_delta, sample_path, BitPrefix, FamilyTag, Tail};
use crate::reduction::{derived_test_bit, CondErrLedger, TestSchedule};

const Z_95: f64 = 1.959_963_984_540_054;

/// Outcome of a coverage experiment.
///
/// `wall_clock_seconds` is measured but not serialized, so that written
/// reports depend only on the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub replications: u64,
    /// Paths on which the estimate left its width at some `n <= horizon`.
    pub failures: u64,
    pub coverage: f64,
    pub coverage_ci95_low: f64,
    pub coverage_ci95_high: f64,
    pub target: f64,
    /// First failing `n` -> number of paths.
    pub first_failure_histogram: BTreeMap<u64, u64>,
    /// `n_k` for the depths whose test fits within the horizon.
    pub schedule: Vec<u64>,
    pub ledger: CondErrLedger,
    /// Paths that stayed covered yet decoded a wrong bit; always 0 for a sound reduction.
    pub soundness_violations: u64,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    n: u64,
    count: u64,
}

impl CoverageReport {
    /// Writes `summary.json`, `ledger.csv` and `failures.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        write_json(create_file(dir, "summary.json")?, self)?;
        let fam = self.config.cantor_family()?;
        let floors: Vec<f64> = self
            .schedule
            .iter()
            .enumerate()
            .map(|(i, &n_k)| indiv_cond_err_lb(closeness_delta(i as u32 + 1, &fam), n_k, self.config.alpha))
            .collect::<Result<_>>()?;
        self.ledger.write_csv(create_file(dir, "ledger.csv")?, &floors)?;
        write_csv_rows(
            create_file(dir, "failures.csv")?,
            &["n", "count"],
            self.first_failure_histogram.iter().map(|(&n, &count)| HistogramRow { n, count }),
        )
    }
}

/// Coverage of the doubling estimator with its sub-Gaussian width on a
/// Gaussian Cantor family.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageReport> {
    config.validate()?;
    let width = DoublingWidth::sub_gaussian(config.alpha, config.sigma)?;
    run_coverage_with_width(config, &width)
}

struct Replication {
    failure: Option<u64>,
    v: BitPrefix,
    vhat: BitPrefix,
}

/// [`run_coverage`] with an arbitrary width function.
pub fn run_coverage_with_width(config: &ExperimentConfig, width: &dyn WidthFn) -> Result<CoverageReport> {
    config.validate()?;
    if config.family != FamilyTag::Gaussian {
        return Err(Error::Config(format!(
            "coverage needs the gaussian family, got {}",
            config.family
        )));
    }
    let start = Instant::now();
    let fam = config.cantor_family()?;
    let horizon = config.horizon;
    let (schedule, _) = TestSchedule::compute_truncated(width, &fam, config.depth, horizon);
    let table: Vec<f64> = (0..=horizon).map(|n| width.width(n)).collect();
    let tabulated = |n: u64| table[n as usize];

    let reps = map_replications(config.reps, config.threads, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i, "coverage"));
        let v = BitPrefix::random(&mut rng, config.depth);
        let theta = cantor_theta(&v, &fam);
        let path = sample_path(&fam, &v, horizon as usize, rng.random());
        let values = path.scalars().expect("gaussian paths are scalar");
        let failure = first_failure(values, theta, &tabulated, horizon);

        let mut state = DoublingMean::new();
        let mut bits = Vec::with_capacity(schedule.depth());
        for (k, &n_k) in schedule.as_slice().iter().enumerate() {
            while state.count() < n_k {
                state.push(values[state.count() as usize]);
            }
            let estimate = state.estimate().expect("n_k >= 1");
            bits.push(derived_test_bit(estimate, &fam, k + 1));
        }
        Replication {
            failure,
            v,
            vhat: BitPrefix::new(bits, Tail::AllZeros),
        }
    })?;

    let mut histogram = BTreeMap::new();
    let mut ledger = CondErrLedger::new(config.depth);
    let mut soundness_violations = 0;
    for rep in &reps {
        match rep.failure {
            Some(n) => *histogram.entry(n).or_insert(0) += 1,
            None => {
                if !rep.vhat.agrees_through(&rep.v, rep.vhat.len()) {
                    soundness_violations += 1;
                }
            }
        }
        ledger.record(&rep.v, &rep.vhat);
    }
    let failures: u64 = histogram.values().sum();
    let covered = config.reps - failures;
    let (lo, hi) = wilson_interval(covered, config.reps, Z_95);
    Ok(CoverageReport {
        config: config.clone(),
        replications: config.reps,
        failures,
        coverage: covered as f64 / config.reps as f64,
        coverage_ci95_low: lo,
        coverage_ci95_high: hi,
        target: 1.0 - config.alpha,
        first_failure_histogram: histogram,
        schedule: schedule.as_slice().to_vec(),
        ledger,
        soundness_violations,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 1 << 10,
            reps: 200,
            depth: 4,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn infinite_width_always_covers() {
        let report = run_coverage_with_width(&small(), &|_: u64| f64::INFINITY).unwrap();
        assert_eq!(report.failures, 0);
        assert_eq!(report.coverage, 1.0);
        assert!(report.schedule.is_empty());
        assert_eq!(report.ledger.unobserved_depths(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn zero_width_never_covers() {
        let report = run_coverage_with_width(&small(), &|_: u64| 0.0).unwrap();
        assert_eq!(report.failures, 200);
        assert_eq!(report.first_failure_histogram.get(&1), Some(&200));
    }

    #[test]
    fn report_is_consistent() {
        // n_1 is about 1200 and n_2 about 11000 at alpha = 0.1.
        let report = run_coverage(&ExperimentConfig { horizon: 1 << 14, ..small() }).unwrap();
        assert!(report.failures <= report.replications);
        assert!(report.coverage_ci95_low <= report.coverage && report.coverage <= report.coverage_ci95_high);
        assert_eq!(report.soundness_violations, 0);
        assert!(report.coverage >= 0.85, "{}", report.coverage);
        assert!(!report.schedule.is_empty());
        assert_eq!(report.schedule.len(), 2);
        assert!(report.schedule.iter().all(|&n| n <= 1 << 14));
        assert_eq!(report.ledger.unobserved_depths(), vec![3, 4]);
    }

    #[test]
    fn thread_count_does_not_change_report() {
        let one = run_coverage(&ExperimentConfig { threads: Some(1), ..small() }).unwrap();
        let three = run_coverage(&ExperimentConfig { threads: Some(3), ..small() }).unwrap();
        let strip = |r: &CoverageReport| {
            let mut r = r.clone();
            r.config.threads = None;
            serde_json::to_string(&r).unwrap()
        };
        assert_eq!(strip(&one), strip(&three));
    }

    #[test]
    fn rejects_non_gaussian() {
        let cfg = ExperimentConfig { family: FamilyTag::Cauchy, ..small() };
        assert!(matches!(run_coverage(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn outputs_are_reproducible() {
        let cfg = ExperimentConfig { horizon: 4, reps: 1, ..small() };
        let dir = tempfile::tempdir().unwrap();
        let mut dumps = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(run);
            run_coverage(&cfg).unwrap().write_outputs(&out).unwrap();
            dumps.push(
                ["summary.json", "ledger.csv", "failures.csv"]
                    .map(|f| std::fs::read(out.join(f)).unwrap()),
            );
        }
        assert_eq!(dumps[0], dumps[1]);
        let header = String::from_utf8(dumps[0][2].clone()).unwrap();
        assert!(header.starts_with("n,count\n"));
    }
}
