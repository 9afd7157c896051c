use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{create_file, derive_seed, map_replications, write_json, EstimatorKind, ExperimentConfig, SamplingMode};
use crate::bounds::indiv_cond_err_lb;
use crate::error::{Error, Result};
use crate::estimators::{DoublingMean, DoublingWidth, WidthFn};
use crate::families::{cantor_theta, closeness_delta, BitPrefix, CantorFamily, FamilyTag, Sampler, Tail};
use crate::reduction::{cond_err_budget, derived_test_bit, CondErrLedger, TestSchedule, DEFAULT_N_MAX};

/// The oracle estimate stays within this fraction of the width.
const ORACLE_SLACK: f64 = 0.99;

/// One depth of a testing-game report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub k: usize,
    pub n_k: u64,
    pub trials: u64,
    pub errors: u64,
    /// `None` when no replication reached depth `k`.
    pub cond_err_hat: Option<f64>,
    /// `1/4 exp(-Delta_k n_k / (1 - alpha))`.
    pub floor: f64,
}

/// Outcome of the sequential testing game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingGameReport {
    pub config: ExperimentConfig,
    pub replications: u64,
    /// Depths actually played; smaller than the configured depth when the
    /// schedule ran past the search limit.
    pub depth_played: usize,
    pub truncation: Option<String>,
    pub schedule: Vec<u64>,
    pub rows: Vec<GameRow>,
    pub ledger: CondErrLedger,
    pub total_cond_err: f64,
    pub total_cond_err_stderr: f64,
    /// `alpha / (1 - alpha)`.
    pub budget: f64,
    pub within_budget: bool,
    pub unobserved_depths: Vec<usize>,
}

impl TestingGameReport {
    /// Writes `summary.json` and `ledger.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        write_json(create_file(dir, "summary.json")?, self)?;
        let floors: Vec<f64> = self.rows.iter().map(|r| r.floor).collect();
        self.ledger.write_csv(create_file(dir, "ledger.csv")?, &floors)
    }
}

/// Plays the testing game derived from an estimator: draw `v` uniformly at
/// the configured depth, estimate at each `n_k`, project, and tally bit errors
/// conditional on earlier bits being right.
pub fn run_testing_game(config: &ExperimentConfig) -> Result<TestingGameReport> {
    config.validate()?;
    let fam = config.cantor_family()?;
    if config.estimator == EstimatorKind::Doubling {
        let ok = match config.sampling {
            SamplingMode::Blocks => config.family == FamilyTag::Gaussian,
            SamplingMode::Stream => matches!(config.family, FamilyTag::Gaussian | FamilyTag::Cauchy),
        };
        if !ok {
            return Err(Error::Config(format!(
                "the doubling estimator cannot play on the {} family with {:?} sampling",
                config.family, config.sampling
            )));
        }
    }
    let width = DoublingWidth::sub_gaussian(config.alpha, config.sigma)?;
    let (schedule, truncated) = TestSchedule::compute_truncated(&width, &fam, config.depth, DEFAULT_N_MAX);
    if schedule.depth() == 0 {
        return Err(truncated.expect("an empty schedule comes from exhaustion"));
    }

    let vhats = map_replications(config.reps, config.threads, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i, "testgame"));
        let v = BitPrefix::random(&mut rng, config.depth);
        let theta = cantor_theta(&v, &fam);
        let estimates = match config.estimator {
            EstimatorKind::Oracle => oracle_estimates(&mut rng, theta, &width, &schedule),
            EstimatorKind::Doubling => match config.sampling {
                SamplingMode::Blocks => block_estimates(&mut rng, theta, config.sigma, &schedule),
                SamplingMode::Stream => stream_estimates(&mut rng, &fam, theta, &schedule),
            },
        };
        let bits = estimates
            .iter()
            .enumerate()
            .map(|(k, &est)| derived_test_bit(est, &fam, k + 1))
            .collect();
        (v, BitPrefix::new(bits, Tail::AllZeros))
    })?;

    let mut ledger = CondErrLedger::new(schedule.depth());
    for (v, vhat) in &vhats {
        ledger.record(v, vhat);
    }
    let rows = (1..=schedule.depth())
        .map(|k| {
            Ok(GameRow {
                k,
                n_k: schedule.n(k),
                trials: ledger.trials(k),
                errors: ledger.errors(k),
                cond_err_hat: ledger.cond_err_hat(k),
                floor: indiv_cond_err_lb(closeness_delta(k as u32, &fam), schedule.n(k), config.alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = ledger.total_cond_err();
    let stderr = ledger.total_cond_err_stderr();
    let budget = cond_err_budget(config.alpha);
    Ok(TestingGameReport {
        config: config.clone(),
        replications: config.reps,
        depth_played: schedule.depth(),
        truncation: truncated.map(|e| e.to_string()),
        schedule: schedule.as_slice().to_vec(),
        rows,
        unobserved_depths: ledger.unobserved_depths(),
        total_cond_err: total,
        total_cond_err_stderr: stderr,
        budget,
        within_budget: total <= budget + 2.0 * stderr,
        ledger,
    })
}

fn oracle_estimates(rng: &mut ChaCha8Rng, theta: f64, width: &dyn WidthFn, schedule: &TestSchedule) -> Vec<f64> {
    schedule
        .as_slice()
        .iter()
        .map(|&n_k| {
            let xi: f64 = rng.random_range(-1.0..=1.0);
            theta + ORACLE_SLACK * xi * width.width(n_k)
        })
        .collect()
}

/// The doubling estimate at `n` is the mean of the first `2^floor(log2 n)`
/// draws. For Gaussian data the sums over successive blocks are independent
/// normals, so drawing them directly gives the estimates their exact joint law.
fn block_estimates(rng: &mut ChaCha8Rng, theta: f64, sigma: f64, schedule: &TestSchedule) -> Vec<f64> {
    let mut used = 0u64;
    let mut sum = 0.0;
    schedule
        .as_slice()
        .iter()
        .map(|&n_k| {
            let m = 1u64 << n_k.ilog2();
            if m > used {
                let len = (m - used) as f64;
                let z: f64 = rng.sample(StandardNormal);
                sum += theta * len + sigma * len.sqrt() * z;
                used = m;
            }
            sum / m as f64
        })
        .collect()
}

fn stream_estimates(rng: &mut ChaCha8Rng, fam: &CantorFamily, theta: f64, schedule: &TestSchedule) -> Vec<f64> {
    let mut sampler = Sampler::new(fam.base(), theta, rng.random());
    let mut state = DoublingMean::new();
    schedule
        .as_slice()
        .iter()
        .map(|&n_k| {
            while state.count() < n_k {
                state.push(sampler.draw_scalar());
            }
            state.estimate().expect("n_k >= 1")
        })
        .collect()
}
