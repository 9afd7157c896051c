//! Monte Carlo experiments: coverage of the doubling estimator, the
//! sequential testing game and randomized inequality checks.
//!
//! Every replication draws from its own generator seeded by [`derive_seed`],
//! and per-replication results are combined in replication order, so reports
//! do not depend on the number of threads.

mod config;
mod coverage;
mod game;
mod inequality;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::{
    resolve_seed, EstimatorKind, ExperimentConfig, ExperimentKind, SamplingMode, DEFAULT_SEED, MAX_DEPTH, SEED_ENV,
};
pub use coverage::{run_coverage, run_coverage_with_width, CoverageReport};
pub use game::{run_testing_game, TestingGameReport};
pub use inequality::{
    run_inequality_suite, run_inequality_suite_with, CheckSummary, Counterexample, InequalityReport, DEFAULT_TOLERANCES,
    Tolerances,
};

/// Seed for replication `replication` of stream `stream` under `master`.
///
/// The first eight bytes of `SHA-256(master || replication || stream)`, with
/// the integers little-endian.
pub fn derive_seed(master: u64, replication: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs `work(i)` for `i in 0..reps`, on `threads` workers when given, and
/// returns the results in index order.
pub(crate) fn map_replications<T, F>(reps: u64, threads: Option<usize>, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let run = || (0..reps).into_par_iter().map(&work).collect::<Vec<T>>();
    match threads {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(run))
        }
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize, W: Write>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// CSV with an explicit header, so that files with no rows still carry one.
pub(crate) fn write_csv_rows<T: Serialize, W: Write>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn create_file(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::create_dir_all(dir)?;
    Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
}
