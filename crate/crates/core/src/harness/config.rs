use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::divergence::AtomicDist;
use crate::error::{Error, Result};
use crate::families::{CantorFamily, FamilyTag, DEFAULT_DEPTH};

/// Master seed used when none is given anywhere.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Environment variable consulted for the seed when no flag or config value sets it.
pub const SEED_ENV: &str = "ANYTIME_SEED";

/// Deepest Cantor level an experiment may use.
pub const MAX_DEPTH: usize = DEFAULT_DEPTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Coverage,
    Testgame,
}

/// Which estimate the testing game plugs into the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The doubling mean with its sub-Gaussian width.
    #[default]
    Doubling,
    /// The true parameter perturbed by strictly less than the width.
    Oracle,
}

/// How the testing game produces the doubling estimate at each `n_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Draw the Gaussian sums over each new doubling block directly; same law
    /// as streaming, at a cost independent of `n_k`.
    #[default]
    Blocks,
    /// Draw every observation.
    Stream,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doubling" => Ok(EstimatorKind::Doubling),
            "oracle" => Ok(EstimatorKind::Oracle),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(SamplingMode::Blocks),
            "stream" => Ok(SamplingMode::Stream),
            other => Err(Error::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Everything an experiment depends on. Loaded from TOML; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub family: FamilyTag,
    pub sigma: f64,
    pub theta0: f64,
    pub r: f64,
    pub alpha: f64,
    pub horizon: u64,
    pub reps: u64,
    pub depth: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub estimator: EstimatorKind,
    pub sampling: SamplingMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Coverage,
            family: FamilyTag::Gaussian,
            sigma: 1.0,
            theta0: 0.0,
            r: 1.0,
            alpha: 0.1,
            horizon: 1 << 15,
            reps: 2000,
            depth: 6,
            seed: DEFAULT_SEED,
            out: None,
            threads: None,
            estimator: EstimatorKind::Doubling,
            sampling: SamplingMode::Blocks,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Like [`ExperimentConfig::from_path`], also reporting whether the file
    /// sets `seed` itself (so that a seed from the environment only replaces the default).
    pub fn from_path_with_seed_flag(path: &Path) -> Result<(Self, bool)> {
        let text = std::fs::read_to_string(path)?;
        let table: toml::Table = toml::from_str(&text)?;
        Ok((Self::from_toml_str(&text)?, table.contains_key("seed")))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.reps < 1 {
            return fail(format!("reps must be >= 1, got {}", self.reps));
        }
        if self.horizon < 4 {
            return fail(format!("horizon must be >= 4, got {}", self.horizon));
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return fail(format!("depth must be in [1, {MAX_DEPTH}], got {}", self.depth));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.r > 0.0 && self.r.is_finite()) || !self.theta0.is_finite() {
            return fail(format!("need finite theta0 and r > 0, got {} and {}", self.theta0, self.r));
        }
        if self.threads == Some(0) {
            return fail("threads must be >= 1".into());
        }
        Ok(())
    }

    /// The Cantor family described by the config. Logistic models use
    /// Rademacher covariates; the median family has no Cantor form.
    pub fn cantor_family(&self) -> Result<CantorFamily> {
        let fam = match self.family {
            FamilyTag::Gaussian => CantorFamily::gaussian(self.theta0, self.r, self.sigma),
            FamilyTag::Cauchy => CantorFamily::cauchy(self.theta0, self.r, self.sigma),
            FamilyTag::Logistic => CantorFamily::logistic(self.theta0, self.r, AtomicDist::rademacher()),
            FamilyTag::Median => {
                return Err(Error::Config("the median family is not a Cantor family".into()))
            }
        };
        fam.map_err(|e| Error::Config(e.to_string()))
    }
}

/// Seed precedence: explicit value, then `ANYTIME_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(explicit: Option<u64>, env_value: Option<&str>) -> Result<u64> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    match env_value {
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {text:?}"))),
        None => Ok(DEFAULT_SEED),
    }
}
