//! Hard-instance families indexed by infinite bit sequences.
//!
//! A [`CantorFamily`] places a parametric model at the points of a shifted
//! Cantor set, `theta(v) = theta0 + 2 r sum_i v_i 3^{-i}`, so that indices first
//! differing at bit `k` are at least `3^{-k} r` apart in parameter while
//! indices sharing their first `k` bits are within KL `M 9^{-k} r^2`.
//! The nonparametric counterpart for median estimation lives in [`median`].

pub mod median;

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl_cauchy_loc, kl_gaussian_loc, kl_logistic_glm, AtomicDist, Nats};
use crate::error::{Error, Result};

pub use median::{median_family_center, median_family_kl_numeric, MedianFamily};

/// Default truncation depth for bit sequences.
pub const DEFAULT_DEPTH: usize = 12;

/// How a finite prefix continues past its last stored bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    AllZeros,
    AllOnes,
}

impl Tail {
    fn digit(self) -> bool {
        matches!(self, Tail::AllOnes)
    }
}

/// A point of `{0,1}^infinity` stored as a finite prefix plus a constant tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPrefix {
    bits: Vec<bool>,
    tail: Tail,
}

impl BitPrefix {
    pub fn new(bits: Vec<bool>, tail: Tail) -> Self {
        BitPrefix { bits, tail }
    }

    /// Convenience constructor from 0/1 digits; anything nonzero is a 1.
    pub fn from_digits(digits: &[u8], tail: Tail) -> Self {
        BitPrefix::new(digits.iter().map(|d| *d != 0).collect(), tail)
    }

    pub fn zeros(len: usize) -> Self {
        BitPrefix::new(vec![false; len], Tail::AllZeros)
    }

    pub fn ones(len: usize) -> Self {
        BitPrefix::new(vec![true; len], Tail::AllOnes)
    }

    /// Uniformly random prefix of length `len` (tail of zeros).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        BitPrefix::new((0..len).map(|_| rng.random::<bool>()).collect(), Tail::AllZeros)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// The `k`-th bit (1-based) of the infinite sequence, using the tail
    /// beyond the stored prefix.
    pub fn bit(&self, k: usize) -> bool {
        assert!(k >= 1, "bits are indexed from 1");
        self.bits.get(k - 1).copied().unwrap_or_else(|| self.tail.digit())
    }

    /// The first `k` bits, with a zero tail.
    pub fn prefix(&self, k: usize) -> BitPrefix {
        BitPrefix::new((1..=k).map(|i| self.bit(i)).collect(), Tail::AllZeros)
    }

    /// Whether the first `k` bits agree.
    pub fn agrees_through(&self, other: &BitPrefix, k: usize) -> bool {
        (1..=k).all(|i| self.bit(i) == other.bit(i))
    }

    /// Index (1-based) of the first differing bit of the two infinite
    /// sequences, or `None` if they are identical.
    pub fn first_difference(&self, other: &BitPrefix) -> Option<usize> {
        let stored = self.len().max(other.len());
        if let Some(k) = (1..=stored).find(|&i| self.bit(i) != other.bit(i)) {
            return Some(k);
        }
        (self.tail != other.tail).then_some(stored + 1)
    }

    /// Extends (or truncates) to exactly `len` stored bits.
    pub fn with_len(&self, len: usize) -> BitPrefix {
        BitPrefix::new((1..=len).map(|i| self.bit(i)).collect(), self.tail)
    }
}

impl fmt::Display for BitPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        f.write_str(match self.tail {
            Tail::AllZeros => "(0)",
            Tail::AllOnes => "(1)",
        })
    }
}

/// Which family a sample path or experiment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Gaussian,
    Cauchy,
    Logistic,
    Median,
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyTag::Gaussian => "gaussian",
            FamilyTag::Cauchy => "cauchy",
            FamilyTag::Logistic => "logistic",
            FamilyTag::Median => "median",
        })
    }
}

impl std::str::FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(FamilyTag::Gaussian),
            "cauchy" => Ok(FamilyTag::Cauchy),
            "logistic" => Ok(FamilyTag::Logistic),
            "median" => Ok(FamilyTag::Median),
            other => Err(Error::Config(format!("unknown family {other:?}"))),
        }
    }
}

/// The parametric model placed at each Cantor point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseModel {
    /// `N(theta, sigma^2)`.
    GaussianLoc { sigma: f64 },
    /// Cauchy with location `theta` and scale `sigma`.
    CauchyLoc { sigma: f64 },
    /// Logistic regression with labels in {-1, +1} and covariates `X ~ covariates`.
    LogisticGlm { covariates: AtomicDist },
}

impl BaseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseModel::GaussianLoc { sigma } | BaseModel::CauchyLoc { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Domain(format!("scale must be positive, got {sigma}")));
                }
            }
            BaseModel::LogisticGlm { covariates } => {
                if covariates.second_moment() <= 0.0 {
                    return Err(Error::Domain("covariates must have E[X^2] > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> FamilyTag {
        match self {
            BaseModel::GaussianLoc { .. } => FamilyTag::Gaussian,
            BaseModel::CauchyLoc { .. } => FamilyTag::Cauchy,
            BaseModel::LogisticGlm { .. } => FamilyTag::Logistic,
        }
    }

    /// The constant `M` with `KL(P_theta || P_theta') <= M (theta - theta')^2`.
    pub fn curvature(&self) -> f64 {
        match self {
            BaseModel::GaussianLoc { sigma } => 1.0 / (2.0 * sigma * sigma),
            BaseModel::CauchyLoc { sigma } => 1.0 / (4.0 * sigma * sigma),
            BaseModel::LogisticGlm { covariates } => covariates.second_moment(),
        }
    }

    /// Exact KL divergence between the models at `theta` and `theta_prime`.
    pub fn kl(&self, theta: f64, theta_prime: f64) -> Nats {
        let delta = theta - theta_prime;
        match self {
            BaseModel::GaussianLoc { sigma } => kl_gaussian_loc(delta, *sigma).expect("validated"),
            BaseModel::CauchyLoc { sigma } => kl_cauchy_loc(delta, *sigma).expect("validated"),
            BaseModel::LogisticGlm { covariates } => kl_logistic_glm(theta, theta_prime, covariates),
        }
    }
}

/// Tolerance when checking a user-supplied `M` against the base model.
pub const CURVATURE_TOLERANCE: f64 = 1e-12;

/// A parametric model indexed by the shifted Cantor set
/// `[theta0, theta0 + r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CantorFamilyRepr")]
pub struct CantorFamily {
    theta0: f64,
    r: f64,
    base: BaseModel,
    curvature: f64,
}

#[derive(Deserialize)]
struct CantorFamilyRepr {
    theta0: f64,
    r: f64,
    base: BaseModel,
    curvature: Option<f64>,
}

impl TryFrom<CantorFamilyRepr> for CantorFamily {
    type Error = Error;

    fn try_from(repr: CantorFamilyRepr) -> Result<Self> {
        let family = CantorFamily::new(repr.theta0, repr.r, repr.base)?;
        match repr.curvature {
            Some(m) => family.with_curvature(m),
            None => Ok(family),
        }
    }
}

impl CantorFamily {
    pub fn new(theta0: f64, r: f64, base: BaseModel) -> Result<Self> {
        if !theta0.is_finite() {
            return Err(Error::Domain(format!("theta0 must be finite, got {theta0}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        base.validate()?;
        let curvature = base.curvature();
        Ok(CantorFamily {
            theta0,
            r,
            base,
            curvature,
        })
    }

    pub fn gaussian(theta0: f64, r: f64, sigma: f64) -> Result<Self> {
        CantorFamily::new(theta0, r, BaseModel::GaussianLoc { sigma })
    }

    pub fn cauchy(theta0: f64, r: f64, sigma: f64) -> Result<Self> {
        CantorFamily::new(theta0, r, BaseModel::CauchyLoc { sigma })
    }

    pub fn logistic(theta0: f64, r: f64, covariates: AtomicDist) -> Result<Self> {
        CantorFamily::new(theta0, r, BaseModel::LogisticGlm { covariates })
    }

    /// Checks an explicitly supplied `M` against the one implied by the base.
    pub fn with_curvature(self, m: f64) -> Result<Self> {
        if (m - self.curvature).abs() > CURVATURE_TOLERANCE {
            return Err(Error::Config(format!(
                "M = {m} inconsistent with base model (expected {})",
                self.curvature
            )));
        }
        Ok(self)
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn base(&self) -> &BaseModel {
        &self.base
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn tag(&self) -> FamilyTag {
        self.base.tag()
    }
}

/// `theta(v) = theta0 + 2 r sum_i v_i 3^{-i}`, with the tail summed in closed form.
pub fn cantor_theta(v: &BitPrefix, fam: &CantorFamily) -> f64 {
    // Horner from the deepest digit; an all-ones tail has scaled value 1.
    let mut scaled = match v.tail() {
        Tail::AllZeros => 0.0,
        Tail::AllOnes => 1.0,
    };
    for &b in v.bits().iter().rev() {
        scaled = (if b { 2.0 } else { 0.0 } + scaled) / 3.0;
    }
    fam.theta0 + fam.r * scaled
}

/// Parameter separation `delta_k = 3^{-k} r` (for `k >= 1`).
pub fn separation_delta(k: u32, fam: &CantorFamily) -> f64 {
    3f64.powi(-(k as i32)) * fam.r
}

/// Distribution closeness `Delta_k = M 9^{-k} r^2` (for `k >= 1`).
pub fn closeness_delta(k: u32, fam: &CantorFamily) -> Nats {
    Nats::clamped(fam.curvature * 9f64.powi(-(k as i32)) * fam.r * fam.r)
}

/// One draw from a family member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Scalar(f64),
    Labeled { x: f64, y: f64 },
}

/// Stored draws of a sample path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observations {
    Scalar(Vec<f64>),
    Labeled(Vec<(f64, f64)>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Scalar(v) => v.len(),
            Observations::Labeled(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An i.i.d. sample from one family member, reproducible from
/// `(family, v, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub family: FamilyTag,
    pub v: BitPrefix,
    pub seed: u64,
    pub values: Observations,
}

impl SamplePath {
    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.values {
            Observations::Scalar(v) => Some(v),
            Observations::Labeled(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

enum SamplerModel {
    Gaussian { sigma: f64 },
    Cauchy { sigma: f64 },
    Logistic { atoms: Vec<f64>, index: WeightedIndex<f64> },
}

/// A seeded stream of i.i.d. draws from the model at a fixed parameter.
pub struct Sampler {
    rng: ChaCha8Rng,
    theta: f64,
    model: SamplerModel,
}

impl Sampler {
    pub fn new(base: &BaseModel, theta: f64, seed: u64) -> Self {
        let model = match base {
            BaseModel::GaussianLoc { sigma } => SamplerModel::Gaussian { sigma: *sigma },
            BaseModel::CauchyLoc { sigma } => SamplerModel::Cauchy { sigma: *sigma },
            BaseModel::LogisticGlm { covariates } => SamplerModel::Logistic {
                atoms: covariates.values().to_vec(),
                index: WeightedIndex::new(covariates.weights().probs())
                    .expect("validated weights"),
            },
        };
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            theta,
            model,
        }
    }

    pub fn for_index(fam: &CantorFamily, v: &BitPrefix, seed: u64) -> Self {
        Sampler::new(fam.base(), cantor_theta(v, fam), seed)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn draw(&mut self) -> Observation {
        match &self.model {
            SamplerModel::Gaussian { sigma } => {
                let z: f64 = self.rng.sample(StandardNormal);
                Observation::Scalar(self.theta + sigma * z)
            }
            SamplerModel::Cauchy { sigma } => {
                let u: f64 = self.rng.random();
                let z = (std::f64::consts::PI * (u - 0.5)).tan();
                Observation::Scalar(self.theta + sigma * z)
            }
            SamplerModel::Logistic { atoms, index } => {
                let x = atoms[index.sample(&mut self.rng)];
                let p_one = 1.0 / (1.0 + (-2.0 * x * self.theta).exp());
                let y = if self.rng.random::<f64>() < p_one { 1.0 } else { -1.0 };
                Observation::Labeled { x, y }
            }
        }
    }

    /// Next draw of a location model. Panics for the regression model.
    pub fn draw_scalar(&mut self) -> f64 {
        match self.draw() {
            Observation::Scalar(x) => x,
            Observation::Labeled { .. } => panic!("regression draws are labeled pairs"),
        }
    }
}

/// `n` i.i.d. draws from `P_{theta(v)}`.
pub fn sample_path(fam: &CantorFamily, v: &BitPrefix, n: usize, seed: u64) -> SamplePath {
    let mut sampler = Sampler::for_index(fam, v, seed);
    let values = match fam.base() {
        BaseModel::LogisticGlm { .. } => Observations::Labeled(
            (0..n)
                .map(|_| match sampler.draw() {
                    Observation::Labeled { x, y } => (x, y),
                    Observation::Scalar(_) => unreachable!(),
                })
                .collect(),
        ),
        _ => Observations::Scalar((0..n).map(|_| sampler.draw_scalar()).collect()),
    };
    SamplePath {
        family: fam.tag(),
        v: v.clone(),
        seed,
        values,
    }
}
