//! Heteroscedastic synthetic age features.
//!
//! A sample's features are `Phi(age) + eps`. `Phi` is a fixed random linear map
//! of the nine-element basis
//! `[a, sin(k*pi*a), cos(k*pi*a)]` for `k = 1..4`, where `a = age / 115`.
//! The noise `eps` is zero-mean Gaussian with per-coordinate standard deviation
//! `group_noise_mult[g] * (noise_base + noise_slope * age / 115)`.
//!
//! All randomness comes from ChaCha8 streams (`rand_chacha`), seeded through
//! `SeedableRng::seed_from_u64`. The embedding has its own seed so that
//! datasets drawn with different sample seeds share the same `Phi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{JamError, Result};

pub const BASIS_LEN: usize = 9;
pub const DEFAULT_EMBEDDING_SEED: u64 = 0x4A41_4D00;

const AGE_SCALE: f64 = 115.0;
const MIN_AGE: f64 = 3.0;
const MAX_AGE: f64 = 91.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n: usize,
    pub input_dim: usize,
    pub noise_base: f64,
    pub noise_slope: f64,
    pub groups: u32,
    pub group_noise_mult: Vec<f64>,
    pub seed: u64,
    pub embedding_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            input_dim: 16,
            noise_base: 0.2,
            noise_slope: 1.0,
            groups: 4,
            group_noise_mult: vec![0.5, 1.0, 1.5, 2.0],
            seed: 0,
            embedding_seed: DEFAULT_EMBEDDING_SEED,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(JamError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("gen.n must be >= 1".into());
        }
        if self.input_dim == 0 {
            return bad("gen.input_dim must be >= 1".into());
        }
        if !(self.noise_base.is_finite() && self.noise_base >= 0.0) {
            return bad(format!(
                "gen.noise_base must be >= 0, got {}",
                self.noise_base
            ));
        }
        if !(self.noise_slope.is_finite() && self.noise_slope >= 0.0) {
            return bad(format!(
                "gen.noise_slope must be >= 0, got {}",
                self.noise_slope
            ));
        }
        if self.groups == 0 {
            return bad("gen.groups must be >= 1".into());
        }
        if self.group_noise_mult.len() != self.groups as usize {
            return bad(format!(
                "gen.group_noise_mult has {} entries but gen.groups = {}",
                self.group_noise_mult.len(),
                self.groups
            ));
        }
        if let Some(m) = self
            .group_noise_mult
            .iter()
            .find(|m| !(m.is_finite() && **m > 0.0))
        {
            return bad(format!("gen.group_noise_mult entries must be > 0, got {m}"));
        }
        Ok(())
    }

    /// Noise standard deviation per feature coordinate.
    pub fn noise_std(&self, age: f64, group: u32) -> f64 {
        self.group_noise_mult[group as usize]
            * (self.noise_base + self.noise_slope * age / AGE_SCALE)
    }
}

/// The deterministic age-to-feature map `Phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    input_dim: usize,
    // input_dim x BASIS_LEN, row-major
    weights: Vec<f64>,
}

impl Embedding {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (BASIS_LEN as f64).sqrt();
        let weights = (0..input_dim * BASIS_LEN)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Self { input_dim, weights }
    }

    pub fn basis(age: f64) -> [f64; BASIS_LEN] {
        let a = age / AGE_SCALE;
        let mut out = [0.0; BASIS_LEN];
        out[0] = a;
        for k in 1..=4 {
            let angle = k as f64 * a * std::f64::consts::PI;
            out[2 * k - 1] = angle.sin();
            out[2 * k] = angle.cos();
        }
        out
    }

    pub fn map(&self, age: f64) -> Vec<f64> {
        let basis = Self::basis(age);
        self.weights
            .chunks_exact(BASIS_LEN)
            .map(|row| row.iter().zip(&basis).map(|(w, b)| w * b).sum())
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Draws `cfg.n` samples with ages uniform on `[3, 91]`.
pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let embedding = Embedding::new(cfg.input_dim, cfg.embedding_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let age = rng.random_range(MIN_AGE..=MAX_AGE);
        let group = rng.random_range(0..cfg.groups);
        let std = cfg.noise_std(age, group);
        let features = embedding
            .map(age)
            .into_iter()
            .map(|phi| phi + std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        samples.push(Sample {
            id: format!("s{}-{i:07}", cfg.seed),
            age,
            group,
            features,
        });
    }
    Dataset::new(cfg.input_dim, samples)
}
