//! Samples, datasets, the synthetic generator and CSV ingestion.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use synth::{generate, Embedding, GenConfig, BASIS_LEN, DEFAULT_EMBEDDING_SEED};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JamError, Result};

/// Ages accepted on ingestion: `[0, MAX_INGEST_AGE)`.
pub const MAX_INGEST_AGE: f64 = 115.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// True age in years.
    pub age: f64,
    /// Breakdown label (stand-in for region or sex).
    pub group: u32,
    pub features: Vec<f64>,
}

/// A set of samples sharing one feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(input_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if input_dim == 0 {
            return Err(JamError::InvalidConfig("input_dim must be >= 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != input_dim {
                return Err(JamError::Shape(format!(
                    "sample {i} ({}) has {} features, expected {input_dim}",
                    s.id,
                    s.features.len()
                )));
            }
        }
        Ok(Self { input_dim, samples })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.age).collect()
    }

    pub fn groups(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.group).collect()
    }

    /// Row-major `len() x input_dim()` feature matrix.
    pub fn features_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.input_dim);
        for s in &self.samples {
            out.extend_from_slice(&s.features);
        }
        out
    }

    /// Seeded shuffle, then the first `round(len * first_fraction)` samples go
    /// to the first half.
    pub fn split(&self, first_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&first_fraction) {
            return Err(JamError::Domain {
                what: "split fraction",
                value: first_fraction,
                domain: "[0, 1]",
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (self.len() as f64 * first_fraction).round() as usize;
        let pick = |idx: &[usize]| Dataset {
            input_dim: self.input_dim,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        };
        Ok((pick(&order[..cut]), pick(&order[cut..])))
    }
}
