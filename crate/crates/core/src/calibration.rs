//! Per-bucket confidence thresholds.
//!
//! A prediction `(mu, sigma)` becomes the range
//! `[mu - sigma * lt_j, mu + sigma * ut_j]`, where bucket `j` is the half-open
//! interval `[k * width, (k + 1) * width)` containing `mu`. Thresholds are
//! one-sided empirical quantiles of normalized residuals, chosen so that on the
//! calibration data a fraction `target_fpr * side_split` of each bucket falls
//! below its range and `target_fpr * (1 - side_split)` above it.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! values `v[0..n]` and level `p`, `h = (n - 1) * p` and the result is
//! `v[floor(h)] + (h - floor(h)) * (v[floor(h) + 1] - v[floor(h)])`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{JamError, Result};
use crate::format::{parse_versioned, read_file, to_text, write_file};

pub const TABLE_VERSION: u32 = 1;
const KIND: &str = "threshold table";

/// A model output paired with the true age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub mu: f64,
    pub sigma: f64,
    pub truth: f64,
}

/// What the thresholds multiply when forming a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeScale {
    /// Thresholds multiply the predicted sigma.
    Sigma,
    /// Thresholds are offsets in years; sigma is ignored.
    Unit,
}

impl RangeScale {
    #[inline]
    fn of(self, sigma: f64) -> f64 {
        match self {
            RangeScale::Sigma => sigma,
            RangeScale::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    pub target_fpr: f64,
    pub bucket_width: f64,
    /// Share of the FPR budget spent below the range.
    pub side_split: f64,
    pub min_bucket_n: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            target_fpr: 0.005,
            bucket_width: 5.0,
            side_split: 0.5,
            min_bucket_n: 50,
        }
    }
}

impl CalibrationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fpr > 0.0 && self.target_fpr < 0.5) {
            return Err(JamError::Domain {
                what: "target_fpr",
                value: self.target_fpr,
                domain: "(0, 0.5)",
            });
        }
        if !(self.bucket_width.is_finite() && self.bucket_width > 0.0) {
            return Err(JamError::Domain {
                what: "bucket_width",
                value: self.bucket_width,
                domain: "(0, inf)",
            });
        }
        if !(self.side_split > 0.0 && self.side_split <= 1.0) {
            return Err(JamError::Domain {
                what: "side_split",
                value: self.side_split,
                domain: "(0, 1]",
            });
        }
        if self.min_bucket_n == 0 {
            return Err(JamError::InvalidConfig("min_bucket_n must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub lt: f64,
    pub ut: f64,
    /// Calibration samples whose mu fell in this bucket.
    pub n: usize,
}

/// Where a table came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub scale: RangeScale,
    pub target_fpr: f64,
    pub side_split: f64,
    pub bucket_width: f64,
    pub min_bucket_n: usize,
    pub fallback_lt: f64,
    pub fallback_ut: f64,
    pub buckets: Vec<Bucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Confidence range around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeRange {
    pub lo: f64,
    pub hi: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Index into the table's buckets, or `None` when fallbacks applied.
    pub bucket_index: Option<usize>,
}

impl AgeRange {
    /// Closed-interval membership.
    pub fn contains(&self, age: f64) -> bool {
        self.lo <= age && age <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl ThresholdTable {
    /// A single-threshold table with no buckets.
    pub fn uniform(lt: f64, ut: f64) -> Result<Self> {
        let t = Self {
            scale: RangeScale::Sigma,
            target_fpr: CalibrationSettings::default().target_fpr,
            side_split: 0.5,
            bucket_width: CalibrationSettings::default().bucket_width,
            min_bucket_n: CalibrationSettings::default().min_bucket_n,
            fallback_lt: lt,
            fallback_ut: ut,
            buckets: Vec::new(),
            provenance: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, message: String| JamError::Format {
            kind: KIND,
            field: name.to_string(),
            message,
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(field(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("fallback_lt", self.fallback_lt)?;
        nonneg("fallback_ut", self.fallback_ut)?;
        if !(self.bucket_width.is_finite() && self.bucket_width > 0.0) {
            return Err(field(
                "bucket_width",
                format!("must be > 0, got {}", self.bucket_width),
            ));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(field(
                "target_fpr",
                format!("must be in (0, 1), got {}", self.target_fpr),
            ));
        }
        if !(self.side_split > 0.0 && self.side_split <= 1.0) {
            return Err(field(
                "side_split",
                format!("must be in (0, 1], got {}", self.side_split),
            ));
        }
        for (j, b) in self.buckets.iter().enumerate() {
            nonneg(&format!("buckets[{j}].lt"), b.lt)?;
            nonneg(&format!("buckets[{j}].ut"), b.ut)?;
            let k = (b.lo / self.bucket_width).round();
            if b.lo != k * self.bucket_width || b.hi != (k + 1.0) * self.bucket_width {
                return Err(field(
                    &format!("buckets[{j}]"),
                    format!(
                        "[{}, {}) is not aligned to width {}",
                        b.lo, b.hi, self.bucket_width
                    ),
                ));
            }
            if j > 0 && self.buckets[j - 1].hi != b.lo {
                return Err(field(
                    &format!("buckets[{j}].lo"),
                    "buckets must be sorted and contiguous".into(),
                ));
            }
        }
        Ok(())
    }

    fn first_index(&self) -> Option<i64> {
        self.buckets
            .first()
            .map(|b| (b.lo / self.bucket_width).round() as i64)
    }

    /// Bucket containing `mu` under the half-open rule, if calibrated.
    pub fn bucket_for(&self, mu: f64) -> Option<usize> {
        let first = self.first_index()?;
        let k = bucket_index(mu, self.bucket_width) - first;
        (0..self.buckets.len() as i64)
            .contains(&k)
            .then_some(k as usize)
    }

    /// `(lt, ut)` applying to `mu`.
    pub fn thresholds_for(&self, mu: f64) -> (f64, f64) {
        match self.bucket_for(mu) {
            Some(j) => (self.buckets[j].lt, self.buckets[j].ut),
            None => (self.fallback_lt, self.fallback_ut),
        }
    }

    /// Copy with every lower threshold multiplied by `lower` and every upper
    /// threshold by `upper`.
    pub fn scaled(&self, lower: f64, upper: f64) -> Self {
        let mut t = self.clone();
        t.fallback_lt *= lower;
        t.fallback_ut *= upper;
        for b in &mut t.buckets {
            b.lt *= lower;
            b.ut *= upper;
        }
        t
    }
}

/// `floor(mu / width)`, nudged so that `k * width <= mu < (k + 1) * width`
/// holds exactly in floating point.
fn bucket_index(mu: f64, width: f64) -> i64 {
    let mut k = (mu / width).floor();
    if k * width > mu {
        k -= 1.0;
    } else if (k + 1.0) * width <= mu {
        k += 1.0;
    }
    k as i64
}

/// Range for one prediction.
pub fn range_for(mu: f64, sigma: f64, table: &ThresholdTable) -> Result<AgeRange> {
    if !mu.is_finite() {
        return Err(JamError::NonFinite {
            what: "mu",
            index: 0,
            value: mu,
        });
    }
    if !sigma.is_finite() {
        return Err(JamError::NonFinite {
            what: "sigma",
            index: 0,
            value: sigma,
        });
    }
    if sigma <= 0.0 {
        return Err(JamError::Domain {
            what: "sigma",
            value: sigma,
            domain: "(0, inf)",
        });
    }
    let bucket_index = table.bucket_for(mu);
    let (lt, ut) = table.thresholds_for(mu);
    let s = table.scale.of(sigma);
    Ok(AgeRange {
        lo: mu - s * lt,
        hi: mu + s * ut,
        mu,
        sigma,
        bucket_index,
    })
}

/// Empirical quantile with linear interpolation. `sorted` must be ascending
/// and non-empty; `p` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Normalized residuals on each side of mu within one group of predictions.
#[derive(Default)]
struct Sides {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Sides {
    fn push(&mut self, p: &LabeledPrediction, scale: RangeScale) {
        let s = scale.of(p.sigma);
        if p.truth < p.mu {
            self.lower.push((p.mu - p.truth) / s);
        } else {
            self.upper.push((p.truth - p.mu) / s);
        }
    }

    fn total(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    fn sort(&mut self) {
        self.lower.sort_by(f64::total_cmp);
        self.upper.sort_by(f64::total_cmp);
    }
}

/// Threshold for one side: the level is chosen so that the expected number of
/// exceedances is `budget * total`, i.e. `budget` of the whole group.
fn side_threshold(sorted: &[f64], budget: f64, total: usize) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let level = 1.0 - budget * total as f64 / sorted.len() as f64;
    quantile_sorted(sorted, level)
}

/// Calibrates sigma-multiplier thresholds.
pub fn calibrate(
    predictions: &[LabeledPrediction],
    settings: &CalibrationSettings,
) -> Result<ThresholdTable> {
    calibrate_with_scale(predictions, settings, RangeScale::Sigma)
}

/// Shared calibration routine; `RangeScale::Unit` yields sigma-blind offsets.
pub fn calibrate_with_scale(
    predictions: &[LabeledPrediction],
    settings: &CalibrationSettings,
    scale: RangeScale,
) -> Result<ThresholdTable> {
    settings.validate()?;
    if predictions.len() < settings.min_bucket_n {
        return Err(JamError::Calibration(format!(
            "need at least {} predictions, got {}",
            settings.min_bucket_n,
            predictions.len()
        )));
    }
    for (i, p) in predictions.iter().enumerate() {
        for (what, v) in [("mu", p.mu), ("sigma", p.sigma), ("truth", p.truth)] {
            if !v.is_finite() {
                return Err(JamError::NonFinite {
                    what,
                    index: i,
                    value: v,
                });
            }
        }
        if p.sigma <= 0.0 {
            return Err(JamError::Domain {
                what: "sigma",
                value: p.sigma,
                domain: "(0, inf)",
            });
        }
    }

    let width = settings.bucket_width;
    let lower_budget = settings.target_fpr * settings.side_split;
    let upper_budget = settings.target_fpr * (1.0 - settings.side_split);

    let index: Vec<i64> = predictions
        .iter()
        .map(|p| bucket_index(p.mu, width))
        .collect();
    let k_min = *index.iter().min().expect("non-empty");
    let k_max = *index.iter().max().expect("non-empty");

    let mut global = Sides::default();
    let mut per_bucket: Vec<Sides> = (k_min..=k_max).map(|_| Sides::default()).collect();
    for (p, &k) in predictions.iter().zip(&index) {
        global.push(p, scale);
        per_bucket[(k - k_min) as usize].push(p, scale);
    }
    global.sort();
    let fallback_lt = side_threshold(&global.lower, lower_budget, global.total());
    let fallback_ut = side_threshold(&global.upper, upper_budget, global.total());

    let buckets = per_bucket
        .into_iter()
        .enumerate()
        .map(|(j, mut sides)| {
            sides.sort();
            let k = (k_min + j as i64) as f64;
            let total = sides.total();
            let lt = if sides.lower.len() >= settings.min_bucket_n {
                side_threshold(&sides.lower, lower_budget, total)
            } else {
                fallback_lt
            };
            let ut = if sides.upper.len() >= settings.min_bucket_n {
                side_threshold(&sides.upper, upper_budget, total)
            } else {
                fallback_ut
            };
            Bucket {
                lo: k * width,
                hi: (k + 1.0) * width,
                lt,
                ut,
                n: total,
            }
        })
        .collect();

    let table = ThresholdTable {
        scale,
        target_fpr: settings.target_fpr,
        side_split: settings.side_split,
        bucket_width: width,
        min_bucket_n: settings.min_bucket_n,
        fallback_lt,
        fallback_ut,
        buckets,
        provenance: None,
    };
    table.validate()?;
    Ok(table)
}

/// Two-piece normal density sharing the mode `mu`: std `sigma * lt` below
/// and `sigma * ut` at or above it. Each half carries probability 1/2.
pub fn piecewise_pdf(x: f64, mu: f64, sigma: f64, lt: f64, ut: f64) -> Result<f64> {
    for (what, v) in [("sigma", sigma), ("lt", lt), ("ut", ut)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(JamError::Domain {
                what,
                value: v,
                domain: "(0, inf)",
            });
        }
    }
    let s = if x < mu { sigma * lt } else { sigma * ut };
    let z = (x - mu) / s;
    Ok((-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
}

pub fn write_table(table: &ThresholdTable) -> Result<String> {
    #[derive(Serialize)]
    struct File<'a> {
        format_version: u32,
        #[serde(flatten)]
        table: &'a ThresholdTable,
    }
    to_text(
        &File {
            format_version: TABLE_VERSION,
            table,
        },
        KIND,
    )
}

pub fn read_table(text: &str) -> Result<ThresholdTable> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        #[allow(dead_code)]
        format_version: u32,
        scale: RangeScale,
        target_fpr: f64,
        side_split: f64,
        bucket_width: f64,
        min_bucket_n: usize,
        fallback_lt: f64,
        fallback_ut: f64,
        buckets: Vec<Bucket>,
        #[serde(default)]
        provenance: Option<Provenance>,
    }
    let f: File = parse_versioned(text, KIND, TABLE_VERSION)?;
    let table = ThresholdTable {
        scale: f.scale,
        target_fpr: f.target_fpr,
        side_split: f.side_split,
        bucket_width: f.bucket_width,
        min_bucket_n: f.min_bucket_n,
        fallback_lt: f.fallback_lt,
        fallback_ut: f.fallback_ut,
        buckets: f.buckets,
        provenance: f.provenance,
    };
    table.validate()?;
    Ok(table)
}

pub fn save_table(path: impl AsRef<Path>, table: &ThresholdTable) -> Result<()> {
    write_file(path.as_ref(), &write_table(table)?)
}

pub fn load_table(path: impl AsRef<Path>) -> Result<ThresholdTable> {
    read_table(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn settings(target_fpr: f64) -> CalibrationSettings {
        CalibrationSettings {
            target_fpr,
            ..Default::default()
        }
    }

    /// Residuals drawn from N(0, sigma^2) with sigma varying per sample, so the
    /// predicted sigma is exactly right.
    fn gaussian_predictions(n: usize, seed: u64, mu_range: (f64, f64)) -> Vec<LabeledPrediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mu = rng.random_range(mu_range.0..mu_range.1);
                let sigma = rng.random_range(0.5..6.0);
                let z: f64 = rng.sample(StandardNormal);
                LabeledPrediction {
                    mu,
                    sigma,
                    truth: mu + sigma * z,
                }
            })
            .collect()
    }

    fn outside_fraction(preds: &[LabeledPrediction], table: &ThresholdTable) -> f64 {
        let out = preds
            .iter()
            .filter(|p| !range_for(p.mu, p.sigma, table).unwrap().contains(p.truth))
            .count();
        out as f64 / preds.len() as f64
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 8.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn perfect_predictor_collapses_ranges() {
        let preds: Vec<_> = (0..500)
            .map(|i| {
                let mu = 3.0 + i as f64 * 0.17;
                LabeledPrediction {
                    mu,
                    sigma: 1.0 + (i % 7) as f64,
                    truth: mu,
                }
            })
            .collect();
        let t = calibrate(&preds, &settings(0.05)).unwrap();
        assert_eq!((t.fallback_lt, t.fallback_ut), (0.0, 0.0));
        assert!(t.buckets.iter().all(|b| b.lt == 0.0 && b.ut == 0.0));
        let r = range_for(40.0, 3.0, &t).unwrap();
        assert_eq!((r.lo, r.hi), (40.0, 40.0));
    }

    #[test]
    fn gaussian_residuals_recover_normal_quantile() {
        let preds = gaussian_predictions(50_000, 1, (30.0, 35.0));
        let t = calibrate(&preds, &settings(0.05)).unwrap();
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
        assert_eq!(t.buckets.len(), 1);
        let b = t.buckets[0];
        assert!((b.lt - z).abs() < 0.1, "lt {}", b.lt);
        assert!((b.ut - z).abs() < 0.1, "ut {}", b.ut);
    }

    #[test]
    fn held_out_coverage_matches_target() {
        let calib = gaussian_predictions(100_000, 2, (0.0, 100.0));
        let held = gaussian_predictions(100_000, 3, (0.0, 100.0));
        let t = calibrate(&calib, &settings(0.01)).unwrap();
        let fpr = outside_fraction(&held, &t);
        assert!((fpr - 0.01).abs() < 0.002, "held-out fpr {fpr}");
    }

    #[test]
    fn range_arithmetic_and_boundaries() {
        let mut t = ThresholdTable::uniform(9.0, 9.0).unwrap();
        t.buckets = vec![
            Bucket {
                lo: 25.0,
                hi: 30.0,
                lt: 1.0,
                ut: 1.0,
                n: 10,
            },
            Bucket {
                lo: 30.0,
                hi: 35.0,
                lt: 1.5,
                ut: 2.0,
                n: 10,
            },
        ];
        t.validate().unwrap();
        let r = range_for(30.0, 2.0, &t).unwrap();
        assert_eq!((r.lo, r.hi, r.bucket_index), (27.0, 34.0, Some(1)));
        assert_eq!(range_for(25.0, 1.0, &t).unwrap().bucket_index, Some(0));
        assert_eq!(range_for(29.999, 1.0, &t).unwrap().bucket_index, Some(0));
        let outside = range_for(50.0, 1.0, &t).unwrap();
        assert_eq!(
            (outside.lo, outside.hi, outside.bucket_index),
            (41.0, 59.0, None)
        );
        let tiny = range_for(30.0, 1e-300, &t).unwrap();
        assert_eq!((tiny.lo, tiny.hi), (30.0, 30.0));
        assert!(range_for(30.0, 0.0, &t).is_err());
        assert!(range_for(f64::NAN, 1.0, &t).is_err());
    }

    #[test]
    fn negative_bucket_indices() {
        assert_eq!(bucket_index(-0.5, 5.0), -1);
        assert_eq!(bucket_index(-5.0, 5.0), -1);
        assert_eq!(bucket_index(0.0, 5.0), 0);
        // The invariant is exact in floating point, not in decimal: 3 * 0.1 > 0.3.
        assert_eq!(bucket_index(0.3, 0.1), 2);
        for i in -200..200 {
            let mu = i as f64 * 0.37;
            for w in [0.1, 1.0, 2.5, 5.0, 7.0] {
                let k = bucket_index(mu, w) as f64;
                assert!(k * w <= mu && mu < (k + 1.0) * w, "mu {mu} width {w}");
            }
        }
    }

    #[test]
    fn sparse_buckets_use_fallback() {
        let mut preds = gaussian_predictions(5_000, 4, (40.0, 45.0));
        preds.extend(gaussian_predictions(20, 5, (80.0, 85.0)));
        let t = calibrate(&preds, &settings(0.05)).unwrap();
        let last = t.buckets.last().unwrap();
        assert_eq!((last.lt, last.ut), (t.fallback_lt, t.fallback_ut));
        assert_eq!(last.n, 20);
        // Empty buckets between the clusters also fall back.
        assert!(t
            .buckets
            .iter()
            .filter(|b| b.n == 0)
            .all(|b| b.lt == t.fallback_lt));
    }

    #[test]
    fn calibration_input_errors() {
        assert!(calibrate(&gaussian_predictions(10, 0, (0.0, 5.0)), &settings(0.05)).is_err());
        let preds = gaussian_predictions(100, 0, (0.0, 5.0));
        assert!(calibrate(&preds, &settings(0.6)).is_err());
        assert!(calibrate(&preds, &settings(0.0)).is_err());
        let mut bad = preds.clone();
        bad[3].sigma = -1.0;
        assert!(calibrate(&bad, &settings(0.05)).is_err());
    }

    #[test]
    fn symmetric_pdf_is_gaussian() {
        let normal = |x: f64, m: f64, s: f64| {
            (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        for x in [-3.0, 10.0, 19.99, 20.0, 20.01, 31.0] {
            let p = piecewise_pdf(x, 20.0, 2.5, 1.7, 1.7).unwrap();
            assert!((p - normal(x, 20.0, 2.5 * 1.7)).abs() < 1e-12);
        }
    }

    /// Composite Simpson's rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
        let h = (b - a) / intervals as f64;
        let mut sum = f(a) + f(b);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn asymmetric_pdf_integrates_to_one() {
        let (mu, sigma, lt, ut) = (35.0, 3.0, 1.2, 2.9);
        let pdf = |x| piecewise_pdf(x, mu, sigma, lt, ut).unwrap();
        // Integrate each half separately so the kink sits on a node; the
        // left half takes its limit value at mu.
        let left = simpson(
            |x: f64| pdf(x.min(mu - 1e-12)),
            mu - 12.0 * sigma * lt,
            mu,
            10_000,
        );
        let right = simpson(pdf, mu, mu + 12.0 * sigma * ut, 10_000);
        assert!((left - 0.5).abs() < 1e-6 && (right - 0.5).abs() < 1e-6);
        let below = piecewise_pdf(mu - 1e-12, mu, sigma, lt, ut).unwrap();
        let at = piecewise_pdf(mu, mu, sigma, lt, ut).unwrap();
        assert!((below / at - ut / lt).abs() < 1e-9);
        assert!(piecewise_pdf(1.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(piecewise_pdf(1.0, 0.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn table_file_round_trip_and_validation() {
        let mut t = calibrate(
            &gaussian_predictions(3_000, 6, (10.0, 40.0)),
            &settings(0.05),
        )
        .unwrap();
        t.provenance = Some(Provenance {
            seed: Some(4),
            model: None,
            data: Some("x.csv".into()),
        });
        let text = write_table(&t).unwrap();
        assert_eq!(read_table(&text).unwrap(), t);

        let negative = text.replacen("lt = ", "lt = -", 1);
        assert!(read_table(&negative).is_err());

        let missing: String = text
            .lines()
            .filter(|l| !l.starts_with("fallback_ut"))
            .map(|l| format!("{l}\n"))
            .collect();
        match read_table(&missing) {
            Err(JamError::Format { field, .. }) => assert_eq!(field, "fallback_ut"),
            other => panic!("unexpected {other:?}"),
        }
        let future = text.replacen("format_version = 1", "format_version = 7", 1);
        assert!(matches!(
            read_table(&future),
            Err(JamError::UnsupportedVersion { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn in_sample_coverage_bound(seed in 0u64..1000, fpr in 0.01f64..0.3, split in 0.1f64..1.0) {
            let preds = gaussian_predictions(4_000, seed, (0.0, 60.0));
            let s = CalibrationSettings { target_fpr: fpr, side_split: split, ..Default::default() };
            let t = calibrate(&preds, &s).unwrap();
            let out = outside_fraction(&preds, &t);
            prop_assert!(out <= fpr + 2.0 / s.min_bucket_n as f64, "out {out} fpr {fpr}");
        }

        #[test]
        fn lower_fpr_never_shrinks_thresholds(seed in 0u64..1000, a in 0.01f64..0.49, b in 0.01f64..0.49) {
            let preds = gaussian_predictions(2_000, seed, (0.0, 40.0));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let strict = calibrate(&preds, &settings(lo)).unwrap();
            let loose = calibrate(&preds, &settings(hi)).unwrap();
            prop_assert!(strict.fallback_lt >= loose.fallback_lt && strict.fallback_ut >= loose.fallback_ut);
            for (s, l) in strict.buckets.iter().zip(&loose.buckets) {
                prop_assert!(s.lt >= l.lt && s.ut >= l.ut);
            }
        }

        #[test]
        fn bucket_depends_on_mu_only_and_width_scales(mu in 0.0f64..100.0, sigma in 0.01f64..20.0, k in 0.01f64..50.0) {
            let t = calibrate(&gaussian_predictions(2_000, 9, (0.0, 100.0)), &settings(0.05)).unwrap();
            let a = range_for(mu, sigma, &t).unwrap();
            let b = range_for(mu, sigma * k, &t).unwrap();
            prop_assert_eq!(a.bucket_index, b.bucket_index);
            prop_assert!((b.width() - k * a.width()).abs() <= 1e-9 * b.width().max(1.0));
        }
    }
}
