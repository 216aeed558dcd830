//! Evaluation: MAE, verification FPR/TPR, TPR matching between verification
//! methods, and comparability coverage and width.
//!
//! Verification orientation: a record's `flagged` bit means "treat as
//! potentially underage". FPR is the share of true adults (age >= legal age)
//! that were flagged; TPR is the share of true minors that were flagged.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{range_for, AgeRange, LabeledPrediction, ThresholdTable};
use crate::decision::{verify, DecisionRecord, VerificationMethod, VerificationPolicy};
use crate::error::{JamError, Result};
use crate::format::{to_text, write_file};

pub const REPORT_VERSION: u32 = 1;

pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(JamError::Shape(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(JamError::Empty("mae input"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / predictions.len() as f64)
}

pub fn per_group_mae(
    predictions: &[f64],
    truths: &[f64],
    groups: &[u32],
) -> Result<BTreeMap<u32, f64>> {
    if groups.len() != predictions.len() {
        return Err(JamError::Shape(format!(
            "{} predictions vs {} group labels",
            predictions.len(),
            groups.len()
        )));
    }
    mae(predictions, truths)?;
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for ((p, t), g) in predictions.iter().zip(truths).zip(groups) {
        let e = acc.entry(*g).or_default();
        e.0 += (p - t).abs();
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(g, (s, n))| (g, s / n as f64))
        .collect())
}

/// A rate that may be undefined because its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Defined(f64),
    Undefined,
}

impl Rate {
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Rate::Undefined
        } else {
            Rate::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Defined(v) => Some(v),
            Rate::Undefined => None,
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Defined(v) => s.serialize_f64(*v),
            Rate::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Rate::Defined(v)),
            Raw::Str(s) if s == "undefined" => Ok(Rate::Undefined),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid rate `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationRates {
    pub fpr: Rate,
    pub tpr: Rate,
    pub n_adult: usize,
    pub n_under: usize,
    pub flagged_adult: usize,
    pub flagged_under: usize,
}

pub fn verification_rates(
    records: &[DecisionRecord],
    truths: &[f64],
    legal_age: f64,
) -> Result<VerificationRates> {
    if records.len() != truths.len() {
        return Err(JamError::Shape(format!(
            "{} records vs {} truths",
            records.len(),
            truths.len()
        )));
    }
    let flags = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.flagged.ok_or_else(|| {
                JamError::InvalidConfig(format!("record {i} has no verification flag"))
            })
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(count_rates(&flags, truths, legal_age))
}

fn count_rates(flags: &[bool], truths: &[f64], legal_age: f64) -> VerificationRates {
    let (mut n_adult, mut n_under, mut flagged_adult, mut flagged_under) = (0, 0, 0, 0);
    for (&f, &t) in flags.iter().zip(truths) {
        if t >= legal_age {
            n_adult += 1;
            flagged_adult += usize::from(f);
        } else {
            n_under += 1;
            flagged_under += usize::from(f);
        }
    }
    VerificationRates {
        fpr: Rate::ratio(flagged_adult, n_adult),
        tpr: Rate::ratio(flagged_under, n_under),
        n_adult,
        n_under,
        flagged_adult,
        flagged_under,
    }
}

/// `n` points from `lo` to `hi` with a constant ratio between neighbours.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln() / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo * (ratio * i as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// The lower-threshold multipliers swept by [`match_tpr`] by default:
/// 200 geometric steps over `[0.25, 4]`.
pub fn default_tpr_grid() -> Vec<f64> {
    geometric_grid(0.25, 4.0, 200)
}

/// Result of matching the confidence method's TPR to singular regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprMatch {
    /// Multiplier applied to every lower threshold; absent for the trivial
    /// flag-nobody operating point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_scale: Option<f64>,
    pub confidence: VerificationRates,
    pub singular_regression: VerificationRates,
    /// `|confidence TPR - singular regression TPR|`.
    pub tpr_gap: f64,
}

/// Sweeps a scalar on the table's lower thresholds and picks the confidence
/// operating point whose TPR is closest to the singular-regression TPR
/// (ties go to the lower FPR).
pub fn match_tpr(
    predictions: &[LabeledPrediction],
    table: &ThresholdTable,
    legal_age: f64,
    challenge_age: f64,
    grid: &[f64],
) -> Result<TprMatch> {
    if predictions.is_empty() {
        return Err(JamError::Empty("predictions for TPR matching"));
    }
    let truths: Vec<f64> = predictions.iter().map(|p| p.truth).collect();
    let sr_policy = VerificationPolicy {
        legal_age,
        challenge_age,
        method: VerificationMethod::SingularRegression,
    };
    let conf_policy = VerificationPolicy {
        method: VerificationMethod::Confidence,
        ..sr_policy
    };
    let flags = |policy: &VerificationPolicy, t: Option<&ThresholdTable>| -> Result<Vec<bool>> {
        predictions
            .iter()
            .map(|p| Ok(verify(p.mu, p.sigma, policy, t)?.flagged.unwrap_or(false)))
            .collect()
    };
    let sr = count_rates(&flags(&sr_policy, None)?, &truths, legal_age);
    let target = sr.tpr.value().ok_or_else(|| {
        JamError::Calibration("singular-regression TPR is undefined: no minors in the data".into())
    })?;

    if target == 0.0 {
        let none = count_rates(&vec![false; truths.len()], &truths, legal_age);
        return Ok(TprMatch {
            lower_scale: None,
            confidence: none,
            singular_regression: sr,
            tpr_gap: 0.0,
        });
    }

    let mut best: Option<(f64, VerificationRates)> = None;
    let (mut min_tpr, mut max_tpr) = (f64::INFINITY, f64::NEG_INFINITY);
    for &k in grid {
        let scaled = table.scaled(k, 1.0);
        let rates = count_rates(&flags(&conf_policy, Some(&scaled))?, &truths, legal_age);
        let (tpr, fpr) = (
            rates.tpr.value().unwrap_or(0.0),
            rates.fpr.value().unwrap_or(0.0),
        );
        min_tpr = min_tpr.min(tpr);
        max_tpr = max_tpr.max(tpr);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let gap = (tpr - target).abs();
                let best_gap = (b.tpr.value().unwrap_or(0.0) - target).abs();
                gap < best_gap || (gap == best_gap && fpr < b.fpr.value().unwrap_or(0.0))
            }
        };
        if better {
            best = Some((k, rates));
        }
    }
    let (k, rates) = best.ok_or(JamError::Empty("TPR sweep grid"))?;
    if target < min_tpr || target > max_tpr {
        return Err(JamError::UnreachableTpr {
            target,
            min: min_tpr,
            max: max_tpr,
        });
    }
    Ok(TprMatch {
        lower_scale: Some(k),
        tpr_gap: (rates.tpr.value().unwrap_or(0.0) - target).abs(),
        confidence: rates,
        singular_regression: sr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityStats {
    pub n: usize,
    /// Share of truths outside the closed range.
    pub empirical_fpr: f64,
    /// Lower median for even counts.
    pub median_width: f64,
    pub mean_width: f64,
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(JamError::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

pub fn comparability_stats(ranges: &[AgeRange], truths: &[f64]) -> Result<ComparabilityStats> {
    if ranges.len() != truths.len() {
        return Err(JamError::Shape(format!(
            "{} ranges vs {} truths",
            ranges.len(),
            truths.len()
        )));
    }
    if ranges.is_empty() {
        return Err(JamError::Empty("comparability input"));
    }
    let outside = ranges
        .iter()
        .zip(truths)
        .filter(|(r, t)| !r.contains(**t))
        .count();
    let widths: Vec<f64> = ranges.iter().map(AgeRange::width).collect();
    Ok(ComparabilityStats {
        n: ranges.len(),
        empirical_fpr: outside as f64 / ranges.len() as f64,
        median_width: lower_median(&widths)?,
        mean_width: widths.iter().sum::<f64>() / widths.len() as f64,
    })
}

/// Ranges for every prediction under `table`.
pub fn ranges_for(
    predictions: &[LabeledPrediction],
    table: &ThresholdTable,
) -> Result<Vec<AgeRange>> {
    predictions
        .iter()
        .map(|p| range_for(p.mu, p.sigma, table))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketWidth {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub median_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_median_width: Option<f64>,
}

/// Median widths grouped by the confidence table's buckets of mu.
pub fn per_bucket_widths(
    ranges: &[AgeRange],
    table: &ThresholdTable,
    baseline: Option<&[AgeRange]>,
) -> Vec<BucketWidth> {
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = vec![Default::default(); table.buckets.len()];
    for (i, r) in ranges.iter().enumerate() {
        if let Some(j) = table.bucket_for(r.mu) {
            groups[j].0.push(r.width());
            if let Some(b) = baseline {
                groups[j].1.push(b[i].width());
            }
        }
    }
    table
        .buckets
        .iter()
        .zip(groups)
        .filter(|(_, (w, _))| !w.is_empty())
        .map(|(b, (w, bw))| BucketWidth {
            lo: b.lo,
            hi: b.hi,
            n: w.len(),
            median_width: lower_median(&w).expect("non-empty"),
            baseline_median_width: lower_median(&bw).ok(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSection {
    pub legal_age: f64,
    pub challenge_age: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_regression: Option<VerificationRates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<VerificationRates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<TprMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilitySection {
    pub confidence: ComparabilityStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ComparabilityStats>,
    /// `1 - confidence median width / baseline median width`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_width_reduction: Option<f64>,
    pub per_bucket: Vec<BucketWidth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub overall_mae: f64,
    pub per_group_mae: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparability: Option<ComparabilitySection>,
    /// Settings and inputs that produced the report.
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    /// Overall and per-group MAE for a set of predictions.
    pub fn estimation(predictions: &[f64], truths: &[f64], groups: &[u32]) -> Result<Self> {
        Ok(Self {
            n: predictions.len(),
            overall_mae: mae(predictions, truths)?,
            per_group_mae: per_group_mae(predictions, truths, groups)?
                .into_iter()
                .map(|(g, v)| (g.to_string(), v))
                .collect(),
            verification: None,
            comparability: None,
            config: BTreeMap::new(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            format_version: u32,
            #[serde(flatten)]
            report: &'a EvalReport,
        }
        to_text(
            &File {
                format_version: REPORT_VERSION,
                report: self,
            },
            "report",
        )
    }

    /// `name,value` lines with dotted names, one metric per line.
    pub fn summary(&self) -> Result<String> {
        let value = toml::Value::try_from(self).map_err(|e| JamError::Format {
            kind: "report",
            field: "<root>".into(),
            message: e.to_string(),
        })?;
        let mut out = String::from("name,value\n");
        flatten("", &value, &mut out);
        Ok(out)
    }

    pub fn save(&self, report_path: &Path, summary_path: Option<&Path>) -> Result<()> {
        write_file(report_path, &self.to_toml()?)?;
        if let Some(p) = summary_path {
            write_file(p, &self.summary()?)?;
        }
        Ok(())
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&join(k), v, out);
            }
        }
        toml::Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        toml::Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
        other => out.push_str(&format!("{prefix},{other}\n")),
    }
}
