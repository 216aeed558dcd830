//! Estimation, verification and comparability decisions.

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_with_scale, range_for, AgeRange, CalibrationSettings, LabeledPrediction, RangeScale,
    ThresholdTable,
};
use crate::data::MAX_INGEST_AGE;
use crate::error::{JamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMethod {
    /// Flag when the lower end of the confidence range is below the legal age.
    Confidence,
    /// Flag when the point estimate is below the challenge age.
    #[value(name = "sr")]
    SingularRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationPolicy {
    pub legal_age: f64,
    pub challenge_age: f64,
    pub method: VerificationMethod,
}

impl Default for VerificationPolicy {
    fn default() -> Self {
        Self::challenge_25(VerificationMethod::Confidence)
    }
}

impl VerificationPolicy {
    /// Legal age 18, challenge age 25.
    pub fn challenge_25(method: VerificationMethod) -> Self {
        Self {
            legal_age: 18.0,
            challenge_age: 25.0,
            method,
        }
    }

    /// Legal age 21, challenge age 28.
    pub fn challenge_28(method: VerificationMethod) -> Self {
        Self {
            legal_age: 21.0,
            challenge_age: 28.0,
            method,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.legal_age.is_finite() && self.challenge_age.is_finite()) {
            return Err(JamError::InvalidConfig(format!(
                "policy ages must be finite: {self:?}"
            )));
        }
        if self.challenge_age < self.legal_age {
            return Err(JamError::InvalidConfig(format!(
                "challenge_age {} is below legal_age {}",
                self.challenge_age, self.legal_age
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Estimate,
    Verify,
    Compare,
}

/// Outcome of one query. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub task: Task,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<AgeRange>,
    /// Verification: `true` means "treat as potentially underage".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<VerificationPolicy>,
}

impl DecisionRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("decision records always serialize")
    }
}

fn check_prediction(mu: f64, sigma: f64) -> Result<()> {
    if !mu.is_finite() {
        return Err(JamError::NonFinite {
            what: "mu",
            index: 0,
            value: mu,
        });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(JamError::Domain {
            what: "sigma",
            value: sigma,
            domain: "(0, inf)",
        });
    }
    Ok(())
}

/// The point estimate is mu; sigma plays no part.
pub fn estimate_age(mu: f64, _sigma: f64) -> f64 {
    mu
}

pub fn estimate(mu: f64, sigma: f64) -> Result<DecisionRecord> {
    check_prediction(mu, sigma)?;
    Ok(DecisionRecord {
        task: Task::Estimate,
        mu: estimate_age(mu, sigma),
        sigma,
        range: None,
        flagged: None,
        accepted: None,
        claimed_age: None,
        policy: None,
    })
}

/// Age verification. The table is required for the confidence method and
/// ignored by singular regression.
pub fn verify(
    mu: f64,
    sigma: f64,
    policy: &VerificationPolicy,
    table: Option<&ThresholdTable>,
) -> Result<DecisionRecord> {
    policy.validate()?;
    check_prediction(mu, sigma)?;
    let (range, flagged) = match policy.method {
        VerificationMethod::SingularRegression => (None, mu < policy.challenge_age),
        VerificationMethod::Confidence => {
            let table = table.ok_or_else(|| {
                JamError::InvalidConfig(
                    "the confidence verification method needs a threshold table".into(),
                )
            })?;
            let range = range_for(mu, sigma, table)?;
            (Some(range), range.lo < policy.legal_age)
        }
    };
    Ok(DecisionRecord {
        task: Task::Verify,
        mu,
        sigma,
        range,
        flagged: Some(flagged),
        accepted: None,
        claimed_age: None,
        policy: Some(*policy),
    })
}

/// Accepts the claimed age iff it lies in the closed confidence range.
pub fn compare(
    mu: f64,
    sigma: f64,
    claimed_age: f64,
    table: &ThresholdTable,
) -> Result<DecisionRecord> {
    check_prediction(mu, sigma)?;
    if !(0.0..MAX_INGEST_AGE).contains(&claimed_age) {
        return Err(JamError::Domain {
            what: "claimed age",
            value: claimed_age,
            domain: "[0, 115)",
        });
    }
    let range = range_for(mu, sigma, table)?;
    Ok(DecisionRecord {
        task: Task::Compare,
        mu,
        sigma,
        range: Some(range),
        flagged: None,
        accepted: Some(range.contains(claimed_age)),
        claimed_age: Some(claimed_age),
        policy: None,
    })
}

/// Sigma-blind comparability baseline: per-bucket offsets in years taken from
/// raw residual quantiles at the same levels `calibrate` uses.
pub fn fixed_width_baseline(
    predictions: &[LabeledPrediction],
    settings: &CalibrationSettings,
) -> Result<ThresholdTable> {
    calibrate_with_scale(predictions, settings, RangeScale::Unit)
}
