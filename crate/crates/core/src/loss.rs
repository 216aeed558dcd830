//! Confidence-aware age loss.
//!
//! The objective mixes three batch means, each weighted per sample by a power
//! of the age decay `AD = (1 - age / M)^2`:
//!
//! ```text
//! L_reg  = mean(|mu - y| * AD^r)
//! L_std  = mean(sigma * AD^s)
//! L_dist = mean(((mu - y) / (sigma + c))^2 * AD^d)
//! L      = alpha * L_reg + beta * L_std + delta * L_dist
//! ```
//!
//! `L_std` pushes the predicted spread down, `L_dist` punishes misses that
//! the spread did not account for, and the decay emphasises younger targets.
//! Gradients are derived by hand; the decay depends on the true age only and
//! is treated as a constant.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, JamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the regression term.
    pub alpha: f64,
    /// Weight of the standard-deviation term.
    pub beta: f64,
    /// Weight of the distribution term.
    pub delta: f64,
    /// Age-decay exponent of the regression term.
    pub r: f64,
    /// Age-decay exponent of the standard-deviation term.
    pub s: f64,
    /// Age-decay exponent of the distribution term.
    pub d: f64,
    /// Maximum age normalization factor, years.
    pub max_age: f64,
    /// Stabilizer added to sigma in the distribution term, years.
    pub c: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            delta: 1.5,
            r: 1.0,
            s: 1.5,
            d: 2.0,
            max_age: 115.0,
            c: 1e-3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.delta,
            self.r,
            self.s,
            self.d,
            self.max_age,
            self.c,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(JamError::InvalidConfig(format!(
                "loss parameters must be finite: {self:?}"
            )));
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
        ] {
            if value < 0.0 {
                return Err(JamError::InvalidConfig(format!(
                    "loss.{name} must be >= 0, got {value}"
                )));
            }
        }
        if self.max_age <= 0.0 {
            return Err(JamError::InvalidConfig(format!(
                "loss.max_age must be > 0, got {}",
                self.max_age
            )));
        }
        if self.c <= 0.0 {
            return Err(JamError::InvalidConfig(format!(
                "loss.c must be > 0, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Borrowed view of one batch of model outputs and their targets.
#[derive(Debug, Clone, Copy)]
pub struct PredictionBatch<'a> {
    mu: &'a [f64],
    sigma: &'a [f64],
    target: &'a [f64],
}

impl<'a> PredictionBatch<'a> {
    /// Checks lengths, finiteness, `sigma > 0` and `0 <= target < max_age`.
    pub fn new(
        mu: &'a [f64],
        sigma: &'a [f64],
        target: &'a [f64],
        cfg: &LossConfig,
    ) -> Result<Self> {
        if mu.is_empty() {
            return Err(JamError::Empty("prediction batch"));
        }
        if sigma.len() != mu.len() || target.len() != mu.len() {
            return Err(JamError::Shape(format!(
                "batch vectors differ in length: mu {}, sigma {}, target {}",
                mu.len(),
                sigma.len(),
                target.len()
            )));
        }
        ensure_finite("mu", mu)?;
        ensure_finite("sigma", sigma)?;
        ensure_finite("target", target)?;
        if let Some(&bad) = sigma.iter().find(|&&s| s <= 0.0) {
            return Err(JamError::Domain {
                what: "sigma",
                value: bad,
                domain: "(0, inf)",
            });
        }
        if let Some(&bad) = target.iter().find(|&&t| !(0.0..cfg.max_age).contains(&t)) {
            return Err(JamError::Domain {
                what: "target age",
                value: bad,
                domain: "[0, max_age)",
            });
        }
        Ok(Self { mu, sigma, target })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &'a [f64] {
        self.mu
    }

    pub fn sigma(&self) -> &'a [f64] {
        self.sigma
    }

    pub fn target(&self) -> &'a [f64] {
        self.target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_reg: f64,
    pub l_std: f64,
    pub l_dist: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    fn from_terms(l_reg: f64, l_std: f64, l_dist: f64, cfg: &LossConfig) -> Self {
        Self {
            l_reg,
            l_std,
            l_dist,
            l_total: cfg.alpha * l_reg + cfg.beta * l_std + cfg.delta * l_dist,
        }
    }
}

/// Gradients of `l_total` with respect to each sample's mu and sigma.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossGradients {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `(1 - age / M)^2`; errors outside `[0, M]`.
pub fn age_decay(target_age: f64, cfg: &LossConfig) -> Result<f64> {
    if !(0.0..=cfg.max_age).contains(&target_age) {
        return Err(JamError::Domain {
            what: "target age",
            value: target_age,
            domain: "[0, max_age]",
        });
    }
    Ok(decay_unchecked(target_age, cfg.max_age))
}

#[inline]
fn decay_unchecked(target_age: f64, max_age: f64) -> f64 {
    let t = 1.0 - target_age / max_age;
    t * t
}

/// Per-sample decay powers, shared by forward and backward.
struct DecayPowers {
    reg: f64,
    std: f64,
    dist: f64,
}

impl DecayPowers {
    fn new(target: f64, cfg: &LossConfig) -> Self {
        let ad = decay_unchecked(target, cfg.max_age);
        Self {
            reg: ad.powf(cfg.r),
            std: ad.powf(cfg.s),
            dist: ad.powf(cfg.d),
        }
    }
}

/// Evaluates the three loss terms and their weighted sum.
///
/// Sums run left to right over the batch, so results are reproducible for a
/// given sample order.
pub fn loss_forward(batch: &PredictionBatch<'_>, cfg: &LossConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    let (mut reg, mut std, mut dist) = (0.0, 0.0, 0.0);
    for i in 0..batch.len() {
        let w = DecayPowers::new(batch.target[i], cfg);
        let err = batch.mu[i] - batch.target[i];
        let z = err / (batch.sigma[i] + cfg.c);
        reg += err.abs() * w.reg;
        std += batch.sigma[i] * w.std;
        dist += z * z * w.dist;
    }
    let n = batch.len() as f64;
    Ok(LossBreakdown::from_terms(reg / n, std / n, dist / n, cfg))
}

/// Analytic gradient of `l_total`. The L1 kink at `mu == target` uses the
/// zero subgradient.
pub fn loss_backward(batch: &PredictionBatch<'_>, cfg: &LossConfig) -> Result<LossGradients> {
    cfg.validate()?;
    let n = batch.len() as f64;
    let mut grads = LossGradients {
        mu: Vec::with_capacity(batch.len()),
        sigma: Vec::with_capacity(batch.len()),
    };
    for i in 0..batch.len() {
        let w = DecayPowers::new(batch.target[i], cfg);
        let err = batch.mu[i] - batch.target[i];
        let denom = batch.sigma[i] + cfg.c;
        let sign = if err > 0.0 {
            1.0
        } else if err < 0.0 {
            -1.0
        } else {
            0.0
        };
        let d_mu = cfg.alpha * sign * w.reg + cfg.delta * 2.0 * err / (denom * denom) * w.dist;
        let d_sigma =
            cfg.beta * w.std - cfg.delta * 2.0 * err * err / (denom * denom * denom) * w.dist;
        grads.mu.push(d_mu / n);
        grads.sigma.push(d_sigma / n);
    }
    Ok(grads)
}

/// Forward and backward in one call.
pub fn loss_forward_backward(
    batch: &PredictionBatch<'_>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGradients)> {
    Ok((loss_forward(batch, cfg)?, loss_backward(batch, cfg)?))
}
