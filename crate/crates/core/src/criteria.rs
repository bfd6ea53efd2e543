//! Parameterized splitting criteria evaluated on leaf statistics.
//!
//! Classification criteria are functions of a leaf's class distribution;
//! regression criteria are functions of the leaf's target set. The Tsallis
//! family contains Gini impurity (alpha=2, beta=1), Shannon entropy
//! (alpha->1, beta=1) and the KM96 criterion (alpha=1/2, beta=2) as exact
//! special cases; the Tweedie family interpolates MSE (p=0) and Poisson
//! deviance (p->1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the neighborhood around removable singularities (`alpha = 1`
/// for Tsallis, `p = 1` for Tweedie) inside which the closed-form limit is
/// evaluated instead of the raw formula.
pub const LIMIT_WINDOW: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("beta must be a positive integer, got {0}")]
    BadBeta(u32),
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
    #[error("normalizing constant C must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("Tweedie power must lie in [0, 1], got {0}")]
    BadPower(f64),
    #[error("probability vector invalid: {0}")]
    BadDistribution(String),
    #[error("target set invalid: {0}")]
    BadTargets(String),
    #[error("KM96 is defined for binary classification only, got {0} classes")]
    Km96Arity(usize),
    #[error("permissibility is undefined for the {0} variant")]
    PermissibilityUndefined(&'static str),
}

/// A leaf's class proportions together with its example count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    weight: f64,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>, weight: f64) -> Result<Self, CriteriaError> {
        if probs.len() < 2 {
            return Err(CriteriaError::BadDistribution(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(CriteriaError::BadDistribution(format!(
                "weight must be a finite nonnegative real, got {weight}"
            )));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(CriteriaError::BadDistribution(format!(
                    "component {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(CriteriaError::BadDistribution(format!(
                "components sum to {sum}, expected 1"
            )));
        }
        if weight == 0.0 {
            let u = 1.0 / probs.len() as f64;
            if probs.iter().any(|&p| (p - u).abs() > 1e-12) {
                return Err(CriteriaError::BadDistribution(
                    "zero-weight distribution must be uniform".into(),
                ));
            }
        }
        Ok(Self { probs, weight })
    }

    /// Distribution of a leaf holding `counts[i]` examples of class `i`.
    /// An empty leaf gets the conventional uniform vector.
    pub fn from_counts(counts: &[u64]) -> Result<Self, CriteriaError> {
        let total: u64 = counts.iter().sum();
        let probs = if total == 0 {
            vec![1.0 / counts.len() as f64; counts.len()]
        } else {
            counts.iter().map(|&k| k as f64 / total as f64).collect()
        };
        Self::new(probs, total as f64)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }
}

/// Regression leaf labels with their cached mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    values: Vec<f64>,
    mean: f64,
}

impl TargetSet {
    pub fn new(values: Vec<f64>) -> Result<Self, CriteriaError> {
        if values.is_empty() {
            return Err(CriteriaError::BadTargets("empty target set".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CriteriaError::BadTargets(format!("non-finite target {v}")));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(Self { values, mean })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// The classic criteria recovered by the parameterized families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Gini,
    Entropy,
    Km96,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Gini => "gini",
            Preset::Entropy => "entropy",
            Preset::Km96 => "km96",
        }
    }
}

/// A point in one of the criterion families.
///
/// `C` is a positive normalizing constant; it rescales criterion values but
/// never changes which split the learner picks, and the learner exploits
/// that (see [`CriterionParams::normalized`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum CriterionParams {
    Tsallis {
        alpha: f64,
        beta: u32,
        #[serde(rename = "C")]
        scale: f64,
    },
    #[serde(rename = "gamma")]
    GammaProduct {
        gamma: f64,
        #[serde(rename = "C")]
        scale: f64,
    },
    Tweedie {
        #[serde(rename = "p")]
        power: f64,
    },
    Preset {
        name: Preset,
    },
}

impl CriterionParams {
    pub fn tsallis(alpha: f64, beta: u32) -> Self {
        CriterionParams::Tsallis { alpha, beta, scale: 1.0 }
    }

    pub fn gamma(gamma: f64) -> Self {
        CriterionParams::GammaProduct { gamma, scale: 1.0 }
    }

    pub fn tweedie(power: f64) -> Self {
        CriterionParams::Tweedie { power }
    }

    pub fn preset(name: Preset) -> Self {
        CriterionParams::Preset { name }
    }

    pub fn validate(&self) -> Result<(), CriteriaError> {
        match *self {
            CriterionParams::Tsallis { alpha, beta, scale } => {
                if !alpha.is_finite() || alpha <= 0.0 {
                    return Err(CriteriaError::BadAlpha(alpha));
                }
                if beta < 1 {
                    return Err(CriteriaError::BadBeta(beta));
                }
                check_scale(scale)
            }
            CriterionParams::GammaProduct { gamma, scale } => {
                if !gamma.is_finite() || gamma <= 0.0 || gamma > 1.0 {
                    return Err(CriteriaError::BadGamma(gamma));
                }
                check_scale(scale)
            }
            CriterionParams::Tweedie { power } => {
                if !power.is_finite() || !(0.0..=1.0).contains(&power) {
                    return Err(CriteriaError::BadPower(power));
                }
                Ok(())
            }
            CriterionParams::Preset { .. } => Ok(()),
        }
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, CriterionParams::Tweedie { .. })
    }

    /// Same criterion with the normalizing constant forced to 1. The
    /// top-down learner selects splits on normalized values, which makes
    /// scale invariance of the learned tree exact rather than approximate.
    pub fn normalized(&self) -> Self {
        match *self {
            CriterionParams::Tsallis { alpha, beta, .. } => {
                CriterionParams::Tsallis { alpha, beta, scale: 1.0 }
            }
            CriterionParams::GammaProduct { gamma, .. } => {
                CriterionParams::GammaProduct { gamma, scale: 1.0 }
            }
            ref other => other.clone(),
        }
    }

    /// Whether the criterion is permissible: symmetric, zero at simplex
    /// vertices, and concave. For Tsallis that holds exactly when alpha
    /// lies outside the open interval (1/beta, 1); the gamma-product family
    /// is permissible throughout its domain.
    pub fn is_permissible(&self) -> Result<bool, CriteriaError> {
        self.validate()?;
        match *self {
            CriterionParams::Tsallis { alpha, beta, .. } => {
                let lo = 1.0 / beta as f64;
                Ok(!(alpha > lo && alpha < 1.0))
            }
            CriterionParams::GammaProduct { .. } => Ok(true),
            CriterionParams::Tweedie { .. } => {
                Err(CriteriaError::PermissibilityUndefined("tweedie"))
            }
            CriterionParams::Preset { .. } => {
                Err(CriteriaError::PermissibilityUndefined("preset"))
            }
        }
    }

}

fn check_scale(scale: f64) -> Result<(), CriteriaError> {
    if !scale.is_finite() || scale <= 0.0 {
        Err(CriteriaError::BadScale(scale))
    } else {
        Ok(())
    }
}

/// `x^a` with exact dispatch for the exponents that must reproduce the
/// presets bit-for-bit (`a = 2` is Gini's square, `a = 1/2` is KM96's
/// square root).
#[inline]
pub(crate) fn powa(x: f64, a: f64) -> f64 {
    if a == 2.0 {
        x * x
    } else if a == 1.0 {
        x
    } else if a == 0.5 {
        x.sqrt()
    } else {
        x.powf(a)
    }
}

/// Shared kernels on raw counts. The tree learner calls these in its inner
/// loop with counts and totals rather than materialized distributions.
pub(crate) mod kernel {
    use super::{powa, LIMIT_WINDOW};

    /// `sum_i -p_i ln p_i` with `0 ln 0 := 0`.
    #[inline]
    pub fn entropy(counts: &[f64], total: f64) -> f64 {
        let mut h = 0.0;
        for &k in counts {
            if k > 0.0 {
                let p = k / total;
                h -= p * p.ln();
            }
        }
        h
    }

    #[inline]
    pub fn gini(counts: &[f64], total: f64) -> f64 {
        let mut s = 0.0;
        for &k in counts {
            let p = k / total;
            s += p * p;
        }
        1.0 - s
    }

    #[inline]
    pub fn km96(counts: &[f64], total: f64) -> f64 {
        debug_assert_eq!(counts.len(), 2);
        let p0 = counts[0] / total;
        let p1 = counts[1] / total;
        2.0 * (p0 * p1).sqrt()
    }

    /// The general Tsallis formula; callers must route `|alpha - 1| <
    /// LIMIT_WINDOW` to [`tsallis_limit`].
    #[inline]
    pub fn tsallis(alpha: f64, beta: u32, scale: f64, counts: &[f64], total: f64) -> f64 {
        let mut s = 0.0;
        for &k in counts {
            let p = k / total;
            s += powa(p, alpha);
        }
        scale / (alpha - 1.0) * (1.0 - s.powi(beta as i32))
    }

    /// Closed-form alpha->1 limit: `C * beta * sum_i -p_i ln p_i`.
    #[inline]
    pub fn tsallis_limit(beta: u32, scale: f64, counts: &[f64], total: f64) -> f64 {
        scale * beta as f64 * entropy(counts, total)
    }

    #[inline]
    pub fn tsallis_any(alpha: f64, beta: u32, scale: f64, counts: &[f64], total: f64) -> f64 {
        if (alpha - 1.0).abs() < LIMIT_WINDOW {
            tsallis_limit(beta, scale, counts, total)
        } else {
            tsallis(alpha, beta, scale, counts, total)
        }
    }

    #[inline]
    pub fn gamma_product(gamma: f64, scale: f64, counts: &[f64], total: f64) -> f64 {
        let mut prod = 1.0;
        for &k in counts {
            prod *= k / total;
        }
        scale * powa(prod, gamma)
    }
}

/// `(alpha, beta)`-Tsallis entropy of a class distribution.
pub fn eval_tsallis(
    alpha: f64,
    beta: u32,
    scale: f64,
    dist: &ClassDistribution,
) -> Result<f64, CriteriaError> {
    CriterionParams::Tsallis { alpha, beta, scale }.validate()?;
    Ok(kernel::tsallis_any(alpha, beta, scale, dist.probs(), 1.0))
}

/// Gamma-product criterion `C * (prod_i p_i)^gamma`.
pub fn eval_gamma(gamma: f64, scale: f64, dist: &ClassDistribution) -> Result<f64, CriteriaError> {
    CriterionParams::GammaProduct { gamma, scale }.validate()?;
    Ok(kernel::gamma_product(gamma, scale, dist.probs(), 1.0))
}

/// One of the classic criteria on a class distribution.
pub fn eval_preset(preset: Preset, dist: &ClassDistribution) -> Result<f64, CriteriaError> {
    match preset {
        Preset::Gini => Ok(kernel::gini(dist.probs(), 1.0)),
        Preset::Entropy => Ok(kernel::entropy(dist.probs(), 1.0)),
        Preset::Km96 => {
            if dist.n_classes() != 2 {
                return Err(CriteriaError::Km96Arity(dist.n_classes()));
            }
            Ok(kernel::km96(dist.probs(), 1.0))
        }
    }
}

/// Evaluate any classification variant on a distribution.
pub fn eval_classification(
    params: &CriterionParams,
    dist: &ClassDistribution,
) -> Result<f64, CriteriaError> {
    params.validate()?;
    match *params {
        CriterionParams::Tsallis { alpha, beta, scale } => eval_tsallis(alpha, beta, scale, dist),
        CriterionParams::GammaProduct { gamma, scale } => eval_gamma(gamma, scale, dist),
        CriterionParams::Preset { name } => eval_preset(name, dist),
        CriterionParams::Tweedie { .. } => Err(CriteriaError::BadDistribution(
            "Tweedie is a regression criterion".into(),
        )),
    }
}

/// Mean Tweedie deviance of a target set with power `p` in [0, 1].
///
/// Inside the `LIMIT_WINDOW` neighborhood of `p = 1` the closed-form limit
/// `(2/n) sum_y (y ln(y/mean) - y + mean)` is evaluated instead of the raw
/// formula, which degenerates to 0/0 there. The same factor-of-two
/// normalization is kept on both branches so the family is continuous in
/// `p`; at `p = 0` it reduces exactly to the mean squared error.
pub fn eval_tweedie(power: f64, targets: &TargetSet) -> Result<f64, CriteriaError> {
    CriterionParams::Tweedie { power }.validate()?;
    if let Some(v) = targets.values().iter().find(|&&v| v < 0.0) {
        return Err(CriteriaError::BadTargets(format!("negative target {v}")));
    }
    if targets.mean() <= 0.0 {
        return Err(CriteriaError::BadTargets(format!(
            "mean target must be positive, got {}",
            targets.mean()
        )));
    }
    Ok(tweedie_unchecked(power, targets.values(), targets.mean()))
}

/// Tweedie deviance without domain checks; `mean` must be the arithmetic
/// mean of `values`. Returns 0 for an all-zero leaf (the deviance limit).
pub(crate) fn tweedie_unchecked(power: f64, values: &[f64], mean: f64) -> f64 {
    let n = values.len() as f64;
    if mean <= 0.0 {
        return 0.0;
    }
    if (1.0 - power).abs() < LIMIT_WINDOW {
        // (2/n) sum y ln(y/mean) - y + mean, with 0 ln 0 := 0.
        let mut s = 0.0;
        for &y in values {
            if y > 0.0 {
                s += y * (y / mean).ln();
            }
            s += mean - y;
        }
        2.0 * s / n
    } else {
        // Grouped so every term vanishes exactly when y == mean.
        let q = 2.0 - power;
        let r = 1.0 - power;
        let mean_q = powa(mean, q);
        let mean_r = powa(mean, r);
        let mut s = 0.0;
        for &y in values {
            s += (powa(y.max(0.0), q) - mean_q) / (r * q) - (y - mean) * mean_r / r;
        }
        2.0 * s / n
    }
}
