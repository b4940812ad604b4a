//! Training objectives over pairwise margins.
//!
//! Every loss takes per-triple margins `Δ = score(u, i) - score(u, j)` and
//! returns the batch sum together with the derivative with respect to each
//! student margin. Teacher margins are constants.
//!
//! Log-sigmoids go through `softplus(x) = max(x, 0) + ln(1 + e^{-|x|})`, so no
//! exponential ever sees a positive argument.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// `∂L/∂Δ` for every triple.
    pub grad: Vec<f64>,
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `σ(Δ / τ)`
#[inline]
pub fn temp_sigmoid(delta: f64, tau: f64) -> f64 {
    sigmoid(delta / tau)
}

/// `Σ -ln σ(Δ)` with `∂/∂Δ = -(1 - σ(Δ))`.
pub fn bpr_loss(margins: &[f64]) -> LossGrad {
    let mut value = 0.0;
    let grad = margins
        .iter()
        .map(|&d| {
            value += softplus(-d);
            -sigmoid(-d)
        })
        .collect();
    LossGrad { value, grad }
}

/// Hinge distillation `Σ max(Δt - Δs, 0)`; the subgradient is 0 at a tie.
pub fn specific_distill(teacher: &[f64], student: &[f64]) -> LossGrad {
    debug_assert_eq!(teacher.len(), student.len());
    let mut value = 0.0;
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| {
            if t > s {
                value += t - s;
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    LossGrad { value, grad }
}

/// Binary cross-entropy between temperature-scaled teacher and student
/// margins, `-Σ [t̄ ln s̄ + (1 - t̄) ln(1 - s̄)]` with `t̄ = σ(Δt/τ)`, `s̄ = σ(Δs/τ)`.
///
/// Evaluated in logit form: `t̄ softplus(-b) + (1 - t̄) softplus(b)` with `b = Δs/τ`.
pub fn generic_distill(teacher: &[f64], student: &[f64], tau: f64) -> LossGrad {
    debug_assert_eq!(teacher.len(), student.len());
    let mut value = 0.0;
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| {
            let tp = temp_sigmoid(t, tau);
            let b = s / tau;
            value += cross_entropy_logit(tp, b);
            (sigmoid(b) - tp) / tau
        })
        .collect();
    LossGrad { value, grad }
}

#[inline]
fn cross_entropy_logit(target: f64, logit: f64) -> f64 {
    target * softplus(-logit) + (1.0 - target) * softplus(logit)
}

/// KL divergence `Σ KL(Bern(t̄) || Bern(s̄))`; same gradient as the cross-entropy.
pub fn sd_variant_kl(teacher: &[f64], student: &[f64], tau: f64) -> LossGrad {
    debug_assert_eq!(teacher.len(), student.len());
    let mut value = 0.0;
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| {
            let a = t / tau;
            let b = s / tau;
            let tp = sigmoid(a);
            // CE(t̄, s̄) - H(t̄); clamp rounding noise below zero.
            value += (cross_entropy_logit(tp, b) - cross_entropy_logit(tp, a)).max(0.0);
            (sigmoid(b) - tp) / tau
        })
        .collect();
    LossGrad { value, grad }
}

/// `Σ (Δt - Δs)²`
pub fn sd_variant_mse(teacher: &[f64], student: &[f64]) -> LossGrad {
    debug_assert_eq!(teacher.len(), student.len());
    let mut value = 0.0;
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| {
            let r = t - s;
            value += r * r;
            -2.0 * r
        })
        .collect();
    LossGrad { value, grad }
}

/// Loss used on training triples for the modality-specific term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdVariant {
    #[default]
    Hinge,
    Kl,
    Mse,
}

impl SdVariant {
    pub fn apply(self, teacher: &[f64], student: &[f64], tau: f64) -> LossGrad {
        match self {
            SdVariant::Hinge => specific_distill(teacher, student),
            SdVariant::Kl => sd_variant_kl(teacher, student, tau),
            SdVariant::Mse => sd_variant_mse(teacher, student),
        }
    }
}

impl fmt::Display for SdVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdVariant::Hinge => "hinge",
            SdVariant::Kl => "kl",
            SdVariant::Mse => "mse",
        })
    }
}

impl FromStr for SdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(SdVariant::Hinge),
            "kl" => Ok(SdVariant::Kl),
            "mse" => Ok(SdVariant::Mse),
            other => Err(Error::Config(format!(
                "unknown sd variant {other:?} (expected hinge, kl or mse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_g: f64,
    pub lambda_kd: f64,
    pub tau: f64,
    pub sd_variant: SdVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_g: 1.0,
            lambda_kd: 0.1,
            tau: 0.1,
            sd_variant: SdVariant::Hinge,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config("tau must be positive".into()));
        }
        if !(self.lambda_g >= 0.0 && self.lambda_kd >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `λ_g · L_GD + L_SD` for one modality.
pub fn modality_loss(sd: f64, gd: f64, lambda_g: f64) -> f64 {
    lambda_g * gd + sd
}

/// `L_BPR + λ_kd Σ_m λ_m L^m`
pub fn total_loss(bpr: f64, modality_losses: &[f64], weights: &[f64], lambda_kd: f64) -> f64 {
    debug_assert_eq!(modality_losses.len(), weights.len());
    let distill: f64 = modality_losses.iter().zip(weights).map(|(l, w)| w * l).sum();
    bpr + lambda_kd * distill
}
