//! Counterfactual modality effects and the distillation weights derived from them.
//!
//! For modality `m` the treatment is "modality `m` informative"; the control
//! masks `m` alone and keeps every other modality. Per triple the effect is
//! `δ = Δ_full - Δ_without_m`, averaged over the batch to `γ^m`, normalized by
//! the frozen teacher's summed margin to `ρ^m`, and turned into weights that
//! favour modalities with the smaller normalized effect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for near-zero denominators.
pub const EPS: f64 = 1e-8;

/// Per-modality effect estimates and weights for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalReport {
    pub modalities: Vec<ModalityEffect>,
    /// True when `Σρ < ε` (or re-weighting is disabled) and uniform weights were used.
    pub uniform_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEffect {
    pub name: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ite_values: Vec<f64>,
    pub ate: f64,
    pub teacher_margin_sum: f64,
    pub rho: f64,
    pub lambda_weight: f64,
}

impl CausalReport {
    /// Builds the report from per-modality student margins and teacher margins.
    ///
    /// `delta_without[m]` is the student margin with modality `m` alone masked,
    /// `teacher_margins[m]` the frozen teacher's margin with only `m` kept.
    pub fn estimate(
        names: &[String],
        delta_full: &[f64],
        delta_without: &[Vec<f64>],
        teacher_margins: &[Vec<f64>],
        enable_reweight: bool,
    ) -> Result<Self> {
        let n_mod = names.len();
        if delta_without.len() != n_mod || teacher_margins.len() != n_mod {
            return Err(Error::Shape {
                what: "counterfactual inputs".into(),
                expected: n_mod.to_string(),
                got: format!("{} / {}", delta_without.len(), teacher_margins.len()),
            });
        }
        let mut modalities = Vec::with_capacity(n_mod);
        for m in 0..n_mod {
            let ite_values = ite(delta_full, &delta_without[m])?;
            let gamma = ate(&ite_values)?;
            let teacher_margin_sum: f64 = teacher_margins[m].iter().sum();
            modalities.push(ModalityEffect {
                name: names[m].clone(),
                rho: rho(gamma, teacher_margin_sum),
                ite_values,
                ate: gamma,
                teacher_margin_sum,
                lambda_weight: 0.0,
            });
        }
        let rhos: Vec<f64> = modalities.iter().map(|e| e.rho).collect();
        let (weights, uniform_fallback) = if enable_reweight {
            reweight_flagged(&rhos)?
        } else {
            (uniform_weights(n_mod)?, true)
        };
        for (e, w) in modalities.iter_mut().zip(weights) {
            e.lambda_weight = w;
        }
        Ok(CausalReport {
            modalities,
            uniform_fallback,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.modalities.iter().map(|e| e.lambda_weight).collect()
    }

    /// Drops per-triple values, keeping the batch summaries.
    pub fn summary(&self) -> CausalReport {
        let mut s = self.clone();
        for e in &mut s.modalities {
            e.ite_values.clear();
        }
        s
    }
}

/// Per-triple treatment effect `Δ_full - Δ_without_m`.
pub fn ite(delta_full: &[f64], delta_without: &[f64]) -> Result<Vec<f64>> {
    if delta_full.len() != delta_without.len() {
        return Err(Error::Shape {
            what: "ite margins".into(),
            expected: delta_full.len().to_string(),
            got: delta_without.len().to_string(),
        });
    }
    Ok(delta_full.iter().zip(delta_without).map(|(f, w)| f - w).collect())
}

/// Mean treatment effect over the batch.
pub fn ate(ite_values: &[f64]) -> Result<f64> {
    if ite_values.is_empty() {
        return Err(Error::Data("treatment effect over an empty batch".into()));
    }
    Ok(ite_values.iter().sum::<f64>() / ite_values.len() as f64)
}

/// `max(γ / max(Σ Δt, ε), 0)`
pub fn rho(gamma: f64, teacher_margin_sum: f64) -> f64 {
    (gamma / teacher_margin_sum.max(EPS)).max(0.0)
}

/// `λ_m = 1 - ρ_m / Σρ`, or `(M-1)/M` for every modality when `Σρ < ε`.
pub fn reweight(rho_values: &[f64]) -> Result<Vec<f64>> {
    reweight_flagged(rho_values).map(|(w, _)| w)
}

fn reweight_flagged(rho_values: &[f64]) -> Result<(Vec<f64>, bool)> {
    let uniform = uniform_weights(rho_values.len())?;
    let total = dd_sum(rho_values.iter().copied());
    if total.0 + total.1 < EPS {
        return Ok((uniform, true));
    }
    // 1 - ρ_m/Σρ = Σ_{k≠m} ρ_k / Σρ, both sums carried as double-doubles so the
    // quotient is rounded once.
    let weights = (0..rho_values.len())
        .map(|m| {
            let rest = dd_sum(rho_values.iter().enumerate().filter(|&(k, _)| k != m).map(|(_, r)| *r));
            dd_div(rest, total)
        })
        .collect();
    Ok((weights, false))
}

/// Error-free `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_sum(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((0.0, 0.0), |(hi, lo), x| {
        let (s, e) = two_sum(hi, x);
        two_sum(s, lo + e)
    })
}

fn dd_div(a: (f64, f64), b: (f64, f64)) -> f64 {
    let q = a.0 / b.0;
    // a - q·b, with q·b.0 formed exactly through a fused multiply-add.
    let r = (a.0 - q * b.0) - q.mul_add(b.0, -(q * b.0)) + a.1 - q * b.1;
    q + r / b.0
}

/// `(M-1)/M` for each of `M` modalities.
pub fn uniform_weights(n_modalities: usize) -> Result<Vec<f64>> {
    if n_modalities < 2 {
        return Err(Error::Config(format!(
            "re-weighting needs at least two modalities, got {n_modalities}"
        )));
    }
    let m = n_modalities as f64;
    Ok(vec![(m - 1.0) / m; n_modalities])
}
