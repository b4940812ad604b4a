use super::{check_triple, ModelParams};
use crate::data::{ModalityFeatures, Triple};
use crate::error::Result;
use crate::losses::{sigmoid, softplus};
use crate::matrix::dot;

/// Shared factor of the ranking-loss gradient with respect to each modality
/// score `S^m`: `1 / (1 + e^{Δ})` where `Δ` is the full margin.
pub fn bridge_value(delta_full: f64) -> f64 {
    sigmoid(-delta_full)
}

/// Closed-form bridge terms next to central finite differences of the ranking
/// loss, for one triple.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeCheck {
    pub delta_full: f64,
    pub modality_scores: Vec<f64>,
    /// `1 / (1 + e^{Δ})` reported once per modality.
    pub closed_form: Vec<f64>,
    /// `-∂L/∂S^m` by central differences with step `h`.
    pub finite_difference: Vec<f64>,
}

/// Evaluates the bridge term for every modality of one triple.
///
/// The ranking loss `softplus(-Δ)` decreases in each `S^m`, so its derivative is
/// the negated bridge value; `finite_difference` stores the magnitude.
pub fn gradient_bridge(
    params: &ModelParams,
    features: &[ModalityFeatures],
    triple: Triple,
    h: f64,
) -> Result<BridgeCheck> {
    params.check_features(features)?;
    check_triple(params, &triple)?;
    let xu = params.user_emb.row(triple.user);
    let id_margin = dot(xu, params.item_emb.row(triple.pos)) - dot(xu, params.item_emb.row(triple.neg));
    let scores: Vec<f64> = features
        .iter()
        .enumerate()
        .map(|(m, f)| {
            let diff: Vec<f64> = f.row(triple.pos).iter().zip(f.row(triple.neg)).map(|(a, b)| a - b).collect();
            dot(params.user_pref[m].row(triple.user), &params.projection[m].mul_vec(&diff))
        })
        .collect();
    let loss = |shift: Option<(usize, f64)>| {
        let mut delta = id_margin;
        for (m, s) in scores.iter().enumerate() {
            delta += match shift {
                Some((k, dh)) if k == m => s + dh,
                _ => *s,
            };
        }
        softplus(-delta)
    };
    let delta_full = id_margin + scores.iter().sum::<f64>();
    let b = bridge_value(delta_full);
    let finite_difference = (0..scores.len())
        .map(|m| -(loss(Some((m, h))) - loss(Some((m, -h)))) / (2.0 * h))
        .collect();
    Ok(BridgeCheck {
        delta_full,
        closed_form: vec![b; scores.len()],
        modality_scores: scores,
        finite_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::tests::random_instance;

    #[test]
    fn zero_margin_bridge_is_half() {
        assert_eq!(bridge_value(0.0), 0.5);
    }

    #[test]
    fn bridge_identical_across_modalities() {
        let (p, f) = random_instance(4, 3, 5, 3, &[2, 3, 4]);
        let c = gradient_bridge(&p, &f, Triple::new(1, 2, 4), 1e-6).unwrap();
        assert!(c.closed_form.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()));
        for (a, b) in c.closed_form.iter().zip(&c.finite_difference) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
