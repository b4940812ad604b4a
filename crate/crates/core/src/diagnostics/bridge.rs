//! Plain gradient descent on the ranking loss of a two-modality toy model,
//! parametrized directly by each user's projected preference
//! `q_u^m = W_m^T p_u^m`, so that `S^m = q_u^m · (e_i^m - e_j^m)` and the step on
//! `q_u^m` is `η · σ(-Δ) · (e_i^m - e_j^m)`. The factor `σ(-Δ) = 1/(1 + e^Δ)`
//! is shared by every modality.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::long_csv;
use crate::data::{sample_bpr_batch, synth_generate, ModalityFeatures, SynthConfig};
use crate::error::{Error, Result};
use crate::losses::sigmoid;
use crate::matrix::{dot, norm, Matrix};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub synth: SynthConfig,
    /// Multiplier applied to each modality's features.
    pub feature_scale: Vec<f64>,
    /// Modalities ablated for the whole run.
    pub ablated: Vec<usize>,
    pub steps: usize,
    pub lr: f64,
    /// Standard deviation of the initial parameters; 0 starts from zero.
    pub init_scale: f64,
    /// Width of the ID embeddings; 0 disables them.
    pub id_dim: usize,
    /// Triples per step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        let mut synth = SynthConfig::two_modality(20, 40, 1.0, 1.0, 0);
        synth.latent_dim = 4;
        synth.feature_dim = 8;
        synth.noise_scale = 0.5;
        synth.interactions_per_user = 6;
        BridgeConfig {
            synth,
            feature_scale: vec![1.0, 1.0],
            ablated: Vec::new(),
            steps: 200,
            lr: 0.01,
            init_scale: 0.0,
            id_dim: 0,
            batch_size: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeStep {
    pub step: usize,
    /// Batch mean of `S^m`, before the update.
    pub modality_scores: Vec<f64>,
    /// Batch mean of `1/(1 + e^Δ)`, reported per modality.
    pub bridge: Vec<f64>,
    /// Frobenius norm of the step applied to each modality's `q^m`.
    pub update_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeTrace {
    pub modality_ids: Vec<String>,
    pub steps: Vec<BridgeStep>,
}

impl BridgeTrace {
    /// `step,label,value` with labels `S_<m>`, `bridge_<m>`, `update_norm_<m>`.
    pub fn to_csv(&self) -> String {
        long_csv(
            "step",
            self.steps.iter().flat_map(|s| {
                self.modality_ids.iter().enumerate().flat_map(move |(m, id)| {
                    [
                        (s.step, format!("S_{id}"), s.modality_scores[m]),
                        (s.step, format!("bridge_{id}"), s.bridge[m]),
                        (s.step, format!("update_norm_{id}"), s.update_norm[m]),
                    ]
                })
            }),
        )
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn run_bridge_experiment(config: &BridgeConfig) -> Result<BridgeTrace> {
    let (data, mut features) = synth_generate(&config.synth)?;
    let n_mod = features.len();
    if config.feature_scale.len() != n_mod {
        return Err(Error::Config(format!(
            "feature_scale has {} entries for {n_mod} modalities",
            config.feature_scale.len()
        )));
    }
    if let Some(&m) = config.ablated.iter().find(|&&m| m >= n_mod) {
        return Err(Error::Index {
            what: "modality",
            index: m,
            len: n_mod,
        });
    }
    if !(config.lr > 0.0 && config.init_scale >= 0.0) {
        return Err(Error::Config("lr must be positive and init_scale nonnegative".into()));
    }
    for (f, &s) in features.iter_mut().zip(&config.feature_scale) {
        let mut matrix = f.matrix.clone();
        matrix.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        *f = ModalityFeatures::new(f.name.clone(), matrix)?;
    }
    let active: Vec<bool> = (0..n_mod).map(|m| !config.ablated.contains(&m)).collect();

    let mut init = stream_rng(config.seed, Stream::Init, 0);
    let mut q: Vec<Matrix> = features
        .iter()
        .map(|f| gaussian(data.n_users, f.dim(), config.init_scale, &mut init))
        .collect();
    let mut xu = gaussian(data.n_users, config.id_dim, config.init_scale, &mut init);
    let mut xi = gaussian(data.n_items, config.id_dim, config.init_scale, &mut init);
    let mut sampling = stream_rng(config.seed, Stream::Sampling, 0);

    let mut steps = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = sample_bpr_batch(&data, config.batch_size, &mut sampling)?;
        let n = batch.len() as f64;
        let mut s_mean = vec![0.0; n_mod];
        let mut b_mean = 0.0;
        let mut dq: Vec<Matrix> = q.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        let mut dxu = Matrix::zeros(xu.rows(), xu.cols());
        let mut dxi = Matrix::zeros(xi.rows(), xi.cols());
        for t in &batch.triples {
            let diffs: Vec<Vec<f64>> = features
                .iter()
                .map(|f| f.row(t.pos).iter().zip(f.row(t.neg)).map(|(a, b)| a - b).collect())
                .collect();
            let mut delta = dot(xu.row(t.user), xi.row(t.pos)) - dot(xu.row(t.user), xi.row(t.neg));
            for m in 0..n_mod {
                if active[m] {
                    let s = dot(q[m].row(t.user), &diffs[m]);
                    s_mean[m] += s;
                    delta += s;
                }
            }
            let bridge = sigmoid(-delta);
            b_mean += bridge;
            let g = config.lr * bridge;
            for m in 0..n_mod {
                if active[m] {
                    for (d, e) in dq[m].row_mut(t.user).iter_mut().zip(&diffs[m]) {
                        *d += g * e;
                    }
                }
            }
            for k in 0..config.id_dim {
                let (u, i, j) = (xu.get(t.user, k), xi.get(t.pos, k), xi.get(t.neg, k));
                dxu.row_mut(t.user)[k] += g * (i - j);
                dxi.row_mut(t.pos)[k] += g * u;
                dxi.row_mut(t.neg)[k] -= g * u;
            }
        }
        for (p, d) in q.iter_mut().zip(&dq) {
            add_assign(p, d);
        }
        add_assign(&mut xu, &dxu);
        add_assign(&mut xi, &dxi);
        steps.push(BridgeStep {
            step,
            modality_scores: s_mean.iter().map(|s| s / n).collect(),
            bridge: vec![b_mean / n; n_mod],
            update_norm: dq.iter().map(|d| norm(d.as_slice())).collect(),
        });
    }
    Ok(BridgeTrace {
        modality_ids: features.iter().map(|f| f.name.clone()).collect(),
        steps,
    })
}

fn add_assign(p: &mut Matrix, d: &Matrix) {
    for (x, y) in p.as_mut_slice().iter_mut().zip(d.as_slice()) {
        *x += y;
    }
}
