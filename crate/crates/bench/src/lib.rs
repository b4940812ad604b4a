//! Shared fixtures for the criterion benchmarks.

use modbal_core::backbone::ModelShape;
use modbal_core::data::{sample_bpr_batch, synth_generate};
use modbal_core::rng::{stream_rng, Stream};
use modbal_core::{InteractionData, ModalityFeatures, ModelParams, SynthConfig, TripleBatch};

pub struct Fixture {
    pub data: InteractionData,
    pub features: Vec<ModalityFeatures>,
    pub params: ModelParams,
}

/// Two-modality synthetic dataset with Xavier-initialized parameters.
pub fn fixture(n_users: usize, n_items: usize, feature_dim: usize, dim: usize) -> Fixture {
    let mut cfg = SynthConfig::two_modality(n_users, n_items, 0.9, 0.2, 7);
    cfg.feature_dim = feature_dim;
    cfg.interactions_per_user = 20.min(n_items / 2);
    let (data, features) = synth_generate(&cfg).expect("synthetic data");
    let shape = ModelShape::new(n_users, n_items, dim, &features);
    let params = ModelParams::init_xavier(&shape, 7, 0).expect("init");
    Fixture {
        data,
        features,
        params,
    }
}

pub fn batch(data: &InteractionData, size: usize, seed: u64) -> TripleBatch {
    let mut rng = stream_rng(seed, Stream::Sampling, 0);
    sample_bpr_batch(data, size, &mut rng).expect("batch")
}
