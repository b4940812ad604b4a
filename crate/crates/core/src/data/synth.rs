use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{split, InteractionData, ModalityFeatures, RawInteraction, SplitRatios};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModality {
    pub name: String,
    /// Weight of the latent signal in this modality's features, in `[0, 1]`.
    pub signal_fraction: f64,
}

/// Synthetic dataset with controllable per-modality informativeness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub modalities: Vec<SynthModality>,
    pub noise_scale: f64,
    pub interactions_per_user: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Two modalities, `textual` then `visual`, with the given signal fractions.
    pub fn two_modality(n_users: usize, n_items: usize, textual: f64, visual: f64, seed: u64) -> Self {
        SynthConfig {
            n_users,
            n_items,
            latent_dim: 8,
            feature_dim: 16,
            modalities: vec![
                SynthModality {
                    name: "textual".into(),
                    signal_fraction: textual,
                },
                SynthModality {
                    name: "visual".into(),
                    signal_fraction: visual,
                },
            ],
            noise_scale: 1.0,
            interactions_per_user: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.latent_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if self.interactions_per_user == 0 {
            return Err(Error::Config("interactions_per_user must be positive".into()));
        }
        if self.interactions_per_user >= self.n_items {
            return Err(Error::Config(format!(
                "interactions_per_user ({}) must be below n_items ({})",
                self.interactions_per_user, self.n_items
            )));
        }
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality is required".into()));
        }
        for m in &self.modalities {
            if !(0.0..=1.0).contains(&m.signal_fraction) {
                return Err(Error::Config(format!(
                    "signal_fraction of {:?} must lie in [0, 1]",
                    m.name
                )));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be a finite nonnegative number".into()));
        }
        Ok(())
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Generates a dataset from a shared latent space.
///
/// Users and items get gaussian latent vectors; each user interacts with the
/// `interactions_per_user` items of highest latent affinity. Modality `m`
/// observes `signal_fraction * (item_latent · A_m) + noise_scale * N(0, 1)`
/// with a random projection `A_m`, so the signal fraction sets how much
/// ranking information its features carry.
pub fn synth_generate(config: &SynthConfig) -> Result<(InteractionData, Vec<ModalityFeatures>)> {
    config.validate()?;
    let seed = config.seed;
    let latent_scale = 1.0 / (config.latent_dim as f64).sqrt();
    let users = gaussian_matrix(&mut stream_rng(seed, Stream::Data, 1), config.n_users, config.latent_dim, 1.0);
    let items = gaussian_matrix(&mut stream_rng(seed, Stream::Data, 2), config.n_items, config.latent_dim, 1.0);

    let mut raw: Vec<RawInteraction> = Vec::with_capacity(config.n_users * config.interactions_per_user);
    let mut order: Vec<usize> = (0..config.n_items).collect();
    for u in 0..config.n_users {
        let affinity: Vec<f64> = (0..config.n_items)
            .map(|i| dot(users.row(u), items.row(i)))
            .collect();
        order.sort_by(|&a, &b| affinity[b].total_cmp(&affinity[a]).then(a.cmp(&b)));
        let mut top = order[..config.interactions_per_user].to_vec();
        top.sort_unstable();
        raw.extend(top.into_iter().map(|i| (format!("u{u}"), format!("i{i}"))));
    }
    // Items that nobody picked still need an index so that feature rows align.
    let data = split(&raw, SplitRatios::default(), seed)?;
    let data = with_all_items(data, config.n_items)?;

    let mut features = Vec::with_capacity(config.modalities.len());
    for (k, m) in config.modalities.iter().enumerate() {
        let tag = 16 + 2 * k as u32;
        let projection = gaussian_matrix(
            &mut stream_rng(seed, Stream::Data, tag),
            config.latent_dim,
            config.feature_dim,
            latent_scale,
        );
        let mut noise_rng = stream_rng(seed, Stream::Data, tag + 1);
        let mut rows = Matrix::zeros(config.n_items, config.feature_dim);
        for (dense, ext) in data.item_ids.iter().enumerate() {
            let i: usize = ext[1..].parse().expect("synthetic item id");
            let latent = items.row(i);
            let row = rows.row_mut(dense);
            for (c, out) in row.iter_mut().enumerate() {
                let signal: f64 = (0..config.latent_dim)
                    .map(|l| latent[l] * projection.get(l, c))
                    .sum();
                let noise: f64 = noise_rng.sample(StandardNormal);
                *out = m.signal_fraction * signal + config.noise_scale * noise;
            }
        }
        features.push(ModalityFeatures::new(m.name.clone(), rows)?);
    }
    Ok((data, features))
}

/// Appends never-interacted items (`i{k}` ids) so the item index covers `0..n_items`.
fn with_all_items(data: InteractionData, n_items: usize) -> Result<InteractionData> {
    if data.n_items == n_items {
        return Ok(data);
    }
    let mut item_ids = data.item_ids.clone();
    for k in 0..n_items {
        let id = format!("i{k}");
        if data.item_index(&id).is_none() {
            item_ids.push(id);
        }
    }
    InteractionData::new(data.user_ids.clone(), item_ids, data.train, data.val, data.test)
}
