//! JSON run configuration and its merge with command-line flags.
//!
//! Every key is optional. A value given as a flag wins over the config file,
//! which wins over the built-in default of the command being run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use modbal_core::data::SynthModality;
use modbal_core::{SdVariant, Split, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// `name=value` pair used by repeatable flags such as `--feature` and `--teacher`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Named<T> {
    pub name: String,
    pub value: T,
}

impl<T: FromStr> FromStr for Named<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
        if name.is_empty() {
            return Err(format!("empty name in {s:?}"));
        }
        let value = value.parse().map_err(|e| format!("bad value in {s:?}: {e}"))?;
        Ok(Named {
            name: name.to_string(),
            value,
        })
    }
}

/// Contents of `--config`. Field names are the snake_case forms of the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,

    pub dim: Option<usize>,
    pub lr: Option<f64>,
    pub l2: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batches_per_epoch: Option<usize>,
    pub k: Option<usize>,
    pub lambda_kd: Option<f64>,
    pub lambda_g: Option<f64>,
    pub tau: Option<f64>,
    pub sd_variant: Option<SdVariant>,
    pub no_generic: Option<bool>,
    pub no_reweight: Option<bool>,
    pub channels: Option<Vec<String>>,
    pub causal_log: Option<bool>,

    pub modality: Option<String>,
    pub teacher: Option<Vec<Named<PathBuf>>>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<Split>,

    pub interactions: Option<PathBuf>,
    pub min_core: Option<usize>,
    pub train_ratio: Option<f64>,
    pub val_ratio: Option<f64>,
    pub feature: Option<Vec<Named<PathBuf>>>,
    pub feature_ids: Option<PathBuf>,

    pub n_users: Option<usize>,
    pub n_items: Option<usize>,
    pub latent_dim: Option<usize>,
    pub feature_dim: Option<usize>,
    pub noise_scale: Option<f64>,
    pub interactions_per_user: Option<usize>,
    pub signal: Option<Vec<SynthModality>>,

    pub steps: Option<usize>,
    pub feature_scale: Option<Vec<f64>>,
    pub ablate: Option<Vec<String>>,
    pub init_scale: Option<f64>,
    pub id_dim: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    /// Overlays `top` on `self`; keys set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),* $(,)?) => {
                RunConfig { $($f: top.$f.or(self.$f)),* }
            };
        }
        pick!(
            data, out_dir, seed, dim, lr, l2, batch_size, max_epochs, patience,
            batches_per_epoch, k, lambda_kd, lambda_g, tau, sd_variant, no_generic,
            no_reweight, channels, causal_log, modality, teacher, checkpoint, split,
            interactions, min_core, train_ratio, val_ratio, feature, feature_ids,
            n_users, n_items, latent_dim, feature_dim, noise_scale,
            interactions_per_user, signal, steps, feature_scale, ablate, init_scale,
            id_dim,
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn data_dir(&self) -> Result<&Path, Failure> {
        self.data
            .as_deref()
            .ok_or_else(|| Failure::usage("no dataset directory: pass --data or set \"data\""))
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let mut loss = d.loss;
        loss.lambda_kd = self.lambda_kd.unwrap_or(loss.lambda_kd);
        loss.lambda_g = self.lambda_g.unwrap_or(loss.lambda_g);
        loss.tau = self.tau.unwrap_or(loss.tau);
        loss.sd_variant = self.sd_variant.unwrap_or(loss.sd_variant);
        TrainConfig {
            dim: self.dim.unwrap_or(d.dim),
            lr: self.lr.unwrap_or(d.lr),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            l2_coeff: self.l2.unwrap_or(d.l2_coeff),
            loss,
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            eval_k: self.k.unwrap_or(d.eval_k),
            seed: self.seed(),
            enable_reweight: !self.no_reweight.unwrap_or(false),
            enable_generic: !self.no_generic.unwrap_or(false),
            batches_per_epoch: self.batches_per_epoch.or(d.batches_per_epoch),
            trace_channels: self
                .channels
                .as_ref()
                .is_none_or(|c| c.iter().any(|x| x != "full")),
        }
    }
}

/// Flags shared by every command. Each one mirrors a [`RunConfig`] key.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    /// JSON config file; flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Prepared dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cut-off of the ranking metrics
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda_kd: Option<f64>,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    /// Temperature of the generic distillation term
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 coefficient
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    /// Embedding width
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_parser = parse_sd)]
    pub sd_variant: Option<SdVariant>,
    /// Drop the generic distillation term
    #[arg(long)]
    pub no_generic: bool,
    /// Use uniform distillation weights instead of counterfactual ones
    #[arg(long)]
    pub no_reweight: bool,
    /// Comma-separated channels: `full` and/or modality names
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
}

fn parse_sd(s: &str) -> Result<SdVariant, String> {
    s.parse().map_err(|e: modbal_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: modbal_core::Error| e.to_string())
}

/// Command-specific flags; all of them are also config keys.
#[derive(Debug, Clone, Default, Args)]
pub struct ExtraFlags {
    /// Modality a teacher is trained on
    #[arg(long)]
    pub modality: Option<String>,
    /// Teacher checkpoint as `modality=path` (repeatable)
    #[arg(long)]
    pub teacher: Vec<Named<PathBuf>>,
    /// Write per-batch counterfactual summaries
    #[arg(long)]
    pub causal_log: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `val` or `test`
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Raw `user_id<TAB>item_id` file
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    #[arg(long)]
    pub min_core: Option<usize>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    #[arg(long)]
    pub val_ratio: Option<f64>,
    /// Feature file as `modality=path` (repeatable, in modality order)
    #[arg(long)]
    pub feature: Vec<Named<PathBuf>>,
    /// One external item id per line, giving the row order of the feature files
    #[arg(long)]
    pub feature_ids: Option<PathBuf>,
    #[arg(long)]
    pub n_users: Option<usize>,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub interactions_per_user: Option<usize>,
    /// Modality and its signal fraction as `name=fraction` (repeatable)
    #[arg(long)]
    pub signal: Vec<Named<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated per-modality feature multipliers
    #[arg(long, value_delimiter = ',')]
    pub feature_scale: Option<Vec<f64>>,
    /// Comma-separated modalities to ablate
    #[arg(long, value_delimiter = ',')]
    pub ablate: Option<Vec<String>>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub id_dim: Option<usize>,
}

fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

/// Flags as a config layer.
pub fn from_flags(c: &CommonFlags, x: &ExtraFlags) -> RunConfig {
    RunConfig {
        data: c.data.clone(),
        out_dir: c.out_dir.clone(),
        seed: c.seed,
        dim: c.dim,
        lr: c.lr,
        l2: c.l2,
        batch_size: c.batch_size,
        max_epochs: c.max_epochs,
        patience: c.patience,
        batches_per_epoch: c.batches_per_epoch,
        k: c.k,
        lambda_kd: c.lambda_kd,
        lambda_g: c.lambda_g,
        tau: c.tau,
        sd_variant: c.sd_variant,
        no_generic: c.no_generic.then_some(true),
        no_reweight: c.no_reweight.then_some(true),
        channels: c.channels.clone(),
        causal_log: x.causal_log.then_some(true),
        modality: x.modality.clone(),
        teacher: non_empty(x.teacher.clone()),
        checkpoint: x.checkpoint.clone(),
        split: x.split,
        interactions: x.interactions.clone(),
        min_core: x.min_core,
        train_ratio: x.train_ratio,
        val_ratio: x.val_ratio,
        feature: non_empty(x.feature.clone()),
        feature_ids: x.feature_ids.clone(),
        n_users: x.n_users,
        n_items: x.n_items,
        latent_dim: x.latent_dim,
        feature_dim: x.feature_dim,
        noise_scale: x.noise_scale,
        interactions_per_user: x.interactions_per_user,
        signal: non_empty(
            x.signal
                .iter()
                .map(|s| SynthModality {
                    name: s.name.clone(),
                    signal_fraction: s.value,
                })
                .collect(),
        ),
        steps: x.steps,
        feature_scale: x.feature_scale.clone(),
        ablate: x.ablate.clone(),
        init_scale: x.init_scale,
        id_dim: x.id_dim,
    }
}

/// Config file (if any) overlaid with the flags.
pub fn resolve(c: &CommonFlags, x: &ExtraFlags) -> Result<RunConfig, Failure> {
    let base = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(from_flags(c, x)))
}
