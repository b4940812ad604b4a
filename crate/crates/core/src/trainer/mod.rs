//! Training loops for uni-modal teachers, the plain backbone and the distilled
//! student.
//!
//! Every run draws BPR triples from its own sampling stream, evaluates the
//! validation split after each epoch and keeps the parameters of the epoch with
//! the highest validation Recall@K. Terms whose loss weight is zero are left out
//! of the backward pass, so a student with `lambda_kd = 0` follows exactly the
//! same trajectory as a backbone-only run with the same seed.

mod monitor;

use serde::{Deserialize, Serialize};

use crate::backbone::{backward, forward_batch, AdamState, ModalitySet, ModelParams, ModelShape, Upstream};
use crate::counterfactual::{uniform_weights, CausalReport};
use crate::data::{check_features, sample_bpr_batch, sample_generic_batch, InteractionData, ModalityFeatures, TripleBatch};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Channel, ChannelMetrics, Split};
use crate::losses::{bpr_loss, generic_distill, LossConfig};
use crate::matrix::axpy;
use crate::rng::{stream_rng, Stream};

pub use monitor::{FileMonitor, Monitor, NoMonitor};

/// Init/sampling tag of the backbone and the student; teacher `m` uses `TEACHER_TAG + m`.
pub const STUDENT_TAG: u32 = 0;
pub const TEACHER_TAG: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub l2_coeff: f64,
    #[serde(flatten)]
    pub loss: LossConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_k: usize,
    pub seed: u64,
    pub enable_reweight: bool,
    pub enable_generic: bool,
    /// Batches per epoch; `None` means `ceil(n_train / batch_size)`.
    pub batches_per_epoch: Option<usize>,
    /// Also evaluate every uni-modal channel after each epoch.
    pub trace_channels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            lr: 1e-3,
            batch_size: 1024,
            l2_coeff: 1e-4,
            loss: LossConfig::default(),
            max_epochs: 500,
            patience: 10,
            eval_k: 20,
            seed: 0,
            enable_reweight: true,
            enable_generic: true,
            batches_per_epoch: None,
            trace_channels: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return fail("l2 coefficient must be nonnegative");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.eval_k == 0 {
            return fail("k must be at least 1");
        }
        if self.batches_per_epoch == Some(0) {
            return fail("batches_per_epoch must be at least 1");
        }
        self.loss.validate()
    }

    fn batches(&self, data: &InteractionData) -> usize {
        self.batches_per_epoch
            .unwrap_or_else(|| data.n_train().div_ceil(self.batch_size))
    }
}

/// Per-epoch record. Losses are means per training triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub bpr: f64,
    pub sd: Vec<f64>,
    pub gd: Vec<f64>,
    pub l2: f64,
    pub total: f64,
    pub lambda: Vec<f64>,
    /// Validation metrics; the monitored channel comes first.
    pub val: Vec<ChannelMetrics>,
    pub monitored_recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop { best_epoch: usize },
}

/// Stops once `current - argmax >= patience`; ties keep the earliest best.
pub fn early_stop_check(history: &[f64], patience: usize) -> StopDecision {
    let Some(best) = best_epoch(history) else {
        return StopDecision::Continue;
    };
    if history.len() - 1 - best >= patience {
        StopDecision::Stop { best_epoch: best }
    } else {
        StopDecision::Continue
    }
}

fn best_epoch(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (e, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| v > history[b]) {
            best = Some(e);
        }
    }
    best
}

/// `coeff · Σ ‖θ‖²` over every embedding row a triple of `batch` touches:
/// `x_u`, `x_i`, `x_j` and `p_u^m` for `m ∈ keep`, counted once per occurrence.
/// Adds `2 · coeff · θ` to `grads`.
pub fn l2_penalty(
    params: &ModelParams,
    batch: &TripleBatch,
    keep: ModalitySet,
    coeff: f64,
    grads: &mut ModelParams,
) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut total = 0.0;
    for t in &batch.triples {
        total += sq(params.user_emb.row(t.user));
        axpy(2.0 * coeff, params.user_emb.row(t.user), grads.user_emb.row_mut(t.user));
        for i in [t.pos, t.neg] {
            total += sq(params.item_emb.row(i));
            axpy(2.0 * coeff, params.item_emb.row(i), grads.item_emb.row_mut(i));
        }
        for m in 0..params.n_modalities() {
            if keep.contains(m) {
                total += sq(params.user_pref[m].row(t.user));
                axpy(2.0 * coeff, params.user_pref[m].row(t.user), grads.user_pref[m].row_mut(t.user));
            }
        }
    }
    coeff * total
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_recall: f64,
    pub trace: Vec<EpochTrace>,
    pub stopped_early: bool,
}

#[derive(Clone, Copy)]
enum Role<'a> {
    Teacher(usize),
    Backbone,
    Student(&'a [ModelParams]),
}

/// Trains a model that only ever sees modality `modality`; every other
/// modality is ablated in all forward passes.
pub fn train_teacher(
    data: &InteractionData,
    features: &[ModalityFeatures],
    modality: usize,
    config: &TrainConfig,
    monitor: &mut dyn Monitor,
) -> Result<TrainOutcome> {
    if modality >= features.len() {
        return Err(Error::Index {
            what: "modality",
            index: modality,
            len: features.len(),
        });
    }
    run(data, features, config, Role::Teacher(modality), monitor)
}

/// Plain multimodal training under the ranking loss.
pub fn train_backbone(
    data: &InteractionData,
    features: &[ModalityFeatures],
    config: &TrainConfig,
    monitor: &mut dyn Monitor,
) -> Result<TrainOutcome> {
    run(data, features, config, Role::Backbone, monitor)
}

/// Distilled student: ranking loss plus per-modality specific and generic
/// distillation from frozen teachers, weighted per batch by counterfactual
/// modality effects.
pub fn train_student(
    data: &InteractionData,
    features: &[ModalityFeatures],
    teachers: &[ModelParams],
    config: &TrainConfig,
    monitor: &mut dyn Monitor,
) -> Result<TrainOutcome> {
    if teachers.len() != features.len() {
        return Err(Error::Config(format!(
            "need one teacher per modality: {} modalities, {} teachers",
            features.len(),
            teachers.len()
        )));
    }
    for (m, t) in teachers.iter().enumerate() {
        t.check_features(features)?;
        if t.shape.n_users != data.n_users {
            return Err(Error::Shape {
                what: format!("teacher {m} users"),
                expected: data.n_users.to_string(),
                got: t.shape.n_users.to_string(),
            });
        }
    }
    uniform_weights(features.len())?;
    run(data, features, config, Role::Student(teachers), monitor)
}

#[derive(Default)]
struct EpochSums {
    bpr: f64,
    sd: Vec<f64>,
    gd: Vec<f64>,
    l2: f64,
    total: f64,
    lambda: Vec<f64>,
    triples: usize,
    batches: usize,
}

fn run(
    data: &InteractionData,
    features: &[ModalityFeatures],
    config: &TrainConfig,
    role: Role<'_>,
    monitor: &mut dyn Monitor,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_features(data, features)?;
    let n_mod = features.len();
    let tag = match role {
        Role::Teacher(m) => TEACHER_TAG + m as u32,
        _ => STUDENT_TAG,
    };
    let shape = ModelShape::new(data.n_users, data.n_items, config.dim, features);
    let mut params = ModelParams::init_xavier(&shape, config.seed, tag)?;
    let mut grads = ModelParams::zeros(&shape);
    let mut adam = AdamState::new(&params);
    let mut sampling = stream_rng(config.seed, Stream::Sampling, tag);
    let mut generic_rng = stream_rng(config.seed, Stream::Generic, tag);
    let keep = match role {
        Role::Teacher(m) => ModalitySet::only(m),
        _ => ModalitySet::all(n_mod),
    };
    let monitored = match role {
        Role::Teacher(m) => Channel::Modality(m),
        _ => Channel::Full,
    };
    let mut channels = vec![monitored];
    if config.trace_channels {
        channels.extend(Channel::all(n_mod).into_iter().filter(|c| *c != monitored));
    }
    let n_batches = config.batches(data);
    let names = &shape.modality_ids;

    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut best = params.clone();
    let mut stopped_early = false;
    for epoch in 0..config.max_epochs {
        let mut sums = EpochSums {
            sd: vec![0.0; n_mod],
            gd: vec![0.0; n_mod],
            lambda: vec![0.0; n_mod],
            ..Default::default()
        };
        for b in 0..n_batches {
            let diverged = |detail: String| Error::Diverged {
                epoch,
                batch: b,
                detail,
            };
            grads.reset();
            let batch = sample_bpr_batch(data, config.batch_size, &mut sampling)?;
            let margins = forward_batch(&params, features, &batch)?;
            let delta = margins.delta(keep);
            let bpr = bpr_loss(&delta);
            let mut total = bpr.value;
            let mut upstream = vec![Upstream {
                keep,
                grad: &bpr.grad,
            }];
            let mut sd_grads = Vec::new();
            let mut generic = None;
            if let Role::Student(teachers) = role {
                let step = student_terms(&params, features, data, teachers, config, &batch, &margins, &mut generic_rng)?;
                if step.report.modalities.iter().any(|e| !e.ate.is_finite()) {
                    return Err(diverged("non-finite treatment effect".into()));
                }
                monitor.on_batch(epoch, b, &step.report)?;
                for m in 0..n_mod {
                    sums.sd[m] += step.sd[m];
                    sums.gd[m] += step.gd[m];
                    sums.lambda[m] += step.weights[m];
                }
                total += step.distill_total;
                sd_grads = step.sd_grads;
                generic = step.generic;
            }
            for (m, g) in &sd_grads {
                upstream.push(Upstream {
                    keep: ModalitySet::only(*m),
                    grad: g,
                });
            }
            backward(&params, features, &batch, &margins, &upstream, &mut grads)?;
            if let Some((gbatch, gmargins, g_up)) = &generic {
                let up: Vec<Upstream> = g_up
                    .iter()
                    .map(|(m, g)| Upstream {
                        keep: ModalitySet::only(*m),
                        grad: g,
                    })
                    .collect();
                backward(&params, features, gbatch, gmargins, &up, &mut grads)?;
            }
            let l2 = l2_penalty(&params, &batch, keep, config.l2_coeff, &mut grads);
            total += l2;
            if !total.is_finite() {
                return Err(diverged(format!("loss is {total}")));
            }
            adam.step(&mut params, &grads, config.lr)
                .map_err(|e| diverged(e.to_string()))?;
            sums.bpr += bpr.value;
            sums.l2 += l2;
            sums.total += total;
            sums.triples += batch.len();
            sums.batches += 1;
        }
        let report = evaluate(&params, features, data, Split::Val, config.eval_k, &channels)?;
        let recall = report.per_channel[0].metrics.recall;
        history.push(recall);
        let per = |x: f64| x / sums.triples as f64;
        let t = EpochTrace {
            epoch,
            bpr: per(sums.bpr),
            sd: sums.sd.iter().map(|&x| per(x)).collect(),
            gd: sums.gd.iter().map(|&x| per(x)).collect(),
            l2: per(sums.l2),
            total: per(sums.total),
            lambda: match role {
                Role::Student(_) => sums.lambda.iter().map(|&x| x / sums.batches as f64).collect(),
                _ => Vec::new(),
            },
            val: report.per_channel,
            monitored_recall: recall,
        };
        if best_epoch(&history) == Some(epoch) {
            best.clone_from(&params);
            monitor.on_new_best(epoch, &params)?;
        }
        monitor.on_epoch(names, &t)?;
        trace.push(t);
        if let StopDecision::Stop { .. } = early_stop_check(&history, config.patience) {
            stopped_early = true;
            break;
        }
    }
    let best_epoch = best_epoch(&history).expect("at least one epoch");
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_recall: history[best_epoch],
        trace,
        stopped_early,
    })
}

type GenericPass = (TripleBatch, crate::backbone::BatchMargins, Vec<(usize, Vec<f64>)>);

struct StudentStep {
    report: CausalReport,
    weights: Vec<f64>,
    sd: Vec<f64>,
    gd: Vec<f64>,
    distill_total: f64,
    /// Weighted `∂L/∂Δ_m` on the BPR batch, nonzero terms only.
    sd_grads: Vec<(usize, Vec<f64>)>,
    generic: Option<GenericPass>,
}

#[allow(clippy::too_many_arguments)]
fn student_terms(
    params: &ModelParams,
    features: &[ModalityFeatures],
    data: &InteractionData,
    teachers: &[ModelParams],
    config: &TrainConfig,
    batch: &TripleBatch,
    margins: &crate::backbone::BatchMargins,
    generic_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<StudentStep> {
    let n_mod = features.len();
    let loss = &config.loss;
    let teacher_margins: Vec<Vec<f64>> = teachers
        .iter()
        .enumerate()
        .map(|(m, t)| forward_batch(t, features, batch).map(|tm| tm.delta_masked[m].clone()))
        .collect::<Result<_>>()?;
    let without: Vec<Vec<f64>> = (0..n_mod)
        .map(|m| margins.delta(ModalitySet::without(n_mod, m)))
        .collect();
    let report = CausalReport::estimate(
        &params.shape.modality_ids,
        &margins.delta_full,
        &without,
        &teacher_margins,
        config.enable_reweight,
    )?;
    let weights = report.weights();

    let mut sd = Vec::with_capacity(n_mod);
    let mut sd_grads = Vec::new();
    for m in 0..n_mod {
        let l = loss.sd_variant.apply(&teacher_margins[m], &margins.delta_masked[m], loss.tau);
        sd.push(l.value);
        let c = loss.lambda_kd * weights[m];
        if c != 0.0 {
            sd_grads.push((m, l.grad.iter().map(|g| c * g).collect()));
        }
    }

    let mut gd = vec![0.0; n_mod];
    let mut generic = None;
    if config.enable_generic {
        let gbatch = sample_generic_batch(data, batch.len(), generic_rng)?;
        let gm = forward_batch(params, features, &gbatch)?;
        let mut ups = Vec::new();
        for (m, t) in teachers.iter().enumerate() {
            let tm = forward_batch(t, features, &gbatch)?;
            let l = generic_distill(&tm.delta_masked[m], &gm.delta_masked[m], loss.tau);
            gd[m] = l.value;
            let c = loss.lambda_kd * weights[m] * loss.lambda_g;
            if c != 0.0 {
                ups.push((m, l.grad.iter().map(|g| c * g).collect()));
            }
        }
        if !ups.is_empty() {
            generic = Some((gbatch, gm, ups));
        }
    }
    let distill_total = loss.lambda_kd
        * (0..n_mod)
            .map(|m| weights[m] * crate::losses::modality_loss(sd[m], gd[m], loss.lambda_g))
            .sum::<f64>();
    Ok(StudentStep {
        report,
        weights,
        sd,
        gd,
        distill_total,
        sd_grads,
        generic,
    })
}
