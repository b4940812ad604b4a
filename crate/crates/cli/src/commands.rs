use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use modbal_core::backbone::{read_checkpoint, write_checkpoint, CheckpointMeta};
use modbal_core::data::{
    five_core_filter, load_dataset, load_features, load_index_map, load_interactions, save_dataset,
    split, synth_generate, SplitRatios,
};
use modbal_core::diagnostics::{run_bridge_experiment, run_pilot, BridgeConfig};
use modbal_core::eval::{evaluate, Channel, MetricsReport};
use modbal_core::trainer::{train_student as fit_student, train_teacher as fit_teacher, FileMonitor, TrainOutcome};
use modbal_core::{Matrix, ModalityFeatures, ModelParams, Split, SynthConfig, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::Failure;

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::data(e.to_string()))
}

/// Writes `value` as pretty JSON to `path` and echoes it to stdout.
fn report<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = to_json(value)?;
    write_text(path, &text)?;
    print!("{text}");
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))
}

fn modality_index(features: &[ModalityFeatures], name: &str) -> Result<usize, Failure> {
    features.iter().position(|f| f.name == name).ok_or_else(|| {
        let known: Vec<&str> = features.iter().map(|f| f.name.as_str()).collect();
        Failure::usage(format!("unknown modality {name:?}; dataset has {known:?}"))
    })
}

/// Reorders feature rows from the order of `row_ids` into dense item order.
fn align_features(
    name: &str,
    raw: &ModalityFeatures,
    row_ids: &[String],
    item_ids: &[String],
) -> Result<ModalityFeatures, Failure> {
    if raw.n_items() != row_ids.len() {
        return Err(Failure::data(format!(
            "features {name:?} have {} rows but the feature id map lists {} items",
            raw.n_items(),
            row_ids.len()
        )));
    }
    let row_of: HashMap<&str, usize> = row_ids.iter().enumerate().map(|(r, id)| (id.as_str(), r)).collect();
    let mut data = Vec::with_capacity(item_ids.len() * raw.dim());
    for id in item_ids {
        let r = *row_of
            .get(id.as_str())
            .ok_or_else(|| Failure::data(format!("item {id:?} has no row in features {name:?}")))?;
        data.extend_from_slice(raw.row(r));
    }
    Ok(ModalityFeatures::new(name, Matrix::from_vec(item_ids.len(), raw.dim(), data))?)
}

pub fn prepare(rc: &RunConfig) -> Result<(), Failure> {
    let path = rc
        .interactions
        .as_deref()
        .ok_or_else(|| Failure::usage("no interaction file: pass --interactions"))?;
    let min_core = rc.min_core.unwrap_or(5);
    let raw = load_interactions(path)?;
    let kept = five_core_filter(&raw, min_core)?;
    let d = SplitRatios::default();
    let ratios = SplitRatios {
        train: rc.train_ratio.unwrap_or(d.train),
        val: rc.val_ratio.unwrap_or(d.val),
    };
    let data = split(&kept, ratios, rc.seed())?;

    let named = rc.feature.as_deref().unwrap_or_default();
    let mut features = Vec::with_capacity(named.len());
    if !named.is_empty() {
        let ids_path = rc
            .feature_ids
            .as_deref()
            .ok_or_else(|| Failure::usage("--feature needs --feature-ids to map rows to items"))?;
        let row_ids = load_index_map(ids_path)?;
        for f in named {
            let raw = load_features(&f.value, &f.name)?;
            features.push(align_features(&f.name, &raw, &row_ids, &data.item_ids)?);
        }
    }

    let out = rc.out_dir();
    let manifest = save_dataset(&out, &data, &features, None)?;
    let n_interactions = manifest.n_train + manifest.n_val + manifest.n_test;
    let summary = json!({
        "min_core": min_core,
        "n_raw_interactions": raw.len(),
        "n_users": manifest.n_users,
        "n_items": manifest.n_items,
        "n_interactions": n_interactions,
        "n_train": manifest.n_train,
        "n_val": manifest.n_val,
        "n_test": manifest.n_test,
        "density": n_interactions as f64 / (manifest.n_users as f64 * manifest.n_items as f64),
        "modalities": manifest.modalities,
    });
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn synth_config(rc: &RunConfig, base: SynthConfig) -> SynthConfig {
    SynthConfig {
        n_users: rc.n_users.unwrap_or(base.n_users),
        n_items: rc.n_items.unwrap_or(base.n_items),
        latent_dim: rc.latent_dim.unwrap_or(base.latent_dim),
        feature_dim: rc.feature_dim.unwrap_or(base.feature_dim),
        modalities: rc.signal.clone().unwrap_or(base.modalities),
        noise_scale: rc.noise_scale.unwrap_or(base.noise_scale),
        interactions_per_user: rc.interactions_per_user.unwrap_or(base.interactions_per_user),
        seed: rc.seed(),
    }
}

pub fn synth(rc: &RunConfig) -> Result<(), Failure> {
    let cfg = synth_config(rc, SynthConfig::two_modality(200, 300, 0.9, 0.2, 0));
    let (data, features) = synth_generate(&cfg)?;
    let info = serde_json::to_value(&cfg).map_err(|e| Failure::data(e.to_string()))?;
    let manifest = save_dataset(rc.out_dir(), &data, &features, Some(info))?;
    print!("{}", to_json(&manifest)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    role: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    modality: Option<&'a str>,
    config: &'a TrainConfig,
    best_epoch: usize,
    best_recall: f64,
    epochs_run: usize,
    stopped_early: bool,
    checkpoint: String,
}

fn finish_training(
    out: &Path,
    prefix: &str,
    role: &str,
    modality: Option<&str>,
    cfg: &TrainConfig,
    outcome: &TrainOutcome,
) -> Result<(), Failure> {
    let ckpt = format!("{prefix}.ckpt");
    let meta = CheckpointMeta {
        seed: cfg.seed,
        info: json!({ "role": role, "modality": modality, "config": cfg }),
    };
    write_checkpoint(&out.join(&ckpt), &outcome.params, &meta)?;
    let summary = TrainSummary {
        role,
        modality,
        config: cfg,
        best_epoch: outcome.best_epoch,
        best_recall: outcome.best_recall,
        epochs_run: outcome.trace.len(),
        stopped_early: outcome.stopped_early,
        checkpoint: ckpt,
    };
    report(&out.join(format!("{prefix}.summary.json")), &summary)
}

fn checked_config(rc: &RunConfig) -> Result<TrainConfig, Failure> {
    let cfg = rc.train_config();
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_teacher(rc: &RunConfig) -> Result<(), Failure> {
    let name = rc
        .modality
        .as_deref()
        .ok_or_else(|| Failure::usage("no modality: pass --modality"))?;
    let cfg = checked_config(rc)?;
    let (data, features, _) = load_dataset(rc.data_dir()?)?;
    let m = modality_index(&features, name)?;
    let out = rc.out_dir();
    let prefix = format!("teacher_{name}");
    let mut monitor = FileMonitor::create(&out, &prefix, false)?;
    let outcome = fit_teacher(&data, &features, m, &cfg, &mut monitor)?;
    finish_training(&out, &prefix, "teacher", Some(name), &cfg, &outcome)
}

/// Teacher checkpoint paths in modality order: `--teacher name=path` entries,
/// otherwise `<out-dir>/teacher_<name>.ckpt`.
fn teacher_paths(rc: &RunConfig, features: &[ModalityFeatures]) -> Result<Vec<PathBuf>, Failure> {
    let given = rc.teacher.as_deref().unwrap_or_default();
    for t in given {
        modality_index(features, &t.name)?;
    }
    let out = rc.out_dir();
    features
        .iter()
        .map(|f| {
            let path = given
                .iter()
                .rev()
                .find(|t| t.name == f.name)
                .map(|t| t.value.clone())
                .unwrap_or_else(|| out.join(format!("teacher_{}.ckpt", f.name)));
            if path.is_file() {
                Ok(path)
            } else {
                Err(Failure::io(format!(
                    "missing teacher checkpoint for modality {:?}: {}",
                    f.name,
                    path.display()
                )))
            }
        })
        .collect()
}

pub fn train_student(rc: &RunConfig) -> Result<(), Failure> {
    let cfg = checked_config(rc)?;
    let (data, features, _) = load_dataset(rc.data_dir()?)?;
    let teachers: Vec<ModelParams> = teacher_paths(rc, &features)?
        .iter()
        .map(|p| read_checkpoint(p).map(|(params, _)| params))
        .collect::<Result<_, _>>()?;
    let out = rc.out_dir();
    let mut monitor = FileMonitor::create(&out, "student", rc.causal_log.unwrap_or(false))?;
    let outcome = fit_student(&data, &features, &teachers, &cfg, &mut monitor)?;
    finish_training(&out, "student", "student", None, &cfg, &outcome)
}

fn parse_channels(names: Option<&[String]>, features: &[ModalityFeatures]) -> Result<Vec<Channel>, Failure> {
    match names {
        None => Ok(Channel::all(features.len())),
        Some([]) => Err(Failure::usage("--channels is empty")),
        Some(names) => names
            .iter()
            .map(|n| match n.as_str() {
                "full" => Ok(Channel::Full),
                other => modality_index(features, other).map(Channel::Modality),
            })
            .collect(),
    }
}

pub fn eval(rc: &RunConfig) -> Result<(), Failure> {
    let ckpt = rc
        .checkpoint
        .as_deref()
        .ok_or_else(|| Failure::usage("no checkpoint: pass --checkpoint"))?;
    let (data, features, _) = load_dataset(rc.data_dir()?)?;
    let (params, _) = read_checkpoint(ckpt)?;
    let channels = parse_channels(rc.channels.as_deref(), &features)?;
    let split = rc.split.unwrap_or(Split::Test);
    let k = rc.k.unwrap_or(20);
    let metrics: MetricsReport = evaluate(&params, &features, &data, split, k, &channels)?;

    let out = rc.out_dir();
    create_dir(&out)?;
    let stem = ckpt
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let base = format!("{stem}.{split}.k{k}");
    write_text(
        &out.join(format!("{base}.csv")),
        &format!("{}\n{}", MetricsReport::CSV_HEADER, metrics.csv_rows()),
    )?;
    report(&out.join(format!("{base}.json")), &metrics)
}

pub fn pilot(rc: &RunConfig) -> Result<(), Failure> {
    let cfg = checked_config(rc)?;
    let (data, features, _) = load_dataset(rc.data_dir()?)?;
    let result = run_pilot(&data, &features, &cfg)?;
    let out = rc.out_dir();
    create_dir(&out)?;
    write_text(&out.join("pilot.csv"), &result.trace.to_csv())?;
    write_text(&out.join("pilot.json"), &to_json(&result.trace)?)?;
    let summary: Vec<_> = result
        .trace
        .runs
        .iter()
        .map(|run| {
            let at_best: serde_json::Map<String, serde_json::Value> = run
                .channels
                .iter()
                .map(|c| (c.clone(), json!(run.at_best(c))))
                .collect();
            json!({ "label": run.label, "best_epoch": run.best_epoch, "recall_at_best": at_best })
        })
        .collect();
    report(&out.join("pilot.summary.json"), &summary)
}

pub fn bridge(rc: &RunConfig) -> Result<(), Failure> {
    let d = BridgeConfig::default();
    let synth = synth_config(rc, d.synth.clone());
    let ablated = rc
        .ablate
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|name| {
            synth.modalities.iter().position(|m| &m.name == name).ok_or_else(|| {
                Failure::usage(format!("cannot ablate unknown modality {name:?}"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = BridgeConfig {
        feature_scale: rc
            .feature_scale
            .clone()
            .unwrap_or_else(|| vec![1.0; synth.modalities.len()]),
        synth,
        ablated,
        steps: rc.steps.unwrap_or(d.steps),
        lr: rc.lr.unwrap_or(d.lr),
        init_scale: rc.init_scale.unwrap_or(d.init_scale),
        id_dim: rc.id_dim.unwrap_or(d.id_dim),
        batch_size: rc.batch_size.unwrap_or(d.batch_size),
        seed: rc.seed(),
    };
    let trace = run_bridge_experiment(&cfg)?;
    let out = rc.out_dir();
    create_dir(&out)?;
    write_text(&out.join("bridge.csv"), &trace.to_csv())?;
    write_text(&out.join("bridge.json"), &to_json(&json!({ "config": cfg, "trace": trace }))?)?;
    let last = trace.steps.last();
    let summary = json!({
        "modality_ids": trace.modality_ids,
        "steps": trace.steps.len(),
        "final_modality_scores": last.map(|s| &s.modality_scores),
        "final_bridge": last.map(|s| &s.bridge),
    });
    print!("{}", to_json(&summary)?);
    Ok(())
}
