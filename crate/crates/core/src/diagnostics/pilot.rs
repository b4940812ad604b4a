use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::long_csv;
use crate::data::{InteractionData, ModalityFeatures};
use crate::error::{Error, Result};
use crate::trainer::{train_backbone, train_teacher, NoMonitor, TrainConfig, TrainOutcome};

/// Validation Recall@K per epoch for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRun {
    /// `multimodal` or `<modality>-only`.
    pub label: String,
    /// Channels recorded for this run; the first one drives early stopping.
    pub channels: Vec<String>,
    /// `recall[epoch][channel]`
    pub recall: Vec<Vec<f64>>,
    pub best_epoch: usize,
}

impl PilotRun {
    /// Recall of `channel` at the run's best epoch.
    pub fn at_best(&self, channel: &str) -> Option<f64> {
        let c = self.channels.iter().position(|x| x == channel)?;
        Some(self.recall[self.best_epoch][c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotTrace {
    pub runs: Vec<PilotRun>,
}

impl PilotTrace {
    pub fn run(&self, label: &str) -> Option<&PilotRun> {
        self.runs.iter().find(|r| r.label == label)
    }

    /// `epoch,label,value` with labels `<run>/<channel>`.
    pub fn to_csv(&self) -> String {
        long_csv(
            "epoch",
            self.runs.iter().flat_map(|r| {
                r.recall.iter().enumerate().flat_map(move |(e, row)| {
                    row.iter()
                        .zip(&r.channels)
                        .map(move |(v, c)| (e, format!("{}/{c}", r.label), *v))
                })
            }),
        )
    }
}

/// Trace plus the trained models, so callers can reuse the teachers and the
/// joint baseline.
#[derive(Debug, Clone)]
pub struct PilotResult {
    pub trace: PilotTrace,
    pub joint: TrainOutcome,
    pub teachers: Vec<TrainOutcome>,
}

fn to_run(label: String, outcome: &TrainOutcome) -> PilotRun {
    PilotRun {
        label,
        channels: outcome.trace[0].val.iter().map(|c| c.channel.clone()).collect(),
        recall: outcome
            .trace
            .iter()
            .map(|t| t.val.iter().map(|c| c.metrics.recall).collect())
            .collect(),
        best_epoch: outcome.best_epoch,
    }
}

/// Trains the multimodal backbone without distillation and one teacher per
/// modality, recording per-epoch validation recall of every channel of the
/// joint model and of each teacher's own channel. Runs execute in parallel.
pub fn run_pilot(data: &InteractionData, features: &[ModalityFeatures], config: &TrainConfig) -> Result<PilotResult> {
    if features.len() < 2 {
        return Err(Error::Config("the pilot study needs at least two modalities".into()));
    }
    let joint_cfg = TrainConfig {
        trace_channels: true,
        ..config.clone()
    };
    let teacher_cfg = TrainConfig {
        trace_channels: false,
        ..config.clone()
    };
    let runs: Vec<Result<TrainOutcome>> = (0..=features.len())
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                train_backbone(data, features, &joint_cfg, &mut NoMonitor)
            } else {
                train_teacher(data, features, k - 1, &teacher_cfg, &mut NoMonitor)
            }
        })
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let joint = runs.next().expect("joint run");
    let teachers: Vec<TrainOutcome> = runs.collect();
    let mut trace = vec![to_run("multimodal".into(), &joint)];
    for (f, t) in features.iter().zip(&teachers) {
        trace.push(to_run(format!("{}-only", f.name), t));
    }
    Ok(PilotResult {
        trace: PilotTrace { runs: trace },
        joint,
        teachers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    #[test]
    fn pilot_labels_and_determinism() {
        let mut sc = SynthConfig::two_modality(25, 40, 0.9, 0.2, 2);
        sc.interactions_per_user = 8;
        let (data, f) = synth_generate(&sc).unwrap();
        let cfg = TrainConfig {
            dim: 8,
            lr: 0.01,
            batch_size: 64,
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let a = run_pilot(&data, &f, &cfg).unwrap();
        let b = run_pilot(&data, &f, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        let labels: Vec<&str> = a.trace.runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["multimodal", "textual-only", "visual-only"]);
        assert_eq!(a.trace.runs[0].channels, ["full", "textual", "visual"]);
        assert_eq!(a.trace.runs[1].channels, ["textual"]);
        assert_eq!(a.trace.runs[2].channels, ["visual"]);
        let csv = a.trace.to_csv();
        assert!(csv.starts_with("epoch,label,value\n0,multimodal/full,"));
        assert_eq!(csv.lines().count(), 1 + 2 * 3 + 2 + 2);
        assert!(run_pilot(&data, &f[..1], &cfg).is_err());
    }
}
