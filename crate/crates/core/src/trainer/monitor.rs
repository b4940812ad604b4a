use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::EpochTrace;
use crate::backbone::{write_checkpoint, CheckpointMeta, ModelParams};
use crate::counterfactual::CausalReport;
use crate::error::{Error, Result};

/// Hooks called from the training loop.
pub trait Monitor {
    fn on_batch(&mut self, _epoch: usize, _batch: usize, _report: &CausalReport) -> Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _modality_ids: &[String], _trace: &EpochTrace) -> Result<()> {
        Ok(())
    }

    /// Called with the current parameters whenever validation recall improves.
    fn on_new_best(&mut self, _epoch: usize, _params: &ModelParams) -> Result<()> {
        Ok(())
    }
}

pub struct NoMonitor;

impl Monitor for NoMonitor {}

/// Writes `<prefix>.csv` and `<prefix>.jsonl` epoch traces, optionally
/// per-batch causal summaries to `<prefix>.causal.jsonl`, and a checkpoint at
/// every new validation best.
pub struct FileMonitor {
    csv: Writer,
    jsonl: Writer,
    causal: Option<Writer>,
    checkpoint: Option<(PathBuf, CheckpointMeta)>,
    header_written: bool,
}

struct Writer {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Writer {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Writer {
            path,
            out: BufWriter::new(f),
        })
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Serialize)]
struct BatchRecord<'a> {
    epoch: usize,
    batch: usize,
    #[serde(flatten)]
    report: &'a CausalReport,
}

impl FileMonitor {
    pub fn create(dir: &Path, prefix: &str, causal_log: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(FileMonitor {
            csv: Writer::create(dir.join(format!("{prefix}.csv")))?,
            jsonl: Writer::create(dir.join(format!("{prefix}.jsonl")))?,
            causal: if causal_log {
                Some(Writer::create(dir.join(format!("{prefix}.causal.jsonl")))?)
            } else {
                None
            },
            checkpoint: None,
            header_written: false,
        })
    }

    pub fn with_checkpoint(mut self, path: PathBuf, meta: CheckpointMeta) -> Self {
        self.checkpoint = Some((path, meta));
        self
    }
}

impl EpochTrace {
    /// `epoch,bpr,l2,total,sd_<m>…,gd_<m>…,lambda_<m>…,recall_<c>,ndcg_<c>,precision_<c>…`
    pub fn csv_header(&self, modality_ids: &[String]) -> String {
        let mut cols: Vec<String> = ["epoch", "bpr", "l2", "total"].map(String::from).to_vec();
        for prefix in ["sd", "gd"] {
            cols.extend(modality_ids.iter().map(|m| format!("{prefix}_{m}")));
        }
        if !self.lambda.is_empty() {
            cols.extend(modality_ids.iter().map(|m| format!("lambda_{m}")));
        }
        for c in &self.val {
            for metric in ["recall", "ndcg", "precision"] {
                cols.push(format!("{metric}_{}", c.channel));
            }
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.epoch.to_string(), self.bpr.to_string(), self.l2.to_string(), self.total.to_string()];
        cols.extend(self.sd.iter().chain(&self.gd).chain(&self.lambda).map(f64::to_string));
        for c in &self.val {
            let m = c.metrics;
            cols.extend([m.recall, m.ndcg, m.precision].map(|x| x.to_string()));
        }
        cols.join(",")
    }
}

impl Monitor for FileMonitor {
    fn on_batch(&mut self, epoch: usize, batch: usize, report: &CausalReport) -> Result<()> {
        if let Some(w) = &mut self.causal {
            let summary = report.summary();
            let rec = BatchRecord {
                epoch,
                batch,
                report: &summary,
            };
            w.line(&serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }

    fn on_epoch(&mut self, modality_ids: &[String], trace: &EpochTrace) -> Result<()> {
        if !self.header_written {
            self.csv.line(&trace.csv_header(modality_ids))?;
            self.header_written = true;
        }
        self.csv.line(&trace.csv_row())?;
        self.jsonl.line(&serde_json::to_string(trace)?)
    }

    fn on_new_best(&mut self, _epoch: usize, params: &ModelParams) -> Result<()> {
        if let Some((path, meta)) = &self.checkpoint {
            write_checkpoint(path, params, meta)?;
        }
        Ok(())
    }
}
