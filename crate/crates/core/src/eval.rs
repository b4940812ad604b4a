//! Full-ranking top-K evaluation: Recall, NDCG and Precision, for the full model
//! and for uni-modal channels obtained by ablation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{ModalitySet, ModelParams, ScoringCache};
use crate::data::{InteractionData, ModalityFeatures};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}, expected val or test"))),
        }
    }
}

/// Which inputs stay informative while ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Full,
    Modality(usize),
}

impl Channel {
    pub fn keep(self, n_modalities: usize) -> ModalitySet {
        match self {
            Channel::Full => ModalitySet::all(n_modalities),
            Channel::Modality(m) => ModalitySet::only(m),
        }
    }

    pub fn label(self, modality_ids: &[String]) -> String {
        match self {
            Channel::Full => "full".to_string(),
            Channel::Modality(m) => modality_ids[m].clone(),
        }
    }

    /// The full channel followed by every uni-modal channel.
    pub fn all(n_modalities: usize) -> Vec<Channel> {
        std::iter::once(Channel::Full)
            .chain((0..n_modalities).map(Channel::Modality))
            .collect()
    }
}

/// Ranked item indices, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopK {
    pub items: Vec<usize>,
    /// Fewer than `k` candidates were available.
    pub truncated: bool,
}

/// Highest-scoring `k` items not in `exclude` (sorted ascending). Ties go to
/// the lower item index.
pub fn rank_scores(scores: &[f64], exclude: &[&[usize]], k: usize) -> TopK {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.iter().all(|ex| ex.binary_search(i).is_err()))
        .collect();
    let cmp = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
    let truncated = candidates.len() < k;
    if candidates.len() > k && k > 0 {
        candidates.select_nth_unstable_by(k - 1, cmp);
    }
    candidates.truncate(k);
    candidates.sort_unstable_by(cmp);
    TopK {
        items: candidates,
        truncated,
    }
}

fn exclusions(data: &InteractionData, user: usize, split: Split) -> Vec<&[usize]> {
    match split {
        Split::Val => vec![&data.train[user]],
        Split::Test => vec![&data.train[user], &data.val[user]],
    }
}

fn held_out(data: &InteractionData, user: usize, split: Split) -> &[usize] {
    match split {
        Split::Val => &data.val[user],
        Split::Test => &data.test[user],
    }
}

/// Top-`k` items for one user under `keep`, excluding the user's items that
/// precede `split`.
pub fn rank_topk(
    params: &ModelParams,
    features: &[ModalityFeatures],
    data: &InteractionData,
    user: usize,
    k: usize,
    split: Split,
    keep: ModalitySet,
) -> Result<TopK> {
    if user >= data.n_users {
        return Err(Error::Index {
            what: "user",
            index: user,
            len: data.n_users,
        });
    }
    let cache = ScoringCache::new(params, features)?;
    let mut scores = Vec::new();
    cache.score_all(params, user, keep, &mut scores);
    Ok(rank_scores(&scores, &exclusions(data, user, split), k))
}

fn hits(topk: &[usize], test: &[usize]) -> usize {
    topk.iter().filter(|i| test.binary_search(i).is_ok()).count()
}

/// `|topk ∩ test| / |test|`; `test` sorted ascending and nonempty.
pub fn recall_at_k(topk: &[usize], test: &[usize]) -> f64 {
    hits(topk, test) as f64 / test.len() as f64
}

/// `|topk ∩ test| / k` with the requested `k`.
pub fn precision_at_k(topk: &[usize], test: &[usize], k: usize) -> f64 {
    hits(topk, test) as f64 / k as f64
}

/// Binary-relevance NDCG with the ideal ranking truncated at `min(k, |test|)`.
pub fn ndcg_at_k(topk: &[usize], test: &[usize], k: usize) -> f64 {
    let gain = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(r, _)| gain(r))
        .sum();
    let idcg: f64 = (0..k.min(test.len())).map(gain).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub ndcg: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Averages over users with at least one held-out item. The top-level numbers
/// are those of the first requested channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub split: Split,
    pub recall: f64,
    pub ndcg: f64,
    pub precision: f64,
    pub per_channel: Vec<ChannelMetrics>,
    pub n_users_evaluated: usize,
    /// Users with fewer than `k` candidate items.
    pub n_users_truncated: usize,
}

impl MetricsReport {
    pub fn channel(&self, label: &str) -> Option<&Metrics> {
        self.per_channel.iter().find(|c| c.channel == label).map(|c| &c.metrics)
    }

    pub const CSV_HEADER: &'static str = "split,k,channel,recall,ndcg,precision,n_users";

    /// One CSV row per channel, without header.
    pub fn csv_rows(&self) -> String {
        self.per_channel
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{}\n",
                    self.split, self.k, c.channel, c.metrics.recall, c.metrics.ndcg, c.metrics.precision, self.n_users_evaluated
                )
            })
            .collect()
    }
}

/// Ranks every evaluable user under every channel and averages the metrics.
///
/// Users are scored in parallel; sums are reduced in user-index order.
pub fn evaluate(
    params: &ModelParams,
    features: &[ModalityFeatures],
    data: &InteractionData,
    split: Split,
    k: usize,
    channels: &[Channel],
) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if channels.is_empty() {
        return Err(Error::Config("no evaluation channels".into()));
    }
    let n_mod = params.n_modalities();
    for c in channels {
        if let Channel::Modality(m) = c {
            if *m >= n_mod {
                return Err(Error::Index {
                    what: "modality",
                    index: *m,
                    len: n_mod,
                });
            }
        }
    }
    if params.shape.n_users != data.n_users || params.shape.n_items != data.n_items {
        return Err(Error::Shape {
            what: "model vs dataset".into(),
            expected: format!("{}x{}", data.n_users, data.n_items),
            got: format!("{}x{}", params.shape.n_users, params.shape.n_items),
        });
    }
    let cache = ScoringCache::new(params, features)?;
    let users: Vec<usize> = (0..data.n_users).filter(|&u| !held_out(data, u, split).is_empty()).collect();
    if users.is_empty() {
        return Err(Error::Data(format!("no users with {split} interactions")));
    }
    let per_user: Vec<(Vec<Metrics>, bool)> = users
        .par_iter()
        .map_init(Vec::new, |scores, &u| {
            let test = held_out(data, u, split);
            let exclude = exclusions(data, u, split);
            let mut truncated = false;
            let m = channels
                .iter()
                .map(|c| {
                    cache.score_all(params, u, c.keep(n_mod), scores);
                    let top = rank_scores(scores, &exclude, k);
                    truncated |= top.truncated;
                    Metrics {
                        recall: recall_at_k(&top.items, test),
                        ndcg: ndcg_at_k(&top.items, test, k),
                        precision: precision_at_k(&top.items, test, k),
                    }
                })
                .collect();
            (m, truncated)
        })
        .collect();
    let n = users.len() as f64;
    let per_channel: Vec<ChannelMetrics> = channels
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let mut sum = Metrics::default();
            for (m, _) in &per_user {
                sum.recall += m[ci].recall;
                sum.ndcg += m[ci].ndcg;
                sum.precision += m[ci].precision;
            }
            ChannelMetrics {
                channel: c.label(&params.shape.modality_ids),
                metrics: Metrics {
                    recall: sum.recall / n,
                    ndcg: sum.ndcg / n,
                    precision: sum.precision / n,
                },
            }
        })
        .collect();
    let head = per_channel[0].metrics;
    Ok(MetricsReport {
        k,
        split,
        recall: head.recall,
        ndcg: head.ndcg,
        precision: head.precision,
        n_users_evaluated: users.len(),
        n_users_truncated: per_user.iter().filter(|(_, t)| *t).count(),
        per_channel,
    })
}
