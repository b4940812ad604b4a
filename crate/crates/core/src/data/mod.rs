//! Interaction data, modality features and triple sampling.

mod filter;
mod io;
mod sample;
mod split;
mod synth;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use filter::five_core_filter;
pub use io::{
    load_dataset, load_features, load_index_map, load_interactions, save_dataset, write_features,
    write_index_map, write_interactions, DatasetManifest, FeatureEntry,
};
pub use sample::{sample_bpr_batch, sample_generic_batch, MAX_NEGATIVE_ATTEMPTS};
pub use split::{split, SplitRatios};
pub use synth::{synth_generate, SynthConfig, SynthModality};

/// One observed `(user, item)` pair with external ids.
pub type RawInteraction = (String, String);

/// Implicit-feedback interactions with a per-user train/val/test split.
///
/// All item lists are sorted ascending and pairwise disjoint per user.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionData {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<Vec<usize>>,
    pub val: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    /// Dense index -> external id.
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    observed: Vec<Vec<usize>>,
}

impl InteractionData {
    /// Builds a dataset from per-user splits, validating every invariant.
    pub fn new(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        mut train: Vec<Vec<usize>>,
        mut val: Vec<Vec<usize>>,
        mut test: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        if n_users == 0 || n_items == 0 {
            return Err(Error::data("dataset has no users or no items"));
        }
        if train.len() != n_users || val.len() != n_users || test.len() != n_users {
            return Err(Error::data("split lists do not cover every user"));
        }
        let mut observed = Vec::with_capacity(n_users);
        for u in 0..n_users {
            for list in [&mut train[u], &mut val[u], &mut test[u]] {
                list.sort_unstable();
                list.dedup();
                if let Some(&i) = list.last() {
                    if i >= n_items {
                        return Err(Error::Index {
                            what: "item",
                            index: i,
                            len: n_items,
                        });
                    }
                }
            }
            if train[u].is_empty() {
                return Err(Error::data(format!(
                    "user {} has no training interactions",
                    user_ids[u]
                )));
            }
            let mut all: Vec<usize> = train[u]
                .iter()
                .chain(&val[u])
                .chain(&test[u])
                .copied()
                .collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            if all.len() != total {
                return Err(Error::data(format!(
                    "user {} has overlapping train/val/test items",
                    user_ids[u]
                )));
            }
            observed.push(all);
        }
        let user_index = index_of(&user_ids, "user")?;
        let item_index = index_of(&item_ids, "item")?;
        Ok(InteractionData {
            n_users,
            n_items,
            train,
            val,
            test,
            user_ids,
            item_ids,
            user_index,
            item_index,
            observed,
        })
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Sorted union of the user's train, val and test items.
    pub fn observed(&self, user: usize) -> &[usize] {
        &self.observed[user]
    }

    pub fn is_observed(&self, user: usize, item: usize) -> bool {
        self.observed[user].binary_search(&item).is_ok()
    }

    pub fn n_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn n_interactions(&self) -> usize {
        self.observed.iter().map(Vec::len).sum()
    }
}

fn index_of(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::data(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(map)
}

/// Item feature matrix of one modality together with its row mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    pub name: String,
    pub matrix: Matrix,
    pub mean_item_vector: Vec<f64>,
}

impl ModalityFeatures {
    pub fn new(name: impl Into<String>, matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::data("empty feature matrix"));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        let mean_item_vector = compute_feature_mean(&matrix);
        Ok(ModalityFeatures {
            name: name.into(),
            matrix,
            mean_item_vector,
        })
    }

    pub fn n_items(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, item: usize) -> &[f64] {
        self.matrix.row(item)
    }
}

/// Mean item feature vector used to ablate a modality.
pub fn compute_feature_mean(matrix: &Matrix) -> Vec<f64> {
    matrix.column_mean()
}

/// Checks that every feature matrix has one row per item and that names are unique.
pub fn check_features(data: &InteractionData, features: &[ModalityFeatures]) -> Result<()> {
    for (k, f) in features.iter().enumerate() {
        if f.n_items() != data.n_items {
            return Err(Error::Shape {
                what: format!("features {:?}", f.name),
                expected: format!("{} rows", data.n_items),
                got: format!("{} rows", f.n_items()),
            });
        }
        if features[..k].iter().any(|g| g.name == f.name) {
            return Err(Error::data(format!("duplicate modality {:?}", f.name)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleKind {
    /// `(u, i, j)` with `i` observed in training and `j` unobserved.
    Bpr,
    /// `(u, j, k)` with `j`, `k` uniform over all items.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

impl Triple {
    pub fn new(user: usize, pos: usize, neg: usize) -> Self {
        Triple { user, pos, neg }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleBatch {
    pub triples: Vec<Triple>,
    pub kind: TripleKind,
}

impl TripleBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}
