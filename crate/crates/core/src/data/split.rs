use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::{InteractionData, RawInteraction};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    /// 80% train, 10% validation, remainder test.
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
        }
    }
}

/// Per-user random split of the interactions.
///
/// Each user's items are shuffled with a seeded stream and cut at
/// `floor(train * n)` and `floor((train + val) * n)`. If validation or test
/// would come out empty, one item moves over from the training part.
///
/// Users and items receive dense indices in order of first appearance.
pub fn split(raw: &[RawInteraction], ratios: SplitRatios, seed: u64) -> Result<InteractionData> {
    if !(ratios.train > 0.0 && ratios.val >= 0.0 && ratios.train + ratios.val <= 1.0) {
        return Err(Error::Config(format!("bad split ratios {ratios:?}")));
    }
    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut per_user: Vec<Vec<usize>> = Vec::new();
    for (u, i) in raw {
        let uix = *user_index.entry(u.as_str()).or_insert_with(|| {
            user_ids.push(u.clone());
            per_user.push(Vec::new());
            user_ids.len() - 1
        });
        let iix = *item_index.entry(i.as_str()).or_insert_with(|| {
            item_ids.push(i.clone());
            item_ids.len() - 1
        });
        if !per_user[uix].contains(&iix) {
            per_user[uix].push(iix);
        }
    }

    let mut rng = stream_rng(seed, Stream::Data, 0);
    let mut train = Vec::with_capacity(per_user.len());
    let mut val = Vec::with_capacity(per_user.len());
    let mut test = Vec::with_capacity(per_user.len());
    for (u, mut items) in per_user.into_iter().enumerate() {
        let n = items.len();
        if n < 3 {
            return Err(Error::data(format!(
                "user {} has {n} interactions; at least 3 are needed for train/val/test",
                user_ids[u]
            )));
        }
        items.shuffle(&mut rng);
        let (n_train, n_val) = split_sizes(n, ratios);
        test.push(items.split_off(n_train + n_val));
        val.push(items.split_off(n_train));
        train.push(items);
    }
    InteractionData::new(user_ids, item_ids, train, val, test)
}

/// `(train, val)` sizes for a user with `n >= 3` items; test takes the rest.
fn split_sizes(n: usize, ratios: SplitRatios) -> (usize, usize) {
    let nf = n as f64;
    let cut_train = ((ratios.train * nf).floor() as usize).min(n);
    let cut_val = (((ratios.train + ratios.val) * nf).floor() as usize).clamp(cut_train, n);
    let mut n_train = cut_train;
    let mut n_val = cut_val - cut_train;
    let mut n_test = n - cut_val;
    if n_val == 0 {
        n_train -= 1;
        n_val += 1;
    }
    if n_test == 0 {
        n_train -= 1;
        n_test += 1;
    }
    debug_assert_eq!(n_train + n_val + n_test, n);
    (n_train, n_val)
}
