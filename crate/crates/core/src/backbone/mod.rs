//! Late-fusion scoring model.
//!
//! `score(u, i) = x_u·x_i + Σ_m p_u^m · (W_m e_i^m)`
//!
//! A modality outside the kept set is ablated: its item features are replaced by
//! the dataset mean `ē^m` and its user preferences by the mean preference `p̄^m`.
//! The ablated term is then the same constant for every `(u, i)`, so it cancels
//! in every pairwise margin and gradients never flow through it.

mod adam;
mod bridge;
mod checkpoint;

use std::fmt;

use rand::Rng;

use crate::data::{ModalityFeatures, Triple, TripleBatch};
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{stream_rng, Stream};

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use bridge::{bridge_value, gradient_bridge, BridgeCheck};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};

/// Set of modality indices whose inputs stay informative.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalitySet(u32);

impl ModalitySet {
    pub const MAX_MODALITIES: usize = 32;

    pub fn empty() -> Self {
        ModalitySet(0)
    }

    pub fn all(n: usize) -> Self {
        assert!(n <= Self::MAX_MODALITIES);
        if n == 32 {
            ModalitySet(u32::MAX)
        } else {
            ModalitySet((1u32 << n) - 1)
        }
    }

    pub fn only(m: usize) -> Self {
        ModalitySet(1 << m)
    }

    /// Every modality of `n` except `m`.
    pub fn without(n: usize, m: usize) -> Self {
        ModalitySet(Self::all(n).0 & !(1 << m))
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        ModalitySet(indices.into_iter().fold(0, |acc, m| acc | (1 << m)))
    }

    #[inline]
    pub fn contains(self, m: usize) -> bool {
        self.0 >> m & 1 == 1
    }

    pub fn is_subset_of(self, n: usize) -> bool {
        self.0 & !Self::all(n).0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set()
            .entries((0..32).filter(|&m| self.contains(m)))
            .finish()
    }
}

/// Dimensions of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub modality_ids: Vec<String>,
    pub feature_dims: Vec<usize>,
}

impl ModelShape {
    pub fn new(n_users: usize, n_items: usize, dim: usize, features: &[ModalityFeatures]) -> Self {
        ModelShape {
            n_users,
            n_items,
            dim,
            modality_ids: features.iter().map(|f| f.name.clone()).collect(),
            feature_dims: features.iter().map(ModalityFeatures::dim).collect(),
        }
    }

    pub fn n_modalities(&self) -> usize {
        self.modality_ids.len()
    }

    fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = vec![
            ("user_emb".to_string(), (self.n_users, self.dim)),
            ("item_emb".to_string(), (self.n_items, self.dim)),
        ];
        for id in &self.modality_ids {
            out.push((format!("user_pref.{id}"), (self.n_users, self.dim)));
        }
        for (id, &dm) in self.modality_ids.iter().zip(&self.feature_dims) {
            out.push((format!("projection.{id}"), (self.dim, dm)));
        }
        out
    }
}

/// Trainable tensors: ID embeddings `x_u`, `x_i`, per-modality user preferences
/// `p_u^m` and projections `W_m` (`d × d_m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub user_emb: Matrix,
    pub item_emb: Matrix,
    pub user_pref: Vec<Matrix>,
    pub projection: Vec<Matrix>,
}

/// Same layout as [`ModelParams`], holding accumulated gradients.
pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        let mut t = shape.tensor_shapes().into_iter().map(|(_, (r, c))| Matrix::zeros(r, c));
        let user_emb = t.next().unwrap();
        let item_emb = t.next().unwrap();
        let m = shape.n_modalities();
        let user_pref = t.by_ref().take(m).collect();
        let projection = t.collect();
        ModelParams {
            shape: shape.clone(),
            user_emb,
            item_emb,
            user_pref,
            projection,
        }
    }

    /// Xavier-uniform initialization: every tensor of shape `(r, c)` is drawn
    /// from `U[-√(6/(r+c)), √(6/(r+c))]`, tensors in canonical order from the
    /// init stream of `seed` separated by `tag`.
    pub fn init_xavier(shape: &ModelShape, seed: u64, tag: u32) -> Result<Self> {
        if shape.n_users == 0 || shape.n_items == 0 || shape.dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if shape.feature_dims.contains(&0) {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if shape.n_modalities() > ModalitySet::MAX_MODALITIES {
            return Err(Error::Config("too many modalities".into()));
        }
        let mut rng = stream_rng(seed, Stream::Init, tag);
        let mut params = ModelParams::zeros(shape);
        for (_, t) in params.tensors_mut() {
            xavier_fill(t, &mut rng);
        }
        Ok(params)
    }

    pub fn n_modalities(&self) -> usize {
        self.shape.n_modalities()
    }

    pub fn all_modalities(&self) -> ModalitySet {
        ModalitySet::all(self.n_modalities())
    }

    /// Tensors in canonical order (checkpoint and optimizer layout).
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let names = self.shape.tensor_shapes();
        let refs = [&self.user_emb, &self.item_emb]
            .into_iter()
            .chain(&self.user_pref)
            .chain(&self.projection);
        names.into_iter().map(|(n, _)| n).zip(refs).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let names = self.shape.tensor_shapes();
        let refs = [&mut self.user_emb, &mut self.item_emb]
            .into_iter()
            .chain(&mut self.user_pref)
            .chain(&mut self.projection);
        names.into_iter().map(|(n, _)| n).zip(refs).collect()
    }

    pub fn reset(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if !t.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// Verifies the feature matrices match this model.
    pub fn check_features(&self, features: &[ModalityFeatures]) -> Result<()> {
        if features.len() != self.n_modalities() {
            return Err(Error::Shape {
                what: "modalities".into(),
                expected: self.n_modalities().to_string(),
                got: features.len().to_string(),
            });
        }
        for (m, f) in features.iter().enumerate() {
            if f.n_items() != self.shape.n_items || f.dim() != self.shape.feature_dims[m] {
                return Err(Error::Shape {
                    what: format!("features {:?}", f.name),
                    expected: format!("{}x{}", self.shape.n_items, self.shape.feature_dims[m]),
                    got: format!("{}x{}", f.n_items(), f.dim()),
                });
            }
        }
        Ok(())
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.shape.n_users {
            return Err(Error::Index {
                what: "user",
                index: u,
                len: self.shape.n_users,
            });
        }
        Ok(())
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.shape.n_items {
            return Err(Error::Index {
                what: "item",
                index: i,
                len: self.shape.n_items,
            });
        }
        Ok(())
    }

    /// Mean user preference `p̄^m` from the current parameters.
    pub fn mean_user_pref(&self, m: usize) -> Vec<f64> {
        self.user_pref[m].column_mean()
    }
}

fn xavier_fill<R: Rng>(t: &mut Matrix, rng: &mut R) {
    let (r, c) = t.shape();
    let bound = (6.0 / (r + c) as f64).sqrt();
    for x in t.as_mut_slice() {
        *x = rng.random_range(-bound..=bound);
    }
}

/// Score with every modality informative.
pub fn score_full(params: &ModelParams, features: &[ModalityFeatures], u: usize, i: usize) -> Result<f64> {
    score_masked(params, features, u, i, params.all_modalities())
}

/// Score with modalities outside `keep` ablated to `p̄^m · (W_m ē^m)`.
///
/// `p̄^m` is computed from the current parameters on every call; batch code
/// uses [`ScoringCache`] instead.
pub fn score_masked(
    params: &ModelParams,
    features: &[ModalityFeatures],
    u: usize,
    i: usize,
    keep: ModalitySet,
) -> Result<f64> {
    params.check_user(u)?;
    params.check_item(i)?;
    params.check_features(features)?;
    if !keep.is_subset_of(params.n_modalities()) {
        return Err(Error::Config(format!("mask {keep:?} names unknown modalities")));
    }
    let mut s = dot(params.user_emb.row(u), params.item_emb.row(i));
    for (m, f) in features.iter().enumerate() {
        let w = &params.projection[m];
        s += if keep.contains(m) {
            dot(params.user_pref[m].row(u), &w.mul_vec(f.row(i)))
        } else {
            dot(&params.mean_user_pref(m), &w.mul_vec(&f.mean_item_vector))
        };
    }
    Ok(s)
}

/// Per-evaluation cache of projected item features and ablation constants.
#[derive(Debug, Clone)]
pub struct ScoringCache {
    /// `W_m e_i^m` for every item, `n_items × d`.
    pub projected: Vec<Matrix>,
    /// `p̄^m · (W_m ē^m)`
    pub ablated_term: Vec<f64>,
}

impl ScoringCache {
    pub fn new(params: &ModelParams, features: &[ModalityFeatures]) -> Result<Self> {
        params.check_features(features)?;
        let d = params.shape.dim;
        let mut projected = Vec::with_capacity(features.len());
        let mut ablated_term = Vec::with_capacity(features.len());
        for (m, f) in features.iter().enumerate() {
            let w = &params.projection[m];
            let mut z = Matrix::zeros(f.n_items(), d);
            for i in 0..f.n_items() {
                z.row_mut(i).copy_from_slice(&w.mul_vec(f.row(i)));
            }
            projected.push(z);
            ablated_term.push(dot(&params.mean_user_pref(m), &w.mul_vec(&f.mean_item_vector)));
        }
        Ok(ScoringCache {
            projected,
            ablated_term,
        })
    }

    /// Scores of user `u` for every item under `keep`.
    pub fn score_all(&self, params: &ModelParams, u: usize, keep: ModalitySet, out: &mut Vec<f64>) {
        let n_items = params.shape.n_items;
        out.clear();
        out.resize(n_items, 0.0);
        let xu = params.user_emb.row(u);
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(xu, params.item_emb.row(i));
        }
        for m in 0..params.n_modalities() {
            if keep.contains(m) {
                let pu = params.user_pref[m].row(u);
                let z = &self.projected[m];
                for (i, s) in out.iter_mut().enumerate() {
                    *s += dot(pu, z.row(i));
                }
            } else {
                let c = self.ablated_term[m];
                out.iter_mut().for_each(|s| *s += c);
            }
        }
    }
}

/// Pairwise margins of a batch under every mask of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMargins {
    /// `x_u·x_i - x_u·x_j`
    pub id_margin: Vec<f64>,
    /// `S^m = p_u^m · W_m (e_i^m - e_j^m)`, indexed `[m][triple]`.
    pub modality_scores: Vec<Vec<f64>>,
    /// Margin with every modality informative.
    pub delta_full: Vec<f64>,
    /// Margin with only modality `m` informative, indexed `[m][triple]`.
    pub delta_masked: Vec<Vec<f64>>,
    /// `W_m (e_i^m - e_j^m)` flattened per modality, `triple * d` offsets.
    projected_diff: Vec<Vec<f64>>,
}

impl BatchMargins {
    pub fn len(&self) -> usize {
        self.id_margin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_margin.is_empty()
    }

    /// Margin under `keep`: `id_margin + Σ_{m ∈ keep} S^m`, summed in modality order.
    pub fn delta(&self, keep: ModalitySet) -> Vec<f64> {
        (0..self.len())
            .map(|t| {
                let mut d = self.id_margin[t];
                for (m, s) in self.modality_scores.iter().enumerate() {
                    if keep.contains(m) {
                        d += s[t];
                    }
                }
                d
            })
            .collect()
    }
}

fn check_triple(params: &ModelParams, t: &Triple) -> Result<()> {
    params.check_user(t.user)?;
    params.check_item(t.pos)?;
    params.check_item(t.neg)
}

/// One pass over the batch yielding the margin decomposition.
pub fn forward_batch(params: &ModelParams, features: &[ModalityFeatures], batch: &TripleBatch) -> Result<BatchMargins> {
    params.check_features(features)?;
    let n = batch.len();
    let n_mod = params.n_modalities();
    let d = params.shape.dim;
    let mut id_margin = Vec::with_capacity(n);
    let mut modality_scores = vec![Vec::with_capacity(n); n_mod];
    let mut projected_diff = vec![Vec::with_capacity(n * d); n_mod];
    let mut diff = Vec::new();
    for t in &batch.triples {
        check_triple(params, t)?;
        let xu = params.user_emb.row(t.user);
        id_margin.push(dot(xu, params.item_emb.row(t.pos)) - dot(xu, params.item_emb.row(t.neg)));
        for (m, f) in features.iter().enumerate() {
            diff.clear();
            diff.extend(f.row(t.pos).iter().zip(f.row(t.neg)).map(|(a, b)| a - b));
            let z = params.projection[m].mul_vec(&diff);
            modality_scores[m].push(dot(params.user_pref[m].row(t.user), &z));
            projected_diff[m].extend_from_slice(&z);
        }
    }
    let mut margins = BatchMargins {
        id_margin,
        modality_scores,
        delta_full: Vec::new(),
        delta_masked: Vec::new(),
        projected_diff,
    };
    margins.delta_full = margins.delta(ModalitySet::all(n_mod));
    margins.delta_masked = (0..n_mod).map(|m| margins.delta(ModalitySet::only(m))).collect();
    Ok(margins)
}

/// `∂L/∂Δ` for the margins of one forward variant.
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a> {
    pub keep: ModalitySet,
    pub grad: &'a [f64],
}

/// Accumulates parameter gradients of `Σ_v L_v(Δ_v)` into `grads`, given
/// `∂L_v/∂Δ_v` per variant. Variants sharing a component sum their upstream
/// gradients first, in the order given.
///
/// Per triple, with `c` the summed upstream gradient of a component:
/// `x_u += c (x_i - x_j)`, `x_i += c x_u`, `x_j -= c x_u`,
/// `p_u^m += c W_m (e_i - e_j)`, `W_m += c p_u^m ⊗ (e_i - e_j)`.
pub fn backward(
    params: &ModelParams,
    features: &[ModalityFeatures],
    batch: &TripleBatch,
    margins: &BatchMargins,
    upstream: &[Upstream<'_>],
    grads: &mut Gradients,
) -> Result<()> {
    let n = batch.len();
    if margins.len() != n {
        return Err(Error::Shape {
            what: "margins".into(),
            expected: n.to_string(),
            got: margins.len().to_string(),
        });
    }
    if grads.shape != params.shape {
        return Err(Error::Shape {
            what: "gradients".into(),
            expected: format!("{:?}", params.shape),
            got: format!("{:?}", grads.shape),
        });
    }
    for u in upstream {
        if u.grad.len() != n {
            return Err(Error::Shape {
                what: "upstream gradient".into(),
                expected: n.to_string(),
                got: u.grad.len().to_string(),
            });
        }
    }
    let n_mod = params.n_modalities();
    let d = params.shape.dim;
    let mut diff = Vec::new();
    for (t, tr) in batch.triples.iter().enumerate() {
        let mut c_id = 0.0;
        for u in upstream {
            c_id += u.grad[t];
        }
        if c_id != 0.0 {
            let xu = params.user_emb.row(tr.user);
            let xi = params.item_emb.row(tr.pos);
            let xj = params.item_emb.row(tr.neg);
            let gu = grads.user_emb.row_mut(tr.user);
            for k in 0..d {
                gu[k] += c_id * (xi[k] - xj[k]);
            }
            axpy(c_id, xu, grads.item_emb.row_mut(tr.pos));
            axpy(-c_id, xu, grads.item_emb.row_mut(tr.neg));
        }
        for m in 0..n_mod {
            let mut c = 0.0;
            for u in upstream {
                if u.keep.contains(m) {
                    c += u.grad[t];
                }
            }
            if c == 0.0 {
                continue;
            }
            let z = &margins.projected_diff[m][t * d..(t + 1) * d];
            axpy(c, z, grads.user_pref[m].row_mut(tr.user));
            let f = &features[m];
            diff.clear();
            diff.extend(f.row(tr.pos).iter().zip(f.row(tr.neg)).map(|(a, b)| a - b));
            let pu = params.user_pref[m].row(tr.user);
            let gw = &mut grads.projection[m];
            for (r, &p) in pu.iter().enumerate() {
                axpy(c * p, &diff, gw.row_mut(r));
            }
        }
    }
    Ok(())
}
