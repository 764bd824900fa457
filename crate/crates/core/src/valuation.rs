//! Training-data valuation: estimate each train point's influence on the
//! validation loss by accumulating hypergradients through the SGD
//! trajectory, then remove points that fail the min+std filter.
//!
//! The accumulation is generic over [`InfluenceModel`] so the same update
//! rule can be exercised on hand-computable fixtures; [`NnetModel`] adapts
//! the in-repo classifier, and [`hydra_influence`] wires the whole thing to
//! a dataset pair.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{self, Dataset};
use crate::math;
use crate::nnet::{self, Arch, Params, StepObservation, TrainConfig};
use crate::{Error, Result};

/// Whether the Hessian term of the hypergradient recursion is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InfluenceMode {
    /// Hessian term dropped: p_i only collects -eta * grad_i at the steps
    /// where i is in the minibatch.
    Fast,
    /// Full recursion: p_i <- p_i - eta * H_batch p_i - eta * grad_i [i in B].
    Exact,
}

/// N_train x N_val estimate of the influence of each train point on each
/// validation point's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    values: Vec<f64>,
    train_ids: Vec<u64>,
    val_ids: Vec<u64>,
    mode: InfluenceMode,
}

impl InfluenceMatrix {
    pub fn new(
        values: Vec<f64>,
        train_ids: Vec<u64>,
        val_ids: Vec<u64>,
        mode: InfluenceMode,
    ) -> Result<Self> {
        if values.len() != train_ids.len() * val_ids.len() {
            return Err(Error::invalid("influence grid shape mismatch"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("influence values must be finite"));
        }
        Ok(InfluenceMatrix {
            values,
            train_ids,
            val_ids,
            mode,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_ids.len()
    }

    pub fn n_val(&self) -> usize {
        self.val_ids.len()
    }

    pub fn train_ids(&self) -> &[u64] {
        &self.train_ids
    }

    pub fn val_ids(&self) -> &[u64] {
        &self.val_ids
    }

    pub fn mode(&self) -> InfluenceMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, train_row: usize, val_col: usize) -> f64 {
        self.values[train_row * self.val_ids.len() + val_col]
    }

    pub fn row(&self, train_row: usize) -> &[f64] {
        let w = self.val_ids.len();
        &self.values[train_row * w..(train_row + 1) * w]
    }

    pub fn column(&self, val_col: usize) -> Vec<f64> {
        (0..self.n_train()).map(|i| self.get(i, val_col)).collect()
    }
}

/// The differentiable-model surface the hypergradient recursion needs.
pub trait InfluenceModel {
    fn param_len(&self) -> usize;
    fn num_train(&self) -> usize;
    fn num_val(&self) -> usize;
    /// Gradient of the i-th train point's loss at `theta`.
    fn grad_train(&self, theta: &[f64], i: usize) -> Vec<f64>;
    /// Gradient of the j-th validation point's loss at `theta`.
    fn grad_val(&self, theta: &[f64], j: usize) -> Vec<f64>;
    /// Hessian-vector product of the mean minibatch loss at `theta`.
    fn batch_hvp(&self, theta: &[f64], batch: &[usize], v: &[f64]) -> Vec<f64>;
}

/// Per-train-point hypergradient vectors p_i = d theta / d epsilon_i,
/// maintained online through the SGD trajectory (zero at step 0).
#[derive(Debug, Clone)]
pub struct HypergradState {
    ps: Vec<Vec<f64>>,
}

impl HypergradState {
    pub fn new(n_train: usize, param_len: usize) -> Self {
        HypergradState {
            ps: vec![vec![0.0; param_len]; n_train],
        }
    }

    /// Applies one SGD step's recursion. `theta` is the parameter vector
    /// *before* the update and `batch` holds train indices of the minibatch.
    pub fn step<M: InfluenceModel>(
        &mut self,
        model: &M,
        mode: InfluenceMode,
        theta: &[f64],
        batch: &[usize],
        eta: f64,
    ) {
        if mode == InfluenceMode::Exact {
            for p in self.ps.iter_mut() {
                if p.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let hp = model.batch_hvp(theta, batch, p);
                for (pk, hk) in p.iter_mut().zip(hp.iter()) {
                    *pk -= eta * hk;
                }
            }
        }
        for &i in batch {
            let g = model.grad_train(theta, i);
            let p = &mut self.ps[i];
            for (pk, gk) in p.iter_mut().zip(g.iter()) {
                *pk -= eta * gk;
            }
        }
    }

    pub fn hypergrads(&self) -> &[Vec<f64>] {
        &self.ps
    }
}

/// IF(i, j) = -(1/N_train) * grad_val(theta_T, j) . p_i
pub fn influence_from_state<M: InfluenceModel>(
    model: &M,
    theta_final: &[f64],
    state: &HypergradState,
    train_ids: Vec<u64>,
    val_ids: Vec<u64>,
    mode: InfluenceMode,
) -> Result<InfluenceMatrix> {
    let n_train = model.num_train();
    let n_val = model.num_val();
    let scale = -1.0 / n_train as f64;
    let mut values = vec![0.0; n_train * n_val];
    for j in 0..n_val {
        let gv = model.grad_val(theta_final, j);
        for (i, p) in state.hypergrads().iter().enumerate() {
            values[i * n_val + j] = scale * math::dot(&gv, p);
        }
    }
    InfluenceMatrix::new(values, train_ids, val_ids, mode)
}

/// [`InfluenceModel`] over the in-repo classifier and a train/val pair.
pub struct NnetModel<'a> {
    pub arch: Arch,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
}

impl InfluenceModel for NnetModel<'_> {
    fn param_len(&self) -> usize {
        self.arch.param_len()
    }

    fn num_train(&self) -> usize {
        self.train.len()
    }

    fn num_val(&self) -> usize {
        self.val.len()
    }

    fn grad_train(&self, theta: &[f64], i: usize) -> Vec<f64> {
        let params = Params {
            theta: theta.to_vec(),
        };
        nnet::grad(&self.arch, &params, &[&self.train.samples()[i]])
            .expect("dims fixed at construction")
            .1
    }

    fn grad_val(&self, theta: &[f64], j: usize) -> Vec<f64> {
        let params = Params {
            theta: theta.to_vec(),
        };
        nnet::grad(&self.arch, &params, &[&self.val.samples()[j]])
            .expect("dims fixed at construction")
            .1
    }

    fn batch_hvp(&self, theta: &[f64], batch: &[usize], v: &[f64]) -> Vec<f64> {
        let params = Params {
            theta: theta.to_vec(),
        };
        let refs: Vec<_> = batch.iter().map(|&i| &self.train.samples()[i]).collect();
        nnet::hvp(&self.arch, &params, &refs, v).expect("dims fixed at construction")
    }
}

/// Knobs for the valuation model; the defaults bound the parameter count by
/// downscaling images to at most 16x16. Influence ranking, not accuracy, is
/// the product of this stage.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValuationOptions {
    pub hidden_dim: usize,
    pub max_side: usize,
    /// Exact mode is refused when N_train * P exceeds this many
    /// multiply-accumulates per step.
    pub exact_cap: usize,
}

impl Default for ValuationOptions {
    fn default() -> Self {
        ValuationOptions {
            hidden_dim: 24,
            max_side: 16,
            exact_cap: 10_000_000,
        }
    }
}

fn valuation_views(
    train: &Dataset,
    val: &Dataset,
    opts: &ValuationOptions,
) -> Result<(Dataset, Dataset, Arch)> {
    let (w, h) = train.dims();
    if val.dims() != (w, h) {
        return Err(Error::invalid("train and val image dimensions differ"));
    }
    let factor = dataset::fit_factor(w, h, opts.max_side);
    let train_small = dataset::downscale_dataset(train, factor)?;
    let val_small = dataset::downscale_dataset(val, factor)?;
    let (sw, sh) = train_small.dims();
    let arch = Arch::new(sw * sh, opts.hidden_dim, train.num_classes())?;
    Ok((train_small, val_small, arch))
}

/// Trains the valuation classifier with a step hook maintaining the
/// hypergradient state online, then assembles the influence matrix.
pub fn hydra_influence_opts(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mode: InfluenceMode,
    opts: &ValuationOptions,
) -> Result<(InfluenceMatrix, Params)> {
    if val.is_empty() {
        return Err(Error::invalid("validation set must be nonempty"));
    }
    let (train_small, val_small, arch) = valuation_views(train, val, opts)?;
    if mode == InfluenceMode::Exact {
        let macs = train_small.len() * arch.param_len();
        if macs > opts.exact_cap {
            return Err(Error::Capacity(format!(
                "exact mode needs {} multiply-accumulates per step (cap {}); use fast mode",
                macs, opts.exact_cap
            )));
        }
    }
    let model = NnetModel {
        arch,
        train: &train_small,
        val: &val_small,
    };
    let mut state = HypergradState::new(train_small.len(), arch.param_len());
    let mut hook = |obs: StepObservation<'_>| {
        state.step(&model, mode, &obs.params_before.theta, obs.batch_indices, obs.eta);
    };
    let (params, _trace) = nnet::train_sgd(&train_small, &arch, cfg, Some(&mut hook))?;
    let matrix = influence_from_state(
        &model,
        &params.theta,
        &state,
        train_small.sample_ids(),
        val_small.sample_ids(),
        mode,
    )?;
    Ok((matrix, params))
}

/// [`hydra_influence_opts`] with default valuation options.
pub fn hydra_influence(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mode: InfluenceMode,
) -> Result<(InfluenceMatrix, Params)> {
    hydra_influence_opts(train, val, cfg, mode, &ValuationOptions::default())
}

/// Per-validation-column cutoff record: tau = min + std.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColumnThreshold {
    pub val_id: u64,
    pub min: f64,
    pub std: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterOptions {
    /// Only flag strictly negative influences (the conservative guard).
    pub require_negative: bool,
    /// How many validation columns must flag a point before it is removed.
    pub min_votes: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            require_negative: true,
            min_votes: 1,
        }
    }
}

/// Outcome of [`min_std_filter`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterDecision {
    pub removed_ids: BTreeSet<u64>,
    pub thresholds: Vec<ColumnThreshold>,
    /// (train id, flag count) for every point at least one column flagged,
    /// ascending by id.
    pub votes: Vec<(u64, usize)>,
    /// Ids spared by the class-preservation guard (least-negative member of
    /// a class the raw rule would have emptied).
    pub guard_retained: Vec<u64>,
}

/// Per validation column j: tau_j = min_j + std_j (population std). A train
/// point is flagged by column j iff IF(i,j) < tau_j, and — with the
/// negativity guard on — IF(i,j) < 0. Points flagged by at least
/// `min_votes` columns are removed, except that no class is ever emptied:
/// the least-negative member (by mean influence) of an otherwise-emptied
/// class is retained.
pub fn min_std_filter(
    matrix: &InfluenceMatrix,
    labels: &[usize],
    opts: &FilterOptions,
) -> Result<FilterDecision> {
    let n = matrix.n_train();
    if labels.len() != n {
        return Err(Error::invalid("labels must align with influence rows"));
    }
    if opts.min_votes < 1 {
        return Err(Error::invalid("min_votes must be at least 1"));
    }
    let mut votes = vec![0usize; n];
    let mut thresholds = Vec::with_capacity(matrix.n_val());
    for j in 0..matrix.n_val() {
        let col = matrix.column(j);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let (_, std) = math::mean_pop_std(&col);
        let tau = min + std;
        thresholds.push(ColumnThreshold {
            val_id: matrix.val_ids()[j],
            min,
            std,
            threshold: tau,
        });
        for (i, &v) in col.iter().enumerate() {
            if v < tau && (!opts.require_negative || v < 0.0) {
                votes[i] += 1;
            }
        }
    }
    let mut removed: BTreeSet<usize> = votes
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= opts.min_votes)
        .map(|(i, _)| i)
        .collect();
    let mut guard_retained = Vec::new();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    for class in 0..num_classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() || !members.iter().all(|i| removed.contains(i)) {
            continue;
        }
        let keep = members
            .iter()
            .cloned()
            .max_by(|&a, &b| {
                let ma = mean(matrix.row(a));
                let mb = mean(matrix.row(b));
                ma.partial_cmp(&mb)
                    .expect("finite influences")
                    .then(b.cmp(&a)) // tie: keep the lower row index
            })
            .expect("nonempty members");
        removed.remove(&keep);
        guard_retained.push(matrix.train_ids()[keep]);
    }
    Ok(FilterDecision {
        removed_ids: removed.iter().map(|&i| matrix.train_ids()[i]).collect(),
        thresholds,
        votes: votes
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (matrix.train_ids()[i], v))
            .collect(),
        guard_retained,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Leave-one-out oracle: retrains the valuation model without train point
/// `i` (same seed, batches re-formed deterministically) and reports
/// mean-val-loss(without i) - mean-val-loss(full). Test/report use only.
pub fn loo_delta(train: &Dataset, val: &Dataset, cfg: &TrainConfig, i: usize) -> Result<f64> {
    loo_delta_opts(train, val, cfg, i, &ValuationOptions::default())
}

pub fn loo_delta_opts(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    i: usize,
    opts: &ValuationOptions,
) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two train points"));
    }
    if i >= train.len() {
        return Err(Error::InvalidParam(format!(
            "index {i} out of range for {} train points",
            train.len()
        )));
    }
    let (train_small, val_small, arch) = valuation_views(train, val, opts)?;
    let mut cfg_reduced = cfg.clone();
    cfg_reduced.batch_size = cfg.batch_size.min(train_small.len() - 1);
    let reduced_samples: Vec<_> = train_small
        .samples()
        .iter()
        .enumerate()
        .filter(|(idx, _)| *idx != i)
        .map(|(_, s)| s.clone())
        .collect();
    let reduced = Dataset::new(
        train_small.classes().to_vec(),
        reduced_samples,
        train_small.role(),
    )?;
    let (full_params, _) = nnet::train_sgd(&train_small, &arch, cfg, None)?;
    let (red_params, _) = nnet::train_sgd(&reduced, &arch, &cfg_reduced, None)?;
    let full_loss = nnet::mean_loss(&arch, &full_params, &val_small)?;
    let red_loss = nnet::mean_loss(&arch, &red_params, &val_small)?;
    Ok(red_loss - full_loss)
}

/// JSON-serializable summary of a valuation round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InfluenceReport {
    pub removed: usize,
    /// Removal counts aligned to the class list.
    pub per_class_removed: Vec<usize>,
    pub thresholds: Vec<ColumnThreshold>,
    /// The most negative (train_id, val_id, influence) pairs, most negative
    /// first, capped at top_k.
    pub top_negative: Vec<(u64, u64, f64)>,
    pub guard_retained: Vec<u64>,
}

pub fn influence_report(
    matrix: &InfluenceMatrix,
    decision: &FilterDecision,
    labels: &[usize],
    num_classes: usize,
    top_k: usize,
) -> Result<InfluenceReport> {
    if labels.len() != matrix.n_train() {
        return Err(Error::invalid("labels must align with influence rows"));
    }
    let mut per_class_removed = vec![0usize; num_classes];
    for (i, &id) in matrix.train_ids().iter().enumerate() {
        if decision.removed_ids.contains(&id) {
            per_class_removed[labels[i]] += 1;
        }
    }
    let mut pairs: Vec<(u64, u64, f64)> = Vec::with_capacity(matrix.n_train() * matrix.n_val());
    for i in 0..matrix.n_train() {
        for j in 0..matrix.n_val() {
            pairs.push((matrix.train_ids()[i], matrix.val_ids()[j], matrix.get(i, j)));
        }
    }
    pairs.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .expect("finite influences")
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    pairs.truncate(top_k);
    Ok(InfluenceReport {
        removed: decision.removed_ids.len(),
        per_class_removed,
        thresholds: decision.thresholds.clone(),
        top_negative: pairs,
        guard_retained: decision.guard_retained.clone(),
    })
}
