//! MART and adaptive-base-class (ABC) boosting over regression trees.
//!
//! Both trainers minimize the negative multinomial log-likelihood
//! `L = sum_i -log p_{i,y_i}` under the logistic model
//! `p_{i,k} = exp(F_{i,k}) / sum_s exp(F_{i,s})`.
//!
//! MART trains one tree per class per round on the pseudo-response
//! `r_{i,k} - p_{i,k}`, with the one-step Newton leaf value
//! `beta = ((K-1)/K) * sum(r - p) / sum(p (1 - p))`.
//!
//! ABC picks a base class `b` and trains `K-1` trees per round on the
//! sum-to-zero parameterization (`F_b = -sum_{k != b} F_k`), where the loss
//! derivatives with respect to `F_k` are
//! first: `(r_b - p_b) - (r_k - p_k)` and
//! second: `p_b (1 - p_b) + p_k (1 - p_k) + 2 p_b p_k`.
//! The tree for class `k` fits the negated first derivative, leaf values are
//! `sum(response) / sum(second)` with no `(K-1)/K` factor, the base score is
//! mirrored from the others, and the base class is re-selected each round as
//! the class with the largest per-class training loss.
//!
//! Ablation variants: `mb` keeps the ABC round structure (K-1 trees, base
//! mirroring, adaptive re-selection) but uses MART's response and leaf
//! formulas; `fixed_base(k)` is ABC without base re-selection.
//!
//! The probability matrix is computed once per round, before the class loop,
//! and refreshed after the round's scores are in place.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{class_indicator, Dataset, IndicatorMatrix};
use crate::matrix::Matrix;
use crate::metrics::{count_errors_from_scores, multinomial_loss, per_class_loss};
use crate::model::{apply_round_to_scores, Model, ModelRound, MODEL_FORMAT_VERSION};
use crate::regtree::{fit_tree, FeatureColumns, TreeConfig};

/// Newton leaf denominators below this yield a zero leaf value: the node's
/// probabilities have converged and any finite step would be arbitrary.
pub const NEWTON_DENOMINATOR_FLOOR: f64 = 1e-10;

/// Training stops early once the train loss falls below `1e-10 * N`,
/// a proxy for reaching machine accuracy.
pub const EARLY_STOP_LOSS_PER_SAMPLE: f64 = 1e-10;

/// Which training loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// K trees per round, gradient `r - p`, factor (K-1)/K.
    Mart,
    /// K-1 trees per round, base-class derivatives, adaptive base.
    Abc,
    /// ABC round structure with MART's response and leaf formulas.
    Mb,
    /// ABC with the base class pinned to the given class forever.
    FixedBase(usize),
}

impl Variant {
    /// True for every variant that trains K-1 trees per round and mirrors
    /// the base-class score (everything except plain MART).
    pub fn is_abc_family(&self) -> bool {
        !matches!(self, Variant::Mart)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Mart => write!(f, "mart"),
            Variant::Abc => write!(f, "abc"),
            Variant::Mb => write!(f, "mb"),
            Variant::FixedBase(k) => write!(f, "fixed_base({k})"),
        }
    }
}

/// How the first base class of an ABC-family run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialBase {
    /// Class 0. At initialization the probabilities are uniform, so the
    /// per-class losses are tied for balanced data; the lowest index is the
    /// reproducible default.
    DeterministicLowest,
    /// A caller-chosen class.
    Fixed(usize),
    /// Uniformly random class drawn from the run's seed.
    SeededRandom,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("max_leaves must be >= 2, got {0}")]
    Leaves(usize),
    #[error("max_leaves {0} exceeds sample count {1}")]
    LeavesVsSamples(usize, usize),
    #[error("shrinkage must be in (0, 1], got {0}")]
    Shrinkage(f64),
    #[error("rounds must be >= 1, got {0}")]
    Rounds(usize),
    #[error("min_samples_leaf must be >= 1")]
    MinSamplesLeaf,
    #[error("class index {0} out of range for {1} classes")]
    ClassIndex(usize, usize),
}

/// Everything that defines one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// terminal nodes per tree (J)
    pub leaves: usize,
    /// shrinkage applied to every leaf contribution (nu)
    pub shrinkage: f64,
    /// boosting rounds (M)
    pub rounds: usize,
    pub variant: Variant,
    /// subtract the row mean of F after each round (off by default;
    /// it does not change the predicted probabilities)
    pub recenter: bool,
    pub min_samples_leaf: usize,
    /// seed consumed only by `InitialBase::SeededRandom`
    pub seed: u64,
    pub initial_base: InitialBase,
}

impl TrainConfig {
    pub fn new(variant: Variant, leaves: usize, shrinkage: f64, rounds: usize) -> Self {
        TrainConfig {
            leaves,
            shrinkage,
            rounds,
            variant,
            recenter: false,
            min_samples_leaf: 1,
            seed: 0,
            initial_base: InitialBase::DeterministicLowest,
        }
    }

    pub fn validate(&self, n_samples: usize, n_classes: usize) -> Result<(), ConfigError> {
        if self.leaves < 2 {
            return Err(ConfigError::Leaves(self.leaves));
        }
        if self.leaves > n_samples {
            return Err(ConfigError::LeavesVsSamples(self.leaves, n_samples));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(ConfigError::Shrinkage(self.shrinkage));
        }
        if self.rounds < 1 {
            return Err(ConfigError::Rounds(self.rounds));
        }
        if self.min_samples_leaf < 1 {
            return Err(ConfigError::MinSamplesLeaf);
        }
        if let Variant::FixedBase(b) = self.variant {
            if b >= n_classes {
                return Err(ConfigError::ClassIndex(b, n_classes));
            }
        }
        if let InitialBase::Fixed(b) = self.initial_base {
            if b >= n_classes {
                return Err(ConfigError::ClassIndex(b, n_classes));
            }
        }
        Ok(())
    }
}

/// Mutable per-run state. After every completed round, each row of `p` sums
/// to 1 within 1e-12, and for ABC-family variants each row of `f` sums to 0
/// within 1e-9.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// N x K score matrix F
    pub f: Matrix,
    /// N x K probability matrix, kept equal to row-softmax of `f`
    pub p: Matrix,
    /// base class for the next round (None for MART)
    pub base: Option<usize>,
    /// completed rounds
    pub round: usize,
}

/// Per-round log entry. `train_loss` equals the sum of `per_class_losses`
/// within 1e-9 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 0 for the initialization record, then 1..=M
    pub round: usize,
    /// base class used in this round (None for MART and for round 0)
    pub base: Option<usize>,
    pub train_loss: f64,
    pub per_class_losses: Vec<f64>,
    /// misclassification count on the held-out set, when one was supplied
    pub test_errors: Option<usize>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Incompatible(String),
}

/// Numerically safe softmax of one score row: probabilities are positive,
/// sum to 1, and are invariant under adding a constant to all scores.
pub fn softmax_row(scores: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, &mut out);
    out
}

pub(crate) fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        let e = (s - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// MART pseudo-response for class `k`: `r_{i,k} - p_{i,k}`, the negative
/// gradient of the loss with respect to `F_{i,k}`.
pub fn mart_pseudo_response(r: &IndicatorMatrix, p: &Matrix, k: usize) -> Vec<f64> {
    (0..r.n()).map(|i| r.get(i, k) - p.get(i, k)).collect()
}

#[inline]
fn newton_value(numerator: f64, denominator: f64, factor: f64) -> f64 {
    if denominator < NEWTON_DENOMINATOR_FLOOR {
        0.0
    } else {
        factor * numerator / denominator
    }
}

/// MART Newton leaf value over a leaf's members:
/// `((K-1)/K) * sum(r - p) / sum(p (1 - p))`, zero on a vanishing denominator.
pub fn mart_leaf_value(member_residuals: &[f64], member_probs: &[f64], n_classes: usize) -> f64 {
    let num: f64 = member_residuals.iter().sum();
    let den: f64 = member_probs.iter().map(|&p| p * (1.0 - p)).sum();
    let k = n_classes as f64;
    newton_value(num, den, (k - 1.0) / k)
}

/// ABC pseudo-response for class `k` under base `b`:
/// `-(r_{i,b} - p_{i,b}) + (r_{i,k} - p_{i,k})`. Requires `k != b`.
pub fn abc_pseudo_response(r: &IndicatorMatrix, p: &Matrix, k: usize, b: usize) -> Vec<f64> {
    assert_ne!(k, b, "response is undefined for the base class");
    (0..r.n())
        .map(|i| -(r.get(i, b) - p.get(i, b)) + (r.get(i, k) - p.get(i, k)))
        .collect()
}

/// ABC second derivative for class `k` under base `b`:
/// `p_b (1 - p_b) + p_k (1 - p_k) + 2 p_b p_k`. Requires `k != b`.
pub fn abc_second_derivative(p: &Matrix, k: usize, b: usize) -> Vec<f64> {
    assert_ne!(k, b, "second derivative is undefined for the base class");
    (0..p.rows())
        .map(|i| {
            let pb = p.get(i, b);
            let pk = p.get(i, k);
            pb * (1.0 - pb) + pk * (1.0 - pk) + 2.0 * pb * pk
        })
        .collect()
}

/// ABC Newton leaf value: `sum(response) / sum(second derivative)`, with no
/// `(K-1)/K` factor; zero on a vanishing denominator.
pub fn abc_leaf_value(member_responses: &[f64], member_second_derivs: &[f64]) -> f64 {
    let num: f64 = member_responses.iter().sum();
    let den: f64 = member_second_derivs.iter().sum();
    newton_value(num, den, 1.0)
}

/// Class with the largest per-class training loss
/// `L^(k) = sum_{i: y_i = k} -log(p_{i,k})`, ties broken by the lowest index.
pub fn select_base_class(p: &Matrix, labels: &[usize]) -> usize {
    let losses = per_class_loss(p, labels);
    let mut best = 0;
    for (k, &l) in losses.iter().enumerate() {
        if l > losses[best] {
            best = k;
        }
    }
    best
}

fn refresh_probabilities(state: &mut TrainState) {
    let TrainState { f, p, .. } = state;
    for i in 0..f.rows() {
        softmax_into(f.row(i), p.row_mut(i));
    }
}

fn recenter_scores(f: &mut Matrix) {
    let k = f.cols() as f64;
    for i in 0..f.rows() {
        let row = f.row_mut(i);
        let mean: f64 = row.iter().sum::<f64>() / k;
        for v in row.iter_mut() {
            *v -= mean;
        }
    }
}

/// One MART round: K trees, one per class, fit against the probabilities
/// frozen at round start; leaf values replaced by the Newton step and scores
/// updated in class order. Returns the round's trees.
pub fn boost_round_mart(
    state: &mut TrainState,
    fc: &FeatureColumns,
    r: &IndicatorMatrix,
    config: &TrainConfig,
) -> ModelRound {
    let n = r.n();
    let k_classes = r.k();
    let tree_config = TreeConfig {
        max_leaves: config.leaves,
        min_samples_leaf: config.min_samples_leaf,
    };
    let factor = (k_classes as f64 - 1.0) / k_classes as f64;
    let mut trees = Vec::with_capacity(k_classes);
    let mut response = vec![0.0; n];
    for k in 0..k_classes {
        for (i, slot) in response.iter_mut().enumerate() {
            *slot = r.get(i, k) - state.p.get(i, k);
        }
        let mut fitted = fit_tree(fc, &response, &tree_config);
        let n_nodes = fitted.tree.num_nodes();
        let mut num = vec![0.0; n_nodes];
        let mut den = vec![0.0; n_nodes];
        for (i, &resp) in response.iter().enumerate() {
            let node = fitted.leaf_assignment[i] as usize;
            let p = state.p.get(i, k);
            num[node] += resp;
            den[node] += p * (1.0 - p);
        }
        let mut value = vec![0.0; n_nodes];
        for &leaf in &fitted.leaf_nodes {
            value[leaf] = newton_value(num[leaf], den[leaf], factor);
            fitted.tree.set_leaf_value(leaf, value[leaf]);
        }
        for i in 0..n {
            let node = fitted.leaf_assignment[i] as usize;
            state.f.row_mut(i)[k] += config.shrinkage * value[node];
        }
        trees.push(fitted.tree);
    }
    if config.recenter {
        recenter_scores(&mut state.f);
    }
    refresh_probabilities(state);
    ModelRound { base: None, trees }
}

/// One ABC-family round: K-1 trees for the classes other than the base, in
/// ascending class order, against the probabilities frozen at round start;
/// then the base score is mirrored (`F_b = -sum_{k != b} F_k`), the
/// probabilities are refreshed, and the next base is selected (kept fixed
/// for `fixed_base`, re-selected by per-class loss otherwise).
pub fn boost_round_abc(
    state: &mut TrainState,
    fc: &FeatureColumns,
    r: &IndicatorMatrix,
    labels: &[usize],
    config: &TrainConfig,
) -> ModelRound {
    let n = r.n();
    let k_classes = r.k();
    let b = state.base.expect("ABC-family round requires a base class");
    let tree_config = TreeConfig {
        max_leaves: config.leaves,
        min_samples_leaf: config.min_samples_leaf,
    };
    // `mb` swaps in MART's response and leaf formulas, factor included.
    let mart_formulas = matches!(config.variant, Variant::Mb);
    let factor = if mart_formulas {
        (k_classes as f64 - 1.0) / k_classes as f64
    } else {
        1.0
    };
    let mut trees = Vec::with_capacity(k_classes - 1);
    let mut response = vec![0.0; n];
    for k in (0..k_classes).filter(|&k| k != b) {
        for (i, slot) in response.iter_mut().enumerate() {
            *slot = if mart_formulas {
                r.get(i, k) - state.p.get(i, k)
            } else {
                -(r.get(i, b) - state.p.get(i, b)) + (r.get(i, k) - state.p.get(i, k))
            };
        }
        let mut fitted = fit_tree(fc, &response, &tree_config);
        let n_nodes = fitted.tree.num_nodes();
        let mut num = vec![0.0; n_nodes];
        let mut den = vec![0.0; n_nodes];
        for (i, &resp) in response.iter().enumerate() {
            let node = fitted.leaf_assignment[i] as usize;
            let pk = state.p.get(i, k);
            num[node] += resp;
            den[node] += if mart_formulas {
                pk * (1.0 - pk)
            } else {
                let pb = state.p.get(i, b);
                pb * (1.0 - pb) + pk * (1.0 - pk) + 2.0 * pb * pk
            };
        }
        let mut value = vec![0.0; n_nodes];
        for &leaf in &fitted.leaf_nodes {
            value[leaf] = newton_value(num[leaf], den[leaf], factor);
            fitted.tree.set_leaf_value(leaf, value[leaf]);
        }
        for i in 0..n {
            let node = fitted.leaf_assignment[i] as usize;
            state.f.row_mut(i)[k] += config.shrinkage * value[node];
        }
        trees.push(fitted.tree);
    }
    // mirror the base score from the others
    for i in 0..n {
        let row = state.f.row_mut(i);
        let mut sum = 0.0;
        for (k, v) in row.iter().enumerate() {
            if k != b {
                sum += *v;
            }
        }
        row[b] = -sum;
    }
    if config.recenter {
        recenter_scores(&mut state.f);
    }
    refresh_probabilities(state);
    state.base = Some(match config.variant {
        Variant::FixedBase(fixed) => fixed,
        _ => select_base_class(&state.p, labels),
    });
    ModelRound {
        base: Some(b),
        trees,
    }
}

/// Trains a model. See [`train_observed`].
pub fn train(
    train_data: &Dataset,
    config: &TrainConfig,
    test_data: Option<&Dataset>,
) -> Result<(Model, Vec<RoundRecord>), TrainError> {
    train_observed(train_data, config, test_data, |_, _| {})
}

/// Trains a model, invoking `observer` with the state and log record after
/// the initialization and after every completed round.
///
/// Scores start at `F = 0` (uniform probabilities, train loss `N ln K`,
/// recorded as round 0). Each round runs the configured variant; training
/// stops after `rounds` rounds or once the train loss drops below
/// `1e-10 * N`. When a test set is supplied, its per-round misclassification
/// count is tracked by replaying each round's trees, so the history doubles
/// as a learning curve.
pub fn train_observed(
    train_data: &Dataset,
    config: &TrainConfig,
    test_data: Option<&Dataset>,
    mut observer: impl FnMut(&TrainState, &RoundRecord),
) -> Result<(Model, Vec<RoundRecord>), TrainError> {
    let n = train_data.n();
    let k_classes = train_data.k();
    config.validate(n, k_classes)?;
    if let Some(test) = test_data {
        if test.d() != train_data.d() {
            return Err(TrainError::Incompatible(format!(
                "test data has {} features, train data has {}",
                test.d(),
                train_data.d()
            )));
        }
        if test.k() != k_classes {
            return Err(TrainError::Incompatible(format!(
                "test data has {} classes, train data has {}",
                test.k(),
                k_classes
            )));
        }
    }

    let fc = FeatureColumns::from_dataset(train_data);
    let r = class_indicator(train_data);
    let labels = train_data.labels();

    let mut state = TrainState {
        f: Matrix::zeros(n, k_classes),
        p: Matrix::filled(n, k_classes, 1.0 / k_classes as f64),
        base: None,
        round: 0,
    };
    if config.variant.is_abc_family() {
        state.base = Some(match config.variant {
            Variant::FixedBase(b) => b,
            _ => match config.initial_base {
                InitialBase::DeterministicLowest => 0,
                InitialBase::Fixed(b) => b,
                InitialBase::SeededRandom => {
                    ChaCha8Rng::seed_from_u64(config.seed).gen_range(0..k_classes)
                }
            },
        });
    }

    let mut test_scores = test_data.map(|t| Matrix::zeros(t.n(), t.k()));

    let record_for = |state: &TrainState,
                      round: usize,
                      base: Option<usize>,
                      test_scores: &Option<Matrix>|
     -> RoundRecord {
        let test_errors =
            test_data.map(|t| count_errors_from_scores(test_scores.as_ref().unwrap(), t.labels()));
        RoundRecord {
            round,
            base,
            train_loss: multinomial_loss(&state.p, labels),
            per_class_losses: per_class_loss(&state.p, labels),
            test_errors,
        }
    };

    let mut history = Vec::with_capacity(config.rounds + 1);
    let init = record_for(&state, 0, None, &test_scores);
    observer(&state, &init);
    history.push(init);

    let mut model = Model {
        version: MODEL_FORMAT_VERSION,
        k: k_classes,
        d: train_data.d(),
        nu: config.shrinkage,
        variant: config.variant,
        class_names: train_data.class_names().to_vec(),
        rounds: Vec::with_capacity(config.rounds),
    };

    for m in 1..=config.rounds {
        let round = if config.variant.is_abc_family() {
            boost_round_abc(&mut state, &fc, &r, labels, config)
        } else {
            boost_round_mart(&mut state, &fc, &r, config)
        };
        state.round = m;
        if let (Some(test), Some(scores)) = (test_data, test_scores.as_mut()) {
            for i in 0..test.n() {
                apply_round_to_scores(&round, config.shrinkage, test.row(i), scores.row_mut(i));
            }
        }
        let rec = record_for(&state, m, round.base, &test_scores);
        model.rounds.push(round);
        observer(&state, &rec);
        let stop = rec.train_loss < EARLY_STOP_LOSS_PER_SAMPLE * n as f64;
        history.push(rec);
        if stop {
            break;
        }
    }
    Ok((model, history))
}
