//! Loss, optimizer, AUC and the training loop, plus multi-run aggregation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Hkg, MessageGraph};
use crate::model::{decode, HeteroSageModel, ModelConfig, ModelError, Subgraph};
use crate::split::{sample_link_batch, split_with, LinkSplit, SplitConfig, SplitError};
use crate::tensor::{Matrix, Parameter, RngStream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label {0} is not 0 or 1")]
    Domain(f64),
    #[error("logits and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("AUC needs both classes (positives={positives}, negatives={negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("non-finite score at {0}")]
    NonFiniteScore(usize),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max |logit| {max_logit})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        max_logit: f64,
    },
    #[error("invalid train config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub runs: usize,
    pub seed: u64,
    /// Sampled in-neighbors per relation at each hop.
    pub fanouts: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.001,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            runs: 5,
            seed: 0,
            fanouts: vec![4, 2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam moments must lie in [0, 1) and eps > 0");
        }
        if self.fanouts.len() != model.num_layers {
            return Err(TrainError::Config(format!(
                "{} fanouts for {} layers",
                self.fanouts.len(),
                model.num_layers
            )));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over logits and its gradient w.r.t. each
/// logit (already divided by the batch size).
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    if logits.len() != labels.len() {
        return Err(TrainError::Length(logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if let Some(&y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(TrainError::Domain(y));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / n);
    }
    Ok((loss / n, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// First and second moments per parameter plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[Parameter], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data_mut();
        let w = p.value.data_mut();
        for (((w, g), m), v) in w.iter_mut().zip(g.iter_mut()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + (1.0 - b1) * *g;
            *v = b2 * *v + (1.0 - b2) * *g * *g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
            *g = 0.0;
        }
    }
}

/// Area under the ROC curve by the Mann-Whitney rank statistic, with
/// average ranks for ties. Computed on doubled integer ranks so the result
/// equals the pair-counting definition exactly.
pub fn evaluate_auc(scores: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::Length(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(TrainError::NonFiniteScore(i));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(TrainError::Domain(y as f64));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::DegenerateLabels {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share the average (i+1+j)/2
        let avg2 = (i + 1 + j) as u128;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank2_sum += avg2 * pos_in_tie;
        i = j;
    }
    let (np, nn) = (positives as u128, negatives as u128);
    let u2 = rank2_sum - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Share of edges where `logit > 0` agrees with the label.
pub fn accuracy(logits: &[f64], labels: &[u8]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| (z > 0.0) == (y == 1))
        .count();
    hits as f64 / logits.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// AUC over the concatenated training-batch scores of the epoch.
    pub train_auc: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub split_seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub test_auc: Option<f64>,
    pub test_accuracy: f64,
}

/// Logits for the given supervision edges from one full-graph encode.
pub fn score_edges(
    model: &HeteroSageModel,
    hkg: &Hkg,
    full: &Subgraph,
    edges: &[usize],
) -> Result<Vec<f64>, ModelError> {
    let (s, p) = model.encode(hkg, full)?;
    let sup = hkg.supervision();
    edges
        .iter()
        .map(|&e| decode(s.row(sup.src[e]), p.row(sup.dst[e])))
        .collect()
}

fn labels_of(hkg: &Hkg, edges: &[usize]) -> Vec<u8> {
    let all = hkg.labels();
    edges.iter().map(|&e| all[e]).collect()
}

/// Trains one model for `train_cfg.epochs` epochs on the training edges.
pub fn train_model(
    hkg: &Hkg,
    split: &LinkSplit,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(HeteroSageModel, RunMetrics), TrainError> {
    train_cfg.validate(model_cfg)?;
    let root = RngStream::new(train_cfg.seed);
    let mut model = HeteroSageModel::init(*model_cfg, hkg, root.derive(0).seed())?;
    let mut adam = AdamState::new(model.parameters(), train_cfg.beta1, train_cfg.beta2, train_cfg.eps);
    let mg = MessageGraph::from_hkg(hkg, model_cfg.use_edge_weights);
    let full = Subgraph::full(hkg, &mg);
    let shuffle_root = root.derive(1);
    let sample_root = root.derive(2);
    let val_labels = labels_of(hkg, &split.val);

    let mut epochs = Vec::with_capacity(train_cfg.epochs);
    let mut order = split.train.clone();
    for epoch in 1..=train_cfg.epochs {
        order.clone_from(&split.train);
        order.shuffle(&mut shuffle_root.derive(epoch as u64));
        let mut loss_sum = 0.0;
        let mut scores = Vec::with_capacity(order.len());
        let mut seen_labels = Vec::with_capacity(order.len());
        for (b, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let mut rng = sample_root.derive2(epoch as u64, b as u64);
            let batch = sample_link_batch(hkg, &mg, chunk, &train_cfg.fanouts, &mut rng)?;
            let (logits, cache) = model.forward(hkg, &batch.subgraph, &batch.pairs)?;
            let y: Vec<f64> = batch.labels.iter().map(|&l| l as f64).collect();
            let (loss, dz) = bce_with_logits(&logits, &y)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    max_logit: logits.iter().fold(0.0, |m, z| m.max(z.abs())),
                });
            }
            model.backward(&batch.subgraph, &cache, &dz)?;
            adam_step(model.parameters_mut(), &mut adam, train_cfg.learning_rate);
            loss_sum += loss * chunk.len() as f64;
            scores.extend_from_slice(&logits);
            seen_labels.extend_from_slice(&batch.labels);
        }
        let train_loss = if order.is_empty() { 0.0 } else { loss_sum / order.len() as f64 };
        let val_scores = score_edges(&model, hkg, &full, &split.val)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss,
            train_auc: evaluate_auc(&scores, &seen_labels).ok(),
            val_auc: evaluate_auc(&val_scores, &val_labels).ok(),
        });
    }

    let test_scores = score_edges(&model, hkg, &full, &split.test)?;
    let test_labels = labels_of(hkg, &split.test);
    let metrics = RunMetrics {
        seed: train_cfg.seed,
        split_seed: split.seed,
        epochs,
        test_auc: evaluate_auc(&test_scores, &test_labels).ok(),
        test_accuracy: accuracy(&test_scores, &test_labels),
    };
    Ok((model, metrics))
}

/// Mean and sample variance (`n - 1` denominator; 0 for a single value).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    };
    (mean, var)
}

/// Mean/variance of an optional metric over the runs that produced it.
pub fn mean_var_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean_var(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub var: f64,
}

impl Stat {
    fn of(mv: (f64, f64)) -> Self {
        Stat {
            mean: mv.0,
            var: mv.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochAggregate {
    pub epoch: usize,
    pub train_loss: Stat,
    pub train_auc: Option<Stat>,
    pub val_auc: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub epochs: Vec<EpochAggregate>,
    pub test_auc: Option<Stat>,
    pub test_accuracy: Stat,
}

/// Per-epoch and final cross-run statistics. All runs must share an
/// epoch count.
pub fn aggregate(runs: &[RunMetrics]) -> Aggregate {
    let n_epochs = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    let epochs = (0..n_epochs)
        .map(|e| {
            let col = |f: fn(&EpochMetrics) -> Option<f64>| {
                mean_var_opt(runs.iter().map(|r| f(&r.epochs[e]))).map(Stat::of)
            };
            EpochAggregate {
                epoch: e + 1,
                train_loss: col(|m| Some(m.train_loss)).expect("at least one run"),
                train_auc: col(|m| m.train_auc),
                val_auc: col(|m| m.val_auc),
            }
        })
        .collect();
    let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    Aggregate {
        runs: runs.len(),
        epochs,
        test_auc: mean_var_opt(runs.iter().map(|r| r.test_auc)).map(Stat::of),
        test_accuracy: Stat::of(mean_var(&acc)),
    }
}

/// `train_cfg.runs` independent runs on one graph. Run `k` uses training
/// seed `train_cfg.seed + k` and split seed `split_cfg.seed + k`.
pub fn run_repeated(
    hkg: &Hkg,
    split_cfg: &SplitConfig,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut on_run: impl FnMut(usize, &HeteroSageModel, &RunMetrics),
) -> Result<(Vec<RunMetrics>, Aggregate), TrainError> {
    train_cfg.validate(model_cfg)?;
    let mut runs = Vec::with_capacity(train_cfg.runs);
    for k in 0..train_cfg.runs {
        let split = split_with(
            hkg,
            &SplitConfig {
                seed: split_cfg.seed.wrapping_add(k as u64),
                ..*split_cfg
            },
        )?;
        let cfg = TrainConfig {
            seed: train_cfg.seed.wrapping_add(k as u64),
            ..train_cfg.clone()
        };
        let (model, metrics) = train_model(hkg, &split, model_cfg, &cfg)?;
        on_run(k, &model, &metrics);
        runs.push(metrics);
    }
    let agg = aggregate(&runs);
    Ok((runs, agg))
}
