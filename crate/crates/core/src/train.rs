//! Training loops: centralized mini-batch Adam with early stopping, FedAvg
//! simulation with optional per-client Gaussian-mechanism DP, a local-only
//! baseline, and communication accounting.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    partition_clients, preprocess_pair, stratified_holdout, stratified_kfold, ClientPartition, Dataset, PartitionMode, Preprocessor,
};
use crate::error::{config, usage, Result};
use crate::models::{ArchitectureSpec, HybridModel};
use crate::nn::{AdamState, Parameterized};
use crate::seeds::{self, stream};

pub const BYTES_PER_PARAM: u64 = 8;
const MIB: f64 = 1024.0 * 1024.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `None` trains
    /// for exactly `max_epochs` on all data.
    #[serde(default = "default_patience")]
    pub patience: Option<usize>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.01
}
fn default_batch() -> usize {
    8
}
fn default_epochs() -> usize {
    50
}
fn default_patience() -> Option<usize> {
    Some(10)
}
fn default_val_fraction() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            val_fraction: default_val_fraction(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return config(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return config("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return config("val_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Runs `epochs` passes of shuffled mini-batch Adam over `data`.
fn fit_epochs<R: Rng + ?Sized>(
    model: &mut HybridModel,
    data: &Dataset,
    epochs: usize,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut R,
    mut after_epoch: impl FnMut(usize, &HybridModel, f64) -> Result<bool>,
) -> Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.flatten_params();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (data.row(i), data.label(i))).collect();
            let (loss, grads) = model.loss_and_grad(&batch, true, rng)?;
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grads)?;
            model.unflatten_params(&params)?;
        }
        if !after_epoch(epoch, model, epoch_loss / data.len() as f64)? {
            break;
        }
    }
    Ok(())
}

/// Centralized training. With `patience`, a stratified validation slice is
/// held out, training stops after `patience` epochs without improvement and
/// the best-validation weights are restored.
pub fn train_centralized(model: &HybridModel, train: &Dataset, cfg: &TrainConfig) -> Result<(HybridModel, History)> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut adam = AdamState::new(model.param_count(), cfg.lr);
    let mut rng = seeds::rng(cfg.seed, &[stream::TRAIN, 0, 0]);
    let mut history = History::default();
    let Some(patience) = cfg.patience else {
        fit_epochs(&mut model, train, cfg.max_epochs, cfg, &mut adam, &mut rng, |_, _, loss| {
            history.train_loss.push(loss);
            Ok(true)
        })?;
        return Ok((model, history));
    };
    let mut vrng = seeds::rng(cfg.seed, &[stream::VALIDATION]);
    let (fit_idx, val_idx) = stratified_holdout(train.labels(), train.n_classes(), cfg.val_fraction, &mut vrng);
    let fit = train.subset(&fit_idx);
    let val = train.subset(&val_idx);
    let mut best = (f64::INFINITY, model.flatten_params());
    let mut since_best = 0;
    fit_epochs(&mut model, &fit, cfg.max_epochs, cfg, &mut adam, &mut rng, |epoch, m, loss| {
        history.train_loss.push(loss);
        let vl = if val.is_empty() { loss } else { m.mean_loss(&val)? };
        history.val_loss.push(vl);
        if vl < best.0 {
            best = (vl, m.flatten_params());
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let go_on = since_best < patience;
        history.stopped_early = !go_on && epoch + 1 < cfg.max_epochs;
        Ok(go_on)
    })?;
    if history.best_epoch.is_some() {
        model.unflatten_params(&best.1)?;
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub epochs_run: usize,
    pub params: usize,
}

/// Stratified k-fold cross-validation. Preprocessing is fitted on each
/// training fold; fold `f` trains with seed `derive(cfg.seed, [f])`.
pub fn cross_validate(arch: &ArchitectureSpec, raw: &Dataset, k: usize, cfg: &TrainConfig) -> Result<Vec<FoldResult>> {
    cfg.validate()?;
    let folds = stratified_kfold(raw.labels(), raw.n_classes(), k, cfg.seed)?;
    folds
        .par_iter()
        .map(|fold| {
            let (train, test) = preprocess_pair(&raw.subset(&fold.train_indices), &raw.subset(&fold.test_indices))?;
            if train.dim() != arch.input_dim {
                return config(format!("architecture expects {} features, data has {}", arch.input_dim, train.dim()));
            }
            let fold_cfg = TrainConfig { seed: seeds::derive(cfg.seed, &[fold.fold_id as u64]), ..cfg.clone() };
            let init = HybridModel::build(arch, &mut seeds::rng(fold_cfg.seed, &[stream::INIT]))?;
            let (model, history) = train_centralized(&init, &train, &fold_cfg)?;
            Ok(FoldResult {
                fold: fold.fold_id,
                accuracy: model.accuracy(&test)?,
                epochs_run: history.train_loss.len(),
                params: model.param_count(),
            })
        })
        .collect()
}

/// Trains a copy of `model` for `local_epochs` with a fresh Adam state and
/// returns its flat parameters.
pub fn local_train<R: Rng + ?Sized>(model: &HybridModel, data: &Dataset, local_epochs: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut local = model.clone();
    let mut adam = AdamState::new(local.param_count(), cfg.lr);
    fit_epochs(&mut local, data, local_epochs, cfg, &mut adam, rng, |_, _, _| Ok(true))?;
    Ok(local.flatten_params())
}

/// Sample-weighted mean of client parameter vectors, summed in slice order.
pub fn fedavg_aggregate(updates: &[(Vec<f64>, usize)]) -> Result<Vec<f64>> {
    let Some((first, _)) = updates.first() else {
        return usage("no client updates to aggregate");
    };
    let len = first.len();
    if let Some((p, _)) = updates.iter().find(|(p, _)| p.len() != len) {
        return usage(format!("client update has {} parameters, expected {len}", p.len()));
    }
    if updates.iter().any(|(_, n)| *n == 0) {
        return usage("client update with zero samples");
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    let mut out = vec![0.0; len];
    for (params, n) in updates {
        let w = *n as f64 / total as f64;
        for (o, p) in out.iter_mut().zip(params) {
            *o += w * p;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
}

fn default_delta() -> f64 {
    1e-5
}
fn default_clip() -> f64 {
    1.0
}

impl DpConfig {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, delta: default_delta(), clip_norm: default_clip() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return config(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return config(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return config(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        Ok(())
    }

    /// Gaussian-mechanism noise scale for one release:
    /// `clip * sqrt(2 ln(1.25 / delta)) / epsilon`.
    pub fn sigma(&self) -> f64 {
        self.clip_norm * (2.0 * (1.25 / self.delta).ln()).sqrt() / self.epsilon
    }
}

/// Clips `delta` to L2 norm `clip_norm` and adds N(0, sigma^2) per coordinate.
pub fn clip_and_noise<R: Rng + ?Sized>(delta: &[f64], clip_norm: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let mut out: Vec<f64> = delta.iter().map(|v| v * scale).collect();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("positive finite sigma");
        for v in &mut out {
            *v += noise.sample(rng);
        }
    }
    out
}

pub fn dp_sanitize<R: Rng + ?Sized>(delta: &[f64], dp: &DpConfig, rng: &mut R) -> Result<Vec<f64>> {
    dp.validate()?;
    Ok(clip_and_noise(delta, dp.clip_norm, dp.sigma(), rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    #[serde(default)]
    pub dp: Option<DpConfig>,
    /// Share of each client's data held out as its local test split.
    #[serde(default = "default_local_test")]
    pub local_test_fraction: f64,
}

fn default_clients() -> usize {
    5
}
fn default_rounds() -> usize {
    50
}
fn default_local_epochs() -> usize {
    5
}
fn default_partition() -> PartitionMode {
    PartitionMode::Iid
}
fn default_local_test() -> f64 {
    0.2
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            clients: default_clients(),
            rounds: default_rounds(),
            local_epochs: default_local_epochs(),
            partition: default_partition(),
            dp: None,
            local_test_fraction: default_local_test(),
        }
    }
}

/// Client shards after partitioning, local train/test splitting and
/// preprocessing (fitted on the pooled client training data).
#[derive(Clone, Debug)]
pub struct FederatedSetup {
    pub partition: ClientPartition,
    pub client_train: Vec<Dataset>,
    pub client_test: Vec<Dataset>,
    pub global_test: Dataset,
}

impl FederatedSetup {
    pub fn new(raw: &Dataset, fed: &FedConfig, seed: u64) -> Result<Self> {
        if fed.clients == 0 || fed.rounds == 0 {
            return config("federated runs need at least one client and one round");
        }
        let all: Vec<usize> = (0..raw.len()).collect();
        let partition = partition_clients(&all, raw.labels(), fed.clients, fed.partition, seed)?;
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (k, owned) in partition.clients.iter().enumerate() {
            let labels: Vec<usize> = owned.iter().map(|&i| raw.label(i)).collect();
            let mut rng = seeds::rng(seed, &[stream::SPLIT, k as u64]);
            let (tr, te) = stratified_holdout(&labels, raw.n_classes(), fed.local_test_fraction, &mut rng);
            train_idx.push(tr.iter().map(|&p| owned[p]).collect::<Vec<_>>());
            test_idx.push(te.iter().map(|&p| owned[p]).collect::<Vec<_>>());
        }
        let pooled: Vec<usize> = train_idx.iter().flatten().copied().collect();
        let prep = Preprocessor::fit(&raw.subset(&pooled))?;
        let client_train: Vec<Dataset> = train_idx.iter().map(|idx| prep.transform(&raw.subset(idx))).collect();
        let client_test: Vec<Dataset> = test_idx.iter().map(|idx| prep.transform(&raw.subset(idx))).collect();
        let all_test: Vec<usize> = test_idx.iter().flatten().copied().collect();
        let global_test = prep.transform(&raw.subset(&all_test));
        Ok(Self { partition, client_train, client_test, global_test })
    }

    pub fn input_dim(&self) -> usize {
        self.client_train[0].dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub accuracy: f64,
    pub cumulative_mb: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub rounds: Vec<RoundRecord>,
}

impl RoundLog {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.accuracy)
    }

    pub fn peak_accuracy(&self) -> f64 {
        self.rounds.iter().map(|r| r.accuracy).fold(0.0, f64::max)
    }

    /// First round (1-based) whose accuracy reaches `fraction` of the
    /// run's peak accuracy.
    pub fn rounds_to_fraction_of_peak(&self, fraction: f64) -> Option<usize> {
        let target = fraction * self.peak_accuracy();
        self.rounds.iter().find(|r| r.accuracy >= target).map(|r| r.round)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,accuracy,cum_mb\n");
        for r in &self.rounds {
            let _ = writeln!(s, "{},{:.6},{:.6}", r.round, r.accuracy, r.cumulative_mb);
        }
        s
    }
}

/// Bytes moved per client per round: parameters down, then up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub params: usize,
    pub clients: usize,
    /// Cumulative bytes after each round.
    pub cumulative_bytes: Vec<u64>,
}

impl CommLedger {
    pub fn new(params: usize, clients: usize) -> Self {
        Self { params, clients, cumulative_bytes: Vec::new() }
    }

    pub fn bytes_per_client_round(&self) -> u64 {
        self.params as u64 * BYTES_PER_PARAM * 2
    }

    pub fn record_round(&mut self) {
        let prev = self.cumulative_bytes.last().copied().unwrap_or(0);
        self.cumulative_bytes.push(prev + self.bytes_per_client_round() * self.clients as u64);
    }

    pub fn total_bytes(&self) -> u64 {
        self.cumulative_bytes.last().copied().unwrap_or(0)
    }

    pub fn total_mb(&self) -> f64 {
        self.total_bytes() as f64 / MIB
    }
}

#[derive(Clone, Debug)]
pub struct FedOutcome {
    pub model: HybridModel,
    pub log: RoundLog,
    pub ledger: CommLedger,
}

/// FedAvg with every client participating every round. Client work runs in
/// parallel; each client's RNG depends only on (seed, client, round) and the
/// aggregate is summed in client order, so results do not depend on scheduling.
pub fn run_federated(arch: &ArchitectureSpec, setup: &FederatedSetup, fed: &FedConfig, cfg: &TrainConfig) -> Result<FedOutcome> {
    cfg.validate()?;
    if let Some(dp) = &fed.dp {
        dp.validate()?;
    }
    if arch.input_dim != setup.input_dim() {
        return config(format!("architecture expects {} features, data has {}", arch.input_dim, setup.input_dim()));
    }
    let mut global = HybridModel::build(arch, &mut seeds::rng(cfg.seed, &[stream::INIT]))?;
    let mut ledger = CommLedger::new(global.param_count(), setup.client_train.len());
    let mut log = RoundLog::default();
    for round in 0..fed.rounds {
        let base = global.flatten_params();
        let updates: Vec<(Vec<f64>, usize)> = setup
            .client_train
            .par_iter()
            .enumerate()
            .filter(|(_, d)| !d.is_empty())
            .map(|(k, data)| {
                let mut rng = seeds::rng(cfg.seed, &[stream::TRAIN, k as u64, round as u64]);
                let mut local = local_train(&global, data, fed.local_epochs, cfg, &mut rng)?;
                if let Some(dp) = &fed.dp {
                    let delta: Vec<f64> = local.iter().zip(&base).map(|(l, g)| l - g).collect();
                    let mut nrng = seeds::rng(cfg.seed, &[stream::DP_NOISE, k as u64, round as u64]);
                    let noisy = dp_sanitize(&delta, dp, &mut nrng)?;
                    local = base.iter().zip(&noisy).map(|(g, d)| g + d).collect();
                }
                Ok((local, data.len()))
            })
            .collect::<Result<_>>()?;
        let merged = fedavg_aggregate(&updates)?;
        global.unflatten_params(&merged)?;
        ledger.record_round();
        log.rounds.push(RoundRecord {
            round: round + 1,
            accuracy: global.accuracy(&setup.global_test)?,
            cumulative_mb: ledger.total_mb(),
        });
    }
    Ok(FedOutcome { model: global, log, ledger })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientAccuracy {
    pub client: usize,
    pub own_test: f64,
    pub global_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOnlyReport {
    pub clients: Vec<ClientAccuracy>,
    pub mean: f64,
    pub std: f64,
}

/// Every client trains alone on its own training split (no sharing) and is
/// scored on its own test split and on the pooled test set.
pub fn local_only_baseline(arch: &ArchitectureSpec, setup: &FederatedSetup, cfg: &TrainConfig) -> Result<LocalOnlyReport> {
    let init = HybridModel::build(arch, &mut seeds::rng(cfg.seed, &[stream::INIT]))?;
    let clients: Vec<ClientAccuracy> = setup
        .client_train
        .par_iter()
        .zip(&setup.client_test)
        .enumerate()
        .map(|(k, (train, test))| {
            let (m, _) = train_centralized(&init, train, cfg)?;
            let own = if test.is_empty() { m.accuracy(train)? } else { m.accuracy(test)? };
            Ok(ClientAccuracy { client: k, own_test: own, global_test: m.accuracy(&setup.global_test)? })
        })
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&clients.iter().map(|c| c.own_test).collect::<Vec<_>>());
    Ok(LocalOnlyReport { clients, mean, std })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
