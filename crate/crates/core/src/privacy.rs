//! Privacy evaluation: membership inference (loss threshold and shadow
//! models), gradient inversion by cosine matching, and the combined suite.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_holdout, stratified_kfold, Dataset, Preprocessor};
use crate::error::{config, usage, Error, Result};
use crate::models::{ArchitectureSpec, HybridModel};
use crate::nn::{self, AdamState, Parameterized};
use crate::seeds::{self, stream};
use crate::train::{clip_and_noise, mean_std, run_federated, train_centralized, FedConfig, FederatedSetup, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipScore {
    pub sample_id: usize,
    /// Higher means more member-like.
    pub score: f64,
    pub is_member: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (FPR, TPR), non-decreasing in both coordinates, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            s.push_str(&format!("{f:.6},{t:.6}\n"));
        }
        s
    }
}

fn class_totals(scores: &[MembershipScore]) -> Result<(usize, usize)> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::Attack("non-finite membership score".into()));
    }
    let pos = scores.iter().filter(|s| s.is_member).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return usage("ROC needs at least one member and one non-member");
    }
    Ok((pos, neg))
}

/// ROC over every distinct threshold. Tied scores move diagonally, which
/// gives them half credit in the trapezoidal area.
pub fn roc_curve(scores: &[MembershipScore]) -> Result<RocCurve> {
    let (pos, neg) = class_totals(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].is_member {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

/// Mann-Whitney estimate of P(member score > non-member score), ties halved.
pub fn rank_auc(scores: &[MembershipScore]) -> Result<f64> {
    let (pos, neg) = class_totals(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let mid_rank = (i + j + 1) as f64 / 2.0;
        rank_sum += mid_rank * sorted[i..j].iter().filter(|s| s.is_member).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn labelled_scores(members: &[f64], non_members: &[f64]) -> Vec<MembershipScore> {
    let m = members.iter().map(|&score| (score, true));
    let n = non_members.iter().map(|&score| (score, false));
    m.chain(n).enumerate().map(|(sample_id, (score, is_member))| MembershipScore { sample_id, score, is_member }).collect()
}

/// Loss-threshold attack: score = -loss. Sample ids number members first,
/// then non-members.
pub fn mia_threshold_attack(model: &HybridModel, members: &Dataset, non_members: &Dataset) -> Result<(Vec<MembershipScore>, RocCurve)> {
    if members.is_empty() || non_members.is_empty() {
        return usage("membership attack needs non-empty member and non-member sets");
    }
    let neg = |v: Vec<f64>| v.into_iter().map(|l| -l).collect::<Vec<_>>();
    let scores = labelled_scores(&neg(model.losses(members)?), &neg(model.losses(non_members)?));
    let roc = roc_curve(&scores)?;
    Ok((scores, roc))
}

/// Attack features for one sample: softmax probabilities then loss.
fn attack_features(model: &HybridModel, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let logits = model.logits(ds.row(i))?;
            let mut f = nn::softmax(&logits);
            f.push(nn::softmax_cross_entropy(&logits, ds.label(i))?.0);
            Ok(f)
        })
        .collect()
}

/// Logistic regression on standardized features, full-batch gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticAttack {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticAttack {
    pub fn fit(x: &[Vec<f64>], y: &[bool], iters: usize, lr: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return usage("logistic attack needs matching, non-empty features and labels");
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 { var.sqrt() } else { 1.0 }
            })
            .collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect()).collect();
        let mut weights = vec![0.0; d];
        let mut bias = 0.0;
        for _ in 0..iters {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &label) in z.iter().zip(y) {
                let p = sigmoid(dot(&weights, row) + bias);
                let err = p - if label { 1.0 } else { 0.0 };
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
                gb += err;
            }
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= lr * g / n;
            }
            bias -= lr * gb / n;
        }
        Ok(Self { mean, scale, weights, bias })
    }

    /// Linear score (log-odds of membership).
    pub fn score(&self, features: &[f64]) -> f64 {
        let z: f64 = features.iter().enumerate().map(|(j, v)| self.weights[j] * (v - self.mean[j]) / self.scale[j]).sum();
        z + self.bias
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    pub n_shadows: usize,
    pub attack_iters: usize,
    pub attack_lr: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self { n_shadows: 8, attack_iters: 500, attack_lr: 0.5 }
    }
}

/// Shadow-model attack. Each shadow trains on a random stratified half of
/// `pool` (same architecture and training config as the target); the other
/// half supplies "out" examples. A logistic model fitted on the shadows'
/// (probabilities, loss) features then scores the target's samples.
#[allow(clippy::too_many_arguments)]
pub fn mia_shadow_attack(
    arch: &ArchitectureSpec,
    pool: &Dataset,
    shadow: &ShadowConfig,
    train_cfg: &TrainConfig,
    target: &HybridModel,
    members: &Dataset,
    non_members: &Dataset,
    seed: u64,
) -> Result<RocCurve> {
    if shadow.n_shadows == 0 {
        return config("n_shadows must be at least 1");
    }
    if pool.len() < 4 {
        return config(format!("attack pool of {} samples is too small to split", pool.len()));
    }
    let per_shadow: Vec<(Vec<Vec<f64>>, Vec<bool>)> = (0..shadow.n_shadows)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::rng(seed, &[stream::SHADOW, s as u64]);
            let (tin, tout) = stratified_holdout(pool.labels(), pool.n_classes(), 0.5, &mut rng);
            if tin.is_empty() || tout.is_empty() {
                return config("attack pool too small to split into shadow in/out halves");
            }
            let (din, dout) = (pool.subset(&tin), pool.subset(&tout));
            let cfg = TrainConfig { seed: seeds::derive(seed, &[stream::SHADOW, s as u64, 1]), ..train_cfg.clone() };
            let init = HybridModel::build(arch, &mut seeds::rng(cfg.seed, &[stream::INIT]))?;
            let (m, _) = train_centralized(&init, &din, &cfg)?;
            let mut x = attack_features(&m, &din)?;
            let mut y = vec![true; x.len()];
            x.extend(attack_features(&m, &dout)?);
            y.resize(x.len(), false);
            Ok((x, y))
        })
        .collect::<Result<_>>()?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (xs, ys) in per_shadow {
        x.extend(xs);
        y.extend(ys);
    }
    let attack = LogisticAttack::fit(&x, &y, shadow.attack_iters, shadow.attack_lr)?;
    let score = |ds: &Dataset| -> Result<Vec<f64>> { Ok(attack_features(target, ds)?.iter().map(|f| attack.score(f)).collect()) };
    roc_curve(&labelled_scores(&score(members)?, &score(non_members)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub target: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub mse: f64,
    /// `10 log10(1 / mse)`; infinite for an exact reconstruction.
    pub psnr: f64,
    pub matching_loss: f64,
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

pub fn psnr(mse: f64) -> f64 {
    10.0 * (1.0 / mse).log10()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub iters: usize,
    pub lr: f64,
    /// Finite-difference step over input coordinates.
    pub fd_step: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self { iters: 200, lr: 0.05, fd_step: 1e-4 }
    }
}

/// Single-sample, eval-mode parameter gradient: what an observer of a
/// batch-1 update sees.
pub fn observed_gradient(model: &HybridModel, x: &[f64], label: usize) -> Result<Vec<f64>> {
    Ok(model.loss_and_grad(&[(x, label)], false, &mut seeds::rng(0, &[]))?.1)
}

fn cosine_distance(a: &[f64], b: &[f64], b_norm: f64) -> f64 {
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        return 1.0;
    }
    1.0 - dot(a, b) / (na * b_norm)
}

/// Gradient inversion from a uniform random start in [0,1]^d.
pub fn gradient_inversion<R: Rng + ?Sized>(
    model: &HybridModel,
    observed_grad: &[f64],
    label: usize,
    target: &[f64],
    cfg: &InversionConfig,
    rng: &mut R,
) -> Result<ReconstructionResult> {
    let start: Vec<f64> = (0..target.len()).map(|_| rng.random::<f64>()).collect();
    gradient_inversion_from(model, observed_grad, label, target, start, cfg)
}

/// Minimizes `1 - cos(grad L(x_hat), observed_grad)` over `x_hat` with Adam,
/// finite-difference input gradients and clamping to [0,1]. `target` is only
/// used to score iterates; the best MSE seen is reported.
pub fn gradient_inversion_from(
    model: &HybridModel,
    observed_grad: &[f64],
    label: usize,
    target: &[f64],
    start: Vec<f64>,
    cfg: &InversionConfig,
) -> Result<ReconstructionResult> {
    if observed_grad.len() != model.param_count() {
        return usage(format!("observed gradient has {} entries, model has {}", observed_grad.len(), model.param_count()));
    }
    if start.len() != target.len() || target.len() != model.spec().input_dim {
        return usage("inversion start and target must match the model input width");
    }
    let g_norm = dot(observed_grad, observed_grad).sqrt();
    if g_norm == 0.0 || !g_norm.is_finite() {
        return Err(Error::Attack("observed gradient is zero; nothing to invert".into()));
    }
    let objective = |x: &[f64]| -> Result<f64> { Ok(cosine_distance(&observed_gradient(model, x, label)?, observed_grad, g_norm)) };
    let mut x = start;
    let mut adam = AdamState::new(x.len(), cfg.lr);
    let mut best = (mse(&x, target), x.clone(), objective(&x)?);
    for _ in 0..cfg.iters {
        let mut grad = vec![0.0; x.len()];
        for (j, g) in grad.iter_mut().enumerate() {
            let h = cfg.fd_step;
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            *g = (objective(&xp)? - objective(&xm)?) / (2.0 * h);
        }
        adam.step(&mut x, &grad)?;
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let e = mse(&x, target);
        if e < best.0 {
            best = (e, x.clone(), objective(&x)?);
        }
    }
    let (mse, reconstructed, matching_loss) = best;
    Ok(ReconstructionResult { target: target.to_vec(), reconstructed, mse, psnr: psnr(mse), matching_loss })
}

/// Closed-form input recovery for a linear layer followed by softmax
/// cross-entropy: each weight-gradient row equals its bias gradient times x.
/// `grad_w` is row-major `out x in`.
pub fn analytic_linear_inversion(grad_w: &[f64], grad_b: &[f64]) -> Result<Vec<f64>> {
    if grad_b.is_empty() || grad_w.len() % grad_b.len() != 0 {
        return usage("weight gradient is not a whole number of bias rows");
    }
    let d = grad_w.len() / grad_b.len();
    let (row, db) = grad_b.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).expect("non-empty bias gradient");
    if *db == 0.0 {
        return Err(Error::Attack("bias gradient is zero; input not recoverable".into()));
    }
    Ok(grad_w[row * d..(row + 1) * d].iter().map(|w| w / db).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub train: TrainConfig,
    pub shadow: ShadowConfig,
    pub inversion: InversionConfig,
    /// Samples attacked by gradient inversion per seed.
    pub inversion_samples: usize,
    pub run_shadow: bool,
    pub folds: usize,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig { patience: None, ..TrainConfig::default() },
            shadow: ShadowConfig::default(),
            inversion: InversionConfig::default(),
            inversion_samples: 4,
            run_shadow: true,
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedPrivacy {
    pub seed: u64,
    pub accuracy: f64,
    pub threshold_auc: f64,
    pub shadow_auc: Option<f64>,
    pub recon_mse: Option<f64>,
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyRow {
    pub params: usize,
    pub per_seed: Vec<SeedPrivacy>,
}

impl PrivacyRow {
    pub fn accuracy(&self) -> (f64, f64) {
        mean_std(&self.per_seed.iter().map(|s| s.accuracy).collect::<Vec<_>>())
    }

    pub fn threshold_auc(&self) -> (f64, f64) {
        mean_std(&self.per_seed.iter().map(|s| s.threshold_auc).collect::<Vec<_>>())
    }

    pub fn shadow_auc(&self) -> Option<(f64, f64)> {
        let v: Option<Vec<f64>> = self.per_seed.iter().map(|s| s.shadow_auc).collect();
        v.map(|v| mean_std(&v))
    }

    pub fn recon_mse(&self) -> Option<(f64, f64)> {
        let v: Option<Vec<f64>> = self.per_seed.iter().map(|s| s.recon_mse).collect();
        v.map(|v| mean_std(&v))
    }

    pub fn psnr(&self) -> Option<(f64, f64)> {
        let v: Option<Vec<f64>> = self.per_seed.iter().map(|s| s.psnr).collect();
        v.map(|v| mean_std(&v))
    }
}

/// Member/non-member sets for one seed. The data is split into `folds`
/// stratified folds; the model trains on the training folds and fold
/// `seed % folds` is held out. Non-members are the held-out fold, members a
/// random equal-size sample of the training folds. Preprocessing is fitted on
/// the training folds.
#[derive(Clone, Debug)]
pub struct MemberSplit {
    pub train: Dataset,
    pub members: Dataset,
    pub non_members: Dataset,
}

pub fn member_split(raw: &Dataset, folds: usize, seed: u64) -> Result<MemberSplit> {
    let all = stratified_kfold(raw.labels(), raw.n_classes(), folds, seed)?;
    let fold = &all[(seed % folds as u64) as usize];
    let prep = Preprocessor::fit(&raw.subset(&fold.train_indices))?;
    let train = prep.transform(&raw.subset(&fold.train_indices));
    let mut test_pos: Vec<usize> = (0..fold.test_indices.len()).collect();
    let mut train_pos: Vec<usize> = (0..train.len()).collect();
    let n = train_pos.len().min(test_pos.len());
    if n == 0 {
        return config("dataset too small for a member/non-member split");
    }
    let mut rng = seeds::rng(seed, &[stream::SUBSET, 1]);
    for v in [&mut train_pos, &mut test_pos] {
        v.shuffle(&mut rng);
        v.truncate(n);
        v.sort_unstable();
    }
    let members = train.subset(&train_pos);
    let non_members = prep.transform(&raw.subset(&fold.test_indices)).subset(&test_pos);
    Ok(MemberSplit { train, members, non_members })
}

/// Trains `arch` on the training folds for each seed and attacks it.
pub fn privacy_suite(arch: &ArchitectureSpec, raw: &Dataset, seeds_list: &[u64], cfg: &PrivacyConfig) -> Result<PrivacyRow> {
    if seeds_list.is_empty() {
        return config("privacy suite needs at least one seed");
    }
    let per_seed = seeds_list
        .par_iter()
        .map(|&seed| {
            let MemberSplit { train, members, non_members } = member_split(raw, cfg.folds, seed)?;
            let tcfg = TrainConfig { seed, ..cfg.train.clone() };
            let init = HybridModel::build(arch, &mut seeds::rng(seed, &[stream::INIT]))?;
            let (model, _) = train_centralized(&init, &train, &tcfg)?;
            let (_, roc) = mia_threshold_attack(&model, &members, &non_members)?;
            let shadow_auc = if cfg.run_shadow {
                Some(mia_shadow_attack(arch, &non_members, &cfg.shadow, &tcfg, &model, &members, &non_members, seed)?.auc)
            } else {
                None
            };
            let (recon_mse, psnr_db) = mean_inversion(&model, &members, cfg, |g, _| g, &mut seeds::rng(seed, &[stream::ATTACK]))?;
            Ok(SeedPrivacy { seed, accuracy: model.accuracy(&non_members)?, threshold_auc: roc.auc, shadow_auc, recon_mse, psnr: psnr_db })
        })
        .collect::<Result<_>>()?;
    Ok(PrivacyRow { params: arch.param_count(), per_seed })
}

fn equal_size_sample(ds: &Dataset, n: usize, rng: &mut impl Rng) -> Dataset {
    let mut pos: Vec<usize> = (0..ds.len()).collect();
    pos.shuffle(rng);
    pos.truncate(n);
    pos.sort_unstable();
    ds.subset(&pos)
}

fn mean_inversion<R: Rng>(
    model: &HybridModel,
    members: &Dataset,
    cfg: &PrivacyConfig,
    release: impl Fn(Vec<f64>, &mut R) -> Vec<f64>,
    rng: &mut R,
) -> Result<(Option<f64>, Option<f64>)> {
    if cfg.inversion_samples == 0 {
        return Ok((None, None));
    }
    let mut picks: Vec<usize> = (0..members.len()).collect();
    picks.shuffle(rng);
    picks.truncate(cfg.inversion_samples);
    let mut total = 0.0;
    for &i in &picks {
        let g = release(observed_gradient(model, members.row(i), members.label(i))?, rng);
        total += gradient_inversion(model, &g, members.label(i), members.row(i), &cfg.inversion, rng)?.mse;
    }
    let m = total / picks.len() as f64;
    Ok((Some(m), Some(psnr(m))))
}

/// Privacy of a federated run: the final global model is attacked with the
/// pooled client training data as members and the pooled client test data as
/// non-members (equal sizes). With DP configured, the inversion target is the
/// clipped and noised single-sample gradient a client would release.
pub fn federated_privacy(arch: &ArchitectureSpec, raw: &Dataset, fed: &FedConfig, cfg: &PrivacyConfig, seed: u64) -> Result<SeedPrivacy> {
    let setup = FederatedSetup::new(raw, fed, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let out = run_federated(arch, &setup, fed, &tcfg)?;
    let pooled = Dataset::concat(&setup.client_train)?;
    let n = pooled.len().min(setup.global_test.len());
    if n == 0 {
        return config("federated split left no members or no non-members");
    }
    let mut rng = seeds::rng(seed, &[stream::ATTACK, 1]);
    let members = equal_size_sample(&pooled, n, &mut rng);
    let non_members = equal_size_sample(&setup.global_test, n, &mut rng);
    let (_, roc) = mia_threshold_attack(&out.model, &members, &non_members)?;
    let dp = fed.dp;
    let (recon_mse, psnr_db) = mean_inversion(
        &out.model,
        &members,
        cfg,
        |g, r| match &dp {
            Some(dp) => clip_and_noise(&g, dp.clip_norm, dp.sigma(), r),
            None => g,
        },
        &mut rng,
    )?;
    Ok(SeedPrivacy { seed, accuracy: out.log.final_accuracy(), threshold_auc: roc.auc, shadow_auc: None, recon_mse, psnr: psnr_db })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(pairs: &[(f64, bool)]) -> Vec<MembershipScore> {
        pairs.iter().enumerate().map(|(i, &(score, is_member))| MembershipScore { sample_id: i, score, is_member }).collect()
    }

    #[test]
    fn perfect_separation_is_one() {
        let s = scored(&[(3.0, true), (2.0, true), (1.0, false), (0.0, false)]);
        assert_eq!(roc_curve(&s).unwrap().auc, 1.0);
        assert_eq!(rank_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_half() {
        let s = scored(&[(1.0, true), (1.0, false), (1.0, true), (1.0, false)]);
        assert_eq!(roc_curve(&s).unwrap().auc, 0.5);
        assert_eq!(rank_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn empty_class_is_usage_error() {
        assert!(matches!(roc_curve(&scored(&[(1.0, true)])), Err(Error::Usage(_))));
    }

    #[test]
    fn linear_inversion_identity() {
        let dw = [0.2, 0.4, -0.1, -0.2];
        let db = [0.5, -0.25];
        let x = analytic_linear_inversion(&dw, &db).unwrap();
        assert!((x[0] - 0.4).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
        assert!(matches!(analytic_linear_inversion(&[0.0, 0.0], &[0.0]), Err(Error::Attack(_))));
    }

    #[test]
    fn psnr_of_unit_mse_is_zero() {
        assert_eq!(psnr(1.0), 0.0);
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
    }
}
