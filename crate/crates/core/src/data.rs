//! Dataset ingestion and preprocessing.
//!
//! Raw CSVs are loaded through a [`DatasetConfig`] that names the label
//! column, an optional class mapping (rows with unmapped labels are dropped),
//! optional one-hot blocks to collapse, a stratified subset size and a PCA
//! target. Scaling and PCA are *fitted* per training split by
//! [`Preprocessor`], never on the full dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{config, data, Error, Result};
use crate::seeds::{self, stream};

/// Environment variable overriding the data directory.
pub const DATA_DIR_ENV: &str = "QBYPASS_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    /// PCA target applied by [`Preprocessor`], if any.
    pub pca_dim: Option<usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return data(format!("{} feature rows but {} labels", rows.len(), labels.len()));
        }
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return data(format!("row {i} has {} features, expected {d}", r.len()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return data(format!("label {l} out of range for {n_classes} classes"));
        }
        Ok(Self {
            name: name.into(),
            n: rows.len(),
            d,
            features: rows.into_iter().flatten().collect(),
            labels,
            n_classes,
            pca_dim: None,
        })
    }

    fn from_flat(name: String, d: usize, features: Vec<f64>, labels: Vec<usize>, n_classes: usize, pca_dim: Option<usize>) -> Self {
        Self { name, n: labels.len(), d, features, labels, n_classes, pca_dim }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows `indices` in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(self.name.clone(), self.d, features, labels, self.n_classes, self.pca_dim)
    }

    /// Stacks datasets of equal width and class count, in order.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let Some(first) = parts.first() else {
            return data("nothing to concatenate");
        };
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.d != first.d || p.n_classes != first.n_classes {
                return data(format!("cannot stack a {}-feature, {}-class dataset onto {}/{}", p.d, p.n_classes, first.d, first.n_classes));
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        Ok(Self::from_flat(first.name.clone(), first.d, features, labels, first.n_classes, first.pca_dim))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_histogram(&self.labels, self.n_classes)
    }

    fn map_rows(&self, d: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        let features = self.rows().flat_map(f).collect();
        Self::from_flat(self.name.clone(), d, features, self.labels.clone(), self.n_classes, self.pca_dim)
    }
}

pub fn class_histogram(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut h = vec![0; n_classes];
    for &l in labels {
        h[l] += 1;
    }
    h
}

/// How a CSV maps onto a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// File name, resolved against the data directory.
    pub file: String,
    #[serde(default)]
    pub header: bool,
    /// Column holding the label; negative values count from the end.
    #[serde(default = "default_label_column")]
    pub label_column: i64,
    /// Raw label text -> class index. Rows whose label is absent are dropped.
    /// Without a map, labels must be non-negative integers.
    #[serde(default)]
    pub class_map: Option<BTreeMap<String, usize>>,
    /// Half-open feature-column ranges `[start, end)` holding one-hot blocks;
    /// each block is replaced by the index of its hot column.
    #[serde(default)]
    pub collapse_onehot: Vec<[usize; 2]>,
    #[serde(default)]
    pub subset_size: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default)]
    pub pca_dim: Option<usize>,
}

fn default_label_column() -> i64 {
    -1
}

impl DatasetConfig {
    /// Reference configurations for the four benchmark datasets.
    pub fn builtin(name: &str) -> Result<Self> {
        let base = |name: &str, file: &str| DatasetConfig {
            name: name.into(),
            file: file.into(),
            header: true,
            label_column: -1,
            class_map: None,
            collapse_onehot: Vec::new(),
            subset_size: None,
            subset_seed: 0,
            pca_dim: None,
        };
        let three = |a: &str, b: &str, c: &str| Some(BTreeMap::from([(a.into(), 0), (b.into(), 1), (c.into(), 2)]));
        Ok(match name {
            "wine" => base("wine", "wine.csv"),
            "breast_cancer" => DatasetConfig { pca_dim: Some(10), ..base("breast_cancer", "breast_cancer.csv") },
            "fashion_mnist" => DatasetConfig {
                label_column: 0,
                class_map: three("0", "1", "2"),
                subset_size: Some(3000),
                subset_seed: 20_170_825,
                pca_dim: Some(16),
                ..base("fashion_mnist", "fashion-mnist_train.csv")
            },
            "covtype" => DatasetConfig {
                header: false,
                class_map: three("1", "2", "3"),
                collapse_onehot: vec![[10, 14], [14, 54]],
                subset_size: Some(5000),
                subset_seed: 19_990_101,
                ..base("covtype", "covtype.data")
            },
            other => return config(format!("unknown dataset '{other}' (expected wine, breast_cancer, fashion_mnist or covtype)")),
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 4] = ["wine", "breast_cancer", "fashion_mnist", "covtype"];
}

/// `$QBYPASS_DATA_DIR` if set, else `fallback`.
pub fn data_dir(fallback: impl AsRef<Path>) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| fallback.as_ref().to_path_buf())
}

pub fn load_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<Dataset> {
    let path = dir.join(&cfg.file);
    if !path.exists() {
        return data(format!("dataset file {} not found", path.display()));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    let mut ds = parse_csv(cfg, &text)?;
    if let Some(size) = cfg.subset_size {
        if size < ds.len() {
            let mut rng = seeds::rng(cfg.subset_seed, &[stream::SUBSET]);
            let idx = stratified_sample(ds.labels(), ds.n_classes(), size, &mut rng);
            ds = ds.subset(&idx);
        }
    }
    if let Some(k) = cfg.pca_dim {
        if k > ds.dim() {
            return config(format!("pca_dim {k} exceeds {} features", ds.dim()));
        }
    }
    ds.pca_dim = cfg.pca_dim;
    Ok(ds)
}

/// Parses CSV text per `cfg`. Row numbers in errors are 1-based file lines.
pub fn parse_csv(cfg: &DatasetConfig, text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(cfg.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("malformed CSV: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return data(format!("line {line}: expected {w} columns, found {}", record.len()));
        }
        if w < 2 {
            return data(format!("line {line}: need at least one feature and a label column"));
        }
        let label_col = if cfg.label_column < 0 { w as i64 + cfg.label_column } else { cfg.label_column };
        if !(0..w as i64).contains(&label_col) {
            return config(format!("label column {} out of range for {w} columns", cfg.label_column));
        }
        let label_col = label_col as usize;
        let label_text = &record[label_col];
        let label = match &cfg.class_map {
            Some(map) => match map.get(label_text) {
                Some(&c) => c,
                None => continue,
            },
            None => parse_label(label_text).ok_or_else(|| Error::Data(format!("line {line}: bad label '{label_text}'")))?,
        };
        let mut feats = Vec::with_capacity(w - 1);
        for (j, field) in record.iter().enumerate() {
            if j == label_col {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("line {line}, column {}: '{field}' is not a number", j + 1)))?;
            if !v.is_finite() {
                return data(format!("line {line}, column {}: non-finite value", j + 1));
            }
            feats.push(v);
        }
        rows.push(collapse_blocks(&feats, &cfg.collapse_onehot).map_err(|e| Error::Data(format!("line {line}: {e}")))?);
        raw_labels.push(label);
    }
    if rows.is_empty() {
        return data(format!("dataset '{}' has no usable rows", cfg.name));
    }
    let n_classes = match &cfg.class_map {
        Some(map) => map.values().max().map_or(0, |m| m + 1),
        None => raw_labels.iter().max().map_or(0, |m| m + 1),
    };
    Dataset::new(cfg.name.clone(), rows, raw_labels, n_classes)
}

fn parse_label(text: &str) -> Option<usize> {
    if let Ok(v) = text.parse::<usize>() {
        return Some(v);
    }
    let f: f64 = text.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0).then_some(f as usize)
}

fn collapse_blocks(feats: &[f64], blocks: &[[usize; 2]]) -> std::result::Result<Vec<f64>, String> {
    if blocks.is_empty() {
        return Ok(feats.to_vec());
    }
    let mut out = Vec::new();
    let mut j = 0;
    let mut sorted = blocks.to_vec();
    sorted.sort();
    for [start, end] in sorted {
        if start < j || end > feats.len() || start >= end {
            return Err(format!("one-hot block [{start}, {end}) is invalid for {} features", feats.len()));
        }
        out.extend_from_slice(&feats[j..start]);
        let hot = feats[start..end].iter().position(|&v| v != 0.0).unwrap_or(0);
        out.push(hot as f64);
        j = end;
    }
    out.extend_from_slice(&feats[j..]);
    Ok(out)
}

/// Proportional stratified sample of `size` indices (largest-remainder
/// allocation), returned in ascending index order.
pub fn stratified_sample<R: Rng + ?Sized>(labels: &[usize], n_classes: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let n = labels.len();
    let by_class = indices_by_class(labels, n_classes);
    let quotas: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * size as f64 / n as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut missing = size.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(n_classes * 2) {
        if missing == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }
    let mut out = Vec::with_capacity(size);
    for (mut members, t) in by_class.into_iter().zip(take) {
        members.shuffle(rng);
        out.extend_from_slice(&members[..t]);
    }
    out.sort_unstable();
    out
}

fn indices_by_class(labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by[l].push(i);
    }
    by
}

/// Column-wise min-max scaler. Constant columns map to 0.5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    clamp: bool,
}

impl MinMaxScaler {
    pub fn fit(ds: &Dataset) -> Self {
        let mut mins = vec![f64::INFINITY; ds.dim()];
        let mut maxs = vec![f64::NEG_INFINITY; ds.dim()];
        for row in ds.rows() {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Self { mins, maxs, clamp: true }
    }

    /// Disables clamping of out-of-range values (used by round-trip checks).
    pub fn without_clamp(mut self) -> Self {
        self.clamp = false;
        self
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.maxs[j] - self.mins[j];
                if span <= 0.0 {
                    return 0.5;
                }
                let s = (v - self.mins[j]) / span;
                if self.clamp {
                    s.clamp(0.0, 1.0)
                } else {
                    s
                }
            })
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &s)| {
                let span = self.maxs[j] - self.mins[j];
                if span <= 0.0 {
                    self.mins[j]
                } else {
                    self.mins[j] + s * span
                }
            })
            .collect()
    }

    pub fn transform(&self, ds: &Dataset) -> Dataset {
        ds.map_rows(ds.dim(), |r| self.transform_row(r))
    }
}

/// Fits a scaler on `ds` and applies it.
pub fn minmax_scale(ds: &Dataset) -> (Dataset, MinMaxScaler) {
    let s = MinMaxScaler::fit(ds);
    (s.transform(ds), s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    mean: Vec<f64>,
    /// `k x d`, row-major; rows are unit eigenvectors in descending eigenvalue order.
    components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    d: usize,
    k: usize,
}

impl Pca {
    pub fn fit(ds: &Dataset, target_dim: usize) -> Result<Self> {
        let (n, d) = (ds.len(), ds.dim());
        if target_dim > d || target_dim == 0 {
            return config(format!("PCA target dim {target_dim} must be in 1..={d}"));
        }
        if n < 2 {
            return data("PCA needs at least two samples");
        }
        let mut mean = vec![0.0; d];
        for row in ds.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered = DMatrix::from_fn(n, d, |i, j| ds.row(i)[j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut components = Vec::with_capacity(target_dim * d);
        let mut explained_variance = Vec::with_capacity(target_dim);
        for &c in order.iter().take(target_dim) {
            let col = eig.eigenvectors.column(c);
            let pivot = col.iter().cloned().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            components.extend(col.iter().map(|v| v * sign));
            explained_variance.push(eig.eigenvalues[c].max(0.0));
        }
        Ok(Self { mean, components, explained_variance, d, k: target_dim })
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.d..(i + 1) * self.d]
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|c| self.component(c).iter().zip(row.iter().zip(&self.mean)).map(|(w, (v, m))| w * (v - m)).sum())
            .collect()
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &zc) in z.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.component(c)) {
                *o += zc * w;
            }
        }
        out
    }

    pub fn transform(&self, ds: &Dataset) -> Dataset {
        ds.map_rows(self.k, |r| self.transform_row(r))
    }
}

/// Projects onto the top `target_dim` principal components.
pub fn pca_reduce(ds: &Dataset, target_dim: usize) -> Result<(Dataset, Pca)> {
    let p = Pca::fit(ds, target_dim)?;
    Ok((p.transform(ds), p))
}

/// Scale to [0, 1], optionally PCA, and re-scale PCA scores to [0, 1]. All
/// statistics come from the data passed to [`Preprocessor::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    scaler: MinMaxScaler,
    pca: Option<(Pca, MinMaxScaler)>,
}

impl Preprocessor {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let scaler = MinMaxScaler::fit(train);
        let pca = match train.pca_dim {
            Some(k) => {
                let scaled = scaler.transform(train);
                let p = Pca::fit(&scaled, k)?;
                let post = MinMaxScaler::fit(&p.transform(&scaled));
                Some((p, post))
            }
            None => None,
        };
        Ok(Self { scaler, pca })
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.pca.as_ref().map_or(input_dim, |(p, _)| p.k)
    }

    pub fn transform(&self, ds: &Dataset) -> Dataset {
        let scaled = self.scaler.transform(ds);
        let mut out = match &self.pca {
            Some((p, post)) => post.transform(&p.transform(&scaled)),
            None => scaled,
        };
        out.pca_dim = None;
        out
    }
}

/// Convenience for one train/test pair.
pub fn preprocess_pair(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let p = Preprocessor::fit(train)?;
    Ok((p.transform(train), p.transform(test)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Stratified k-fold over `labels`. Each class is shuffled and dealt round-robin,
/// continuing the deal position across classes so fold sizes stay balanced.
pub fn stratified_kfold(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return config(format!("k-fold needs k >= 2, got {k}"));
    }
    let by_class = indices_by_class(labels, n_classes);
    if let Some((c, m)) = by_class.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
        return data(format!("class {c} has {} members, fewer than k = {k}", m.len()));
    }
    let mut rng = seeds::rng(seed, &[stream::SPLIT, k as u64]);
    let mut fold_of = vec![0usize; labels.len()];
    let mut pos = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = pos % k;
            pos += 1;
        }
    }
    Ok((0..k)
        .map(|f| FoldSplit {
            fold_id: f,
            train_indices: (0..labels.len()).filter(|&i| fold_of[i] != f).collect(),
            test_indices: (0..labels.len()).filter(|&i| fold_of[i] == f).collect(),
        })
        .collect())
}

/// Stratified holdout of roughly `test_fraction` of each class, as positions
/// into `labels`. Returns `(train, test)`, each in ascending order.
pub fn stratified_holdout<R: Rng + ?Sized>(labels: &[usize], n_classes: usize, test_fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in indices_by_class(labels, n_classes) {
        members.shuffle(rng);
        let t = (members.len() as f64 * test_fraction).round() as usize;
        let t = t.min(members.len().saturating_sub(1));
        test.extend_from_slice(&members[..t]);
        train.extend_from_slice(&members[t..]);
    }
    if test.is_empty() && test_fraction > 0.0 && train.len() >= 2 {
        test.push(train.pop().expect("non-empty"));
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientPartition {
    /// `clients[k]` holds dataset indices owned by client k.
    pub clients: Vec<Vec<usize>>,
    pub mode: PartitionMode,
    pub seed: u64,
}

const DIRICHLET_RETRIES: usize = 200;

impl ClientPartition {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn histograms(&self, labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
        self.clients
            .iter()
            .map(|idx| class_histogram(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(), n_classes))
            .collect()
    }

    /// Mean total-variation distance between each client's class mix and the
    /// pooled class mix.
    pub fn mean_tv_distance(&self, labels: &[usize], n_classes: usize) -> f64 {
        let hists = self.histograms(labels, n_classes);
        let mut global = vec![0usize; n_classes];
        for h in &hists {
            for (g, v) in global.iter_mut().zip(h) {
                *g += v;
            }
        }
        let gt: usize = global.iter().sum();
        let tv: f64 = hists
            .iter()
            .map(|h| {
                let t: usize = h.iter().sum();
                0.5 * h
                    .iter()
                    .zip(&global)
                    .map(|(&a, &b)| (a as f64 / t as f64 - b as f64 / gt as f64).abs())
                    .sum::<f64>()
            })
            .sum();
        tv / hists.len() as f64
    }
}

/// Splits `train_indices` over `k` clients.
///
/// IID deals each shuffled class round-robin; Dirichlet draws per-class client
/// proportions from Dirichlet(alpha) and redraws (bounded) until every client
/// owns at least one sample.
pub fn partition_clients(train_indices: &[usize], labels: &[usize], k: usize, mode: PartitionMode, seed: u64) -> Result<ClientPartition> {
    if k == 0 {
        return config("need at least one client");
    }
    if k > train_indices.len() {
        return config(format!("{k} clients but only {} samples", train_indices.len()));
    }
    let n_classes = train_indices.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut by_class = vec![Vec::new(); n_classes];
    for &i in train_indices {
        by_class[labels[i]].push(i);
    }
    let mut rng = seeds::rng(seed, &[stream::PARTITION, k as u64]);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let clients = match mode {
        PartitionMode::Iid => {
            let mut clients = vec![Vec::new(); k];
            let mut pos = 0;
            for members in &by_class {
                for &i in members {
                    clients[pos % k].push(i);
                    pos += 1;
                }
            }
            clients
        }
        PartitionMode::Dirichlet { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return config(format!("Dirichlet alpha must be positive, got {alpha}"));
            }
            let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(format!("Dirichlet alpha {alpha}: {e}")))?;
            let mut attempt = 0;
            loop {
                let mut clients = vec![Vec::new(); k];
                for members in &by_class {
                    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                    let total: f64 = draws.iter().sum();
                    let mut cum = 0.0;
                    let mut start = 0;
                    for (c, g) in draws.iter().enumerate() {
                        cum += g / total;
                        let end = if c + 1 == k { members.len() } else { ((cum * members.len() as f64).round() as usize).min(members.len()) };
                        let end = end.max(start);
                        clients[c].extend_from_slice(&members[start..end]);
                        start = end;
                    }
                }
                if clients.iter().all(|c| !c.is_empty()) {
                    break clients;
                }
                attempt += 1;
                if attempt >= DIRICHLET_RETRIES {
                    return config(format!("could not give all {k} clients a sample after {DIRICHLET_RETRIES} Dirichlet draws"));
                }
            }
        }
    };
    let clients = clients
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    Ok(ClientPartition { clients, mode, seed })
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheSidecar {
    name: String,
    n: usize,
    d: usize,
    n_classes: usize,
    pca_dim: Option<usize>,
    source: String,
    layout: String,
}

/// Writes `<stem>.bin` (features then labels, 8-byte little-endian doubles)
/// and `<stem>.json` describing the shapes.
pub fn save_cache(ds: &Dataset, dir: &Path, stem: &str, source: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob: Vec<f64> = ds.features.clone();
    blob.extend(ds.labels.iter().map(|&l| l as f64));
    fs::write(dir.join(format!("{stem}.bin")), crate::nn::encode_params(&blob))?;
    let side = CacheSidecar {
        name: ds.name.clone(),
        n: ds.n,
        d: ds.d,
        n_classes: ds.n_classes,
        pca_dim: ds.pca_dim,
        source: source.into(),
        layout: "features row-major (n x d) then labels (n), f64 little-endian".into(),
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

pub fn load_cache(dir: &Path, stem: &str) -> Result<Dataset> {
    let side: CacheSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)
        .map_err(|e| Error::Data(format!("cache sidecar: {e}")))?;
    let blob = crate::nn::decode_params(&fs::read(dir.join(format!("{stem}.bin")))?)?;
    if blob.len() != side.n * (side.d + 1) {
        return data(format!("cache blob has {} values, sidecar implies {}", blob.len(), side.n * (side.d + 1)));
    }
    let (features, labels) = blob.split_at(side.n * side.d);
    let labels: Vec<usize> = labels.iter().map(|&v| v as usize).collect();
    Ok(Dataset::from_flat(side.name, side.d, features.to_vec(), labels, side.n_classes, side.pca_dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(name: &str) -> DatasetConfig {
        DatasetConfig {
            name: name.into(),
            file: "x.csv".into(),
            header: false,
            label_column: -1,
            class_map: None,
            collapse_onehot: vec![],
            subset_size: None,
            subset_seed: 0,
            pca_dim: None,
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let c = cfg("t");
        assert!(matches!(parse_csv(&c, ""), Err(Error::Data(_))));
        let err = parse_csv(&c, "1,2,0\n3,x,1\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_csv(&c, "1,2,0\n3,4\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("expected 3 columns"), "{err}");
    }

    #[test]
    fn class_map_filters_and_onehot_collapses() {
        let mut c = cfg("t");
        c.class_map = Some(BTreeMap::from([("5".into(), 0), ("7".into(), 1)]));
        c.collapse_onehot = vec![[1, 4]];
        let ds = parse_csv(&c, "0.5,0,1,0,5\n0.1,1,0,0,9\n0.2,0,0,1,7\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.row(0), &[0.5, 1.0]);
        assert_eq!(ds.row(1), &[0.2, 2.0]);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn minmax_examples() {
        let ds = Dataset::new("t", vec![vec![0.0, 3.0], vec![5.0, 3.0], vec![10.0, 3.0]], vec![0, 0, 0], 1).unwrap();
        let (s, scaler) = minmax_scale(&ds);
        assert_eq!(s.features(), &[0.0, 0.5, 0.5, 0.5, 1.0, 0.5]);
        let back = scaler.inverse_row(s.row(1));
        assert!((back[0] - 5.0).abs() < 1e-12);
        // test-time values outside the train range clamp
        assert_eq!(scaler.transform_row(&[12.0, 3.0]), vec![1.0, 0.5]);
    }

    proptest! {
        #[test]
        fn minmax_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let n = rows.len();
            let ds = Dataset::new("t", rows, vec![0; n], 1).unwrap();
            let scaler = MinMaxScaler::fit(&ds).without_clamp();
            for row in ds.rows() {
                let s = scaler.transform_row(row);
                prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
                let back = scaler.inverse_row(&s);
                for (a, b) in back.iter().zip(row) {
                    // constant columns are information-free; they invert to the constant
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0) * 1e3);
                }
            }
        }
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn pca_finds_dominant_axis_and_decorrelates() {
        let mut s = 42u64;
        let axis = [0.6f64, 0.8];
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let a = lcg(&mut s) * 10.0;
                let b = lcg(&mut s) * 1.0;
                vec![a * axis[0] - b * axis[1], a * axis[1] + b * axis[0]]
            })
            .collect();
        let ds = Dataset::new("t", rows, vec![0; 400], 1).unwrap();
        let (proj, pca) = pca_reduce(&ds, 2).unwrap();
        let c0 = pca.component(0);
        assert!((c0[0] * axis[0] + c0[1] * axis[1]).abs() > 0.999);
        assert!(c0.iter().cloned().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b }) > 0.0);
        assert!(pca.explained_variance[0] >= pca.explained_variance[1]);
        let n = proj.len() as f64;
        let m: Vec<f64> = (0..2).map(|j| proj.rows().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov01: f64 = proj.rows().map(|r| (r[0] - m[0]) * (r[1] - m[1])).sum::<f64>() / (n - 1.0);
        assert!(cov01.abs() < 1e-8);
        assert!(matches!(pca_reduce(&ds, 3), Err(Error::Config(_))));
    }

    #[test]
    fn pca_exact_on_low_rank_data() {
        let mut s = 7u64;
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let (a, b) = (lcg(&mut s), lcg(&mut s));
                vec![a, b, a + b, 2.0 * a - b + 1.0]
            })
            .collect();
        let ds = Dataset::new("t", rows, vec![0; 50], 1).unwrap();
        let (_, pca) = pca_reduce(&ds, 2).unwrap();
        for row in ds.rows() {
            let back = pca.inverse_row(&pca.transform_row(row));
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kfold_examples() {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = stratified_kfold(&labels, 2, 5, 3).unwrap();
        let mut all: Vec<usize> = Vec::new();
        for f in &folds {
            let h = class_histogram(&f.test_indices.iter().map(|&i| labels[i]).collect::<Vec<_>>(), 2);
            assert_eq!(h, vec![1, 1]);
            all.extend(&f.test_indices);
        }
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(folds, stratified_kfold(&labels, 2, 5, 3).unwrap());
        assert!(matches!(stratified_kfold(&[0, 0, 1], 2, 2, 0), Err(Error::Data(_))));
    }

    #[test]
    fn partition_examples() {
        let labels: Vec<usize> = (0..150).map(|i| i % 3).collect();
        let idx: Vec<usize> = (0..150).collect();
        let one = partition_clients(&idx, &labels, 1, PartitionMode::Iid, 0).unwrap();
        assert_eq!(one.clients[0], idx);

        let iid = partition_clients(&idx, &labels, 5, PartitionMode::Iid, 0).unwrap();
        for h in iid.histograms(&labels, 3) {
            for v in h {
                assert!((v as i64 - 10).abs() <= 2);
            }
        }
        assert!(matches!(partition_clients(&idx[..3], &labels, 4, PartitionMode::Iid, 0), Err(Error::Config(_))));
    }

    #[test]
    fn dirichlet_is_more_skewed_than_iid() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let idx: Vec<usize> = (0..300).collect();
        let mut iid_tv = 0.0;
        let mut dir_tv = 0.0;
        for seed in 0..20 {
            iid_tv += partition_clients(&idx, &labels, 5, PartitionMode::Iid, seed).unwrap().mean_tv_distance(&labels, 3);
            dir_tv += partition_clients(&idx, &labels, 5, PartitionMode::Dirichlet { alpha: 0.5 }, seed)
                .unwrap()
                .mean_tv_distance(&labels, 3);
        }
        assert!(dir_tv > iid_tv + 1.0, "dirichlet {dir_tv} vs iid {iid_tv}");
        let big = partition_clients(&idx, &labels, 5, PartitionMode::Dirichlet { alpha: 1000.0 }, 1).unwrap();
        assert!(big.mean_tv_distance(&labels, 3) < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partitions_are_disjoint_covers(seed in any::<u64>(), k in 1usize..8, alpha in 0.1f64..5.0, dir in any::<bool>()) {
            let labels: Vec<usize> = (0..97).map(|i| (i * 7) % 4).collect();
            let idx: Vec<usize> = (0..97).filter(|i| i % 5 != 0).collect();
            let mode = if dir { PartitionMode::Dirichlet { alpha } } else { PartitionMode::Iid };
            let p = partition_clients(&idx, &labels, k, mode, seed).unwrap();
            let mut all: Vec<usize> = p.clients.iter().flatten().cloned().collect();
            prop_assert!(p.clients.iter().all(|c| !c.is_empty()));
            all.sort();
            prop_assert_eq!(&all, &idx);
            prop_assert_eq!(p, partition_clients(&idx, &labels, k, mode, seed).unwrap());
        }
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new("t", vec![vec![0.25, 1.0], vec![0.5, -2.0]], vec![1, 0], 2).unwrap();
        ds.pca_dim = Some(1);
        save_cache(&ds, dir.path(), "t", "unit test").unwrap();
        assert_eq!(load_cache(dir.path(), "t").unwrap(), ds);
    }
}
