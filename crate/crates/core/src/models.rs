//! The model zoo: classical MLP, pure quantum (linear readout of Q(x)),
//! original hybrid (MLP on Q(x)) and the residual hybrid, which feeds
//! `[x ‖ Q(x)]` through a bias-free projection into the MLP head.
//!
//! Flat parameter order: variational angles, projection weights, head.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, usage, Error, Result};
use crate::feature_map::{EncodingSpec, Entangler, MeasurementSpec, QuantumFeatureExtractor, Squash, VariationalSpec};
use crate::nn::{self, DenseLayer, MlpCache, MlpHead, Parameterized};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Classical,
    PureQuantum,
    OriginalHybrid,
    ResidualHybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Base,
    MultiBasis,
    Deep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    #[serde(default)]
    pub variant: Variant,
    pub input_dim: usize,
    pub n_classes: usize,
    #[serde(default = "default_qubits")]
    pub n_qubits: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default)]
    pub entangler: Entangler,
    #[serde(default)]
    pub squash: Squash,
    /// Width k of the projection (residual hybrid only).
    #[serde(default)]
    pub projection_dim: usize,
    /// Hidden widths of the MLP head before any `Deep` extension.
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_qubits() -> usize {
    6
}

fn default_layers() -> usize {
    3
}

fn default_dropout() -> f64 {
    0.1
}

/// Head widths used to build parameter-matched models for one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadWidths {
    pub classical_hidden: usize,
    pub hybrid_hidden: usize,
    pub projection_dim: usize,
    pub residual_hidden: usize,
}

impl HeadWidths {
    /// Per-dataset defaults. Chosen so that parameter counts follow
    /// pure quantum < original hybrid < residual < classical < residual-deep.
    pub fn for_dataset(name: &str) -> Self {
        match name {
            "breast_cancer" => Self { classical_hidden: 28, hybrid_hidden: 26, projection_dim: 8, residual_hidden: 16 },
            _ => Self { classical_hidden: 26, hybrid_hidden: 26, projection_dim: 8, residual_hidden: 16 },
        }
    }
}

/// Registry names of the model rows used by the experiment tables.
pub const MODEL_NAMES: [&str; 7] =
    ["classical", "pure_quantum", "original_hybrid", "residual_6q", "residual_multi", "residual_8q", "residual_deep"];

impl ArchitectureSpec {
    /// Builds a named model row for a dataset shape.
    pub fn named(name: &str, input_dim: usize, n_classes: usize, widths: HeadWidths) -> Result<Self> {
        let base = Self {
            kind: ArchKind::Classical,
            variant: Variant::Base,
            input_dim,
            n_classes,
            n_qubits: 6,
            n_layers: 3,
            entangler: Entangler::CzChain,
            squash: Squash::PiTanh,
            projection_dim: 0,
            hidden_dims: vec![],
            dropout: 0.1,
        };
        let residual = Self {
            kind: ArchKind::ResidualHybrid,
            projection_dim: widths.projection_dim,
            hidden_dims: vec![widths.residual_hidden],
            ..base.clone()
        };
        let spec = match name {
            "classical" => Self { hidden_dims: vec![widths.classical_hidden], ..base },
            "pure_quantum" => Self { kind: ArchKind::PureQuantum, ..base },
            "original_hybrid" => Self { kind: ArchKind::OriginalHybrid, hidden_dims: vec![widths.hybrid_hidden], ..base },
            "residual_6q" => residual,
            "residual_multi" => Self { variant: Variant::MultiBasis, ..residual },
            "residual_8q" => Self { n_qubits: 8, ..residual },
            "residual_deep" => Self { variant: Variant::Deep, ..residual },
            other => return config(format!("unknown model '{other}' (expected one of {})", MODEL_NAMES.join(", "))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn has_quantum(&self) -> bool {
        self.kind != ArchKind::Classical
    }

    /// Number of measured observables m.
    pub fn measurement_dim(&self) -> usize {
        match (self.has_quantum(), self.variant) {
            (false, _) => 0,
            (true, Variant::MultiBasis) => 2 * self.n_qubits,
            (true, _) => self.n_qubits,
        }
    }

    /// Width of the vector entering the classifier head.
    pub fn head_input_dim(&self) -> usize {
        match self.kind {
            ArchKind::Classical => self.input_dim,
            ArchKind::PureQuantum | ArchKind::OriginalHybrid => self.measurement_dim(),
            ArchKind::ResidualHybrid => self.projection_dim,
        }
    }

    /// Full layer widths of the head, input to logits.
    pub fn head_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.head_input_dim()];
        if self.kind != ArchKind::PureQuantum {
            dims.extend_from_slice(&self.hidden_dims);
            if self.variant == Variant::Deep {
                if let Some(&last) = self.hidden_dims.last() {
                    dims.push(last);
                }
            }
        }
        dims.push(self.n_classes);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return config("input_dim must be positive");
        }
        if self.n_classes < 2 {
            return config("need at least two classes");
        }
        if self.has_quantum() && (self.n_qubits == 0 || self.n_layers == 0) {
            return config("quantum models need at least one qubit and one layer");
        }
        if self.kind == ArchKind::ResidualHybrid && self.projection_dim == 0 {
            return config("residual hybrid needs projection_dim > 0");
        }
        if matches!(self.kind, ArchKind::Classical | ArchKind::OriginalHybrid | ArchKind::ResidualHybrid) && self.hidden_dims.is_empty() {
            return config(format!("{:?} needs at least one hidden layer", self.kind));
        }
        if self.hidden_dims.contains(&0) {
            return config("hidden widths must be positive");
        }
        if self.variant == Variant::Deep && self.hidden_dims.is_empty() {
            return config("deep variant extends an existing hidden layer");
        }
        if self.variant == Variant::MultiBasis && !self.has_quantum() {
            return config("multi-basis variant needs a quantum block");
        }
        Ok(())
    }

    /// Exact parameter count this spec will build.
    pub fn param_count(&self) -> usize {
        let quantum = if self.has_quantum() { VariationalSpec::count(self.n_qubits, self.n_layers) } else { 0 };
        let projection =
            if self.kind == ArchKind::ResidualHybrid { self.projection_dim * (self.input_dim + self.measurement_dim()) } else { 0 };
        let head: usize = self.head_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        quantum + projection + head
    }

    /// Human-readable row label.
    pub fn label(&self) -> String {
        let base = match self.kind {
            ArchKind::Classical => "Classical".to_string(),
            ArchKind::PureQuantum => "Pure Quantum (a)".to_string(),
            ArchKind::OriginalHybrid => "Original Hybrid (b)".to_string(),
            ArchKind::ResidualHybrid => format!("Residual Hybrid {}q (c)", self.n_qubits),
        };
        match self.variant {
            Variant::Base => base,
            Variant::MultiBasis => format!("{base} multi-basis"),
            Variant::Deep => format!("{base} deep"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    spec: ArchitectureSpec,
    quantum: Option<QuantumFeatureExtractor>,
    projection: Option<DenseLayer>,
    head: MlpHead,
}

struct ForwardTrace {
    q: Option<Vec<f64>>,
    jac: Option<Vec<Vec<f64>>>,
    z: Option<Vec<f64>>,
    head_cache: MlpCache,
    logits: Vec<f64>,
}

impl HybridModel {
    pub fn build<R: Rng + ?Sized>(spec: &ArchitectureSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let quantum = if spec.has_quantum() {
            let enc = EncodingSpec::new(spec.n_qubits, spec.input_dim, spec.squash)?;
            let mut var = VariationalSpec::zeros(spec.n_qubits, spec.n_layers, spec.entangler);
            for p in &mut var.params {
                *p = rng.random_range(-PI..PI);
            }
            let meas = match spec.variant {
                Variant::MultiBasis => MeasurementSpec::z_and_x(spec.n_qubits),
                _ => MeasurementSpec::z_only(spec.n_qubits),
            };
            Some(QuantumFeatureExtractor::new(enc, var, meas)?)
        } else {
            None
        };
        let projection = (spec.kind == ArchKind::ResidualHybrid)
            .then(|| DenseLayer::glorot(spec.input_dim + spec.measurement_dim(), spec.projection_dim, false, rng));
        let head = MlpHead::glorot(&spec.head_dims(), spec.dropout, rng)?;
        Ok(Self { spec: spec.clone(), quantum, projection, head })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn quantum(&self) -> Option<&QuantumFeatureExtractor> {
        self.quantum.as_ref()
    }

    pub fn projection(&self) -> Option<&DenseLayer> {
        self.projection.as_ref()
    }

    pub fn projection_mut(&mut self) -> Option<&mut DenseLayer> {
        self.projection.as_mut()
    }

    pub fn head(&self) -> &MlpHead {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut MlpHead {
        &mut self.head
    }

    pub fn count_params(&self) -> usize {
        self.param_count()
    }

    fn trace<R: Rng + ?Sized>(&self, x: &[f64], train_mode: bool, with_jacobian: bool, rng: &mut R) -> Result<ForwardTrace> {
        if x.len() != self.spec.input_dim {
            return config(format!("model expects {} features, got {}", self.spec.input_dim, x.len()));
        }
        let (q, jac) = match &self.quantum {
            Some(qfe) if with_jacobian => {
                let (q, j) = qfe.forward_with_jacobian(x)?;
                (Some(q), Some(j))
            }
            Some(qfe) => (Some(qfe.forward(x)?), None),
            None => (None, None),
        };
        let (head_in, z) = match self.spec.kind {
            ArchKind::Classical => (x.to_vec(), None),
            ArchKind::PureQuantum | ArchKind::OriginalHybrid => (q.clone().expect("quantum block"), None),
            ArchKind::ResidualHybrid => {
                let mut z = x.to_vec();
                z.extend_from_slice(q.as_ref().expect("quantum block"));
                let proj = self.projection.as_ref().expect("projection layer");
                (proj.forward(&z), Some(z))
            }
        };
        let (logits, head_cache) = self.head.forward(&head_in, train_mode, rng)?;
        Ok(ForwardTrace { q, jac, z, head_cache, logits })
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], train_mode: bool, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.trace(x, train_mode, false, rng)?.logits)
    }

    /// Deterministic eval-mode logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, false, &mut seeds::rng(0, &[]))
    }

    /// Eval-mode Q(x), if the model has a quantum block.
    pub fn quantum_features(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.quantum.as_ref().map(|q| q.forward(x)).transpose()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(nn::argmax(&self.logits(x)?))
    }

    pub fn sample_loss(&self, x: &[f64], label: usize) -> Result<f64> {
        Ok(nn::softmax_cross_entropy(&self.logits(x)?, label)?.0)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(nn::softmax(&self.logits(x)?))
    }

    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Ok(0.0);
        }
        let hits: Vec<bool> =
            (0..ds.len()).into_par_iter().map(|i| Ok(self.predict(ds.row(i))? == ds.label(i))).collect::<Result<_>>()?;
        Ok(hits.iter().filter(|&&h| h).count() as f64 / ds.len() as f64)
    }

    /// Per-sample eval-mode losses, in dataset order.
    pub fn losses(&self, ds: &Dataset) -> Result<Vec<f64>> {
        (0..ds.len()).into_par_iter().map(|i| self.sample_loss(ds.row(i), ds.label(i))).collect()
    }

    pub fn mean_loss(&self, ds: &Dataset) -> Result<f64> {
        let l = self.losses(ds)?;
        Ok(l.iter().sum::<f64>() / l.len().max(1) as f64)
    }

    /// Mean cross-entropy over `batch` and its gradient for every trainable
    /// parameter. Quantum gradients chain the head's dL/dQ with the
    /// parameter-shift Jacobian.
    pub fn loss_and_grad<R: Rng + ?Sized>(&self, batch: &[(&[f64], usize)], train_mode: bool, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return usage("gradient of an empty batch");
        }
        let n_q = self.quantum.as_ref().map_or(0, |q| q.param_count());
        let n_p = self.projection.as_ref().map_or(0, |p| p.param_count());
        let mut grads = vec![0.0; self.param_count()];
        let mut total = 0.0;
        let mut proj_buf = vec![0.0; n_p];
        for &(x, label) in batch {
            let t = self.trace(x, train_mode, true, rng)?;
            let (loss, dlogits) = nn::softmax_cross_entropy(&t.logits, label)?;
            total += loss;
            let (head_g, dhead_in) = self.head.backward(&t.head_cache, &dlogits)?;
            for (g, h) in grads[n_q + n_p..].iter_mut().zip(&head_g) {
                *g += h;
            }
            let dq: Option<Vec<f64>> = match self.spec.kind {
                ArchKind::Classical => None,
                ArchKind::PureQuantum | ArchKind::OriginalHybrid => Some(dhead_in),
                ArchKind::ResidualHybrid => {
                    let proj = self.projection.as_ref().expect("projection layer");
                    let z = t.z.as_ref().expect("concatenated input");
                    let dz = proj.backward(z, &dhead_in, &mut proj_buf);
                    for (g, p) in grads[n_q..n_q + n_p].iter_mut().zip(&proj_buf) {
                        *g += p;
                    }
                    Some(dz[self.spec.input_dim..].to_vec())
                }
            };
            if let (Some(dq), Some(jac)) = (dq, t.jac.as_ref()) {
                debug_assert!(t.q.is_some());
                for (dqi, row) in dq.iter().zip(jac) {
                    for (g, j) in grads[..n_q].iter_mut().zip(row) {
                        *g += dqi * j;
                    }
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grads))
    }

    /// Drops the bypass: keeps the quantum block, removes the projection and
    /// re-dimensions the head's first layer to read Q(x) directly.
    pub fn ablate_bypass<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HybridModel> {
        if self.spec.kind != ArchKind::ResidualHybrid {
            return usage(format!("ablate_bypass needs a residual hybrid, got {:?}", self.spec.kind));
        }
        let mut spec = self.spec.clone();
        spec.kind = ArchKind::OriginalHybrid;
        spec.projection_dim = 0;
        let dims = spec.head_dims();
        let mut layers = self.head.layers().to_vec();
        layers[0] = DenseLayer::glorot(dims[0], dims[1], true, rng);
        let head = MlpHead::new(layers, self.head.dropout_rate())?;
        Ok(HybridModel { spec, quantum: self.quantum.clone(), projection: None, head })
    }

    pub fn save_checkpoint(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = toml::to_string(&self.spec).map_err(|e| Error::Data(format!("serialising architecture: {e}")))?;
        fs::write(dir.join(format!("{stem}.toml")), text)?;
        fs::write(dir.join(format!("{stem}.bin")), nn::encode_params(&self.flatten_params()))?;
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path, stem: &str) -> Result<Self> {
        let text = fs::read_to_string(dir.join(format!("{stem}.toml")))?;
        let spec: ArchitectureSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{stem}.toml: {e}")))?;
        let params = nn::decode_params(&fs::read(dir.join(format!("{stem}.bin")))?)?;
        let mut model = Self::build(&spec, &mut seeds::rng(0, &[]))?;
        model.unflatten_params(&params)?;
        Ok(model)
    }
}

impl Parameterized for HybridModel {
    fn param_count(&self) -> usize {
        self.quantum.as_ref().map_or(0, |q| q.param_count())
            + self.projection.as_ref().map_or(0, |p| p.param_count())
            + self.head.param_count()
    }

    fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        if let Some(q) = &self.quantum {
            out.extend_from_slice(q.params());
        }
        if let Some(p) = &self.projection {
            out.extend(p.flatten_params());
        }
        out.extend(self.head.flatten_params());
        out
    }

    fn unflatten_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return usage(format!("model expects {} parameters, got {}", self.param_count(), flat.len()));
        }
        let mut rest = flat;
        if let Some(q) = &mut self.quantum {
            let (mine, tail) = rest.split_at(q.param_count());
            q.params_mut().copy_from_slice(mine);
            rest = tail;
        }
        if let Some(p) = &mut self.projection {
            let (mine, tail) = rest.split_at(p.param_count());
            p.unflatten_params(mine)?;
            rest = tail;
        }
        self.head.unflatten_params(rest)
    }
}
