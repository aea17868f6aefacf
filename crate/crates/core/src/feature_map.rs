//! Quantum feature map: angle encoding, a layered Ry/Rz variational circuit
//! and Pauli expectation readout, plus exact parameter-shift Jacobians.
//!
//! When the input has more features than there are qubits, the features are
//! loaded in chunks of `n_qubits`; each chunk is an Ry sub-layer followed by
//! the CNOT chain, so every feature reaches the circuit through exactly one
//! Ry gate.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{config, data, Result};
use crate::statevector::{PauliObservable, StateVector, MAX_QUBITS};

/// How raw features are turned into rotation angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Squash {
    /// `pi * tanh(x)`.
    #[default]
    PiTanh,
    /// Affine map of `[0, 1]` onto `[-pi, pi]`, clamped outside.
    MinMaxToPi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Entangler {
    #[default]
    CzChain,
    CnotChain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub n_qubits: usize,
    pub input_dim: usize,
    pub squash: Squash,
}

impl EncodingSpec {
    pub fn new(n_qubits: usize, input_dim: usize, squash: Squash) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return config(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"));
        }
        if input_dim == 0 {
            return config("input_dim must be at least 1");
        }
        Ok(Self { n_qubits, input_dim, squash })
    }

    /// Number of Ry sub-layers needed to load every feature.
    pub fn n_chunks(&self) -> usize {
        self.input_dim.div_ceil(self.n_qubits)
    }

    pub fn squash_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return config(format!("expected {} input features, got {}", self.input_dim, x.len()));
        }
        if let Some(i) = x.iter().position(|v| v.is_nan()) {
            return data(format!("input feature {i} is NaN"));
        }
        Ok(x.iter().map(|&v| self.squash_one(v)).collect())
    }

    fn squash_one(&self, v: f64) -> f64 {
        match self.squash {
            Squash::PiTanh => PI * v.tanh(),
            Squash::MinMaxToPi => (PI * (2.0 * v - 1.0)).clamp(-PI, PI),
        }
    }

    /// d(angle_i)/d(x_i).
    pub fn squash_derivative(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| match self.squash {
                Squash::PiTanh => {
                    let t = v.tanh();
                    PI * (1.0 - t * t)
                }
                Squash::MinMaxToPi => {
                    if (0.0..=1.0).contains(&v) {
                        2.0 * PI
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }

    /// Applies the encoding unitary for already-squashed `angles`.
    pub fn encode(&self, state: &mut StateVector, angles: &[f64]) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return config(format!("state has {} qubits, encoder expects {}", state.n_qubits(), self.n_qubits));
        }
        if angles.len() != self.input_dim {
            return config(format!("expected {} angles, got {}", self.input_dim, angles.len()));
        }
        let n = self.n_qubits;
        for chunk in angles.chunks(n) {
            for (q, &theta) in chunk.iter().enumerate() {
                state.ry_unchecked(q, theta);
            }
            for j in 0..n.saturating_sub(1) {
                state.cnot_unchecked(j, j + 1);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler: Entangler,
    /// Layout: for each layer, `n_qubits` Ry angles then `n_qubits` Rz angles.
    pub params: Vec<f64>,
}

impl VariationalSpec {
    pub fn zeros(n_qubits: usize, n_layers: usize, entangler: Entangler) -> Self {
        Self { n_qubits, n_layers, entangler, params: vec![0.0; Self::count(n_qubits, n_layers)] }
    }

    pub fn count(n_qubits: usize, n_layers: usize) -> usize {
        n_layers * n_qubits * 2
    }

    pub fn param_count(&self) -> usize {
        Self::count(self.n_qubits, self.n_layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.param_count() {
            return config(format!(
                "variational circuit needs {} parameters ({} layers x {} qubits x 2), got {}",
                self.param_count(),
                self.n_layers,
                self.n_qubits,
                self.params.len()
            ));
        }
        Ok(())
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        self.validate()?;
        if state.n_qubits() != self.n_qubits {
            return config(format!("state has {} qubits, circuit expects {}", state.n_qubits(), self.n_qubits));
        }
        self.apply_with(state, &self.params);
        Ok(())
    }

    fn apply_with(&self, state: &mut StateVector, params: &[f64]) {
        let n = self.n_qubits;
        for layer in params.chunks(2 * n) {
            for q in 0..n {
                state.ry_unchecked(q, layer[q]);
                state.rz_unchecked(q, layer[n + q]);
            }
            for j in 0..n.saturating_sub(1) {
                match self.entangler {
                    Entangler::CzChain => state.cz_unchecked(j, j + 1),
                    Entangler::CnotChain => state.cnot_unchecked(j, j + 1),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub observables: Vec<PauliObservable>,
}

impl MeasurementSpec {
    /// Z on every qubit.
    pub fn z_only(n_qubits: usize) -> Self {
        Self { observables: (0..n_qubits).map(PauliObservable::z).collect() }
    }

    /// Z on every qubit followed by X on every qubit.
    pub fn z_and_x(n_qubits: usize) -> Self {
        let mut observables: Vec<_> = (0..n_qubits).map(PauliObservable::z).collect();
        observables.extend((0..n_qubits).map(PauliObservable::x));
        Self { observables }
    }

    pub fn dim(&self) -> usize {
        self.observables.len()
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.observables.is_empty() {
            return config("measurement needs at least one observable");
        }
        if let Some(o) = self.observables.iter().find(|o| o.qubit >= n_qubits) {
            return config(format!("observable on qubit {} but circuit has {n_qubits} qubits", o.qubit));
        }
        Ok(())
    }

    fn read(&self, state: &StateVector) -> Vec<f64> {
        self.observables.iter().map(|&o| state.expectation_unchecked(o)).collect()
    }
}

fn check_specs(enc: &EncodingSpec, var: &VariationalSpec, meas: &MeasurementSpec) -> Result<()> {
    if enc.n_qubits != var.n_qubits {
        return config(format!("encoder uses {} qubits, circuit uses {}", enc.n_qubits, var.n_qubits));
    }
    var.validate()?;
    meas.validate(enc.n_qubits)
}

fn encoded_state(x: &[f64], enc: &EncodingSpec) -> Result<StateVector> {
    let angles = enc.squash_input(x)?;
    let mut state = StateVector::zero(enc.n_qubits)?;
    enc.encode(&mut state, &angles)?;
    Ok(state)
}

fn readout_from(encoded: &StateVector, var: &VariationalSpec, params: &[f64], meas: &MeasurementSpec) -> Vec<f64> {
    let mut s = encoded.clone();
    var.apply_with(&mut s, params);
    meas.read(&s)
}

/// Q(x): expectation values of the measured observables after encoding and
/// the variational circuit.
pub fn quantum_forward(x: &[f64], enc: &EncodingSpec, var: &VariationalSpec, meas: &MeasurementSpec) -> Result<Vec<f64>> {
    check_specs(enc, var, meas)?;
    let encoded = encoded_state(x, enc)?;
    Ok(readout_from(&encoded, var, &var.params, meas))
}

/// dQ/dphi by the two-term parameter-shift rule; rows are observables.
pub fn param_shift_grad(
    x: &[f64],
    enc: &EncodingSpec,
    var: &VariationalSpec,
    meas: &MeasurementSpec,
) -> Result<Vec<Vec<f64>>> {
    check_specs(enc, var, meas)?;
    let encoded = encoded_state(x, enc)?;
    Ok(param_jacobian_from(&encoded, var, meas))
}

fn param_jacobian_from(encoded: &StateVector, var: &VariationalSpec, meas: &MeasurementSpec) -> Vec<Vec<f64>> {
    let p = var.params.len();
    let mut jac = vec![vec![0.0; p]; meas.dim()];
    let mut shifted = var.params.clone();
    for j in 0..p {
        let orig = shifted[j];
        shifted[j] = orig + FRAC_PI_2;
        let plus = readout_from(encoded, var, &shifted, meas);
        shifted[j] = orig - FRAC_PI_2;
        let minus = readout_from(encoded, var, &shifted, meas);
        shifted[j] = orig;
        for (row, (a, b)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
            row[j] = 0.5 * (a - b);
        }
    }
    jac
}

/// dQ/dx: parameter shift on each encoding Ry angle, chained through the
/// squashing derivative.
pub fn input_grad(x: &[f64], enc: &EncodingSpec, var: &VariationalSpec, meas: &MeasurementSpec) -> Result<Vec<Vec<f64>>> {
    check_specs(enc, var, meas)?;
    let angles = enc.squash_input(x)?;
    let dsquash = enc.squash_derivative(x);
    let mut jac = vec![vec![0.0; x.len()]; meas.dim()];
    let mut shifted = angles.clone();
    let run = |a: &[f64]| -> Result<Vec<f64>> {
        let mut s = StateVector::zero(enc.n_qubits)?;
        enc.encode(&mut s, a)?;
        var.apply_with(&mut s, &var.params);
        Ok(meas.read(&s))
    };
    for i in 0..x.len() {
        if dsquash[i] == 0.0 {
            continue;
        }
        let orig = shifted[i];
        shifted[i] = orig + FRAC_PI_2;
        let plus = run(&shifted)?;
        shifted[i] = orig - FRAC_PI_2;
        let minus = run(&shifted)?;
        shifted[i] = orig;
        for (row, (a, b)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
            row[i] = 0.5 * (a - b) * dsquash[i];
        }
    }
    Ok(jac)
}

/// The three specs bundled together; owns the trainable angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumFeatureExtractor {
    pub encoding: EncodingSpec,
    pub variational: VariationalSpec,
    pub measurement: MeasurementSpec,
}

impl QuantumFeatureExtractor {
    pub fn new(encoding: EncodingSpec, variational: VariationalSpec, measurement: MeasurementSpec) -> Result<Self> {
        check_specs(&encoding, &variational, &measurement)?;
        Ok(Self { encoding, variational, measurement })
    }

    pub fn output_dim(&self) -> usize {
        self.measurement.dim()
    }

    pub fn param_count(&self) -> usize {
        self.variational.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.variational.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.variational.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let encoded = encoded_state(x, &self.encoding)?;
        Ok(readout_from(&encoded, &self.variational, &self.variational.params, &self.measurement))
    }

    /// Q(x) and dQ/dphi sharing one encoding pass.
    pub fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let encoded = encoded_state(x, &self.encoding)?;
        let q = readout_from(&encoded, &self.variational, &self.variational.params, &self.measurement);
        let jac = param_jacobian_from(&encoded, &self.variational, &self.measurement);
        Ok((q, jac))
    }

    pub fn input_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        input_grad(x, &self.encoding, &self.variational, &self.measurement)
    }
}
