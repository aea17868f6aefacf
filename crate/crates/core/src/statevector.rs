//! Dense statevector simulation.
//!
//! Qubit 0 is the least-significant bit of a basis-state index: the amplitude
//! of `|q_{n-1} ... q_1 q_0>` lives at `sum_q q_k << k`. Gates are applied in
//! place by walking amplitude pairs that differ only in the target bit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

pub const MAX_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliObservable {
    pub axis: PauliAxis,
    pub qubit: usize,
}

impl PauliObservable {
    pub fn z(qubit: usize) -> Self {
        Self { axis: PauliAxis::Z, qubit }
    }

    pub fn x(qubit: usize) -> Self {
        Self { axis: PauliAxis::X, qubit }
    }
}

/// A single gate application. Angles are in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot { control: usize, target: usize },
    Cz(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return config(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes. The length must be a power of two; the vector
    /// is renormalised so callers can pass unnormalised data.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return config(format!("amplitude count {len} is not a power of two >= 2"));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return config(format!("{n_qubits} qubits exceeds the limit of {MAX_QUBITS}"));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return config("amplitudes have zero or non-finite norm");
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Index(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return config(format!("two-qubit gate needs distinct qubits, got {a} twice"));
        }
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.ry_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_rz(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.rz_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_pair(control, target)?;
        self.cnot_unchecked(control, target);
        Ok(())
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        self.cz_unchecked(a, b);
        Ok(())
    }

    pub fn apply(&mut self, gate: Gate) -> Result<()> {
        match gate {
            Gate::Ry(q, t) => self.apply_ry(q, t),
            Gate::Rz(q, t) => self.apply_rz(q, t),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
            Gate::Cz(a, b) => self.apply_cz(a, b),
        }
    }

    pub(crate) fn ry_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let mask = 1usize << qubit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | mask];
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | mask] = a0 * s + a1 * c;
            }
        }
    }

    pub(crate) fn rz_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let lo = Complex64::new(c, -s);
        let hi = Complex64::new(c, s);
        let mask = 1usize << qubit;
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & mask == 0 { lo } else { hi };
        }
    }

    pub(crate) fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let cm = 1usize << control;
        let tm = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
    }

    pub(crate) fn cz_unchecked(&mut self, a: usize, b: usize) {
        let both = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & both == both {
                *amp = -*amp;
            }
        }
    }

    /// Exact expectation value `<psi| P_q |psi>` of a single-qubit Pauli.
    pub fn expectation(&self, obs: PauliObservable) -> Result<f64> {
        self.check_qubit(obs.qubit)?;
        Ok(self.expectation_unchecked(obs))
    }

    pub(crate) fn expectation_unchecked(&self, obs: PauliObservable) -> f64 {
        let mask = 1usize << obs.qubit;
        let value = match obs.axis {
            PauliAxis::Z => self
                .amps
                .iter()
                .enumerate()
                .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum::<f64>(),
            PauliAxis::X => (0..self.amps.len())
                .filter(|i| i & mask == 0)
                .map(|i| 2.0 * (self.amps[i].conj() * self.amps[i | mask]).re)
                .sum::<f64>(),
            PauliAxis::Y => (0..self.amps.len())
                .filter(|i| i & mask == 0)
                .map(|i| 2.0 * (self.amps[i].conj() * self.amps[i | mask]).im)
                .sum::<f64>(),
        };
        value.clamp(-1.0, 1.0)
    }
}
