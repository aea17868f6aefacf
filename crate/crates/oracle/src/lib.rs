//! Slow, obviously-correct reference implementations.
//!
//! Everything here is built from first principles: full 2^n x 2^n matrices
//! assembled from Kronecker products, and central finite differences. It is
//! meant for checking the fast paths in `qbypass`, never for production use.
//!
//! Qubit 0 is the least-significant bit of the basis-state index, so in a
//! Kronecker product `A_{n-1} ⊗ ... ⊗ A_1 ⊗ A_0` qubit 0 is the rightmost factor.

use num_complex::Complex64;

pub type C = Complex64;

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub dim: usize,
    pub data: Vec<C>,
}

impl Dense {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn from_2x2(a: [[C; 2]; 2]) -> Self {
        Self { dim: 2, data: vec![a[0][0], a[0][1], a[1][0], a[1][1]] }
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        self.data[r * self.dim + c]
    }

    pub fn kron(&self, other: &Dense) -> Dense {
        let dim = self.dim * other.dim;
        let mut out = Dense::zeros(dim);
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                let a = self.get(r1, c1);
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        out.data[(r1 * other.dim + r2) * dim + c1 * other.dim + c2] = a * other.get(r2, c2);
                    }
                }
            }
        }
        out
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Dense) -> Dense {
        Dense {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }
}

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn pauli_x() -> Dense {
    Dense::from_2x2([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn pauli_y() -> Dense {
    Dense::from_2x2([[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]])
}

pub fn pauli_z() -> Dense {
    Dense::from_2x2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]])
}

pub fn ry(theta: f64) -> Dense {
    let (s, co) = (theta / 2.0).sin_cos();
    Dense::from_2x2([[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]])
}

pub fn rz(theta: f64) -> Dense {
    let half = theta / 2.0;
    Dense::from_2x2([
        [C::from_polar(1.0, -half), c(0.0, 0.0)],
        [c(0.0, 0.0), C::from_polar(1.0, half)],
    ])
}

fn proj0() -> Dense {
    Dense::from_2x2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]])
}

fn proj1() -> Dense {
    Dense::from_2x2([[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]])
}

/// Kronecker product of per-qubit factors; `factors[q]` acts on qubit q.
pub fn kron_qubits(factors: &[Dense]) -> Dense {
    let mut out = Dense::identity(1);
    for f in factors.iter().rev() {
        out = out.kron(f);
    }
    out
}

/// Lifts a single-qubit operator onto `target` of an `n`-qubit register.
pub fn embed_single(n: usize, target: usize, op: &Dense) -> Dense {
    let factors: Vec<Dense> = (0..n)
        .map(|q| if q == target { op.clone() } else { Dense::identity(2) })
        .collect();
    kron_qubits(&factors)
}

/// Controlled-`op` built as |0><0|_c ⊗ I + |1><1|_c ⊗ op_t.
pub fn controlled(n: usize, control: usize, target: usize, op: &Dense) -> Dense {
    let mut off: Vec<Dense> = (0..n).map(|_| Dense::identity(2)).collect();
    off[control] = proj0();
    let mut on: Vec<Dense> = (0..n).map(|_| Dense::identity(2)).collect();
    on[control] = proj1();
    on[target] = op.clone();
    kron_qubits(&off).add(&kron_qubits(&on))
}

pub fn cnot(n: usize, control: usize, target: usize) -> Dense {
    controlled(n, control, target, &pauli_x())
}

pub fn cz(n: usize, a: usize, b: usize) -> Dense {
    controlled(n, a, b, &pauli_z())
}

/// Gate description understood by the oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleGate {
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot(usize, usize),
    Cz(usize, usize),
}

pub fn gate_matrix(n: usize, gate: OracleGate) -> Dense {
    match gate {
        OracleGate::Ry(q, t) => embed_single(n, q, &ry(t)),
        OracleGate::Rz(q, t) => embed_single(n, q, &rz(t)),
        OracleGate::Cnot(a, b) => cnot(n, a, b),
        OracleGate::Cz(a, b) => cz(n, a, b),
    }
}

pub fn zero_state(n: usize) -> Vec<C> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

/// Runs a gate list on `|0...0>` by explicit matrix-vector products.
pub fn run_circuit(n: usize, gates: &[OracleGate]) -> Vec<C> {
    run_circuit_from(n, zero_state(n), gates)
}

pub fn run_circuit_from(n: usize, mut state: Vec<C>, gates: &[OracleGate]) -> Vec<C> {
    for &g in gates {
        state = gate_matrix(n, g).apply(&state);
    }
    state
}

/// <psi| O |psi> for a dense observable.
pub fn expectation(state: &[C], obs: &Dense) -> f64 {
    let o = obs.apply(state);
    state.iter().zip(&o).map(|(a, b)| a.conj() * b).sum::<C>().re
}

/// Which single-qubit Pauli to measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn pauli_expectation(n: usize, state: &[C], axis: Axis, qubit: usize) -> f64 {
    let p = match axis {
        Axis::X => pauli_x(),
        Axis::Y => pauli_y(),
        Axis::Z => pauli_z(),
    };
    expectation(state, &embed_single(n, qubit, &p))
}

/// Central finite difference of a scalar function along every coordinate.
pub fn central_diff<F>(x: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central finite-difference Jacobian of a vector function; rows are outputs.
pub fn central_jacobian<F>(x: &[f64], h: f64, mut f: F) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + h;
        let up = f(&xp);
        xp[j] = orig - h;
        let down = f(&xp);
        xp[j] = orig;
        for i in 0..m {
            jac[i][j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Plain matrix-vector product `w x + b` for row-major `w` (out x in).
pub fn affine(w: &[f64], b: Option<&[f64]>, x: &[f64], out: usize) -> Vec<f64> {
    let inp = x.len();
    (0..out)
        .map(|r| {
            let s: f64 = (0..inp).map(|c| w[r * inp + c] * x[c]).sum();
            s + b.map_or(0.0, |b| b[r])
        })
        .collect()
}

/// True if `a` and `b` agree within `tol` relative to max(1, |a|, |b|).
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
