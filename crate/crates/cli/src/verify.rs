//! Fast self-checks against independent oracles.

use std::time::{Duration, Instant};

use qbypass::data::{Dataset, PartitionMode};
use qbypass::feature_map::{param_shift_grad, EncodingSpec, Entangler, MeasurementSpec, Squash, VariationalSpec};
use qbypass::models::{ArchKind, ArchitectureSpec, HybridModel, Variant};
use qbypass::nn::Parameterized;
use qbypass::privacy::{rank_auc, roc_curve, MembershipScore};
use qbypass::seeds::{self, stream};
use qbypass::statevector::{Gate, PauliAxis, PauliObservable, StateVector};
use qbypass::train::{run_federated, train_centralized, FedConfig, FederatedSetup, TrainConfig};
use qbypass_oracle::{central_jacobian, pauli_expectation, rel_close, run_circuit, Axis, OracleGate};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub type GateApply = dyn Fn(&mut StateVector, Gate) -> qbypass::Result<()> + Sync;

pub fn verify_suite() -> Vec<CheckResult> {
    verify_with(&|s: &mut StateVector, g| s.apply(g))
}

/// Runs every check, routing the gate-oracle check through `apply`.
pub fn verify_with(apply: &GateApply) -> Vec<CheckResult> {
    let checks: [(&'static str, Box<dyn Fn() -> Result<String, String> + '_>); 4] = [
        ("gate oracle", Box::new(|| gate_oracle(apply, 300))),
        ("parameter shift vs finite differences", Box::new(param_shift_vs_fd)),
        ("fedavg single-client equivalence", Box::new(fedavg_degenerate)),
        ("auc sanity", Box::new(auc_sanity)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let r = f();
            let elapsed = t.elapsed();
            match r {
                Ok(detail) => CheckResult { name, passed: true, detail, elapsed },
                Err(detail) => CheckResult { name, passed: false, detail, elapsed },
            }
        })
        .collect()
}

pub fn render(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{mark} {:<40} {:>8.3}s  {}\n", r.name, r.elapsed.as_secs_f64(), r.detail));
    }
    s
}

fn random_gate(rng: &mut impl Rng, n: usize) -> (Gate, OracleGate) {
    let q = rng.random_range(0..n);
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let kind = if n == 1 { rng.random_range(0..2) } else { rng.random_range(0..4) };
    match kind {
        0 => (Gate::Ry(q, theta), OracleGate::Ry(q, theta)),
        1 => (Gate::Rz(q, theta), OracleGate::Rz(q, theta)),
        k => {
            let mut t = rng.random_range(0..n - 1);
            if t >= q {
                t += 1;
            }
            if k == 2 { (Gate::Cnot { control: q, target: t }, OracleGate::Cnot(q, t)) } else { (Gate::Cz(q, t), OracleGate::Cz(q, t)) }
        }
    }
}

/// Random circuits on 1..=3 qubits against dense Kronecker-product matrices.
pub fn gate_oracle(apply: &GateApply, circuits: usize) -> Result<String, String> {
    let mut rng = seeds::rng(0x0a11, &[]);
    let mut worst = 0.0f64;
    for c in 0..circuits {
        let n = 1 + c % 3;
        let len = rng.random_range(1..12);
        let (gates, oracle): (Vec<Gate>, Vec<OracleGate>) = (0..len).map(|_| random_gate(&mut rng, n)).unzip();
        let mut sv = StateVector::zero(n).map_err(|e| e.to_string())?;
        for g in &gates {
            apply(&mut sv, *g).map_err(|e| e.to_string())?;
        }
        let want = run_circuit(n, &oracle);
        for (a, b) in sv.amplitudes().iter().zip(&want) {
            worst = worst.max((a - b).norm());
        }
        if worst > 1e-10 {
            return Err(format!("circuit {c} ({n} qubits, {gates:?}) deviates by {worst:.3e}"));
        }
        if (sv.norm() - 1.0).abs() > 1e-12 {
            return Err(format!("circuit {c} changed the norm to {}", sv.norm()));
        }
        for q in 0..n {
            for (axis, oaxis) in [(PauliAxis::X, Axis::X), (PauliAxis::Y, Axis::Y), (PauliAxis::Z, Axis::Z)] {
                let got = sv.expectation(PauliObservable { axis, qubit: q }).map_err(|e| e.to_string())?;
                let want_e = pauli_expectation(n, &want, oaxis, q);
                if (got - want_e).abs() > 1e-10 {
                    return Err(format!("circuit {c}: <{axis:?}{q}> = {got}, oracle {want_e}"));
                }
            }
        }
    }
    Ok(format!("{circuits} circuits, max amplitude error {worst:.1e}"))
}

fn param_shift_vs_fd() -> Result<String, String> {
    let mut rng = seeds::rng(0x5f1f, &[]);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let n = 1 + i % 3;
        let d = 1 + i % 5;
        let enc = EncodingSpec::new(n, d, Squash::PiTanh).map_err(|e| e.to_string())?;
        let mut var = VariationalSpec::zeros(n, 1 + i % 2, if i % 2 == 0 { Entangler::CzChain } else { Entangler::CnotChain });
        var.params.iter_mut().for_each(|p| *p = rng.random_range(-3.0..3.0));
        let meas = MeasurementSpec::z_and_x(n);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shift = param_shift_grad(&x, &enc, &var, &meas).map_err(|e| e.to_string())?;
        let fd = central_jacobian(&var.params, 1e-5, |p| {
            let v = VariationalSpec { params: p.to_vec(), ..var.clone() };
            qbypass::feature_map::quantum_forward(&x, &enc, &v, &meas).expect("valid specs")
        });
        for (rs, rf) in shift.iter().zip(&fd) {
            for (a, b) in rs.iter().zip(rf) {
                worst = worst.max((a - b).abs());
                if !rel_close(*a, *b, 1e-6) {
                    return Err(format!("instance {i}: shift {a} vs fd {b}"));
                }
            }
        }
    }
    Ok(format!("20 instances, max abs error {worst:.1e}"))
}

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = seeds::rng(seed, &[]);
    let noise = Normal::new(0.0, 0.08).expect("valid sigma");
    let centres = [[0.2, 0.3], [0.8, 0.7], [0.3, 0.8]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 3;
        rows.push(centres[c].iter().map(|m| m + noise.sample(&mut rng)).collect());
        labels.push(c);
    }
    Dataset::new("blobs", rows, labels, 3).expect("consistent blobs")
}

/// One client holding all data for one round equals plain training.
fn fedavg_degenerate() -> Result<String, String> {
    let ds = blobs(60, 3);
    let spec = ArchitectureSpec {
        kind: ArchKind::ResidualHybrid,
        variant: Variant::Base,
        input_dim: 2,
        n_classes: 3,
        n_qubits: 2,
        n_layers: 1,
        entangler: Entangler::CzChain,
        squash: Squash::PiTanh,
        projection_dim: 3,
        hidden_dims: vec![4],
        dropout: 0.1,
    };
    let fed = FedConfig { clients: 1, rounds: 1, local_epochs: 3, partition: PartitionMode::Iid, dp: None, local_test_fraction: 0.2 };
    let cfg = TrainConfig { seed: 11, patience: None, max_epochs: 3, ..TrainConfig::default() };
    let setup = FederatedSetup::new(&ds, &fed, cfg.seed).map_err(|e| e.to_string())?;
    let out = run_federated(&spec, &setup, &fed, &cfg).map_err(|e| e.to_string())?;
    let init = HybridModel::build(&spec, &mut seeds::rng(cfg.seed, &[stream::INIT])).map_err(|e| e.to_string())?;
    let (central, _) = train_centralized(&init, &setup.client_train[0], &cfg).map_err(|e| e.to_string())?;
    let (a, b) = (out.model.flatten_params(), central.flatten_params());
    if a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()) {
        Ok(format!("{} parameters bit-identical", a.len()))
    } else {
        Err("federated and centralized parameters differ".into())
    }
}

fn auc_sanity() -> Result<String, String> {
    let mk = |v: &[(f64, bool)]| -> Vec<MembershipScore> {
        v.iter().enumerate().map(|(i, &(score, is_member))| MembershipScore { sample_id: i, score, is_member }).collect()
    };
    let perfect = mk(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
    let auc = roc_curve(&perfect).map_err(|e| e.to_string())?.auc;
    if auc != 1.0 {
        return Err(format!("perfect separation gave AUC {auc}"));
    }
    let mut rng = seeds::rng(0xa0c, &[]);
    for _ in 0..50 {
        let v: Vec<(f64, bool)> =
            (0..40).map(|i| ((rng.random_range(0..10) as f64) / 10.0, i % 2 == 0 || rng.random_bool(0.3))).collect();
        let s = mk(&v);
        let trap = roc_curve(&s).map_err(|e| e.to_string())?.auc;
        let rank = rank_auc(&s).map_err(|e| e.to_string())?;
        if (trap - rank).abs() > 1e-9 {
            return Err(format!("trapezoid {trap} vs rank {rank}"));
        }
        let flipped: Vec<(f64, bool)> = v.iter().map(|&(x, m)| (-x, m)).collect();
        let inv = rank_auc(&mk(&flipped)).map_err(|e| e.to_string())?;
        if (inv - (1.0 - rank)).abs() > 1e-12 {
            return Err(format!("AUC of -s is {inv}, expected {}", 1.0 - rank));
        }
    }
    Ok("trapezoid = rank statistic, symmetric under negation".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let r = verify_suite();
        assert!(r.iter().all(|c| c.passed), "{}", render(&r));
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn corrupted_gate_is_caught() {
        let mutant = |s: &mut StateVector, g: Gate| match g {
            Gate::Ry(q, t) => s.apply(Gate::Ry(q, -t)),
            other => s.apply(other),
        };
        let r = verify_with(&mutant);
        assert!(!r[0].passed);
        assert!(r[1..].iter().all(|c| c.passed));
    }

    #[test]
    fn report_lists_timings() {
        let text = render(&verify_suite());
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.starts_with("PASS") && l.contains('s')));
    }
}
