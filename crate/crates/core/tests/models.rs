use proptest::prelude::*;
use qbypass::feature_map::Entangler;
use qbypass::models::{ArchKind, ArchitectureSpec, HeadWidths, HybridModel, Variant, MODEL_NAMES};
use qbypass::nn::Parameterized;
use qbypass::seeds;
use qbypass::Error;
use qbypass_oracle::{central_diff, rel_close};

fn wine(name: &str) -> ArchitectureSpec {
    ArchitectureSpec::named(name, 13, 3, HeadWidths::for_dataset("wine")).unwrap()
}

fn built(spec: &ArchitectureSpec, seed: u64) -> HybridModel {
    HybridModel::build(spec, &mut seeds::rng(seed, &[])).unwrap()
}

fn toy(kind: ArchKind, variant: Variant, d: usize, n_qubits: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        kind,
        variant,
        input_dim: d,
        n_classes: 3,
        n_qubits,
        n_layers: 2,
        entangler: Entangler::CzChain,
        squash: Default::default(),
        projection_dim: if kind == ArchKind::ResidualHybrid { 4 } else { 0 },
        hidden_dims: if kind == ArchKind::PureQuantum { vec![] } else { vec![5] },
        dropout: 0.1,
    }
}

#[test]
fn residual_concat_width() {
    let m = built(&wine("residual_6q"), 1);
    assert_eq!(m.projection().unwrap().in_dim(), 19);
    let multi = built(&wine("residual_multi"), 1);
    assert_eq!(multi.projection().unwrap().in_dim(), 25);
    let pq = built(&wine("pure_quantum"), 1);
    assert_eq!(pq.head().input_dim(), 6);
    assert_eq!(pq.head().layers().len(), 1);
}

#[test]
fn pure_quantum_wine_counts() {
    let m = built(&wine("pure_quantum"), 0);
    assert_eq!(m.param_count(), 57);
    assert_eq!(m.quantum().unwrap().param_count(), 36);
}

#[test]
fn built_counts_match_spec_counts() {
    for ds in ["wine", "breast_cancer", "fashion_mnist", "covtype"] {
        let (d, c) = match ds {
            "wine" => (13, 3),
            "breast_cancer" => (10, 2),
            "fashion_mnist" => (16, 3),
            _ => (12, 3),
        };
        for name in MODEL_NAMES {
            let spec = ArchitectureSpec::named(name, d, c, HeadWidths::for_dataset(ds)).unwrap();
            let m = built(&spec, 3);
            assert_eq!(m.param_count(), spec.param_count(), "{ds}/{name}");
            assert_eq!(m.flatten_params().len(), m.param_count());
        }
    }
}

#[test]
fn parameter_ordering_across_datasets() {
    for (ds, d, c) in [("wine", 13, 3), ("breast_cancer", 10, 2), ("fashion_mnist", 16, 3), ("covtype", 12, 3)] {
        let w = HeadWidths::for_dataset(ds);
        let p = |n: &str| ArchitectureSpec::named(n, d, c, w).unwrap().param_count();
        let order = [p("pure_quantum"), p("original_hybrid"), p("residual_6q"), p("classical"), p("residual_deep")];
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{ds}: {order:?}");
    }
}

#[test]
fn zeroed_quantum_block_is_classical_pipeline() {
    let mut m = built(&wine("residual_6q"), 5);
    let proj = m.projection_mut().unwrap();
    let (k, din) = (proj.out_dim(), proj.in_dim());
    for r in 0..k {
        for c in 13..din {
            proj.weights_mut()[r * din + c] = 0.0;
        }
    }
    let proj = m.projection().unwrap().clone();
    let x: Vec<f64> = (0..13).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
    let got = m.logits(&x).unwrap();
    let mut z = x.clone();
    z.extend(m.quantum_features(&x).unwrap().unwrap());
    let h = proj.forward(&z);
    // Same projection restricted to the classical columns.
    let mut h2 = vec![0.0; k];
    for r in 0..k {
        for c in 0..13 {
            h2[r] += proj.weights()[r * din + c] * x[c];
        }
    }
    for (a, b) in h.iter().zip(&h2) {
        assert!((a - b).abs() < 1e-15);
    }
    let (want, _) = m.head().forward(&h2, false, &mut seeds::rng(0, &[])).unwrap();
    assert_eq!(got, want);
}

fn fd_check(spec: &ArchitectureSpec, seed: u64, x: &[f64], label: usize, tol: f64) {
    let m = built(spec, seed);
    let (_, g) = m.loss_and_grad(&[(x, label)], false, &mut seeds::rng(0, &[])).unwrap();
    let p0 = m.flatten_params();
    let fd = central_diff(&p0, 1e-5, |p| {
        let mut mm = m.clone();
        mm.unflatten_params(p).unwrap();
        mm.sample_loss(x, label).unwrap()
    });
    for i in 0..p0.len() {
        assert!(rel_close(g[i], fd[i], tol), "param {i}: analytic {} vs fd {}", g[i], fd[i]);
    }
}

#[test]
fn toy_gradients_match_finite_differences() {
    let x = [0.2, -0.7, 0.4];
    for kind in [ArchKind::Classical, ArchKind::PureQuantum, ArchKind::OriginalHybrid, ArchKind::ResidualHybrid] {
        fd_check(&toy(kind, Variant::Base, 3, 2), 11, &x, 1, 1e-5);
    }
    fd_check(&toy(ArchKind::ResidualHybrid, Variant::MultiBasis, 3, 2), 12, &x, 2, 1e-5);
    fd_check(&toy(ArchKind::ResidualHybrid, Variant::Deep, 3, 2), 13, &x, 0, 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]
    #[test]
    fn residual_gradient_matches_fd(
        seed in 0u64..10_000,
        n_qubits in 2usize..4,
        d in 2usize..6,
        label in 0usize..3,
        x in prop::collection::vec(-1.5f64..1.5, 6),
        multi in any::<bool>(),
    ) {
        let variant = if multi { Variant::MultiBasis } else { Variant::Base };
        let spec = toy(ArchKind::ResidualHybrid, variant, d, n_qubits);
        let m = built(&spec, seed);
        let x = &x[..d];
        let (_, g) = m.loss_and_grad(&[(x, label)], false, &mut seeds::rng(0, &[])).unwrap();
        let p0 = m.flatten_params();
        let f = |p: &[f64]| {
            let mut mm = m.clone();
            mm.unflatten_params(p).unwrap();
            mm.sample_loss(x, label).unwrap()
        };
        // Skip draws sitting on a ReLU kink, where the derivative is undefined.
        let near_kink = {
            let proj = m.projection().unwrap();
            let mut z = x.to_vec();
            z.extend(m.quantum_features(x).unwrap().unwrap());
            let h = proj.forward(&z);
            let l0 = &m.head().layers()[0];
            l0.forward(&h).iter().any(|v| v.abs() < 1e-4)
        };
        prop_assume!(!near_kink);
        let fd = central_diff(&p0, 1e-5, f);
        for i in 0..p0.len() {
            prop_assert!(rel_close(g[i], fd[i], 1e-6), "param {}: {} vs {}", i, g[i], fd[i]);
        }
    }
}

#[test]
fn bypass_carries_gradient_at_quantum_stationary_point() {
    let spec = toy(ArchKind::ResidualHybrid, Variant::Base, 3, 2);
    let mut m = built(&spec, 4);
    let mut p = m.flatten_params();
    let nq = m.quantum().unwrap().param_count();
    p[..nq].iter_mut().for_each(|v| *v = 0.0);
    m.unflatten_params(&p).unwrap();
    let x = [0.0, 0.0, 0.3];
    let (_, g) = m.loss_and_grad(&[(&x, 1)], false, &mut seeds::rng(0, &[])).unwrap();
    let classical_norm: f64 = g[nq..].iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(classical_norm > 1e-6);
}

#[test]
fn deterministic_build_and_forward() {
    let spec = wine("residual_6q");
    let a = built(&spec, 9);
    let b = built(&spec, 9);
    assert_eq!(a.flatten_params(), b.flatten_params());
    let x = vec![0.5; 13];
    assert_eq!(a.logits(&x).unwrap(), b.logits(&x).unwrap());
    let (la, ga) = a.loss_and_grad(&[(&x, 2)], true, &mut seeds::rng(1, &[])).unwrap();
    let (lb, gb) = b.loss_and_grad(&[(&x, 2)], true, &mut seeds::rng(1, &[])).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ga, gb);
}

#[test]
fn ablation_keeps_quantum_block_and_reads_q_directly() {
    let m = built(&wine("residual_6q"), 2);
    let ab = m.ablate_bypass(&mut seeds::rng(3, &[])).unwrap();
    assert_eq!(ab.spec().kind, ArchKind::OriginalHybrid);
    assert!(ab.projection().is_none());
    assert_eq!(ab.quantum().unwrap().params(), m.quantum().unwrap().params());
    assert_eq!(ab.head().input_dim(), 6);
    assert_eq!(ab.head().layers()[1..], m.head().layers()[1..]);
    assert!(ab.logits(&[0.5; 13]).unwrap().iter().all(|v| v.is_finite()));
    let classical = built(&wine("classical"), 2);
    assert!(classical.ablate_bypass(&mut seeds::rng(3, &[])).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = built(&wine("residual_multi"), 21);
    m.save_checkpoint(dir.path(), "model").unwrap();
    let back = HybridModel::load_checkpoint(dir.path(), "model").unwrap();
    assert_eq!(back.flatten_params(), m.flatten_params());
    assert_eq!(back.spec(), m.spec());
    let x = vec![0.1; 13];
    assert_eq!(back.logits(&x).unwrap(), m.logits(&x).unwrap());
}

#[test]
fn empty_batch_is_usage_error() {
    let m = built(&wine("classical"), 0);
    assert!(matches!(m.loss_and_grad(&[], true, &mut seeds::rng(0, &[])), Err(Error::Usage(_))));
}

#[test]
fn wrong_width_input_rejected() {
    let m = built(&wine("residual_6q"), 0);
    assert!(matches!(m.logits(&[0.0; 12]), Err(Error::Config(_))));
}

#[test]
fn unknown_model_name_rejected() {
    assert!(ArchitectureSpec::named("resnet", 13, 3, HeadWidths::for_dataset("wine")).is_err());
}
