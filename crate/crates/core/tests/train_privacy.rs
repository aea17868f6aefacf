use proptest::prelude::*;
use qbypass::data::Dataset;
use qbypass::feature_map::{Entangler, Squash};
use qbypass::models::{ArchKind, ArchitectureSpec, HybridModel, Variant};
use qbypass::nn::Parameterized;
use qbypass::privacy::{
    gradient_inversion, mia_shadow_attack, rank_auc, roc_curve, InversionConfig, MembershipScore, ShadowConfig,
};
use qbypass::seeds;
use qbypass::train::{clip_and_noise, fedavg_aggregate, local_train, train_centralized, DpConfig, TrainConfig};
use qbypass::Error;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = seeds::rng(seed, &[]);
    let noise = Normal::new(0.0, spread).unwrap();
    let centres = [[0.15, 0.2, 0.8], [0.85, 0.8, 0.2], [0.2, 0.85, 0.5]];
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for i in 0..n {
        let c = i % 3;
        rows.push(centres[c].iter().map(|m| m + noise.sample(&mut rng)).collect());
        labels.push(c);
    }
    Dataset::new("blobs", rows, labels, 3).unwrap()
}

fn classical(d: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        kind: ArchKind::Classical,
        variant: Variant::Base,
        input_dim: d,
        n_classes: 3,
        n_qubits: 0,
        n_layers: 0,
        entangler: Entangler::CzChain,
        squash: Squash::PiTanh,
        projection_dim: 0,
        hidden_dims: vec![12],
        dropout: 0.1,
    }
}

#[test]
fn zero_local_epochs_leave_params_unchanged() {
    let ds = blobs(30, 0.05, 1);
    let m = HybridModel::build(&classical(3), &mut seeds::rng(1, &[])).unwrap();
    let p = local_train(&m, &ds, 0, &TrainConfig::default(), &mut seeds::rng(2, &[])).unwrap();
    assert_eq!(p, m.flatten_params());
}

#[test]
fn separable_blobs_are_learned() {
    let ds = blobs(90, 0.04, 3);
    let m = HybridModel::build(&classical(3), &mut seeds::rng(3, &[])).unwrap();
    let cfg = TrainConfig { seed: 3, patience: None, max_epochs: 60, ..TrainConfig::default() };
    let (trained, hist) = train_centralized(&m, &ds, &cfg).unwrap();
    assert!(trained.accuracy(&ds).unwrap() >= 0.99);
    assert!(hist.train_loss.last().unwrap() < &hist.train_loss[0]);
}

#[test]
fn dp_noise_has_configured_scale() {
    let sigma = DpConfig::new(2.0).sigma();
    let out = clip_and_noise(&vec![0.0; 40_000], 1.0, sigma, &mut seeds::rng(9, &[]));
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.02, "sd {sd} vs sigma {sigma}");
    assert!(mean.abs() < 4.0 * sigma / 200.0);
}

#[test]
fn inversion_of_zero_gradient_is_an_attack_error() {
    let m = HybridModel::build(&classical(3), &mut seeds::rng(4, &[])).unwrap();
    let g = vec![0.0; m.param_count()];
    let r = gradient_inversion(&m, &g, 0, &[0.5; 3], &InversionConfig::default(), &mut seeds::rng(0, &[]));
    assert!(matches!(r, Err(Error::Attack(_))));
}

#[test]
fn shadow_attack_on_untrained_target_is_near_chance() {
    let arch = classical(3);
    let pool = blobs(120, 0.2, 5);
    let members = blobs(60, 0.2, 6);
    let non_members = blobs(60, 0.2, 7);
    let target = HybridModel::build(&arch, &mut seeds::rng(8, &[])).unwrap();
    let cfg = TrainConfig { patience: None, max_epochs: 5, ..TrainConfig::default() };
    let shadow = ShadowConfig { n_shadows: 2, ..ShadowConfig::default() };
    let roc = mia_shadow_attack(&arch, &pool, &shadow, &cfg, &target, &members, &non_members, 5).unwrap();
    assert!((0.35..=0.65).contains(&roc.auc), "{}", roc.auc);
}

fn scores(v: &[(i32, bool)]) -> Vec<MembershipScore> {
    v.iter().enumerate().map(|(i, &(s, m))| MembershipScore { sample_id: i, score: s as f64, is_member: m }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fedavg_is_order_invariant_and_bounded(
        clients in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 6), 1usize..50), 1..6),
        rot in 0usize..6,
    ) {
        let avg = fedavg_aggregate(&clients).unwrap();
        let mut shuffled = clients.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        let avg2 = fedavg_aggregate(&shuffled).unwrap();
        for j in 0..6 {
            prop_assert!((avg[j] - avg2[j]).abs() < 1e-12);
            let lo = clients.iter().map(|c| c.0[j]).fold(f64::INFINITY, f64::min);
            let hi = clients.iter().map(|c| c.0[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg[j] >= lo - 1e-12 && avg[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn fedavg_of_identical_clients_is_identity(p in prop::collection::vec(-5.0f64..5.0, 1..10), k in 1usize..6) {
        let clients: Vec<_> = (0..k).map(|i| (p.clone(), i + 1)).collect();
        let avg = fedavg_aggregate(&clients).unwrap();
        for (a, b) in avg.iter().zip(&p) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn clipping_bounds_the_norm(delta in prop::collection::vec(-10.0f64..10.0, 1..20), clip in 0.1f64..5.0) {
        let out = clip_and_noise(&delta, clip, 0.0, &mut seeds::rng(0, &[]));
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        let orig = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= clip * (1.0 + 1e-12));
        if orig <= clip {
            prop_assert_eq!(out, delta);
        }
    }

    #[test]
    fn auc_properties(v in prop::collection::vec((0i32..8, any::<bool>()), 2..60)) {
        prop_assume!(v.iter().any(|x| x.1) && v.iter().any(|x| !x.1));
        let s = scores(&v);
        let roc = roc_curve(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc.auc));
        prop_assert!((roc.auc - rank_auc(&s).unwrap()).abs() < 1e-12);
        // A strictly increasing transform of the scores leaves the AUC unchanged.
        let t: Vec<(i32, bool)> = v.iter().map(|&(x, m)| (3 * x + 7, m)).collect();
        prop_assert!((rank_auc(&scores(&t)).unwrap() - roc.auc).abs() < 1e-12);
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        prop_assert_eq!((first.0, first.1), (0.0, 0.0));
        prop_assert_eq!((last.0, last.1), (1.0, 1.0));
    }
}

#[test]
fn noise_draws_differ_between_streams() {
    let a: f64 = seeds::rng(1, &[seeds::stream::DP_NOISE, 0, 0]).random();
    let b: f64 = seeds::rng(1, &[seeds::stream::DP_NOISE, 1, 0]).random();
    assert_ne!(a, b);
}
