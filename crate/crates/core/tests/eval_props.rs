use imia_core::eval::{auroc, best_threshold_accuracy, build_balanced_set, roc_points, tpr_at_fpr, LabeledSignals};
use imia_core::mia::{
    decide, signal_loss, signal_modified_entropy, signal_prediction_entropy, signal_softmax_response, MembershipSignal,
    SignalKind,
};
use imia_core::nn::softmax;
use imia_core::Tensor;
use proptest::prelude::*;

fn sets() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) * 0.25), 1..30),
        prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) * 0.25), 1..30),
    )
}

fn labeled(m: &[f64], n: &[f64]) -> LabeledSignals {
    LabeledSignals::new(m.iter().map(|v| (*v, true)).chain(n.iter().map(|v| (*v, false)))).unwrap()
}

proptest! {
    #[test]
    fn auroc_invariant_under_increasing_transform((m, n) in sets()) {
        let base = auroc(&labeled(&m, &n)).unwrap();
        let f = |v: &f64| (v * 0.7).exp() + 3.0 * v;
        let mt: Vec<f64> = m.iter().map(f).collect();
        let nt: Vec<f64> = n.iter().map(f).collect();
        prop_assert_eq!(base, auroc(&labeled(&mt, &nt)).unwrap());
    }

    #[test]
    fn auroc_swap_complements((m, n) in sets()) {
        let s = labeled(&m, &n);
        let a = auroc(&s).unwrap();
        prop_assert!((auroc(&s.swapped()).unwrap() - (1.0 - a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn roc_is_monotone_and_matches_auroc((m, n) in sets()) {
        let s = labeled(&m, &n);
        let curve = roc_points(&s).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        prop_assert!(curve.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        prop_assert!((curve.area() - auroc(&s).unwrap()).abs() <= 1e-9);
        let table = tpr_at_fpr(&curve, &[1.0]);
        prop_assert_eq!(table[0].tpr, 1.0);
    }

    #[test]
    fn balanced_accuracy_never_below_chance(pairs in prop::collection::vec((-5i32..5, -5i32..5), 1..25)) {
        let m: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let n: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        prop_assert!(best_threshold_accuracy(&labeled(&m, &n)).unwrap().accuracy >= 0.5);
    }

    #[test]
    fn balanced_sets_are_deterministic_subsets(pool in 1usize..40, take in 1usize..40, seed in any::<u64>()) {
        let members: Vec<usize> = (0..pool).collect();
        let others: Vec<usize> = (1000..1000 + pool).collect();
        let r = build_balanced_set(&members, &others, take, seed);
        if take > pool {
            prop_assert!(r.is_err());
        } else {
            let set = r.unwrap();
            prop_assert_eq!(set.members.len(), take);
            prop_assert!(set.members.iter().all(|i| members.contains(i)));
            prop_assert!(set.nonmembers.iter().all(|i| others.contains(i)));
            let mut dedup = set.members.clone();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), take);
            prop_assert_eq!(set, build_balanced_set(&members, &others, take, seed).unwrap());
        }
    }

    #[test]
    fn decide_is_monotone(v in -100.0f64..100.0, bump in 0.0f64..10.0, tau in -100.0f64..100.0) {
        for kind in [SignalKind::Iterations, SignalKind::Loss] {
            let lo = decide(MembershipSignal::new(kind, v).unwrap(), tau).unwrap();
            let hi = decide(MembershipSignal::new(kind, v + bump).unwrap(), tau).unwrap();
            match kind {
                // Higher orientation: raising the value never loses membership.
                SignalKind::Iterations => prop_assert!(!lo.is_member || hi.is_member),
                _ => prop_assert!(!hi.is_member || lo.is_member),
            }
        }
    }

    #[test]
    fn metric_signals_are_finite_and_linked(z in prop::collection::vec(-60.0f32..60.0, 2..8), pick in any::<prop::sample::Index>()) {
        let logits = Tensor::vector(z).unwrap();
        let probs = softmax(&logits).unwrap();
        let label = pick.index(probs.len());
        let loss = signal_loss(&logits, label).unwrap().value;
        let sr = signal_softmax_response(&probs).unwrap().value;
        prop_assert!(signal_prediction_entropy(&probs).unwrap().value.is_finite());
        prop_assert!(signal_modified_entropy(&probs, label).unwrap().value.is_finite());
        if probs.argmax() == label && sr > 1e-30 {
            prop_assert!((loss + sr.ln()).abs() < 1e-6 * loss.max(1.0), "loss {} sr {}", loss, sr);
        }
    }
}

#[test]
fn entropies_vanish_on_true_one_hot() {
    let p = Tensor::vector(vec![0.0, 1.0, 0.0]).unwrap();
    assert_eq!(signal_prediction_entropy(&p).unwrap().value, 0.0);
    assert!(signal_modified_entropy(&p, 1).unwrap().value.abs() < 1e-10);
}

#[test]
fn extremes_stay_finite() {
    for probs in [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]] {
        let p = Tensor::vector(probs).unwrap();
        for label in 0..2 {
            assert!(signal_modified_entropy(&p, label).unwrap().value.is_finite());
        }
        assert!(signal_prediction_entropy(&p).unwrap().value.is_finite());
    }
}
