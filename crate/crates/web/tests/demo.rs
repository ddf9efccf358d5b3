use imia_web::{dct_pixels, score_signals_json, simba_membership_json};
use serde_json::Value;

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

#[test]
fn dct_directions_are_orthonormal() {
    let dirs: Vec<Vec<f32>> = (0..16).map(|i| dct_pixels(i, 4, 8).unwrap()).collect();
    for (i, a) in dirs.iter().enumerate() {
        assert_eq!(a.len(), 64);
        for (j, b) in dirs.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot(a, b) - expected).abs() < 1e-6, "{i} {j}");
        }
    }
    assert!(dct_pixels(0, 9, 8).is_err());
}

#[test]
fn separated_signals_score_perfectly() {
    let v: Value = serde_json::from_str(&score_signals_json(&[3.0, 4.0, 5.0], &[0.0, 1.0, 2.0]).unwrap()).unwrap();
    assert_eq!(v["auroc"], 1.0);
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["threshold"], 2.5);
    let roc = v["roc"].as_array().unwrap();
    assert_eq!(roc.first().unwrap(), &serde_json::json!([0.0, 0.0]));
    assert_eq!(roc.last().unwrap(), &serde_json::json!([1.0, 1.0]));
    assert!(score_signals_json(&[1.0], &[]).is_err());
}

#[test]
fn demo_run_reports_consistent_auroc() {
    let text = simba_membership_json(150, 30, 3).unwrap();
    assert_eq!(text, simba_membership_json(150, 30, 3).unwrap());
    let v: Value = serde_json::from_str(&text).unwrap();
    let counts = |key: &str| -> Vec<f64> { v[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
    let (m, n) = (counts("member_iterations"), counts("nonmember_iterations"));
    assert_eq!((m.len(), n.len()), (30, 30));
    // Pairwise Mann-Whitney with half credit for ties.
    let wins: f64 = m
        .iter()
        .flat_map(|a| {
            n.iter().map(move |b| {
                if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                }
            })
        })
        .sum();
    assert_eq!(v["signal"]["auroc"].as_f64().unwrap(), wins / 900.0);
    assert!(v["train_accuracy"].as_f64().unwrap() > v["test_accuracy"].as_f64().unwrap());
}
