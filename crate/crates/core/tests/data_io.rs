use std::path::Path;
use std::sync::Arc;

use imia_core::data::Split;
use imia_core::data::{
    load_checkpoint, load_idx, parse_idx, read_attack_table, save_checkpoint, synth_blobs, BlobConfig, CheckpointMeta,
};
use imia_core::experiment::{
    attack_samples, load_datasets, run_attack, run_figure_data, run_train, select_attack_pool, train_model,
    ExperimentConfig,
};
use imia_core::nn::{LayerSpec, Network, NetworkSpec};
use imia_core::oracle::{AccessLevel, LocalOracle};
use imia_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idx_bytes(magic: u8, dims: &[u32], body: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, magic];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(body);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_matches_byte_level_decoder(count in 1usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<u8> = (0..count * rows * cols).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..count).map(|_| rng.random_range(0..10)).collect();
        let images = idx_bytes(3, &[count as u32, rows as u32, cols as u32], &pixels);
        let label_file = idx_bytes(1, &[count as u32], &labels);
        let ds = parse_idx(&images, &label_file, Split::Train, Path::new("mem")).unwrap();
        prop_assert_eq!(ds.len(), count);
        // Reference: image i occupies bytes 16 + i*rows*cols .. ; label i at byte 8 + i.
        for i in 0..count {
            let (x, y) = &ds.samples()[i];
            prop_assert_eq!(x.shape(), &[1, rows, cols][..]);
            prop_assert_eq!(*y, usize::from(label_file[8 + i]));
            for j in 0..rows * cols {
                let raw = images[16 + i * rows * cols + j];
                prop_assert_eq!(x.data()[j], f32::from(raw) / 255.0);
            }
        }
    }

    #[test]
    fn blob_splits_are_disjoint(classes in 2usize..5, per_class in 2usize..20, dim in 1usize..6, seed in any::<u64>()) {
        let cfg = BlobConfig { classes, per_class, dim, spread: 0.2, label_noise: 0.0, seed };
        let (train, test) = synth_blobs(&cfg).unwrap();
        prop_assert_eq!(train.len() + test.len(), classes * per_class);
        for (a, _) in train.samples() {
            prop_assert!(test.samples().iter().all(|(b, _)| a != b));
        }
        prop_assert_eq!(synth_blobs(&cfg).unwrap(), (train, test));
    }
}

#[test]
fn load_idx_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    std::fs::write(&img, idx_bytes(3, &[2, 2, 2], &[0, 255, 51, 102, 1, 2, 3, 4])).unwrap();
    std::fs::write(&lab, idx_bytes(1, &[2], &[7, 3])).unwrap();
    let ds = load_idx(&img, &lab, Split::Test).unwrap();
    assert_eq!(ds.samples()[0].0.data(), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(ds.samples()[1].1, 3);
    assert_eq!(ds.num_classes(), 8);
}

fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let classes = rng.random_range(2..6);
    if rng.random_bool(0.4) {
        let (c, h, w) = (rng.random_range(1..3), rng.random_range(3..8), rng.random_range(3..8));
        let (k, s, oc) = (rng.random_range(1..4), rng.random_range(1..3), rng.random_range(1..4));
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        NetworkSpec {
            input_shape: vec![c, h, w],
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: oc,
                    kernel: k,
                    stride: s,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: oc * oh * ow,
                    outputs: classes,
                },
            ],
            num_classes: classes,
        }
    } else {
        let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..12)).collect();
        NetworkSpec::mlp(rng.random_range(1..10), &hidden, classes)
    }
}

#[test]
fn checkpoint_round_trip_on_random_architectures() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for i in 0..50 {
        let spec = random_spec(&mut rng);
        let net = Network::init(spec.clone(), rng.random()).unwrap();
        let path = dir.path().join(format!("net{i}.json"));
        save_checkpoint(&net, &CheckpointMeta::default(), &path).unwrap();
        let (loaded, manifest) = load_checkpoint(&path).unwrap();
        assert_eq!(manifest.architecture, spec);
        let len: usize = spec.input_shape.iter().product();
        let x = Tensor::new(
            spec.input_shape.clone(),
            (0..len).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let (a, b) = (net.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        assert!(
            a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()),
            "architecture {i}"
        );
    }
}

const TINY: &str = r#"{
  "dataset": {"kind": "blobs", "classes": 3, "per_class": 30, "dim": 6, "spread": 0.3, "label_noise": 0.1},
  "network": {"input_shape": [6], "layers": [
      {"kind": "dense", "inputs": 6, "outputs": 24}, {"kind": "relu"},
      {"kind": "dense", "inputs": 24, "outputs": 3}], "num_classes": 3},
  "train": {"epochs": 150, "learning_rate": 0.3, "batch_size": 4},
  "attack": {"setting": "score-based", "simba": {"basis": "pixel"}},
  "signals": ["iterations", "softmax_response"],
  "evaluation": {"n_per_side": 4, "pool_per_side": 5, "repeats": 3},
  "seed": 2
}"#;

#[test]
fn ten_sample_attack_writes_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json(TINY).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    run_train(&cfg).unwrap();
    let rows = run_attack(&cfg, None, 2).unwrap();
    assert_eq!(rows.len(), 10);
    assert_eq!(read_attack_table(dir.path().join("attacks.csv")).unwrap(), rows);
    assert_eq!(rows.iter().filter(|r| r.member).count(), 5);
    let ids: Vec<usize> = rows.iter().map(|r| r.sample_id).collect();
    assert_eq!(ids, (0..10).collect::<Vec<_>>());
}

#[test]
fn histogram_data_reflects_member_gap() {
    let mut cfg = ExperimentConfig::from_json(TINY).unwrap();
    cfg.evaluation.pool_per_side = Some(45);
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let (train, test) = load_datasets(&cfg).unwrap();
    let (net, summary, _) = train_model(&cfg, &train, &test).unwrap();
    assert!(summary.train_accuracy > summary.test_accuracy);
    let samples = select_attack_pool(&cfg, &train, &test).unwrap();
    let oracle = LocalOracle::new(Arc::new(net), AccessLevel::Scores);
    let (records, _) = attack_samples(&cfg, &oracle, None, &samples, 2).unwrap();
    imia_core::data::write_attack_table(&records, dir.path().join("attacks.csv")).unwrap();
    run_figure_data(&cfg, None).unwrap();

    // Recompute the class means from the emitted histogram file.
    let mut reader = csv::Reader::from_path(dir.path().join("histogram.csv")).unwrap();
    let (mut sums, mut counts) = ([0.0f64; 2], [0usize; 2]);
    for row in reader.records() {
        let row = row.unwrap();
        let member = usize::from(&row[2] == "true");
        sums[member] += row[1].parse::<f64>().unwrap();
        counts[member] += 1;
    }
    assert_eq!(counts, [45, 45]);
    assert!(
        sums[1] / 45.0 > sums[0] / 45.0,
        "member mean {} vs {}",
        sums[1] / 45.0,
        sums[0] / 45.0
    );
    let scatter = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 91);
}

#[test]
fn invalid_layer_spec_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let json = TINY.replace(r#""outputs": 3}], "num_classes""#, r#""outputs": 4}], "num_classes""#);
    assert!(ExperimentConfig::from_json(&json).is_err());
    assert!(!out.exists());
}
