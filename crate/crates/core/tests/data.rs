use gcsam::data::{
    batch_indices, gen_gaussian_blobs, gen_two_moons, load_csv, minibatches, write_csv, Provenance,
    SplitSpec, Targets,
};
use gcsam::models::{evaluate, init_params, Activation, Init, LossKind, MlpOracle, MlpSpec};
use gcsam::optim::{Optimizer, OptimizerState, SgdConfig};
use gcsam::DataError;
use proptest::prelude::*;
use std::path::Path;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/three_rows.csv");

#[test]
fn fixture_file_loads() {
    let ds = load_csv(FIXTURE, "label").unwrap();
    assert_eq!(ds.data.features.shape(), &[3, 2]);
    assert_eq!(ds.data.features.data(), &[0.5, -1.25, 2.0, 3.5, -0.125, 0.0]);
    assert_eq!(ds.labels().unwrap(), &[0, 1, 0]);
    assert_eq!(ds.num_classes, Some(2));
    match &ds.provenance {
        Provenance::File { sha256, .. } => assert_eq!(sha256.len(), 64),
        other => panic!("unexpected provenance {other:?}"),
    }
}

#[test]
fn missing_label_column_lists_columns() {
    let err = load_csv(FIXTURE, "target").unwrap_err();
    match &err {
        DataError::MissingColumn { name, available } => {
            assert_eq!(name, "target");
            assert_eq!(available, &["x0", "x1", "label"]);
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("label"));
}

#[test]
fn bad_cell_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,label\n1,0\nzz,1\n").unwrap();
    match load_csv(&path, "label").unwrap_err() {
        DataError::Cell { row: 1, column: 0, .. } => {}
        other => panic!("unexpected error {other:?}"),
    }
}

fn round_trip(ds: &gcsam::data::Dataset, dir: &Path) -> gcsam::data::Dataset {
    let path = dir.join("rt.csv");
    write_csv(ds, &path, "y").unwrap();
    load_csv(&path, "y").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(n in 2usize..40, noise in 0.0f64..0.5, seed in any::<u64>()) {
        let ds = gen_two_moons(n, noise, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let back = round_trip(&ds, dir.path());
        prop_assert!(back.data.features.bitwise_eq(&ds.data.features));
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn epoch_covers_every_row_once(n in 1usize..80, b in 1usize..80, seed in any::<u64>(), shuffle in any::<bool>()) {
        let b = b.min(n);
        let batches = batch_indices(n, b, seed, shuffle).unwrap();
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        if !shuffle {
            prop_assert_eq!(&all, &(0..n).collect::<Vec<_>>());
        }
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(batches, batch_indices(n, b, seed, shuffle).unwrap());
    }

    #[test]
    fn split_is_a_partition(n in 2usize..200, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let ds = gen_two_moons(n, 0.1, 1).unwrap();
        let (train, test) = SplitSpec { test_fraction: frac, seed }.split(&ds).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert!(!train.is_empty() && !test.is_empty());
        let key = |d: &gcsam::data::Dataset| {
            let mut rows: Vec<(u64, u64)> = (0..d.len())
                .map(|i| (d.data.features.row(i)[0].to_bits(), d.data.features.row(i)[1].to_bits()))
                .collect();
            rows.sort_unstable();
            rows
        };
        // noisy points are distinct with probability one, so row multisets identify rows
        let mut joined = key(&train);
        joined.extend(key(&test));
        joined.sort_unstable();
        prop_assert_eq!(joined, key(&ds));
    }
}

#[test]
fn minibatch_sizes() {
    let ds = gen_two_moons(10, 0.0, 0).unwrap();
    let sizes: Vec<usize> = minibatches(&ds, 3, 0, true).unwrap().iter().map(|b| b.rows()).collect();
    assert_eq!(sizes, [3, 3, 3, 1]);
    let plain = minibatches(&ds, 10, 9, false).unwrap();
    assert!(plain[0].features.bitwise_eq(&ds.data.features));
    assert!(minibatches(&ds, 0, 0, true).is_err());
    assert!(minibatches(&ds, 11, 0, true).is_err());
}

#[test]
fn generators_repeat_bitwise() {
    let a = gen_two_moons(101, 0.2, 77).unwrap();
    let b = gen_two_moons(101, 0.2, 77).unwrap();
    assert!(a.data.features.bitwise_eq(&b.data.features));
    assert_eq!(a.labels(), b.labels());
    let c = gen_gaussian_blobs(50, &[vec![0.0], vec![1.0]], 0.3, 4).unwrap();
    let d = gen_gaussian_blobs(50, &[vec![0.0], vec![1.0]], 0.3, 4).unwrap();
    assert!(c.data.features.bitwise_eq(&d.data.features));
}

#[test]
fn separated_blobs_are_linearly_separable() {
    let ds = gen_gaussian_blobs(200, &[vec![-5.0, 0.0], vec![5.0, 0.0], vec![0.0, 8.0]], 0.5, 3).unwrap();
    let spec = MlpSpec {
        layer_sizes: vec![2, 3],
        activation: Activation::Relu,
        loss: LossKind::SoftmaxXent,
        init: Init::GlorotUniform,
        seed: 1,
    };
    let oracle = MlpOracle::new(spec.clone());
    let mut p = init_params(&spec).unwrap();
    let mut s = OptimizerState::new();
    let opt = Optimizer::Sgd(SgdConfig::new(0.1));
    for _ in 0..300 {
        opt.step(&mut p, &ds.data, &oracle, &mut s).unwrap();
    }
    assert_eq!(evaluate(&spec, &p, &ds).unwrap().accuracy, Some(1.0));
}

#[test]
fn regression_labels_become_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reg.csv");
    std::fs::write(&path, "x,y\n1,0.5\n2,-1\n").unwrap();
    let ds = load_csv(&path, "y").unwrap();
    assert!(matches!(ds.data.targets, Targets::Values(_)));
    assert_eq!(ds.num_classes, None);
}
