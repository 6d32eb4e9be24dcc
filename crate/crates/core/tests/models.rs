use gcsam::data::{gen_gaussian_blobs, Batch, Dataset, Provenance, Targets};
use gcsam::gradcheck::{compare_gradients, finite_diff_gradient, FiniteDiff};
use gcsam::models::{
    evaluate, init_params, loss_and_grad, pre_activations, Activation, Init, LossKind, MlpSpec,
};
use gcsam::rng::{derive_seed, seeded};
use gcsam::{ParamSet, Tensor};
use rand::Rng;

/// Random spec, parameters and batch whose pre-activations keep clear of ReLU kinks.
fn random_case(seed: u64) -> (MlpSpec, ParamSet, Batch) {
    let mut attempt = 0u64;
    loop {
        let mut rng = seeded(derive_seed(seed, &format!("case{attempt}")));
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=4)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..=5));
        }
        let spec = MlpSpec {
            layer_sizes: sizes.clone(),
            activation: if seed.is_multiple_of(2) { Activation::Relu } else { Activation::Tanh },
            loss: if (seed / 2).is_multiple_of(2) { LossKind::SoftmaxXent } else { LossKind::Mse },
            init: Init::GlorotUniform,
            seed: rng.random(),
        };
        let params = init_params(&spec).unwrap();
        let rows = rng.random_range(1..=6);
        let x: Vec<f64> = (0..rows * sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![rows, sizes[0]], x).unwrap();
        let k = *sizes.last().unwrap();
        let targets = if spec.loss == LossKind::Mse && rng.random_bool(0.5) {
            let v = (0..rows * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            Targets::Values(Tensor::new(vec![rows, k], v).unwrap())
        } else {
            Targets::Classes((0..rows).map(|_| rng.random_range(0..k)).collect())
        };
        let batch = Batch::new(x, targets).unwrap();
        let clear = pre_activations(&spec, &params, &batch.features)
            .unwrap()
            .iter()
            .all(|z| z.data().iter().all(|v| v.abs() > 1e-4));
        if spec.activation == Activation::Tanh || clear {
            return (spec, params, batch);
        }
        attempt += 1;
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..100 {
        let (spec, params, batch) = random_case(seed);
        let (_, analytic) = loss_and_grad(&spec, &params, &batch).unwrap();
        let fd = finite_diff_gradient(
            |p| Ok(loss_and_grad(&spec, p, &batch)?.0),
            &params,
            FiniteDiff::default(),
        )
        .unwrap();
        assert!(fd.nonsmooth.is_empty(), "seed {seed}: {:?}", fd.nonsmooth);
        let agree = compare_gradients(&analytic, &fd.grads, 1e-5, 1e-7);
        assert!(agree.passed, "seed {seed} {spec:?}: {agree:?}");
    }
}

#[test]
fn loss_and_grad_is_deterministic() {
    let (spec, params, batch) = random_case(7);
    let (l1, g1) = loss_and_grad(&spec, &params, &batch).unwrap();
    let (l2, g2) = loss_and_grad(&spec, &params, &batch).unwrap();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert!(g1.bitwise_eq(&g2));
}

#[test]
fn duplicated_rows_keep_mean_loss() {
    for seed in [1, 2, 3, 4] {
        let (spec, params, batch) = random_case(seed);
        let idx: Vec<usize> = (0..batch.rows()).chain(0..batch.rows()).collect();
        let doubled = batch.select(&idx);
        let (l1, g1) = loss_and_grad(&spec, &params, &batch).unwrap();
        let (l2, g2) = loss_and_grad(&spec, &params, &doubled).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * (1.0 + l1.abs()));
        assert!(g1.max_abs_diff(&g2).unwrap() <= 1e-12);
    }
}

fn linear_spec() -> MlpSpec {
    MlpSpec {
        layer_sizes: vec![1, 2],
        activation: Activation::Relu,
        loss: LossKind::SoftmaxXent,
        init: Init::GlorotUniform,
        seed: 0,
    }
}

fn dataset(x: Vec<f64>, labels: Vec<usize>) -> Dataset {
    let n = labels.len();
    let batch = Batch::new(Tensor::new(vec![n, 1], x).unwrap(), Targets::Classes(labels)).unwrap();
    Dataset::new(
        batch,
        Some(2),
        Provenance::Generator {
            name: "fixture".into(),
            params: serde_json::Value::Null,
            seed: 0,
            prng: String::new(),
        },
    )
    .unwrap()
}

#[test]
fn perfect_separator() {
    let mut p = ParamSet::new();
    p.insert("fc0.weight", Tensor::new(vec![2, 1], vec![-1.0, 1.0]).unwrap());
    p.insert("fc0.bias", Tensor::vector(vec![0.0, 0.0]));
    let ds = dataset(vec![-1.0, 1.0], vec![0, 1]);
    assert_eq!(evaluate(&linear_spec(), &p, &ds).unwrap().accuracy, Some(1.0));
}

#[test]
fn constant_predictor_on_random_labels() {
    // both logits equal: every row predicts class 0, accuracy is the class-0 share
    let mut p = ParamSet::new();
    p.insert("fc0.weight", Tensor::zeros(&[2, 1]));
    p.insert("fc0.bias", Tensor::vector(vec![0.0, 0.0]));
    let mut accs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = seeded(seed);
        let labels: Vec<usize> = (0..400).map(|_| rng.random_range(0..2)).collect();
        let share = labels.iter().filter(|&&y| y == 0).count() as f64 / 400.0;
        let ds = dataset(vec![0.5; 400], labels);
        let acc = evaluate(&linear_spec(), &p, &ds).unwrap().accuracy.unwrap();
        assert_eq!(acc, share);
        accs.push(acc);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    // standard error of the mean over 8000 fair draws is about 0.0056
    assert!((mean - 0.5).abs() < 4.0 * 0.5 / 8000f64.sqrt(), "{mean}");
}

#[test]
fn evaluate_ignores_row_order() {
    let ds = gen_gaussian_blobs(60, &[vec![0.0, 0.0], vec![2.0, 1.0], vec![-1.0, 3.0]], 0.8, 5).unwrap();
    let spec = MlpSpec {
        layer_sizes: vec![2, 6, 3],
        activation: Activation::Tanh,
        loss: LossKind::SoftmaxXent,
        init: Init::GlorotUniform,
        seed: 2,
    };
    let p = init_params(&spec).unwrap();
    let rev: Vec<usize> = (0..ds.len()).rev().collect();
    let shuffled = ds.subset(&rev, ds.provenance.clone());
    let a = evaluate(&spec, &p, &ds).unwrap();
    let b = evaluate(&spec, &p, &shuffled).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    assert!((a.mean_loss - b.mean_loss).abs() <= 1e-12);
}

#[test]
fn evaluate_rejects_empty() {
    let ds = dataset(vec![], vec![]);
    assert!(evaluate(&linear_spec(), &init_params(&linear_spec()).unwrap(), &ds).is_err());
}

#[test]
fn spec_json_is_strict() {
    let ok = r#"{"layer_sizes":[2,4,2],"activation":"relu","loss":"softmax_xent","init":"he_uniform","seed":1}"#;
    let spec: MlpSpec = serde_json::from_str(ok).unwrap();
    assert_eq!(spec.num_params(), 2 * 4 + 4 + 4 * 2 + 2);
    let bad = r#"{"layer_sizes":[2,2],"activation":"relu","loss":"mse","init":"he_uniform","seed":1,"x":0}"#;
    assert!(serde_json::from_str::<MlpSpec>(bad).is_err());
    assert_eq!(spec.fingerprint(), spec.clone().fingerprint());
    assert_eq!(spec.fingerprint(), MlpSpec { seed: 2, ..spec.clone() }.fingerprint());
    assert_ne!(spec.fingerprint(), MlpSpec { activation: Activation::Tanh, ..spec }.fingerprint());
}
