//! Quick property suites behind `gcsam-lab verify`.
//!
//! Each check recomputes its expectation by brute force and reports one
//! line. These are smaller versions of the test-suite properties, sized to
//! finish in seconds from a release build.

use std::time::Instant;

use gcsam::analysis::double_well::{survey, DoubleWell};
use gcsam::analysis::{eval_bound, orthogonal_gaussian_directions, BoundParams, Normalization, Radius};
use gcsam::centralization::{centralize_matrix, projection_idempotence_residual, GcConfig};
use gcsam::data::gen_two_moons;
use gcsam::gradcheck::{compare_gradients, finite_diff_gradient, FiniteDiff};
use gcsam::models::{init_params, loss_and_grad, Activation, Init, LossKind, MlpOracle, MlpSpec};
use gcsam::optim::{
    compute_perturbation, BaseOptimizer, CountingOracle, Optimizer, OptimizerState, SamConfig,
    SgdConfig,
};
use gcsam::rng::{derive_seed, seeded};
use gcsam::{TensorMap, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub wall_ms: f64,
}

type Check = fn() -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("gc-norm-identity", gc_norm_identity),
    ("gc-projection", gc_projection),
    ("gradient-check", gradient_check),
    ("rho-zero-reduction", rho_zero_reduction),
    ("perturbation-norm", perturbation_norm),
    ("oracle-call-count", oracle_call_count),
    ("landscape-orthogonality", landscape_orthogonality),
    ("bound-monotonicity", bound_monotonicity),
    ("double-well-shape", double_well_shape),
];

pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let r = f();
            let wall_ms = t.elapsed().as_secs_f64() * 1e3;
            match r {
                Ok(detail) => CheckResult { name, passed: true, detail, wall_ms },
                Err(detail) => CheckResult { name, passed: false, detail, wall_ms },
            }
        })
        .collect()
}

fn random_matrix(rng: &mut impl Rng, max: usize) -> Tensor {
    let r = rng.random_range(1..=max);
    let c = rng.random_range(1..=max);
    let data = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![r, c], data).expect("shape")
}

fn row_means(g: &Tensor) -> Vec<f64> {
    let (r, c) = (g.shape()[0], g.shape()[1]);
    (0..r).map(|i| g.data()[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64).collect()
}

fn gc_norm_identity() -> Result<String, String> {
    let mut rng = seeded(derive_seed(0, "verify-gc"));
    let mut worst = 0.0f64;
    for k in 0..200 {
        let g = random_matrix(&mut rng, 32);
        let (c, _) = centralize_matrix(&g, &GcConfig::default()).map_err(|e| e.to_string())?;
        let n = g.shape()[1] as f64;
        let removed: f64 = row_means(&g).iter().map(|m| n * m * m).sum();
        let expect = g.sq_norm() - removed;
        let rel = (c.sq_norm() - expect).abs() / g.sq_norm().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > 1e-10 || c.sq_norm() > g.sq_norm() {
            return Err(format!("matrix {k}: relative error {rel:e}"));
        }
    }
    Ok(format!("200 matrices, worst relative error {worst:.1e}"))
}

fn gc_projection() -> Result<String, String> {
    let mut rng = seeded(derive_seed(0, "verify-proj"));
    let (mut idem, mut mean) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let g = random_matrix(&mut rng, 32);
        let cfg = GcConfig::default();
        idem = idem.max(projection_idempotence_residual(&g, &cfg).map_err(|e| e.to_string())?);
        let (c, _) = centralize_matrix(&g, &cfg).map_err(|e| e.to_string())?;
        mean = row_means(&c).iter().fold(mean, |m, v| m.max(v.abs()));
    }
    if idem > 1e-12 || mean > 1e-12 {
        return Err(format!("idempotence {idem:e}, column mean {mean:e}"));
    }
    Ok(format!("idempotence {idem:.1e}, column mean {mean:.1e}"))
}

fn gradient_check() -> Result<String, String> {
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for seed in 0..40u64 {
        let mut rng = seeded(derive_seed(seed, "verify-mlp"));
        let spec = MlpSpec {
            layer_sizes: vec![rng.random_range(1..=3), rng.random_range(2..=4), rng.random_range(2..=3)],
            activation: if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu },
            loss: if seed % 4 < 2 { LossKind::SoftmaxXent } else { LossKind::Mse },
            init: Init::GlorotUniform,
            seed,
        };
        let params = init_params(&spec).map_err(|e| e.to_string())?;
        let rows = 4;
        let x = (0..rows * spec.layer_sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![rows, spec.layer_sizes[0]], x).map_err(|e| e.to_string())?;
        let k = spec.output_width();
        let labels = (0..rows).map(|_| rng.random_range(0..k)).collect();
        let batch = gcsam::data::Batch::new(x, gcsam::data::Targets::Classes(labels))
            .map_err(|e| e.to_string())?;
        let fd = finite_diff_gradient(
            |p| Ok(loss_and_grad(&spec, p, &batch)?.0),
            &params,
            FiniteDiff::default(),
        )
        .map_err(|e| e.to_string())?;
        if !fd.nonsmooth.is_empty() {
            continue; // ReLU kink inside the difference stencil
        }
        let (_, g) = loss_and_grad(&spec, &params, &batch).map_err(|e| e.to_string())?;
        let a = compare_gradients(&g, &fd.grads, 1e-5, 1e-7);
        worst = worst.max(a.max_rel_error);
        worst_abs = worst_abs.max(a.max_abs_error);
        if !a.passed {
            return Err(format!("seed {seed}: {a:?}"));
        }
        cases += 1;
    }
    Ok(format!("{cases} MLPs, worst abs error {worst_abs:.1e}, worst relative error {worst:.1e}"))
}

fn moons_setup() -> Result<(MlpSpec, gcsam::data::Dataset), String> {
    let ds = gen_two_moons(128, 0.2, 5).map_err(|e| e.to_string())?;
    let spec = MlpSpec {
        layer_sizes: vec![2, 8, 2],
        activation: Activation::Tanh,
        loss: LossKind::SoftmaxXent,
        init: Init::GlorotUniform,
        seed: 3,
    };
    Ok((spec, ds))
}

fn rho_zero_reduction() -> Result<String, String> {
    let (spec, ds) = moons_setup()?;
    let oracle = MlpOracle::new(spec.clone());
    let base = SgdConfig { momentum: 0.9, ..SgdConfig::new(0.05) };
    let off = SamConfig { gc: GcConfig::disabled(), ..SamConfig::new(0.0) };
    let runs = [
        Optimizer::Sgd(base),
        Optimizer::Sam { base: BaseOptimizer::Sgd(base), sam: SamConfig::plain(0.0) },
        Optimizer::Gcsam { base: BaseOptimizer::Sgd(base), sam: off },
    ];
    let mut finals = Vec::new();
    for opt in &runs {
        let mut p = init_params(&spec).map_err(|e| e.to_string())?;
        let mut st = OptimizerState::new();
        for _ in 0..50 {
            opt.step(&mut p, &ds.data, &oracle, &mut st).map_err(|e| e.to_string())?;
        }
        finals.push(p.values());
    }
    let d1 = finals[0].max_abs_diff(&finals[1]).map_err(|e| e.to_string())?;
    let d2 = finals[0].max_abs_diff(&finals[2]).map_err(|e| e.to_string())?;
    if d1 > 1e-12 || d2 > 1e-12 {
        return Err(format!("sam {d1:e}, gcsam {d2:e}"));
    }
    Ok(format!("50 steps, max deviation {:.1e}", d1.max(d2)))
}

fn perturbation_norm() -> Result<String, String> {
    let mut rng = seeded(derive_seed(0, "verify-eps"));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rho = rng.random_range(1e-3..1.0);
        let mut g = TensorMap::new();
        g.insert("w", random_matrix(&mut rng, 8));
        g.insert("b", Tensor::vector((0..3).map(|_| rng.sample(StandardNormal)).collect()));
        let p = compute_perturbation(&g, &SamConfig::plain(rho)).map_err(|e| e.to_string())?;
        let n = p.eps.iter().map(|(_, t)| t.sq_norm()).sum::<f64>().sqrt();
        worst = worst.max((n - rho).abs() / rho);
    }
    let mut zero = TensorMap::new();
    zero.insert("w", Tensor::zeros(&[3, 3]));
    let p = compute_perturbation(&zero, &SamConfig::plain(0.1)).map_err(|e| e.to_string())?;
    if worst > 1e-12 || p.eps_norm != 0.0 {
        return Err(format!("relative norm error {worst:e}, zero-gradient eps {}", p.eps_norm));
    }
    Ok(format!("100 draws, worst relative error {worst:.1e}"))
}

fn oracle_call_count() -> Result<String, String> {
    let (spec, ds) = moons_setup()?;
    let oracle = CountingOracle::new(MlpOracle::new(spec.clone()));
    let base = BaseOptimizer::Sgd(SgdConfig::new(0.05));
    for (opt, want) in [
        (Optimizer::Sgd(SgdConfig::new(0.05)), 1),
        (Optimizer::Sam { base, sam: SamConfig::plain(0.05) }, 2),
        (Optimizer::Gcsam { base, sam: SamConfig::new(0.05) }, 2),
    ] {
        let mut p = init_params(&spec).map_err(|e| e.to_string())?;
        let mut st = OptimizerState::new();
        oracle.reset();
        for _ in 0..10 {
            opt.step(&mut p, &ds.data, &oracle, &mut st).map_err(|e| e.to_string())?;
        }
        if oracle.gradient_calls() != 10 * want {
            return Err(format!("{}: {} calls in 10 steps", opt.name(), oracle.gradient_calls()));
        }
    }
    Ok("sgd 1, sam 2, gcsam 2 gradient calls per step".into())
}

fn landscape_orthogonality() -> Result<String, String> {
    let (spec, _) = moons_setup()?;
    let params = init_params(&spec).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        for norm in [Normalization::Raw, Normalization::PerLayer] {
            let d = orthogonal_gaussian_directions(&params, seed, norm).map_err(|e| e.to_string())?;
            let dot: f64 = d
                .d1
                .iter()
                .zip(d.d2.iter())
                .map(|((_, a), (_, b))| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
                .sum();
            worst = worst.max(dot.abs());
        }
    }
    if worst > 1e-10 {
        return Err(format!("inner product {worst:e}"));
    }
    Ok(format!("50 seeds x 2 modes, worst |<d1,d2>| {worst:.1e}"))
}

fn bound_monotonicity() -> Result<String, String> {
    let bp = |n| BoundParams { n, k: 100, delta: 0.05, eta: 1.0, radius: Radius::Rho(0.05), constant_term: 0.0 };
    let at = |n, w| eval_bound(0.2, w, &bp(n)).map(|e| e.value).map_err(|e| e.to_string());
    let ws = [0.0, 1.0, 10.0, 100.0];
    let by_w = ws.iter().map(|&w| at(1000, w)).collect::<Result<Vec<_>, _>>()?;
    let by_n = [500, 5000, 50000].iter().map(|&n| at(n, 10.0)).collect::<Result<Vec<_>, _>>()?;
    let hand = 0.2 + (4.0 * (1000.0f64 / 0.05).ln() / 999.0).sqrt();
    if !by_w.windows(2).all(|p| p[1] > p[0]) || !by_n.windows(2).all(|p| p[1] < p[0]) {
        return Err(format!("by w {by_w:?}, by n {by_n:?}"));
    }
    if (by_w[0] - hand).abs() > 1e-12 {
        return Err(format!("zero-weight value {} vs {hand}", by_w[0]));
    }
    Ok("increasing in |w|^2, decreasing in n, zero-weight closed form".into())
}

fn double_well_shape() -> Result<String, String> {
    let w = DoubleWell::STANDARD;
    let sv = survey(&w, 0.15, (-1.0, 2.5), 1401, (15, 48));
    let ok = (sv.depth_ratio - 1.05).abs() < 0.005
        && sv.width_ratio >= 10.0
        && sv.plain_argmin < sv.boundary
        && sv.perturbed_argmin > sv.boundary;
    let detail = format!(
        "depth ratio {:.4}, width ratio {:.1}, argmin {:.3} -> perturbed {:.3}",
        sv.depth_ratio, sv.width_ratio, sv.plain_argmin, sv.perturbed_argmin
    );
    if ok { Ok(detail) } else { Err(detail) }
}
