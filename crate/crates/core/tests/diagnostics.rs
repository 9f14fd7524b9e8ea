use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsdscope::data::Batch;
use wsdscope::diag::{
    curvature_alignment, hvp_f64, interpolate_loss, phase_directions, sharpness, trajectory_pca,
    SharpnessOptions,
};
use wsdscope::math::ParamVector;
use wsdscope::models::toy::Quadratic;
use wsdscope::models::{build_model, loss_f64, Model, ModelSpec};
use wsdscope::optim::ScheduleSpec;

/// A 26-parameter ReLU MLP on eight random examples.
fn small_problem(seed: u64) -> (Model, Batch, ParamVector) {
    let model = build_model(&ModelSpec::mlp(vec![3, 4, 2], seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<f32> = (0..8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<u32> = (0..8).map(|_| rng.random_range(0..2)).collect();
    let batch = Batch::new(inputs, labels, vec![3]).unwrap();
    let params = model.init_params(seed);
    (model, batch, params)
}

/// Dense Hessian from second differences of the loss alone.
fn dense_hessian(model: &Model, x: &[f64], batch: &Batch) -> DMatrix<f64> {
    let d = x.len();
    let h = 1e-4;
    let f = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut y = x.to_vec();
        y[di] += si * h;
        y[dj] += sj * h;
        loss_f64(model, &y, batch).unwrap()
    };
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (f(i, 1.0, j, 1.0) - f(i, 1.0, j, -1.0) - f(i, -1.0, j, 1.0)
                + f(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[test]
fn hvp_matches_dense_hessian() {
    for seed in 0..4 {
        let (model, batch, params) = small_problem(seed);
        let x = params.to_f64();
        let hess = dense_hessian(&model, &x, &batch);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for _ in 0..3 {
            let v: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = &hess * DMatrix::from_column_slice(v.len(), 1, &v);
            let got = hvp_f64(&model, &x, &batch, &v).unwrap();
            let err = got
                .iter()
                .zip(want.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-5 * want.norm(), "seed {seed}: {err} vs {}", want.norm());
        }
    }
}

#[test]
fn sharpness_matches_dense_eigenvalue() {
    for seed in 0..4 {
        let (model, batch, params) = small_problem(seed);
        let hess = dense_hessian(&model, &params.to_f64(), &batch);
        let eig = SymmetricEigen::new(hess);
        let dominant = eig
            .eigenvalues
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        let opts = SharpnessOptions {
            tol: 1e-9,
            max_iter: 20_000,
        };
        let s = sharpness(&model, &params, &batch, opts, seed).unwrap();
        assert!(s.converged, "seed {seed}: {} after {}", s.lambda_max, s.iters);
        assert_eq!(s.negative, dominant < 0.0);
        assert!(
            (s.lambda_max - dominant).abs() <= 1e-5 * dominant.abs(),
            "seed {seed}: {} vs {dominant}",
            s.lambda_max
        );
    }
}

#[test]
fn alignment_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2usize, 5, 8] {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &b + b.transpose();
        let quad = Quadratic::new(a.as_slice().to_vec(), n).unwrap();
        let x = ParamVector::from_f64(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = curvature_alignment(&quad, &x, &Batch::unit(), &v).unwrap();
        let u = DMatrix::from_column_slice(n, 1, &v).normalize();
        let want = (&a * u).norm();
        assert!((got - want).abs() <= 1e-3 * want, "n={n}: {got} vs {want}");
    }
}

#[test]
fn interpolation_endpoints_are_checkpoint_losses() {
    let (model, batch, a) = small_problem(1);
    let b = model.init_params(2);
    let curve = interpolate_loss(&model, &a, &b, 5, &batch).unwrap();
    assert_eq!(curve.len(), 5);
    let la = loss_f64(&model, &a.to_f64(), &batch).unwrap();
    let lb = loss_f64(&model, &b.to_f64(), &batch).unwrap();
    assert!((curve[0].loss - la).abs() < 1e-12);
    assert!((curve[4].loss - lb).abs() < 1e-12);
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    unit(a).iter().zip(unit(b)).map(|(x, y)| x * y).sum::<f64>().abs()
}

/// Checkpoints drifting along `a` until the decay start, then along `b`,
/// with a little isotropic jitter.
fn two_phase_trajectory(schedule: &ScheduleSpec, a: &[f64], b: &[f64]) -> Vec<(u64, ParamVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tc = schedule.decay_start;
    (0..=schedule.total)
        .step_by(5)
        .map(|t| {
            let s = t.min(tc) as f64 * 0.05;
            let c = t.saturating_sub(tc) as f64 * 0.03;
            let x: Vec<f64> = (0..a.len())
                .map(|i| 1.0 + s * a[i] + c * b[i] + 1e-4 * rng.random_range(-1.0..1.0))
                .collect();
            (t, ParamVector::from_f64(&x))
        })
        .collect()
}

#[test]
fn phase_directions_recover_drift() {
    let d = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let schedule = ScheduleSpec::wsd(10, 110, 160, 0.01).unwrap();
    let points = two_phase_trajectory(&schedule, &a, &b);

    let dirs = phase_directions(&points, &schedule, 0.2).unwrap();
    assert!(abs_cos(&dirs.v_s, &a) > 0.999, "{}", abs_cos(&dirs.v_s, &a));
    assert!(abs_cos(&dirs.v_d, &b) > 0.999, "{}", abs_cos(&dirs.v_d, &b));

    // one dominant component per phase
    let stable: Vec<ParamVector> = points
        .iter()
        .filter(|(t, _)| (10..=110).contains(t))
        .map(|(_, p)| p.clone())
        .collect();
    let pca = trajectory_pca(&stable, 3).unwrap();
    assert!(pca.ratios[0] > 0.99, "{:?}", pca.ratios);
    assert!(pca.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
}
