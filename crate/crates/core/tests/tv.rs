mod common;

use common::*;
use eit_oed::bayes::{noise_std, NoiseModel};
use eit_oed::forward::{current_basis, measurement_map, stiffness_matrix};
use eit_oed::linalg::SymmetricSparse;
use eit_oed::model::HeadModel;
use eit_oed::tv::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interior_dense(model: &HeadModel, op: &TvOperator, full: &SymmetricSparse) -> DMatrix<f64> {
    let _ = model;
    let d = full.to_dense();
    d.select_rows(op.interior()).select_columns(op.interior())
}

fn smooth_kappa(op: &TvOperator, scale: f64) -> DVector<f64> {
    let nodes = op.model().mesh().nodes();
    DVector::from_iterator(
        op.dim(),
        op.interior().iter().map(|&i| scale * (2.0 + 10.0 * nodes[i].x + 20.0 * nodes[i].y + 5.0 * nodes[i].z)),
    )
}

/// Sparse symmetric matrix from a dense one.
fn sparse(a: &DMatrix<f64>) -> SymmetricSparse {
    let n = a.nrows();
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for i in 0..n {
        for j in 0..n {
            r.push(i);
            c.push(j);
            v.push(a[(i, j)]);
        }
    }
    SymmetricSparse::from_triplets(n, &r, &c, &v)
}

#[test]
fn theta_at_zero_is_weighted_stiffness_over_smoothing() {
    let model = desk_model();
    let params = TvParams::default();
    let op = TvOperator::new(&model, &params).unwrap();
    let theta = op.theta_matrix(&DVector::zeros(op.dim())).to_dense();
    let k = interior_dense(&model, &op, &stiffness_matrix(&model, op.upsilon())) / params.smoothing;
    assert!(rel_frobenius(&theta, &k) <= 1e-12);
    let ev = theta.symmetric_eigenvalues();
    assert!(ev.min() > 0.0, "{}", ev.min());
}

#[test]
fn theta_shrinks_with_steeper_perturbations() {
    let model = desk_model();
    let op = TvOperator::new(&model, &TvParams::default()).unwrap();
    let mats: Vec<DMatrix<f64>> = [1.0, 10.0, 100.0].iter().map(|&c| op.theta_matrix(&smooth_kappa(&op, c)).to_dense()).collect();
    for w in mats.windows(2) {
        assert!(w[1].amax() < w[0].amax());
        for i in 0..op.dim() {
            assert!(w[1][(i, i)] < w[0][(i, i)]);
        }
    }
    assert!(mats[2].amax() < 0.02 * mats[0].amax());
}

#[test]
fn contact_update_is_a_least_squares_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, n, m) = (40, 25, 6);
    let bs = random::matrix(&mut rng, rows, n);
    let bz = random::matrix(&mut rng, rows, m);
    let kappa = random::vector(&mut rng, n);
    let xi = xi_update(&bs, &bz, &(&bs * &kappa), &kappa).unwrap();
    assert!(xi.amax() <= 1e-12);
    let target = random::vector(&mut rng, m);
    let y = &bz * &target;
    let xi = xi_update(&bs, &bz, &y, &DVector::zeros(n)).unwrap();
    assert!((&bz * &xi - &y).amax() <= 1e-10 * y.amax());
    let y = random::vector(&mut rng, rows);
    let xi = xi_update(&bs, &bz, &y, &kappa).unwrap();
    let normal = bz.transpose() * (&y - &bs * &kappa - &bz * &xi);
    assert!(normal.amax() <= 1e-10);
    let q = projection(&bz).unwrap();
    // the projected residual equals the full residual at the optimal ξ
    let r1 = &q * (&y - &bs * &kappa);
    let r2 = &y - &bs * &kappa - &bz * &xi;
    assert!((r1 - r2).amax() <= 1e-10);
}

#[test]
fn lagged_step_solves_the_normal_equations() {
    let model = desk_model();
    let params = TvParams::default();
    let op = TvOperator::new(&model, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random::matrix(&mut rng, 132, op.dim());
    let b = random::vector(&mut rng, 132);
    let kappa = smooth_kappa(&op, 1e-3);
    let theta = op.theta_matrix(&kappa);
    let gamma = 10.0;
    let next = ld_step(&theta, &a, &b, gamma).unwrap();
    let lhs = a.transpose() * (&a * &next) + theta.mul_vec(&next) * gamma;
    let rhs = a.transpose() * &b;
    assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
    assert_eq!(ld_step(&theta, &a, &DVector::zeros(132), gamma).unwrap(), DVector::zeros(op.dim()));
}

#[test]
fn first_step_is_the_tikhonov_solution() {
    let model = tiny_model();
    let op = TvOperator::new(&model, &TvParams::default()).unwrap();
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = random::matrix(&mut rng, 60, n);
    let b = random::vector(&mut rng, 60);
    let gamma = 1e-6;
    let theta = op.theta_matrix(&DVector::zeros(n));
    let dense = a.transpose() * &a + theta.to_dense() * gamma;
    let expected = dense.cholesky().unwrap().solve(&(a.transpose() * &b));
    let got = ld_step(&theta, &a, &b, gamma).unwrap();
    assert!((&got - &expected).norm() <= 1e-8 * expected.norm());
}

#[test]
fn fixed_point_of_the_lagged_iteration() {
    // b = A κ* + c with A^T c = γ Θ(κ*) κ* makes κ* a normal-form solution
    let model = tiny_model();
    let op = TvOperator::new(&model, &TvParams::default()).unwrap();
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = random::matrix(&mut rng, 132, n);
    let kappa = smooth_kappa(&op, 1e-2);
    let theta = op.theta_matrix(&kappa);
    let gamma = 1e-4;
    let v = theta.mul_vec(&kappa) * gamma;
    let c = &a * (a.transpose() * &a).cholesky().unwrap().solve(&v);
    let b = &a * &kappa + c;
    let next = ld_step(&theta, &a, &b, gamma).unwrap();
    assert!((&next - &kappa).norm() <= 1e-8 * kappa.norm());
    // the step is the information-form mean of the lagged Gaussian
    let cov = ld_covariance(&theta, &a, gamma).unwrap();
    let mean = &cov * (a.transpose() * &b);
    assert!((&mean - &next).norm() <= 1e-8 * next.norm());
}

#[test]
fn lagged_covariance_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 50;
        let theta = sparse(&random::spd(&mut rng, n));
        let rows = rng.gen_range(5..40);
        let a = random::matrix(&mut rng, rows, n);
        let gamma = rng.gen_range(0.1..10.0);
        let cov = ld_covariance(&theta, &a, gamma).unwrap();
        let dense = (a.transpose() * &a + theta.to_dense() * gamma).try_inverse().unwrap();
        worst = worst.max(rel_frobenius(&cov, &dense));
        let b = random::vector(&mut rng, rows);
        let step = ld_step(&theta, &a, &b, gamma).unwrap();
        let mean = &dense * (a.transpose() * &b);
        worst = worst.max((&step - &mean).norm() / mean.norm());
    }
    assert!(worst <= 1e-8, "{worst:e}");

    let theta = sparse(&random::spd(&mut rng, 10));
    let no_data = ld_covariance(&theta, &DMatrix::zeros(3, 10), 2.0).unwrap();
    let expected = (theta.to_dense() * 2.0).try_inverse().unwrap();
    assert!(rel_frobenius(&no_data, &expected) <= 1e-12);
    let with_data = ld_covariance(&theta, &random::matrix(&mut rng, 3, 10), 2.0).unwrap();
    assert!(with_data.trace() <= no_data.trace());
}

#[test]
fn tikhonov_value_pieces() {
    let model = desk_model();
    let params = TvParams::default();
    let op = TvOperator::new(&model, &params).unwrap();
    let noise = NoiseModel::new(0.5).unwrap();
    let zero = DVector::zeros(op.dim());
    let j = DMatrix::from_fn(4, op.dim(), |i, k| ((i + k) % 3) as f64);
    let v = op.tikhonov_value(&zero, &DVector::zeros(4), &j, &noise, params.gamma, &zero);
    let integral: f64 = model
        .mesh()
        .simplices()
        .iter()
        .zip(model.geometry())
        .map(|(s, g)| g.volume * s.iter().map(|&i| op.upsilon()[i]).sum::<f64>() / 4.0)
        .sum();
    assert!((v - params.gamma * params.smoothing * integral).abs() <= 1e-12 * v);
    let w = smooth_kappa(&op, 1.0);
    let y = &j * &w;
    let v = op.tikhonov_value(&w, &y, &j, &noise, params.gamma, &w);
    assert!((v - params.gamma * op.functional(&w)).abs() <= 1e-12 * v);
}

#[test]
fn noiseless_background_data_reconstructs_zero() {
    let model = desk_model();
    let params = TvParams::default();
    let op = TvOperator::new(&model, &params).unwrap();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let data = measurement_map(&model, &sigma, &layout, &basis).unwrap();
    let problem = TvProblem {
        operator: &op,
        layout: &layout,
        basis: &basis,
        background: &sigma,
        noise: noise_std(&data, 1e-3).unwrap(),
        params,
        known_contacts: true,
    };
    let rec = sequential_reconstruct(&problem, &data).unwrap();
    assert!(rec.kappa.amax() <= 1e-6, "{:e}", rec.kappa.amax());
    assert_eq!(rec.trace.len(), 5 * 6);
}

#[test]
fn inclusion_is_found_in_its_quadrant() {
    let model = desk_model();
    let params = TvParams::default();
    let op = TvOperator::new(&model, &params).unwrap();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let background = measurement_map(&model, &sigma, &layout, &basis).unwrap();
    let noise = noise_std(&background, 1e-3).unwrap();
    let mut data = measurement_map(&model, &inclusion_sigma(&model, 0.1), &layout, &basis).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    data += random::vector(&mut rng, data.len()) * noise.std();
    let problem = TvProblem {
        operator: &op,
        layout: &layout,
        basis: &basis,
        background: &sigma,
        noise,
        params,
        known_contacts: true,
    };
    let rec = sequential_reconstruct(&problem, &data).unwrap();
    for stage in rec.trace.chunks(params.inner_steps + 1) {
        for w in stage.windows(2) {
            assert!(w[1].tikhonov_value <= w[0].tikhonov_value, "{:?}", stage);
        }
    }
    let (k, _) = rec.kappa.argmax();
    let peak = model.mesh().nodes()[op.interior()[k]];
    eprintln!("reconstruction peak {:.3e} at {peak:?}", rec.kappa.max());
    assert!(peak.x <= 0.0 && peak.y <= 0.0, "{peak:?}");
    rec.posterior.validate().unwrap();
    assert_eq!(rec.posterior.dofs, op.interior());
}

#[test]
fn estimated_contacts_keep_the_projection_invariants() {
    let model = desk_model();
    let params = TvParams {
        linearizations: 2,
        inner_steps: 2,
        ..TvParams::default()
    };
    let op = TvOperator::new(&model, &params).unwrap();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let background = measurement_map(&model, &sigma, &layout, &basis).unwrap();
    let poor: Vec<f64> = (0..12).map(|e| if e == 3 { 500.0 } else { 1e3 }).collect();
    let data = measurement_map(&model, &sigma, &layout.with_peaks(poor).unwrap(), &basis).unwrap();
    let problem = TvProblem {
        operator: &op,
        layout: &layout,
        basis: &basis,
        background: &sigma,
        noise: noise_std(&background, 1e-3).unwrap(),
        params,
        known_contacts: false,
    };
    let rec = sequential_reconstruct(&problem, &data).unwrap();
    eprintln!("contact update {:?}", rec.xi.as_slice());
    assert!(rec.xi[3] < 0.0);
    assert!(rec.xi.iter().enumerate().all(|(e, x)| e == 3 || x.abs() < rec.xi[3].abs()));
}
