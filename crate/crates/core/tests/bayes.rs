mod common;

use common::*;
use eit_oed::bayes::{noise_std, posterior, squared_exp_prior, GaussianDensity, NoiseModel};
use eit_oed::forward::{current_basis, measurement_map, ForwardModel};
use eit_oed::jacobian::jacobian_sigma;
use eit_oed::mesh::mass_matrix;
use eit_oed::presets::RegionOfInterest;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn information_form(j: &DMatrix<f64>, prior: &GaussianDensity, eta: f64, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let prior_inv = prior.covariance.clone().cholesky().unwrap().inverse();
    let precision = &prior_inv + j.transpose() * j / (eta * eta);
    let cov = precision.cholesky().unwrap().inverse();
    let mean = &cov * (&prior_inv * &prior.mean + j.transpose() * y / (eta * eta));
    (mean, cov)
}

#[test]
fn woodbury_matches_information_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 50;
        let rows = rng.gen_range(5..40);
        let prior = GaussianDensity::new(random::vector(&mut rng, n), random::spd(&mut rng, n), (0..n).collect()).unwrap();
        let j = random::matrix(&mut rng, rows, n);
        let eta = rng.gen_range(0.1..1.0);
        let y = random::vector(&mut rng, rows);
        let post = posterior(&j, &prior, &NoiseModel::new(eta).unwrap(), &y).unwrap();
        let (mean, cov) = information_form(&j, &prior, eta, &y);
        worst = worst.max(rel_frobenius(&post.covariance, &cov));
        worst = worst.max((&post.mean - &mean).norm() / mean.norm());
        post.validate().unwrap();
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn no_information_keeps_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20;
    let prior = GaussianDensity::new(DVector::zeros(n), random::spd(&mut rng, n), (0..n).collect()).unwrap();
    let post = posterior(&DMatrix::zeros(7, n), &prior, &NoiseModel::new(0.3).unwrap(), &random::vector(&mut rng, 7)).unwrap();
    assert_eq!(post.covariance, prior.covariance);
    assert_eq!(post.mean, DVector::zeros(n));
}

#[test]
fn covariance_does_not_depend_on_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 30;
    let prior = GaussianDensity::new(DVector::zeros(n), random::spd(&mut rng, n), (0..n).collect()).unwrap();
    let j = random::matrix(&mut rng, 12, n);
    let noise = NoiseModel::new(0.2).unwrap();
    let a = posterior(&j, &prior, &noise, &random::vector(&mut rng, 12)).unwrap();
    let b = posterior(&j, &prior, &noise, &random::vector(&mut rng, 12)).unwrap();
    assert_eq!(a.covariance, b.covariance);
    assert_ne!(a.mean, b.mean);
}

#[test]
fn posterior_trace_is_below_prior_trace_on_the_mesh() {
    let model = tiny_model();
    let m = 4;
    let layout = eit_oed::contact::ElectrodeLayout::new(vec![0.7, 1.2, 1.2, 1.5], vec![0.3, 1.9, 3.6, 5.0], 7.5e-3, 0.4, vec![1e3; m]).unwrap();
    let basis = current_basis(m).unwrap();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let fwd = ForwardModel::new(&model, &sigma, &layout, &basis).unwrap();
    let j = jacobian_sigma(&fwd);
    let dofs: Vec<usize> = (0..model.node_count()).collect();
    let prior = squared_exp_prior(model.mesh().nodes(), &dofs, 0.05, 0.2).unwrap();
    let noise = noise_std(&fwd.measurements(), 1e-3).unwrap();
    let post = posterior(&j, &prior, &noise, &DVector::zeros(j.nrows())).unwrap();
    let mass = mass_matrix(model.mesh());
    let (tp, tq) = (prior.weighted_trace(&mass), post.weighted_trace(&mass));
    assert!(tq < tp, "{tq} vs {tp}");
    post.validate().unwrap();
}

#[test]
fn desk_prior_factorizes_with_jitter() {
    let model = desk_model();
    let dofs: Vec<usize> = (0..model.node_count()).collect();
    let prior = squared_exp_prior(model.mesh().nodes(), &dofs, 0.05, 0.2).unwrap();
    assert!(prior.covariance.diagonal().iter().all(|&d| d == 0.2f64 * 0.2));
    prior.cholesky().unwrap();
}

#[test]
fn noise_from_the_symmetric_background_is_positive() {
    let model = desk_model();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let u = measurement_map(&model, &sigma, &symmetric_layout(), &current_basis(12).unwrap()).unwrap();
    let noise = noise_std(&u, 1e-3).unwrap();
    assert!(noise.std() > 0.0);
    assert_eq!(noise.omega(), Some(1e-3));
}

#[test]
fn region_mass_weight_selects_brain_nodes() {
    let model = desk_model();
    let mask = RegionOfInterest::brain_above(-0.02).mask(model.mesh());
    let w = eit_oed::mesh::mass_matrix_on(model.mesh(), &mask).unwrap();
    for (i, j, _) in w.triplet_iter() {
        assert!(mask[i] && mask[j]);
    }
}
