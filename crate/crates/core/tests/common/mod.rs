#![allow(dead_code)]

use eit_oed::contact::ElectrodeLayout;
use eit_oed::mesh::LayeredBall;
use eit_oed::model::{HeadModel, LayerConductivity};
use eit_oed::presets;

pub const LAYERS: LayerConductivity = LayerConductivity {
    skin: 0.2,
    skull: 0.06,
    brain: 0.2,
};

pub fn ball(edge: f64) -> LayeredBall {
    LayeredBall {
        outer_radius: 0.09,
        skull_shell: [0.07, 0.08],
        target_edge_length: edge,
        flat_bottom_height: 0.09,
    }
}

/// Layered ball with about two thousand nodes.
pub fn desk_model() -> HeadModel {
    HeadModel::layered_ball(&ball(0.02)).unwrap()
}

pub fn symmetric_layout() -> ElectrodeLayout {
    presets::layout_by_name("symmetric12").unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// 125-node ball with one cell layer per half axis step.
pub fn tiny_model() -> HeadModel {
    let mesh = eit_oed::mesh::build_ball_mesh_with_axis(&ball(0.02), &[0.8, 1.0]).unwrap();
    HeadModel::new(mesh, eit_oed::mesh::HeadSurface::sphere(0.09).unwrap())
}

/// Smooth positive conductivity with variation in all three directions.
pub fn wavy_sigma(model: &HeadModel) -> Vec<f64> {
    model
        .mesh()
        .nodes()
        .iter()
        .map(|p| 0.2 * (1.0 + 0.3 * (40.0 * p.x).sin() * (30.0 * p.y + 0.4).cos() + 0.2 * (25.0 * p.z).sin()))
        .collect()
}

pub mod random {
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    /// Well-conditioned symmetric positive definite matrix.
    pub fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let l = matrix(rng, n, n) / (n as f64).sqrt();
        &l * l.transpose() + DMatrix::identity(n, n) * 0.5
    }
}

pub fn rel_frobenius(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Inclusion center in the quadrant `x <= 0, y <= 0`.
pub const INCLUSION_CENTER: [f64; 3] = [-0.025, -0.025, 0.02];
pub const INCLUSION_RADIUS: f64 = 0.018;

/// Layered background plus `amplitude` on brain nodes inside the inclusion.
pub fn inclusion_sigma(model: &HeadModel, amplitude: f64) -> Vec<f64> {
    let c = eit_oed::mesh::Vec3::from(INCLUSION_CENTER);
    let brain = model.mesh().region_nodes(eit_oed::mesh::Region::Brain);
    let skull = model.mesh().region_nodes(eit_oed::mesh::Region::Skull);
    model
        .layered_conductivity(&LAYERS)
        .unwrap()
        .into_iter()
        .zip(model.mesh().nodes())
        .enumerate()
        .map(|(i, (s, p))| {
            if brain[i] && !skull[i] && (p - c).norm() <= INCLUSION_RADIUS {
                s + amplitude
            } else {
                s
            }
        })
        .collect()
}

/// Gaussian prior over all nodes, mass weight on a region, noise frozen at
/// the symmetric background.
pub struct GaussianSetup {
    pub model: HeadModel,
    pub background: Vec<f64>,
    pub template: ElectrodeLayout,
    pub prior: eit_oed::bayes::GaussianDensity,
    pub noise: eit_oed::bayes::NoiseModel,
    pub weight: nalgebra_sparse::CsrMatrix<f64>,
}

impl GaussianSetup {
    pub fn new(roi: &presets::RegionOfInterest) -> Self {
        let model = desk_model();
        let background = model.layered_conductivity(&LAYERS).unwrap();
        let template = symmetric_layout();
        let dofs: Vec<usize> = (0..model.node_count()).collect();
        let prior = eit_oed::bayes::squared_exp_prior(model.mesh().nodes(), &dofs, 0.05, 0.2).unwrap();
        let basis = eit_oed::forward::current_basis(12).unwrap();
        let u = eit_oed::forward::measurement_map(&model, &background, &template, &basis).unwrap();
        let noise = eit_oed::bayes::noise_std(&u, 1e-3).unwrap();
        let weight = eit_oed::mesh::mass_matrix_on(model.mesh(), &roi.mask(model.mesh())).unwrap();
        GaussianSetup {
            model,
            background,
            template,
            prior,
            noise,
            weight,
        }
    }

    pub fn problem(&self) -> eit_oed::oed::OedProblem<'_> {
        eit_oed::oed::OedProblem {
            model: &self.model,
            background: &self.background,
            template: &self.template,
            prior: &self.prior,
            noise: self.noise,
            weight: &self.weight,
        }
    }
}
