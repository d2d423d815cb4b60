//! Smoothened, weighted total variation reconstruction by lagged diffusivity
//! with sequential linearizations.
//!
//! The perturbation `κ` lives on interior nodes and vanishes on the boundary.
//! With `g = |∇κ|` constant per element, the functional
//! `Φ(κ) = ∫ υ sqrt(g² + T²) dx` and the lagged multiplier matrix
//! `Θ(κ)_{ij} = ∫ υ / sqrt(g² + T²) ∇φ_i·∇φ_j dx` are evaluated exactly for
//! the piecewise linear interpolant of `υ`.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};

use crate::bayes::{GaussianDensity, NoiseModel};
use crate::contact::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::forward::{CurrentBasis, ForwardModel};
use crate::jacobian::{jacobian_sigma, jacobian_zeta};
use crate::linalg::{spd_solve, symmetrize, SparseCholesky, SymmetricSparse};
use crate::mesh::{boundary_distance, SimplicialMesh, Vec3};
use crate::model::HeadModel;

/// Lower bound for the linearization conductivity, relative to `min σ₀`.
pub const CLAMP_FRACTION: f64 = 1e-3;
/// Fraction of clamped nodes treated as divergence.
pub const DIVERGENCE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvParams {
    /// Prior strength `γ`.
    pub gamma: f64,
    /// Smoothing `T` of the gradient magnitude.
    pub smoothing: f64,
    /// Cut-off steepness `c_υ`, 1/m.
    pub cutoff_steepness: f64,
    /// Cut-off offset `b_υ`, m.
    pub cutoff_offset: f64,
    pub inner_steps: usize,
    pub linearizations: usize,
}

impl Default for TvParams {
    fn default() -> Self {
        TvParams {
            gamma: 1e5,
            smoothing: 1e-6,
            cutoff_steepness: 300.0,
            cutoff_offset: 0.01,
            inner_steps: 5,
            linearizations: 5,
        }
    }
}

impl TvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("smoothing", self.smoothing),
            ("cutoff_steepness", self.cutoff_steepness),
            ("cutoff_offset", self.cutoff_offset),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inner_steps == 0 || self.linearizations == 0 {
            return Err(Error::Parameter("iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(½(1 + tanh(c (d - b))))⁻¹`.
pub fn cutoff_weight(distance: f64, steepness: f64, offset: f64) -> f64 {
    2.0 / (1.0 + (steepness * (distance - offset)).tanh())
}

/// Nodal weight `υ`, large near the boundary and close to 1 deep inside.
pub fn upsilon_weight(mesh: &SimplicialMesh, steepness: f64, offset: f64) -> Vec<f64> {
    boundary_distance(mesh)
        .into_iter()
        .map(|d| cutoff_weight(d, steepness, offset))
        .collect()
}

/// The TV functional and its lagged quadratic majorant on one mesh.
#[derive(Debug, Clone)]
pub struct TvOperator<'a> {
    model: &'a HeadModel,
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
    upsilon: Vec<f64>,
    smoothing: f64,
}

impl<'a> TvOperator<'a> {
    pub fn new(model: &'a HeadModel, params: &TvParams) -> Result<Self> {
        params.validate()?;
        let upsilon = upsilon_weight(model.mesh(), params.cutoff_steepness, params.cutoff_offset);
        Ok(Self::with_weight(model, upsilon, params.smoothing))
    }

    pub fn with_weight(model: &'a HeadModel, upsilon: Vec<f64>, smoothing: f64) -> Self {
        let interior = model.mesh().interior_nodes().to_vec();
        let mut slot = vec![None; model.node_count()];
        for (k, &node) in interior.iter().enumerate() {
            slot[node] = Some(k);
        }
        TvOperator {
            model,
            interior,
            slot,
            upsilon,
            smoothing,
        }
    }

    pub fn model(&self) -> &HeadModel {
        self.model
    }

    /// Mesh node of every unknown.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn dim(&self) -> usize {
        self.interior.len()
    }

    pub fn upsilon(&self) -> &[f64] {
        &self.upsilon
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Nodal values with zeros on the boundary.
    pub fn extend(&self, kappa: &DVector<f64>) -> Vec<f64> {
        let mut full = vec![0.0; self.model.node_count()];
        for (k, &node) in self.interior.iter().enumerate() {
            full[node] = kappa[k];
        }
        full
    }

    /// Interior columns of a matrix over all nodes.
    pub fn restrict_columns(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        j.select_columns(&self.interior)
    }

    /// Per element: `V·mean(υ)` and `|∇κ|²`.
    fn element_terms(&self, kappa: &DVector<f64>) -> impl Iterator<Item = (f64, f64)> + '_ {
        let full = self.extend(kappa);
        let mesh = self.model.mesh();
        mesh.simplices()
            .iter()
            .zip(self.model.geometry())
            .map(move |(s, geo)| {
                let grad: Vec3 = (0..4).map(|a| geo.gradients[a] * full[s[a]]).sum();
                let ups = s.iter().map(|&i| self.upsilon[i]).sum::<f64>() / 4.0;
                (geo.volume * ups, grad.norm_squared())
            })
    }

    /// `Φ(κ) = ∫ υ sqrt(|∇κ|² + T²) dx`.
    pub fn functional(&self, kappa: &DVector<f64>) -> f64 {
        let t2 = self.smoothing * self.smoothing;
        self.element_terms(kappa).map(|(w, g2)| w * (g2 + t2).sqrt()).sum()
    }

    /// Lagged multiplier matrix over the interior nodes.
    pub fn theta_matrix(&self, kappa: &DVector<f64>) -> SymmetricSparse {
        let t2 = self.smoothing * self.smoothing;
        let weights: Vec<f64> = self.element_terms(kappa).map(|(w, g2)| w / (g2 + t2).sqrt()).collect();
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for ((s, geo), w) in self.model.mesh().simplices().iter().zip(self.model.geometry()).zip(weights) {
            for a in 0..4 {
                let Some(i) = self.slot[s[a]] else { continue };
                for b in 0..4 {
                    let Some(j) = self.slot[s[b]] else { continue };
                    rows.push(i);
                    cols.push(j);
                    vals.push(w * geo.gradients[a].dot(&geo.gradients[b]));
                }
            }
        }
        SymmetricSparse::from_triplets(self.dim(), &rows, &cols, &vals)
    }

    /// `½ (y - J w)^T Γ_noise⁻¹ (y - J w) + γ Φ(κ)`.
    pub fn tikhonov_value(
        &self,
        w: &DVector<f64>,
        y: &DVector<f64>,
        j: &DMatrix<f64>,
        noise: &NoiseModel,
        gamma: f64,
        kappa: &DVector<f64>,
    ) -> f64 {
        let r = y - j * w;
        0.5 * r.norm_squared() / noise.variance() + gamma * self.functional(kappa)
    }
}

/// Orthogonal projection onto the complement of the range of `B_ζ`.
pub fn projection(b_zeta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = b_zeta.transpose() * b_zeta;
    let coef = spd_solve(&gram, &b_zeta.transpose(), "contact Gram matrix")
        .map_err(|_| Error::Numerical("contact Jacobian is rank deficient".into()))?;
    let mut q = DMatrix::identity(b_zeta.nrows(), b_zeta.nrows()) - b_zeta * coef;
    symmetrize(&mut q);
    Ok(q)
}

/// Least-squares contact update `(B_ζ^T B_ζ)⁻¹ B_ζ^T (y - B_σ κ)`.
pub fn xi_update(
    b_sigma: &DMatrix<f64>,
    b_zeta: &DMatrix<f64>,
    y: &DVector<f64>,
    kappa: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gram = b_zeta.transpose() * b_zeta;
    let rhs = b_zeta.transpose() * (y - b_sigma * kappa);
    let rhs = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let x = spd_solve(&gram, &rhs, "contact Gram matrix")
        .map_err(|_| Error::Numerical("contact Jacobian is rank deficient".into()))?;
    Ok(x.column(0).into_owned())
}

/// One factorization of `Θ` with the Woodbury pieces `Y = Θ⁻¹ A^T` and
/// `S = γ I + A Y` shared by the step and the covariance.
pub struct LaggedSystem {
    factor: SparseCholesky,
    y: DMatrix<f64>,
    s: DMatrix<f64>,
    gamma: f64,
}

impl LaggedSystem {
    pub fn new(theta: &SymmetricSparse, a: &DMatrix<f64>, gamma: f64) -> Result<Self> {
        if a.ncols() != theta.dim() {
            return Err(Error::Dimension(format!("A has {} columns, Θ is {}x{}", a.ncols(), theta.dim(), theta.dim())));
        }
        let factor = theta.cholesky()?;
        let y = factor.solve(&a.transpose());
        let mut s = a * &y;
        symmetrize(&mut s);
        for i in 0..s.nrows() {
            s[(i, i)] += gamma;
        }
        Ok(LaggedSystem { factor, y, s, gamma })
    }

    /// `Θ⁻¹ A^T (γ I + A Θ⁻¹ A^T)⁻¹ b`.
    pub fn step(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        let z = spd_solve(&self.s, &rhs, "lagged diffusivity inner matrix")?;
        Ok((&self.y * z).column(0).into_owned())
    }

    /// `γ⁻¹ (Θ⁻¹ - Θ⁻¹ A^T (γ I + A Θ⁻¹ A^T)⁻¹ A Θ⁻¹)`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.factor.dim();
        let theta_inv = self.factor.solve(&DMatrix::identity(n, n));
        let z = spd_solve(&self.s, &self.y.transpose(), "lagged diffusivity inner matrix")?;
        let mut cov = (theta_inv - &self.y * z) / self.gamma;
        symmetrize(&mut cov);
        Ok(cov)
    }
}

pub fn ld_step(theta: &SymmetricSparse, a: &DMatrix<f64>, b: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    LaggedSystem::new(theta, a, gamma)?.step(b)
}

pub fn ld_covariance(theta: &SymmetricSparse, a: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    LaggedSystem::new(theta, a, gamma)?.covariance()
}

/// One row of the iteration trace; `inner_step` 0 is the warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub linearization: usize,
    pub inner_step: usize,
    pub tikhonov_value: f64,
}

#[derive(Debug, Clone)]
pub struct TvReconstruction {
    /// Perturbation on interior nodes.
    pub kappa: DVector<f64>,
    /// Contact peak perturbation.
    pub xi: DVector<f64>,
    /// Mean `κ` and covariance of the final lagged step, over interior nodes.
    pub posterior: GaussianDensity,
    pub trace: Vec<TraceRow>,
    /// Largest number of clamped nodes over the linearizations.
    pub clamped: usize,
}

impl TvReconstruction {
    pub fn trace_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            s.push_str(&format!("# {c}\n"));
        }
        s.push_str("linearization,inner_step,tikhonov_value\n");
        for r in &self.trace {
            s.push_str(&format!("{},{},{:?}\n", r.linearization, r.inner_step, r.tikhonov_value));
        }
        s
    }
}

/// Inputs of a sequential reconstruction.
#[derive(Debug, Clone)]
pub struct TvProblem<'a> {
    pub operator: &'a TvOperator<'a>,
    /// Layout with the background contact peaks `ζ₀`.
    pub layout: &'a ElectrodeLayout,
    pub basis: &'a CurrentBasis,
    pub background: &'a [f64],
    pub noise: NoiseModel,
    pub params: TvParams,
    /// Keep `ξ = 0` instead of estimating the contacts.
    pub known_contacts: bool,
}

/// `σ₀ + κ` clamped below; returns the clamped count.
fn clamp_conductivity(background: &[f64], kappa: &[f64]) -> (Vec<f64>, usize) {
    let floor = CLAMP_FRACTION * background.iter().copied().fold(f64::INFINITY, f64::min);
    let mut clamped = 0;
    let sigma = background
        .iter()
        .zip(kappa)
        .map(|(s, k)| {
            let v = s + k;
            if v < floor {
                clamped += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    (sigma, clamped)
}

pub fn sequential_reconstruct(problem: &TvProblem, measured: &DVector<f64>) -> Result<TvReconstruction> {
    problem.params.validate()?;
    let op = problem.operator;
    let model = op.model();
    let m = problem.layout.count();
    let eta = problem.noise.std();
    let gamma = problem.params.gamma;
    let zeta0 = problem.layout.peaks().to_vec();
    let mut kappa = DVector::zeros(op.dim());
    let mut xi: DVector<f64> = DVector::zeros(m);
    let mut trace = Vec::new();
    let mut max_clamped = 0;
    let mut last = None;

    for k in 0..problem.params.linearizations {
        let (sigma, clamped) = clamp_conductivity(problem.background, &op.extend(&kappa));
        max_clamped = max_clamped.max(clamped);
        if clamped as f64 > DIVERGENCE_FRACTION * model.node_count() as f64 {
            return Err(Error::Numerical(format!(
                "reconstruction diverged: conductivity clamped on {clamped} of {} nodes",
                model.node_count()
            )));
        }
        if clamped > 0 {
            warn!("linearization {k}: conductivity clamped on {clamped} nodes");
        }
        let floor = CLAMP_FRACTION * zeta0.iter().copied().fold(f64::INFINITY, f64::min);
        let peaks: Vec<f64> = zeta0.iter().zip(xi.iter()).map(|(z, x)| (z + x).max(floor)).collect();
        let layout = problem.layout.with_peaks(peaks)?;
        let fwd = ForwardModel::new(model, &sigma, &layout, problem.basis)?;
        let j_sigma = op.restrict_columns(&jacobian_sigma(&fwd));
        let j_zeta = jacobian_zeta(&fwd);
        let y = measured - fwd.measurements() + &j_sigma * &kappa + &j_zeta * &xi;
        let b_sigma = j_sigma / eta;
        let b_zeta = j_zeta / eta;
        let y_w = y / eta;
        let (a, b) = if problem.known_contacts {
            (b_sigma.clone(), y_w.clone())
        } else {
            let q = projection(&b_zeta)?;
            (&q * &b_sigma, &q * &y_w)
        };
        let value = |kappa: &DVector<f64>| 0.5 * (&b - &a * kappa).norm_squared() + gamma * op.functional(kappa);
        trace.push(TraceRow {
            linearization: k,
            inner_step: 0,
            tikhonov_value: value(&kappa),
        });
        for step in 1..=problem.params.inner_steps {
            let system = LaggedSystem::new(&op.theta_matrix(&kappa), &a, gamma)?;
            kappa = system.step(&b)?;
            let v = value(&kappa);
            debug!("linearization {k} step {step}: Tikhonov value {v:e}");
            trace.push(TraceRow {
                linearization: k,
                inner_step: step,
                tikhonov_value: v,
            });
            last = Some(system);
        }
        if !problem.known_contacts {
            xi = xi_update(&b_sigma, &b_zeta, &y_w, &kappa)?;
        }
        info!("linearization {k}: max |κ| = {:.3e}", kappa.amax());
    }

    let system = last.expect("at least one inner step");
    let posterior = GaussianDensity::new(kappa.clone(), system.covariance()?, op.interior().to_vec())?;
    Ok(TvReconstruction {
        kappa,
        xi,
        posterior,
        trace,
        clamped: max_clamped,
    })
}

/// Nodal CSV `node_index, x, y, z, kappa` over all nodes.
pub fn reconstruction_csv(model: &HeadModel, kappa_nodal: &[f64], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str(&format!("# {c}\n"));
    }
    s.push_str("node_index,x,y,z,kappa\n");
    for (i, (p, k)) in model.mesh().nodes().iter().zip(kappa_nodal).enumerate() {
        s.push_str(&format!("{i},{:?},{:?},{:?},{:?}\n", p.x, p.y, p.z, k));
    }
    s
}
