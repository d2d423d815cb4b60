//! A-optimal electrode placement: the weighted posterior trace, its
//! gradient with respect to the electrode angles, and gradient descent with
//! an Armijo line search.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::bayes::{innovation, GaussianDensity, NoiseModel};
use crate::contact::{AngleKind, ElectrodeLayout};
use crate::error::{Error, Result};
use crate::forward::{CurrentBasis, ForwardModel};
use crate::jacobian::{jacobian_sigma, jacobian_sigma_angle_derivative};
use crate::linalg::{csr_mul_dense, spd_solve, trace_csr_dense};
use crate::model::HeadModel;

/// `Ψ_A = tr(W Γ) - tr(W Γ J^T S⁻¹ J Γ)` with `S = J Γ J^T + η² I`.
pub fn a_target(j: &DMatrix<f64>, prior: &DMatrix<f64>, noise: &NoiseModel, weight: &CsrMatrix<f64>) -> Result<f64> {
    let (s, x) = innovation(j, prior, noise);
    let z = spd_solve(&s, &x, "innovation matrix")?;
    let w = weight_right(&x, weight);
    Ok(trace_csr_dense(weight, prior) - z.dot(&w))
}

/// `X W` for a symmetric sparse `W`.
fn weight_right(x: &DMatrix<f64>, weight: &CsrMatrix<f64>) -> DMatrix<f64> {
    csr_mul_dense(weight, &x.transpose()).transpose()
}

/// `Ψ_A` together with `G = S⁻¹ J Γ W Γ_post`, so that
/// `∂Ψ_A/∂d_k = -2 ⟨G, ∂J/∂d_k⟩`.
pub fn a_target_sensitivity(
    j: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    noise: &NoiseModel,
    weight: &CsrMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let (s, x) = innovation(j, prior, noise);
    let z = spd_solve(&s, &x, "innovation matrix")?;
    let w = weight_right(&x, weight);
    let psi = trace_csr_dense(weight, prior) - z.dot(&w);
    let inner = &w * prior - (&w * x.transpose()) * &z;
    let g = spd_solve(&s, &inner, "innovation matrix")?;
    Ok((psi, g))
}

/// Electrode angles and the index of the feeding electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub feeder: usize,
}

impl Design {
    pub fn from_layout(layout: &ElectrodeLayout, feeder: usize) -> Self {
        Design {
            theta: layout.theta().to_vec(),
            phi: layout.phi().to_vec(),
            feeder,
        }
    }

    pub fn count(&self) -> usize {
        self.theta.len()
    }

    /// `(θ₁..θ_M, φ₁..φ_M)`.
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.count(), self.theta.iter().chain(&self.phi).copied())
    }

    /// Moves by `λ q`. Electrodes with `θ < pole` move along a straight line
    /// in the tangent plane at the north pole, with the azimuthal component
    /// of `q` read as a displacement orthogonal to the meridian.
    pub fn step(&self, q: &DVector<f64>, lambda: f64, pole: f64) -> Design {
        let m = self.count();
        let mut theta = self.theta.clone();
        let mut phi = self.phi.clone();
        for e in 0..m {
            let (dt, dp) = (lambda * q[e], lambda * q[m + e]);
            if self.theta[e] < pole {
                let rho = self.theta[e].tan();
                let (s, c) = self.phi[e].sin_cos();
                let x = rho * c + dt * c - dp * s;
                let y = rho * s + dt * s + dp * c;
                theta[e] = x.hypot(y).atan();
                phi[e] = y.atan2(x).rem_euclid(TAU);
            } else {
                theta[e] += dt;
                phi[e] = (phi[e] + dp).rem_euclid(TAU);
            }
        }
        Design {
            theta,
            phi,
            feeder: self.feeder,
        }
    }
}

/// Everything a design evaluation needs besides the angles.
#[derive(Debug, Clone)]
pub struct OedProblem<'a> {
    pub model: &'a HeadModel,
    /// Conductivity at which the Jacobian is linearized.
    pub background: &'a [f64],
    /// Electrode radius, profile shape and contact peaks.
    pub template: &'a ElectrodeLayout,
    pub prior: &'a GaussianDensity,
    pub noise: NoiseModel,
    /// Weight over the prior coordinates, typically a masked mass matrix.
    pub weight: &'a CsrMatrix<f64>,
}

/// Target value and gradient at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub psi: f64,
    pub gradient: DVector<f64>,
}

impl<'a> OedProblem<'a> {
    pub fn prior_trace(&self) -> f64 {
        self.prior.weighted_trace(self.weight)
    }

    /// Layout at a design; infeasible designs are errors.
    pub fn layout(&self, design: &Design) -> Result<ElectrodeLayout> {
        let layout = self.template.with_angles(&design.theta, &design.phi)?;
        layout.check_separation(self.model.surface())?;
        Ok(layout)
    }

    fn forward(&self, design: &Design) -> Result<(ForwardModel<'a>, CurrentBasis)> {
        let layout = self.layout(design)?;
        let basis = CurrentBasis::with_feeder(design.count(), design.feeder)?;
        let fwd = ForwardModel::new(self.model, self.background, &layout, &basis)?;
        Ok((fwd, basis))
    }

    fn restrict(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        j.select_columns(&self.prior.dofs)
    }

    pub fn jacobian(&self, design: &Design) -> Result<DMatrix<f64>> {
        let (fwd, _) = self.forward(design)?;
        Ok(self.restrict(&jacobian_sigma(&fwd)))
    }

    pub fn target(&self, design: &Design) -> Result<f64> {
        a_target(&self.jacobian(design)?, &self.prior.covariance, &self.noise, self.weight)
    }

    /// `Ψ_A`, or `+∞` when the design violates the angle bounds or the
    /// separation constraint, or an electrode misses the mesh.
    pub fn target_or_infinity(&self, design: &Design) -> Result<f64> {
        match self.target(design) {
            Ok(v) => Ok(v),
            Err(Error::Domain(_) | Error::Layout(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    pub fn evaluate(&self, design: &Design) -> Result<Evaluation> {
        let (fwd, _) = self.forward(design)?;
        let j = self.restrict(&jacobian_sigma(&fwd));
        let (psi, g) = a_target_sensitivity(&j, &self.prior.covariance, &self.noise, self.weight)?;
        let m = design.count();
        let mut gradient = DVector::zeros(2 * m);
        for (offset, kind) in [(0, AngleKind::Polar), (m, AngleKind::Azimuthal)] {
            for e in 0..m {
                let dj = self.restrict(&jacobian_sigma_angle_derivative(&fwd, e, kind));
                gradient[offset + e] = -2.0 * g.dot(&dj);
            }
        }
        Ok(Evaluation { psi, gradient })
    }

    /// Central differences of the target in every angle.
    pub fn finite_difference_gradient(&self, design: &Design, h: f64) -> Result<DVector<f64>> {
        let m = design.count();
        let mut out = DVector::zeros(2 * m);
        for k in 0..2 * m {
            let shifted = |s: f64| {
                let mut d = design.clone();
                if k < m {
                    d.theta[k] += s;
                } else {
                    d.phi[k - m] += s;
                }
                self.target(&d)
            };
            out[k] = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        }
        Ok(out)
    }
}

/// Largest componentwise relative gradient error; components smaller than
/// `floor · max|fd|` are compared against that floor.
pub fn gradient_mismatch(analytic: &DVector<f64>, fd: &DVector<f64>, floor: f64) -> f64 {
    let scale = floor * fd.amax();
    analytic
        .iter()
        .zip(fd.iter())
        .map(|(a, f)| (a - f).abs() / f.abs().max(scale))
        .fold(0.0, f64::max)
}

/// Componentwise relative tolerance of the gradient check.
pub const GRADIENT_TOLERANCE: f64 = 1e-2;
/// Angle step of the gradient check, rad.
pub const GRADIENT_STEP: f64 = 1e-4;
/// Relative floor below which gradient components are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-3;

/// Compares the analytic gradient with central differences before an
/// optimization run.
pub fn gradient_preflight(problem: &OedProblem, design: &Design) -> Result<f64> {
    let analytic = problem.evaluate(design)?.gradient;
    let fd = problem.finite_difference_gradient(design, GRADIENT_STEP)?;
    let err = gradient_mismatch(&analytic, &fd, GRADIENT_FLOOR);
    if err > GRADIENT_TOLERANCE {
        return Err(Error::Numerical(format!(
            "gradient check failed: relative mismatch {err:.3e} exceeds {GRADIENT_TOLERANCE:e}"
        )));
    }
    info!("gradient check passed, relative mismatch {err:.3e}");
    Ok(err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Stop when the gradient norm is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial step of every line search.
    pub step: f64,
    pub armijo_trials: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Polar angle below which the tangent-plane update is used.
    pub pole_threshold: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            tolerance: 0.0,
            max_iterations: 40,
            step: 0.5,
            armijo_trials: 30,
            alpha: 0.5,
            beta: 5.0 / 6.0,
            pole_threshold: 0.2,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) {
            return Err(Error::Parameter("tolerance must be nonnegative".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::Parameter("initial step must be positive".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(0.0..FRAC_PI_2).contains(&self.pole_threshold) {
            return Err(Error::Parameter("pole threshold must lie in [0, pi/2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub lambda: f64,
    /// Trials evaluated.
    pub trials: usize,
    /// Whether `lambda` passed the sufficient-decrease test.
    pub accepted: bool,
    /// Target at the accepted step.
    pub value: Option<f64>,
}

/// Backtracking from `lambda`: returns the first `λ β^l` with
/// `f(λ) - f0 < λ α slope`, or `λ β^N` after `N` failures. `trial`
/// evaluates the target at a step length and may return `+∞`.
pub fn armijo_search<F>(f0: f64, slope: f64, mut trial: F, lambda: f64, alpha: f64, beta: f64, max_trials: usize) -> Result<ArmijoOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut lambda = lambda;
    for l in 0..max_trials {
        let v = trial(lambda)?;
        if v - f0 < lambda * alpha * slope {
            return Ok(ArmijoOutcome {
                lambda,
                trials: l + 1,
                accepted: true,
                value: Some(v),
            });
        }
        lambda *= beta;
    }
    Ok(ArmijoOutcome {
        lambda,
        trials: max_trials,
        accepted: false,
        value: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub design: Design,
    pub psi: f64,
    pub grad_norm: f64,
    /// Step that produced this design; 0 for the start and for null steps.
    pub lambda_bar: f64,
    pub armijo_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesignTrace {
    pub entries: Vec<TraceEntry>,
}

impl DesignTrace {
    pub fn first(&self) -> &TraceEntry {
        &self.entries[0]
    }

    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("trace has the initial row")
    }

    /// Relative reduction of `sqrt(Ψ_A)` from the first to the last row.
    pub fn relative_reduction(&self) -> f64 {
        1.0 - (self.last().psi / self.first().psi).sqrt()
    }

    pub fn to_csv(&self, comments: &[String]) -> String {
        let m = self.first().design.count();
        let mut s = String::new();
        for c in comments {
            writeln!(s, "# {c}").unwrap();
        }
        let mut header = vec!["iter".to_string()];
        header.extend((1..=m).map(|k| format!("theta_{k}")));
        header.extend((1..=m).map(|k| format!("phi_{k}")));
        header.extend(["psi_a", "psi_a_sqrt", "grad_norm", "lambda_bar", "armijo_trials"].map(String::from));
        writeln!(s, "{}", header.join(",")).unwrap();
        for e in &self.entries {
            let mut row = vec![e.iter.to_string()];
            row.extend(e.design.theta.iter().chain(&e.design.phi).map(|v| format!("{v:?}")));
            row.push(format!("{:?}", e.psi));
            row.push(format!("{:?}", e.psi.sqrt()));
            row.push(format!("{:?}", e.grad_norm));
            row.push(format!("{:?}", e.lambda_bar));
            row.push(e.armijo_trials.to_string());
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        s
    }
}

/// Anything that can score designs: a target and a gradient.
pub trait DesignObjective {
    fn evaluate(&self, design: &Design) -> Result<Evaluation>;
    /// Target value, `+∞` for infeasible designs.
    fn value(&self, design: &Design) -> Result<f64>;
}

impl DesignObjective for OedProblem<'_> {
    fn evaluate(&self, design: &Design) -> Result<Evaluation> {
        OedProblem::evaluate(self, design)
    }

    fn value(&self, design: &Design) -> Result<f64> {
        self.target_or_infinity(design)
    }
}

/// Gradient descent with normalized steepest-descent directions. An
/// exhausted line search still moves when the final trial is feasible and
/// does not increase the target; otherwise the iteration is a null step.
pub fn optimize_design<O: DesignObjective>(objective: &O, initial: &Design, opts: &OptimizerOptions) -> Result<DesignTrace> {
    opts.validate()?;
    let mut design = initial.clone();
    let mut eval = objective.evaluate(&design)?;
    let mut trace = DesignTrace {
        entries: vec![TraceEntry {
            iter: 0,
            design: design.clone(),
            psi: eval.psi,
            grad_norm: eval.gradient.norm(),
            lambda_bar: 0.0,
            armijo_trials: 0,
        }],
    };
    let mut i = 0;
    while eval.gradient.norm() > opts.tolerance && i < opts.max_iterations {
        i += 1;
        let norm = eval.gradient.norm();
        let (lambda_bar, trials) = if norm == 0.0 || !norm.is_finite() {
            (0.0, 0)
        } else {
            let q = -&eval.gradient / norm;
            let slope = eval.gradient.dot(&q);
            let out = armijo_search(
                eval.psi,
                slope,
                |l| objective.value(&design.step(&q, l, opts.pole_threshold)),
                opts.step,
                opts.alpha,
                opts.beta,
                opts.armijo_trials,
            )?;
            let take = out.accepted || {
                let v = objective.value(&design.step(&q, out.lambda, opts.pole_threshold))?;
                v.is_finite() && v <= eval.psi
            };
            if take {
                design = design.step(&q, out.lambda, opts.pole_threshold);
                eval = objective.evaluate(&design)?;
                (out.lambda, out.trials)
            } else {
                warn!("iteration {i}: line search exhausted, null step");
                (0.0, out.trials)
            }
        };
        debug!("iteration {i}: Ψ_A = {:e}, |∇Ψ_A| = {:e}", eval.psi, eval.gradient.norm());
        trace.entries.push(TraceEntry {
            iter: i,
            design: design.clone(),
            psi: eval.psi,
            grad_norm: eval.gradient.norm(),
            lambda_bar,
            armijo_trials: trials,
        });
    }
    info!(
        "design optimization: sqrt(Ψ_A) {:.6e} -> {:.6e} in {i} iterations",
        trace.first().psi.sqrt(),
        trace.last().psi.sqrt()
    );
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_target_and_gradient() {
        let one = DMatrix::identity(1, 1);
        let w = CsrMatrix::identity(1);
        let noise = NoiseModel::new(1.0).unwrap();
        assert!((a_target(&one, &one, &noise, &w).unwrap() - 0.5).abs() < 1e-15);
        let (_, g) = a_target_sensitivity(&one, &one, &noise, &w).unwrap();
        // dΨ/dJ = -2 G
        assert!((-2.0 * g[(0, 0)] + 0.5).abs() < 1e-15);
        let zero = DMatrix::zeros(1, 1);
        assert!((a_target(&zero, &one, &noise, &w).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pole_step_moves_along_a_line() {
        let d = Design {
            theta: vec![0.1],
            phi: vec![1.0],
            feeder: 0,
        };
        let q = DVector::from_vec(vec![0.0, 1.0]);
        let a = d.step(&q, 0.05, 0.2);
        let b = d.step(&q, 0.1, 0.2);
        let plane = |d: &Design| {
            let r = d.theta[0].tan();
            nalgebra::Vector2::new(r * d.phi[0].cos(), r * d.phi[0].sin())
        };
        let (p0, p1, p2) = (plane(&d), plane(&a), plane(&b));
        // collinear, equally spaced, orthogonal to the meridian
        assert!(((p2 - p1) - (p1 - p0)).norm() < 1e-12);
        assert!((p1 - p0).dot(&p0).abs() < 1e-12);
        assert!(((p1 - p0).norm() - 0.05).abs() < 1e-12);
        // away from the pole the angles move directly
        let far = Design {
            theta: vec![0.5],
            phi: vec![6.2],
            feeder: 0,
        };
        let f = far.step(&q, 0.1, 0.2);
        assert_eq!(f.theta[0], 0.5);
        assert!((f.phi[0] - (6.3 - TAU)).abs() < 1e-12);
    }
}
