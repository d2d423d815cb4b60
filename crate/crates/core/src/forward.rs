//! Finite element discretization of the smoothened complete electrode model.
//!
//! Unknowns are the nodal potential `u` and the coefficients `c` of the
//! mean-free electrode potential `U = P c`, where the columns of `P` are
//! `e_m - e_M`. The stacked system over `R^N ⊕ R^{M-1}` is symmetric
//! positive definite whenever some contact conductance is positive.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::contact::{contact_field, AngleKind, ContactQuadrature, ElectrodeLayout};
use crate::error::{Error, Result};
use crate::linalg::{SparseCholesky, SymmetricSparse};
use crate::model::HeadModel;

/// Current patterns `I_l = e_f - e_{o_l}` where `f` is the feeding electrode
/// and `o_l` runs over the other electrodes in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentBasis {
    feeder: usize,
    patterns: DMatrix<f64>,
    backmap: DMatrix<f64>,
}

pub fn current_basis(m: usize) -> Result<CurrentBasis> {
    CurrentBasis::with_feeder(m, 0)
}

/// `M x (M-1)` matrix whose columns `e_l - e_M` span the mean-free vectors.
pub fn mean_free_basis(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m - 1, |i, j| {
        if i == j {
            1.0
        } else if i == m - 1 {
            -1.0
        } else {
            0.0
        }
    })
}

impl CurrentBasis {
    /// `feeder` is zero-based.
    pub fn with_feeder(m: usize, feeder: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Parameter(format!("need at least two electrodes, got {m}")));
        }
        if feeder >= m {
            return Err(Error::Parameter(format!("feeding electrode {} outside 1..={m}", feeder + 1)));
        }
        let mut patterns = DMatrix::zeros(m, m - 1);
        for (l, other) in (0..m).filter(|&k| k != feeder).enumerate() {
            patterns[(feeder, l)] = 1.0;
            patterns[(other, l)] = -1.0;
        }
        let p = mean_free_basis(m);
        let gram = patterns.transpose() * &p;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Numerical("current-basis Gram matrix is singular".into()))?;
        Ok(CurrentBasis {
            feeder,
            patterns,
            backmap: p * inv,
        })
    }

    pub fn electrode_count(&self) -> usize {
        self.patterns.nrows()
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.ncols()
    }

    pub fn feeder(&self) -> usize {
        self.feeder
    }

    /// Columns are the current patterns.
    pub fn patterns(&self) -> &DMatrix<f64> {
        &self.patterns
    }

    /// Maps the sampled functionals `(V·I_l)_l` of a mean-free `V` back to
    /// `V` itself.
    pub fn backmap(&self) -> &DMatrix<f64> {
        &self.backmap
    }
}

/// Assembled stiffness-plus-contact system.
#[derive(Debug, Clone)]
pub struct CemSystem {
    nodes: usize,
    electrodes: usize,
    matrix: SymmetricSparse,
}

impl CemSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn electrode_count(&self) -> usize {
        self.electrodes
    }

    pub fn matrix(&self) -> &SymmetricSparse {
        &self.matrix
    }

    /// Value of the bilinear form on `x = (u, c)`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        self.matrix.quadratic_form(x)
    }

    pub fn factor(&self) -> Result<SparseCholesky> {
        self.matrix.cholesky()
    }
}

pub(crate) fn check_conductivity(sigma: &[f64], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(Error::Dimension(format!("{} conductivity values for {n} nodes", sigma.len())));
    }
    match sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        Some(node) => Err(Error::Conductivity {
            node,
            value: sigma[node],
        }),
        None => Ok(()),
    }
}

fn push_stiffness(model: &HeadModel, coef: &[f64], rows: &mut Vec<usize>, cols: &mut Vec<usize>, vals: &mut Vec<f64>) {
    for (s, g) in model.mesh().simplices().iter().zip(model.geometry()) {
        let mean = s.iter().map(|&i| coef[i]).sum::<f64>() / 4.0;
        if mean == 0.0 {
            continue;
        }
        for a in 0..4 {
            for b in 0..4 {
                rows.push(s[a]);
                cols.push(s[b]);
                vals.push(mean * g.volume * g.gradients[a].dot(&g.gradients[b]));
            }
        }
    }
}

/// `∫ a ∇φ_i·∇φ_j dx` for a nodal coefficient `a` of any sign.
pub fn stiffness_matrix(model: &HeadModel, coef: &[f64]) -> SymmetricSparse {
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    push_stiffness(model, coef, &mut rows, &mut cols, &mut vals);
    SymmetricSparse::from_triplets(model.node_count(), &rows, &cols, &vals)
}

pub fn assemble_system(model: &HeadModel, sigma: &[f64], contact: &ContactQuadrature) -> Result<CemSystem> {
    let n = model.node_count();
    check_conductivity(sigma, n)?;
    let m = contact.count();
    let mesh = model.mesh();
    let cap = 16 * mesh.simplex_count() + 16 * contact.electrodes.iter().map(Vec::len).sum::<usize>() + m * m;
    let (mut rows, mut cols, mut vals) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    push_stiffness(model, sigma, &mut rows, &mut cols, &mut vals);
    // electrode index of a column of P: U_m = c_m for m < M-1, U_{M-1} = -Σ c
    let last = m - 1;
    let mut diag = vec![0.0; m];
    for (e, pts) in contact.electrodes.iter().enumerate() {
        let peak = contact.peaks[e];
        for p in pts {
            let w = p.weight * peak * p.profile.value;
            if w == 0.0 {
                continue;
            }
            diag[e] += w;
            for a in 0..3 {
                for b in 0..3 {
                    rows.push(p.nodes[a]);
                    cols.push(p.nodes[b]);
                    vals.push(w * p.bary[a] * p.bary[b]);
                }
                let coupling = -w * p.bary[a];
                if e < last {
                    rows.extend([p.nodes[a], n + e]);
                    cols.extend([n + e, p.nodes[a]]);
                    vals.extend([coupling, coupling]);
                } else {
                    for l in 0..last {
                        rows.extend([p.nodes[a], n + l]);
                        cols.extend([n + l, p.nodes[a]]);
                        vals.extend([-coupling, -coupling]);
                    }
                }
            }
        }
    }
    for l in 0..last {
        for k in 0..last {
            let v = if l == k { diag[l] + diag[last] } else { diag[last] };
            rows.push(n + l);
            cols.push(n + k);
            vals.push(v);
        }
    }
    Ok(CemSystem {
        nodes: n,
        electrodes: m,
        matrix: SymmetricSparse::from_triplets(n + last, &rows, &cols, &vals),
    })
}

/// Potentials for every current pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    /// `N x (M-1)`: nodal potential per pattern.
    pub potential: DMatrix<f64>,
    /// `M x (M-1)`: mean-free electrode potentials per pattern.
    pub electrode: DMatrix<f64>,
}

impl ForwardSolution {
    fn from_state(state: &DMatrix<f64>, n: usize, m: usize) -> Self {
        let potential = state.rows(0, n).into_owned();
        let electrode = mean_free_basis(m) * state.rows(n, m - 1);
        ForwardSolution { potential, electrode }
    }

    /// Stacked measurement vector, pattern-major and electrode-minor.
    pub fn measurements(&self) -> DVector<f64> {
        DVector::from_column_slice(self.electrode.as_slice())
    }
}

/// A factored forward problem at one conductivity and electrode layout.
#[derive(Debug, Clone)]
pub struct ForwardModel<'a> {
    model: &'a HeadModel,
    sigma: Vec<f64>,
    layout: ElectrodeLayout,
    basis: CurrentBasis,
    contact: ContactQuadrature,
    system: CemSystem,
    factor: SparseCholesky,
    state: DMatrix<f64>,
    solution: ForwardSolution,
}

impl<'a> ForwardModel<'a> {
    pub fn new(model: &'a HeadModel, sigma: &[f64], layout: &ElectrodeLayout, basis: &CurrentBasis) -> Result<Self> {
        if basis.electrode_count() != layout.count() {
            return Err(Error::Dimension(format!(
                "current basis for {} electrodes, layout has {}",
                basis.electrode_count(),
                layout.count()
            )));
        }
        let field = contact_field(layout, model.surface())?;
        let contact = field.quadrature(model.mesh());
        if let Some(e) = contact.electrodes.iter().position(Vec::is_empty) {
            return Err(Error::Layout(format!("electrode {} does not touch the mesh boundary", e + 1)));
        }
        let system = assemble_system(model, sigma, &contact)?;
        let factor = system.factor()?;
        let n = model.node_count();
        let m = layout.count();
        let mut rhs = DMatrix::zeros(system.dim(), m - 1);
        let ptp = mean_free_basis(m).transpose() * basis.patterns();
        rhs.rows_mut(n, m - 1).copy_from(&ptp);
        let state = factor.solve(&rhs);
        let solution = ForwardSolution::from_state(&state, n, m);
        Ok(ForwardModel {
            model,
            sigma: sigma.to_vec(),
            layout: layout.clone(),
            basis: basis.clone(),
            contact,
            system,
            factor,
            state,
            solution,
        })
    }

    pub fn model(&self) -> &HeadModel {
        self.model
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn layout(&self) -> &ElectrodeLayout {
        &self.layout
    }

    pub fn basis(&self) -> &CurrentBasis {
        &self.basis
    }

    pub fn contact(&self) -> &ContactQuadrature {
        &self.contact
    }

    pub fn system(&self) -> &CemSystem {
        &self.system
    }

    pub fn solution(&self) -> &ForwardSolution {
        &self.solution
    }

    /// Raw `(u, c)` coordinates per pattern.
    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn measurements(&self) -> DVector<f64> {
        self.solution.measurements()
    }

    /// Solves with the stored factorization.
    pub fn solve_state(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    pub(crate) fn split_state(&self, state: &DMatrix<f64>) -> ForwardSolution {
        ForwardSolution::from_state(state, self.model.node_count(), self.layout.count())
    }

    /// Largest relative residual `|K x - b| / |b|` over the patterns.
    pub fn relative_residual(&self) -> f64 {
        let n = self.model.node_count();
        let m = self.layout.count();
        let ptp = mean_free_basis(m).transpose() * self.basis.patterns();
        (0..m - 1)
            .map(|l| {
                let x = self.state.column(l).into_owned();
                let mut r = self.system.matrix().mul_vec(&x);
                let mut b = DVector::zeros(r.len());
                b.rows_mut(n, m - 1).copy_from(&ptp.column(l));
                r -= &b;
                r.norm() / b.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Right-hand sides of the shape-derivative problems for moving electrode
    /// `e` in direction `kind`, one column per pattern.
    pub fn shape_rhs(&self, e: usize, kind: AngleKind) -> DMatrix<f64> {
        let n = self.model.node_count();
        let m = self.layout.count();
        let mut rhs = DMatrix::zeros(n + m - 1, m - 1);
        let peak = self.contact.peaks[e];
        for p in &self.contact.electrodes[e] {
            let dz = peak
                * match kind {
                    AngleKind::Polar => p.profile.d_theta,
                    AngleKind::Azimuthal => p.profile.d_phi,
                };
            if dz == 0.0 {
                continue;
            }
            let w = p.weight * dz;
            for l in 0..m - 1 {
                let u: f64 = (0..3).map(|a| p.bary[a] * self.solution.potential[(p.nodes[a], l)]).sum();
                let jump = self.solution.electrode[(e, l)] - u;
                for a in 0..3 {
                    rhs[(p.nodes[a], l)] += w * jump * p.bary[a];
                }
                if e < m - 1 {
                    rhs[(n + e, l)] -= w * jump;
                } else {
                    for k in 0..m - 1 {
                        rhs[(n + k, l)] += w * jump;
                    }
                }
            }
        }
        rhs
    }

    /// Derivatives of the potentials with respect to one electrode angle on
    /// the fixed mesh.
    pub fn shape_solution(&self, e: usize, kind: AngleKind) -> ForwardSolution {
        let state = self.solve_state(&self.shape_rhs(e, kind));
        self.split_state(&state)
    }
}

pub fn solve_forward(
    model: &HeadModel,
    sigma: &[f64],
    layout: &ElectrodeLayout,
    basis: &CurrentBasis,
) -> Result<ForwardSolution> {
    Ok(ForwardModel::new(model, sigma, layout, basis)?.solution.clone())
}

pub fn measurement_map(
    model: &HeadModel,
    sigma: &[f64],
    layout: &ElectrodeLayout,
    basis: &CurrentBasis,
) -> Result<DVector<f64>> {
    Ok(solve_forward(model, sigma, layout, basis)?.measurements())
}

/// Measurement vector as CSV rows `pattern_index, electrode_index,
/// value_volts` (zero-based indices), preceded by `#` comment lines.
pub fn write_measurements_csv(values: &DVector<f64>, electrodes: usize, comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        writeln!(s, "# {c}").unwrap();
    }
    writeln!(s, "pattern_index,electrode_index,value_volts").unwrap();
    for (k, v) in values.iter().enumerate() {
        writeln!(s, "{},{},{:?}", k / electrodes, k % electrodes, v).unwrap();
    }
    s
}

/// Parses a measurement CSV; returns the comment lines and the vector.
pub fn read_measurements_csv(text: &str, electrodes: usize) -> Result<(Vec<String>, DVector<f64>)> {
    let mut comments = Vec::new();
    let mut values: Vec<Option<f64>> = Vec::new();
    let mut header = false;
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse { line: i + 1, message };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if !header {
            if line.replace(' ', "") != "pattern_index,electrode_index,value_volts" {
                return Err(err(format!("unexpected header `{line}`")));
            }
            header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        }
        let p: usize = f[0].parse().map_err(|_| err(format!("bad pattern index `{}`", f[0])))?;
        let e: usize = f[1].parse().map_err(|_| err(format!("bad electrode index `{}`", f[1])))?;
        let v: f64 = f[2].parse().map_err(|_| err(format!("bad value `{}`", f[2])))?;
        if e >= electrodes || p + 1 >= electrodes {
            return Err(err(format!("index ({p}, {e}) outside the {electrodes}-electrode measurement")));
        }
        let k = p * electrodes + e;
        if values.len() <= k {
            values.resize(k + 1, None);
        }
        if values[k].replace(v).is_some() {
            return Err(err(format!("duplicate entry ({p}, {e})")));
        }
    }
    let expected = electrodes * (electrodes - 1);
    if values.len() != expected || values.iter().any(Option::is_none) {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("expected {expected} measurement entries"),
        });
    }
    Ok((comments, DVector::from_iterator(expected, values.into_iter().flatten())))
}

pub fn save_measurements(path: impl AsRef<Path>, values: &DVector<f64>, electrodes: usize, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_measurements_csv(values, electrodes, comments)).map_err(|e| Error::io(path, e))
}

pub fn load_measurements(path: impl AsRef<Path>, electrodes: usize) -> Result<(Vec<String>, DVector<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_measurements_csv(&text, electrodes)
}
