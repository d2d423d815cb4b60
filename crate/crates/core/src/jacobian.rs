//! Sensitivities of the electrode potentials.
//!
//! Derivatives are sampled against the current basis, `D U_i · I_l`, and the
//! sampled functionals are mapped back to electrode coordinates with
//! [`CurrentBasis::backmap`]. Rows are indexed pattern-major, `i * M + k`.

use std::io::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::contact::AngleKind;
use crate::error::{Error, Result};
use crate::forward::{CurrentBasis, ForwardModel};
use crate::hashing::Fingerprint;
use crate::mesh::{Region, SimplicialMesh};
use crate::model::HeadModel;

/// `Σ_pairs -∫ φ_j ∇a_i·∇b_l dx` for every node `j`, back-mapped to
/// electrode coordinates. Each field is `N x (M-1)`, one column per pattern.
pub fn sigma_sampling(model: &HeadModel, basis: &CurrentBasis, pairs: &[(&DMatrix<f64>, &DMatrix<f64>)]) -> DMatrix<f64> {
    let p = basis.pattern_count();
    let m = basis.electrode_count();
    let t = basis.backmap();
    let n = model.node_count();
    let mut out = DMatrix::zeros(m * p, n);
    let mut ga = vec![0.0; 3 * p];
    let mut gb = vec![0.0; 3 * p];
    let mut q = vec![0.0; p * p];
    let mut r = vec![0.0; p * m];
    let gradients = |field: &DMatrix<f64>, s: &[usize; 4], g: &[crate::mesh::Vec3; 4], buf: &mut [f64]| {
        for i in 0..p {
            let mut v = [0.0; 3];
            for a in 0..4 {
                let c = field[(s[a], i)];
                v[0] += c * g[a].x;
                v[1] += c * g[a].y;
                v[2] += c * g[a].z;
            }
            buf[3 * i..3 * i + 3].copy_from_slice(&v);
        }
    };
    for (s, geo) in model.mesh().simplices().iter().zip(model.geometry()) {
        q.iter_mut().for_each(|x| *x = 0.0);
        for &(a, b) in pairs {
            gradients(a, s, &geo.gradients, &mut ga);
            gradients(b, s, &geo.gradients, &mut gb);
            for i in 0..p {
                let x = &ga[3 * i..3 * i + 3];
                for l in 0..p {
                    let y = &gb[3 * l..3 * l + 3];
                    q[i * p + l] += x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
                }
            }
        }
        if q.iter().all(|&x| x == 0.0) {
            continue;
        }
        for i in 0..p {
            for k in 0..m {
                let mut acc = 0.0;
                for l in 0..p {
                    acc += q[i * p + l] * t[(k, l)];
                }
                r[i * m + k] = acc;
            }
        }
        let scale = -geo.volume / 4.0;
        for &node in s {
            let mut col = out.column_mut(node);
            for (idx, v) in r.iter().enumerate() {
                col[idx] += scale * v;
            }
        }
    }
    out
}

/// Derivative of the measurement vector with respect to the nodal
/// conductivity values.
pub fn jacobian_sigma(fwd: &ForwardModel) -> DMatrix<f64> {
    let u = &fwd.solution().potential;
    sigma_sampling(fwd.model(), fwd.basis(), &[(u, u)])
}

/// Derivative of the measurement vector with respect to the peak contact
/// conductances.
pub fn jacobian_zeta(fwd: &ForwardModel) -> DMatrix<f64> {
    let basis = fwd.basis();
    let p = basis.pattern_count();
    let m = basis.electrode_count();
    let t = basis.backmap();
    let sol = fwd.solution();
    let mut out = DMatrix::zeros(m * p, m);
    let mut jump = vec![0.0; p];
    for (e, pts) in fwd.contact().electrodes.iter().enumerate() {
        let mut s = DMatrix::<f64>::zeros(p, p);
        for q in pts {
            let w = q.weight * q.profile.value;
            if w == 0.0 {
                continue;
            }
            for (i, j) in jump.iter_mut().enumerate() {
                let u: f64 = (0..3).map(|a| q.bary[a] * sol.potential[(q.nodes[a], i)]).sum();
                *j = sol.electrode[(e, i)] - u;
            }
            for i in 0..p {
                for l in 0..p {
                    s[(i, l)] -= w * jump[i] * jump[l];
                }
            }
        }
        let r = s * t.transpose();
        for i in 0..p {
            for k in 0..m {
                out[(i * m + k, e)] = r[(i, k)];
            }
        }
    }
    out
}

/// Index of a design coordinate: polar angles first, then azimuths.
pub fn angle_index(electrode: usize, kind: AngleKind, m: usize) -> usize {
    match kind {
        AngleKind::Polar => electrode,
        AngleKind::Azimuthal => m + electrode,
    }
}

/// `∂J_σ/∂(angle)` for one electrode and direction, from two shape-derivative
/// solves per pattern pair.
pub fn jacobian_sigma_angle_derivative(fwd: &ForwardModel, electrode: usize, kind: AngleKind) -> DMatrix<f64> {
    let du = fwd.shape_solution(electrode, kind).potential;
    let u = &fwd.solution().potential;
    sigma_sampling(fwd.model(), fwd.basis(), &[(&du, u), (u, &du)])
}

/// All `2M` angle derivatives, ordered as [`angle_index`].
pub fn jacobian_sigma_angle_derivatives(fwd: &ForwardModel) -> Vec<DMatrix<f64>> {
    let m = fwd.layout().count();
    let mut out = Vec::with_capacity(2 * m);
    for kind in [AngleKind::Polar, AngleKind::Azimuthal] {
        for e in 0..m {
            out.push(jacobian_sigma_angle_derivative(fwd, e, kind));
        }
    }
    out
}

/// Zeroes the columns of nodes touching `region`; used to restrict mixed
/// derivatives to perturbations supported away from the boundary.
pub fn zero_region_columns(j: &mut DMatrix<f64>, mesh: &SimplicialMesh, region: Region) {
    for (node, touches) in mesh.region_nodes(region).into_iter().enumerate() {
        if touches {
            j.column_mut(node).fill(0.0);
        }
    }
}

/// Warns when a nodal weight puts mass on boundary-adjacent nodes, where
/// mixed angle derivatives are not covered by the smooth theory.
pub fn warn_if_weight_touches_skin(mesh: &SimplicialMesh, weighted: &[bool]) {
    let skin = mesh.region_nodes(Region::Skin);
    let count = skin.iter().zip(weighted).filter(|(s, w)| **s && **w).count();
    if count > 0 {
        warn!("{count} weighted nodes touch the skin layer; angle derivatives there are unregularized");
    }
}

/// Both Jacobians at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    pub sigma: DMatrix<f64>,
    pub zeta: DMatrix<f64>,
    /// Fingerprint of conductivity, layout and current basis.
    pub base: String,
}

pub fn base_fingerprint(fwd: &ForwardModel) -> String {
    let l = fwd.layout();
    Fingerprint::new()
        .tag("jacobian-base")
        .floats(fwd.sigma())
        .floats(l.theta())
        .floats(l.phi())
        .floats(&[l.radius(), l.shape()])
        .floats(l.peaks())
        .indices(&[fwd.basis().feeder()])
        .hex()
}

impl JacobianSet {
    pub fn assemble(fwd: &ForwardModel) -> Self {
        JacobianSet {
            sigma: jacobian_sigma(fwd),
            zeta: jacobian_zeta(fwd),
            base: base_fingerprint(fwd),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        writeln!(out, "eitjac 1").unwrap();
        writeln!(out, "sigma {} {}", self.sigma.nrows(), self.sigma.ncols()).unwrap();
        writeln!(out, "zeta {} {}", self.zeta.nrows(), self.zeta.ncols()).unwrap();
        writeln!(out, "base {}", self.base).unwrap();
        for mat in [&self.sigma, &self.zeta] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    out.extend_from_slice(&mat[(i, j)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut header = Vec::new();
        for line in 1..=4 {
            let end = data[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or(Error::Parse { line, message: "truncated header".into() })?;
            let text = std::str::from_utf8(&data[pos..pos + end])
                .map_err(|_| Error::Parse { line, message: "header is not UTF-8".into() })?;
            header.push(text.to_string());
            pos += end + 1;
        }
        let bad = |line: usize| Error::Parse { line, message: format!("malformed header line `{}`", header[line - 1]) };
        if header[0] != "eitjac 1" {
            return Err(bad(1));
        }
        let dims = |line: usize, key: &str| -> Result<(usize, usize)> {
            let f: Vec<&str> = header[line - 1].split_whitespace().collect();
            match f.as_slice() {
                [k, r, c] if *k == key => Ok((r.parse().map_err(|_| bad(line))?, c.parse().map_err(|_| bad(line))?)),
                _ => Err(bad(line)),
            }
        };
        let (sr, sc) = dims(2, "sigma")?;
        let (zr, zc) = dims(3, "zeta")?;
        let base = header[3].strip_prefix("base ").ok_or_else(|| bad(4))?.to_string();
        let body = &data[pos..];
        if body.len() != 8 * (sr * sc + zr * zc) {
            return Err(Error::Parse { line: 5, message: format!("payload has {} bytes", body.len()) });
        }
        let read = |off: usize, r: usize, c: usize| {
            DMatrix::from_fn(r, c, |i, j| {
                let k = off + 8 * (i * c + j);
                f64::from_le_bytes(body[k..k + 8].try_into().unwrap())
            })
        };
        Ok(JacobianSet {
            sigma: read(0, sr, sc),
            zeta: read(8 * sr * sc, zr, zc),
            base,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}
