//! Gaussian priors, additive noise and the posterior of the linearized
//! measurement model.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::hashing::{sha256_hex, Fingerprint};
use crate::linalg::{spd_solve, symmetrize, trace_csr_dense};
use crate::mesh::Vec3;

/// Relative diagonal shift applied when a prior covariance is factorized.
pub const PRIOR_JITTER: f64 = 1e-10;

/// Gaussian density over a subset of mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Mesh node of every coordinate.
    pub dofs: Vec<usize>,
    /// Diagonal shift to use when factorizing `covariance`; not included in it.
    pub jitter: f64,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, dofs: Vec<usize>) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) || dofs.len() != n {
            return Err(Error::Dimension(format!(
                "mean has {n} entries, covariance is {}x{}, dof map has {}",
                covariance.nrows(),
                covariance.ncols(),
                dofs.len()
            )));
        }
        Ok(GaussianDensity {
            mean,
            covariance,
            dofs,
            jitter: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest entry of `|C - C^T|` relative to the largest entry of `|C|`.
    pub fn asymmetry(&self) -> f64 {
        let c = &self.covariance;
        let max = c.amax();
        if max == 0.0 {
            return 0.0;
        }
        (c - c.transpose()).amax() / max
    }

    /// Checks the symmetry and semidefiniteness invariants.
    pub fn validate(&self) -> Result<()> {
        let a = self.asymmetry();
        if a > 1e-12 {
            return Err(Error::validation("covariance-symmetric", format!("relative asymmetry {a:e}")));
        }
        let eig = self.covariance.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -1e-10 * max.max(0.0) {
            return Err(Error::validation(
                "covariance-psd",
                format!("eigenvalue {min:e} against largest {max:e}"),
            ));
        }
        Ok(())
    }

    /// `tr(W C)` for a sparse symmetric weight over the same coordinates.
    pub fn weighted_trace(&self, weight: &CsrMatrix<f64>) -> f64 {
        trace_csr_dense(weight, &self.covariance)
    }

    /// Cholesky factor of the covariance with the jitter added to the diagonal.
    pub fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut c = self.covariance.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += self.jitter;
        }
        nalgebra::Cholesky::new(c).ok_or_else(|| {
            Error::Numerical(format!("covariance with jitter {:e} is not positive definite", self.jitter))
        })
    }

    pub fn dof_hash(&self) -> String {
        Fingerprint::new().tag("dofs").indices(&self.dofs).hex()
    }

    /// Header plus little-endian payload: dof indices, mean, row-major
    /// covariance. `config` is stored verbatim so loaders can reject dumps from other configs.
    pub fn to_bytes(&self, config: &str) -> Vec<u8> {
        let n = self.dim();
        let mut out = Vec::with_capacity(8 * (n * n + 2 * n) + 256);
        writeln!(out, "eitgauss 1").unwrap();
        writeln!(out, "n {n}").unwrap();
        writeln!(out, "nodes {}", self.dof_hash()).unwrap();
        writeln!(out, "config {config}").unwrap();
        writeln!(out, "jitter {:?}", self.jitter).unwrap();
        for &d in &self.dofs {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in self.mean.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..n {
            for j in 0..n {
                out.extend_from_slice(&self.covariance[(i, j)].to_le_bytes());
            }
        }
        out
    }

    /// Parses a dump; returns the density and its config hash.
    pub fn from_bytes(data: &[u8]) -> Result<(Self, String)> {
        let mut pos = 0;
        let mut lines = Vec::new();
        for line in 1..=5 {
            let end = data[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or(Error::Parse { line, message: "truncated header".into() })?;
            let text = std::str::from_utf8(&data[pos..pos + end])
                .map_err(|_| Error::Parse { line, message: "header is not UTF-8".into() })?;
            lines.push(text.to_string());
            pos += end + 1;
        }
        let field = |line: usize, key: &str| -> Result<String> {
            lines[line - 1]
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse { line, message: format!("expected `{key} ...`, found `{}`", lines[line - 1]) })
        };
        if lines[0] != "eitgauss 1" {
            return Err(Error::Parse { line: 1, message: format!("unknown header `{}`", lines[0]) });
        }
        let n: usize = field(2, "n")?
            .parse()
            .map_err(|_| Error::Parse { line: 2, message: "bad dimension".into() })?;
        let nodes = field(3, "nodes")?;
        let config = field(4, "config")?;
        let jitter: f64 = field(5, "jitter")?
            .parse()
            .map_err(|_| Error::Parse { line: 5, message: "bad jitter".into() })?;
        let body = &data[pos..];
        if body.len() != 8 * (n * n + 2 * n) {
            return Err(Error::Parse { line: 6, message: format!("payload has {} bytes, expected {}", body.len(), 8 * (n * n + 2 * n)) });
        }
        let word = |k: usize| -> [u8; 8] { body[8 * k..8 * k + 8].try_into().unwrap() };
        let dofs: Vec<usize> = (0..n).map(|k| u64::from_le_bytes(word(k)) as usize).collect();
        let mean = DVector::from_fn(n, |i, _| f64::from_le_bytes(word(n + i)));
        let covariance = DMatrix::from_fn(n, n, |i, j| f64::from_le_bytes(word(2 * n + i * n + j)));
        let density = GaussianDensity {
            mean,
            covariance,
            dofs,
            jitter,
        };
        if density.dof_hash() != nodes {
            return Err(Error::validation("dof-map-hash", "stored node-map hash does not match the dof indices"));
        }
        Ok((density, config))
    }

    pub fn save(&self, path: impl AsRef<Path>, config: &str) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(config)).map_err(|e| Error::io(path, e))
    }

    /// Loads a dump, rejecting it when `expected_config` is given and differs.
    pub fn load(path: impl AsRef<Path>, expected_config: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (density, config) = Self::from_bytes(&data)?;
        if let Some(expected) = expected_config {
            if expected != config {
                return Err(Error::validation(
                    "config-hash",
                    format!("{} was written under config {config}, expected {expected}", path.display()),
                ));
            }
        }
        Ok(density)
    }
}

/// Zero-mean prior with covariance `ς² exp(-|x_i - x_j|² / (2ℓ²))` over the
/// given nodes.
pub fn squared_exp_prior(nodes: &[Vec3], dofs: &[usize], length: f64, std: f64) -> Result<GaussianDensity> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Parameter(format!("correlation length must be positive, got {length}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::Parameter(format!("prior standard deviation must be positive, got {std}")));
    }
    let n = dofs.len();
    let var = std * std;
    let scale = -0.5 / (length * length);
    let mut cov = DMatrix::zeros(n, n);
    for j in 0..n {
        let xj = nodes[dofs[j]];
        cov[(j, j)] = var;
        for i in j + 1..n {
            let v = var * (scale * (nodes[dofs[i]] - xj).norm_squared()).exp();
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianDensity {
        mean: DVector::zeros(n),
        covariance: cov,
        dofs: dofs.to_vec(),
        jitter: PRIOR_JITTER * var,
    })
}

/// White measurement noise with standard deviation `std` volts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    std: f64,
    /// Scaling against the measurement range, when derived from one.
    omega: Option<f64>,
}

impl NoiseModel {
    pub fn new(std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::Parameter(format!("noise standard deviation must be positive, got {std}")));
        }
        Ok(NoiseModel { std, omega: None })
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    pub fn omega(&self) -> Option<f64> {
        self.omega
    }
}

/// `η = ω (max U - min U)` over all components of a measurement vector.
pub fn noise_std(measurement: &DVector<f64>, omega: f64) -> Result<NoiseModel> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Parameter(format!("noise scaling must be positive, got {omega}")));
    }
    let range = measurement.max() - measurement.min();
    if !(range > 0.0) {
        return Err(Error::Numerical("measurement vector is constant; noise level would be zero".into()));
    }
    Ok(NoiseModel {
        std: omega * range,
        omega: Some(omega),
    })
}

/// `S = J Γ J^T + η² I` and `X = J Γ`.
pub fn innovation(j: &DMatrix<f64>, prior_cov: &DMatrix<f64>, noise: &NoiseModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = j * prior_cov;
    let mut s = &x * j.transpose();
    symmetrize(&mut s);
    for i in 0..s.nrows() {
        s[(i, i)] += noise.variance();
    }
    (s, x)
}

/// Posterior of `y = J w + e` with `w ~ prior`, `e ~ N(0, η² I)`.
pub fn posterior(j: &DMatrix<f64>, prior: &GaussianDensity, noise: &NoiseModel, y: &DVector<f64>) -> Result<GaussianDensity> {
    if j.ncols() != prior.dim() || j.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "Jacobian is {}x{}, prior has {} dofs, data has {} entries",
            j.nrows(),
            j.ncols(),
            prior.dim(),
            y.len()
        )));
    }
    let (s, x) = innovation(j, &prior.covariance, noise);
    let s_inv_x = spd_solve(&s, &x, "innovation matrix")?;
    let mut cov = &prior.covariance - x.transpose() * &s_inv_x;
    symmetrize(&mut cov);
    let resid = y - j * &prior.mean;
    let mean = &prior.mean + s_inv_x.transpose() * resid;
    Ok(GaussianDensity {
        mean,
        covariance: cov,
        dofs: prior.dofs.clone(),
        jitter: prior.jitter,
    })
}

/// Hash of a byte string naming an experiment configuration.
pub fn config_hash(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}
