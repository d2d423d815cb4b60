//! Electrode layouts and the smooth contact-conductance field.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{HeadSurface, SimplicialMesh, SurfaceFrame, Vec3};

/// Electrode centres on the head surface plus the shared contact profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    theta: Vec<f64>,
    phi: Vec<f64>,
    radius: f64,
    shape: f64,
    peaks: Vec<f64>,
}

/// Polar or azimuthal angle of one electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngleKind {
    Polar,
    Azimuthal,
}

impl ElectrodeLayout {
    /// `radius` is the common electrode radius R, `shape` the profile
    /// parameter τ and `peaks` the peak contact conductances ζ_m.
    pub fn new(theta: Vec<f64>, phi: Vec<f64>, radius: f64, shape: f64, peaks: Vec<f64>) -> Result<Self> {
        let m = theta.len();
        if m < 2 {
            return Err(Error::Layout(format!("need at least two electrodes, got {m}")));
        }
        if phi.len() != m || peaks.len() != m {
            return Err(Error::Layout(format!(
                "{m} polar angles but {} azimuthal angles and {} peak conductances",
                phi.len(),
                peaks.len()
            )));
        }
        for (&t, &p) in theta.iter().zip(&phi) {
            HeadSurface::check_angles(t, p)?;
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Layout(format!("electrode radius must be positive, got {radius}")));
        }
        if !(shape >= 0.0 && shape.is_finite()) {
            return Err(Error::Layout(format!("shape parameter must be nonnegative, got {shape}")));
        }
        if let Some(z) = peaks.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(Error::Layout(format!("peak contact conductance must be positive, got {z}")));
        }
        Ok(ElectrodeLayout {
            theta,
            phi,
            radius,
            shape,
            peaks,
        })
    }

    /// Same profile and contacts at new angles; azimuths are wrapped into
    /// `[0, 2π)`.
    pub fn with_angles(&self, theta: &[f64], phi: &[f64]) -> Result<Self> {
        let phi = phi.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        Self::new(theta.to_vec(), phi, self.radius, self.shape, self.peaks.clone())
    }

    pub fn with_peaks(&self, peaks: Vec<f64>) -> Result<Self> {
        Self::new(self.theta.clone(), self.phi.clone(), self.radius, self.shape, peaks)
    }

    pub fn count(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn centers(&self, surface: &HeadSurface) -> Vec<Vec3> {
        self.frames(surface).iter().map(|f| f.point).collect()
    }

    pub fn frames(&self, surface: &HeadSurface) -> Vec<SurfaceFrame> {
        self.theta.iter().zip(&self.phi).map(|(&t, &p)| surface.frame(t, p)).collect()
    }

    /// Checks that no two electrode supports overlap.
    pub fn check_separation(&self, surface: &HeadSurface) -> Result<()> {
        let c = self.centers(surface);
        for a in 0..c.len() {
            for b in a + 1..c.len() {
                let d = (c[a] - c[b]).norm();
                if d <= 2.0 * self.radius {
                    return Err(Error::Layout(format!(
                        "electrodes {} and {} overlap: centre distance {d:.4e} <= 2R = {:.4e}",
                        a + 1,
                        b + 1,
                        2.0 * self.radius
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Normalized contact profile ζ̂ as a function of the distance `r` from the
/// electrode axis.
pub fn contact_profile(r: f64, radius: f64, shape: f64) -> f64 {
    profile_r2(r * r, radius * radius, shape)
}

fn profile_r2(r2: f64, big_r2: f64, shape: f64) -> f64 {
    if r2 >= big_r2 {
        0.0
    } else {
        (shape - shape * big_r2 / (big_r2 - r2)).exp()
    }
}

/// Evaluation rule for ζ(x) and its derivatives with respect to the
/// electrode angles.
#[derive(Debug, Clone)]
pub struct ContactField {
    frames: Vec<SurfaceFrame>,
    radius: f64,
    shape: f64,
    peaks: Vec<f64>,
}

/// Profile value of one electrode at one point with its two angular
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub value: f64,
    pub d_theta: f64,
    pub d_phi: f64,
}

pub fn contact_field(layout: &ElectrodeLayout, surface: &HeadSurface) -> Result<ContactField> {
    layout.check_separation(surface)?;
    Ok(ContactField {
        frames: layout.frames(surface),
        radius: layout.radius,
        shape: layout.shape,
        peaks: layout.peaks.clone(),
    })
}

impl ContactField {
    pub fn count(&self) -> usize {
        self.frames.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn frame(&self, m: usize) -> &SurfaceFrame {
        &self.frames[m]
    }

    /// ζ̂ of electrode `m` at `x` with its angular derivatives. Only the
    /// near side of the electrode axis counts, which excludes the antipodal
    /// cap of a convex head.
    pub fn sample(&self, m: usize, x: &Vec3) -> ProfileSample {
        let f = &self.frames[m];
        let d = x - f.point;
        let axial = d.dot(&f.normal);
        let zero = ProfileSample {
            value: 0.0,
            d_theta: 0.0,
            d_phi: 0.0,
        };
        if axial <= -2.0 * self.radius {
            return zero;
        }
        let big_r2 = self.radius * self.radius;
        let r2 = d.norm_squared() - axial * axial;
        if r2 >= big_r2 {
            return zero;
        }
        let value = profile_r2(r2, big_r2, self.shape);
        let gap = big_r2 - r2;
        let dvalue_dr2 = -value * self.shape * big_r2 / (gap * gap);
        let dr2 = |dc: &Vec3, dn: &Vec3| -2.0 * d.dot(dc) - 2.0 * axial * (d.dot(dn) - dc.dot(&f.normal));
        ProfileSample {
            value,
            d_theta: dvalue_dr2 * dr2(&f.t_theta, &f.dnormal_theta),
            d_phi: dvalue_dr2 * dr2(&f.t_phi, &f.dnormal_phi),
        }
    }

    /// ζ(x) = Σ_m ζ_m ζ̂_m(x).
    pub fn value(&self, x: &Vec3) -> f64 {
        (0..self.count()).map(|m| self.peaks[m] * self.sample(m, x).value).sum()
    }

    /// ∂ζ/∂(angle of electrode `m`) at `x`.
    pub fn angle_derivative(&self, m: usize, kind: AngleKind, x: &Vec3) -> f64 {
        let s = self.sample(m, x);
        self.peaks[m]
            * match kind {
                AngleKind::Polar => s.d_theta,
                AngleKind::Azimuthal => s.d_phi,
            }
    }

    /// Composite facet quadrature of every electrode's support on `mesh`.
    pub fn quadrature(&self, mesh: &SimplicialMesh) -> ContactQuadrature {
        let nodes = mesh.nodes();
        let sub_len = 0.5 * self.radius;
        let electrodes = (0..self.count())
            .map(|m| {
                let c = self.frames[m].point;
                let mut points = Vec::new();
                for (fi, f) in mesh.boundary_facets().iter().enumerate() {
                    let p = [nodes[f[0]], nodes[f[1]], nodes[f[2]]];
                    let centroid = (p[0] + p[1] + p[2]) / 3.0;
                    let reach = p.iter().map(|v| (v - centroid).norm()).fold(0.0, f64::max);
                    if (centroid - c).norm() > reach + 2.0 * self.radius {
                        continue;
                    }
                    let longest = (0..3).map(|k| (p[k] - p[(k + 1) % 3]).norm()).fold(0.0, f64::max);
                    let splits = ((longest / sub_len).ceil() as usize).max(1);
                    let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
                    for (bary, w) in composite_rule(splits) {
                        let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2];
                        let s = self.sample(m, &x);
                        if s.value == 0.0 && s.d_theta == 0.0 && s.d_phi == 0.0 {
                            continue;
                        }
                        points.push(ContactPoint {
                            facet: fi,
                            nodes: *f,
                            bary,
                            weight: w * area,
                            profile: s,
                        });
                    }
                }
                points
            })
            .collect();
        ContactQuadrature {
            electrodes,
            peaks: self.peaks.clone(),
        }
    }
}

/// One boundary quadrature point inside an electrode support.
#[derive(Debug, Clone, Copy)]
pub struct ContactPoint {
    pub facet: usize,
    pub nodes: [usize; 3],
    pub bary: [f64; 3],
    /// Quadrature weight including the facet area.
    pub weight: f64,
    pub profile: ProfileSample,
}

/// Quadrature points of each electrode support.
#[derive(Debug, Clone)]
pub struct ContactQuadrature {
    pub electrodes: Vec<Vec<ContactPoint>>,
    pub peaks: Vec<f64>,
}

impl ContactQuadrature {
    pub fn count(&self) -> usize {
        self.electrodes.len()
    }

    /// ∫ ζ̂_m dS for every electrode.
    pub fn profile_integrals(&self) -> Vec<f64> {
        self.electrodes
            .iter()
            .map(|pts| pts.iter().map(|p| p.weight * p.profile.value).sum())
            .collect()
    }
}

const RULE7: [([f64; 3], f64); 7] = {
    // symmetric degree-5 rule, weights relative to the triangle area
    const S: f64 = 3.872_983_346_207_417; // sqrt(15)
    const A1: f64 = (6.0 - S) / 21.0;
    const B1: f64 = (9.0 + 2.0 * S) / 21.0;
    const A2: f64 = (6.0 + S) / 21.0;
    const B2: f64 = (9.0 - 2.0 * S) / 21.0;
    const W1: f64 = (155.0 - S) / 1200.0;
    const W2: f64 = (155.0 + S) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// Seven-point rule on each of the `n²` congruent subtriangles of the
/// reference triangle; weights sum to one.
pub fn composite_rule(n: usize) -> Vec<([f64; 3], f64)> {
    let h = 1.0 / n as f64;
    let scale = 1.0 / (n * n) as f64;
    let mut out = Vec::with_capacity(7 * n * n);
    let mut push_tri = |v: [[f64; 2]; 3]| {
        for (b, w) in RULE7 {
            let s = v[0][0] * b[0] + v[1][0] * b[1] + v[2][0] * b[2];
            let t = v[0][1] * b[0] + v[1][1] * b[1] + v[2][1] * b[2];
            out.push(([1.0 - s - t, s, t], w * scale));
        }
    };
    for i in 0..n {
        for j in 0..n - i {
            let (s, t) = (i as f64 * h, j as f64 * h);
            push_tri([[s, t], [s + h, t], [s, t + h]]);
            if i + j + 1 < n {
                push_tri([[s + h, t], [s + h, t + h], [s, t + h]]);
            }
        }
    }
    out
}
