//! Ready-made electrode layouts and regions of interest for the ball
//! phantom. Angles are chosen by eye, not taken from any tabulation.

use std::f64::consts::PI;

use crate::contact::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::mesh::{Region, SimplicialMesh, Vec3};

/// Electrode radius, m.
pub const ELECTRODE_RADIUS: f64 = 7.5e-3;
/// Contact profile shape parameter.
pub const CONTACT_SHAPE: f64 = 0.4;
/// Peak contact conductance of a good contact, S/m².
pub const CONTACT_PEAK: f64 = 1e3;

/// Eight electrodes on a low ring and four on a high ring, mirror symmetric
/// under `y -> -y`. Electrode 1 sits at azimuth 0 on the low ring.
pub fn symmetric12() -> (Vec<f64>, Vec<f64>) {
    let mut theta = vec![1.15; 8];
    let mut phi: Vec<f64> = (0..8).map(|k| k as f64 * PI / 4.0).collect();
    theta.extend([0.6; 4]);
    phi.extend((0..4).map(|k| PI / 4.0 + k as f64 * PI / 2.0));
    (theta, phi)
}

/// Electrode 1 at azimuth 0; the other eleven gathered over the quadrant
/// `x <= 0, y <= 0`.
pub fn quadrant12() -> (Vec<f64>, Vec<f64>) {
    let mut theta = vec![1.15];
    let mut phi = vec![0.0];
    for f in [0.95, 1.1, 1.25, 1.4, 1.55] {
        theta.push(1.2);
        phi.push(f * PI);
    }
    for f in [1.0, 1.17, 1.33, 1.5] {
        theta.push(0.85);
        phi.push(f * PI);
    }
    for f in [1.1, 1.4] {
        theta.push(0.5);
        phi.push(f * PI);
    }
    (theta, phi)
}

pub fn layout_by_name(name: &str) -> Result<ElectrodeLayout> {
    let (theta, phi) = match name {
        "symmetric12" => symmetric12(),
        "quadrant12" => quadrant12(),
        _ => return Err(Error::Parameter(format!("unknown layout preset `{name}`"))),
    };
    let m = theta.len();
    ElectrodeLayout::new(theta, phi, ELECTRODE_RADIUS, CONTACT_SHAPE, vec![CONTACT_PEAK; m])
}

/// Closed half-space `{x : normal·x >= offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn contains(&self, x: &Vec3) -> bool {
        self.normal.dot(x) >= self.offset
    }
}

/// Nodes of one tissue cut by half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOfInterest {
    pub region: Region,
    pub halfspaces: Vec<HalfSpace>,
}

impl RegionOfInterest {
    /// Brain above `z = z_min`.
    pub fn brain_above(z_min: f64) -> Self {
        RegionOfInterest {
            region: Region::Brain,
            halfspaces: vec![HalfSpace {
                normal: Vec3::z(),
                offset: z_min,
            }],
        }
    }

    /// Brain above `z = z_min` restricted to `x <= 0, y <= 0`.
    pub fn brain_quadrant(z_min: f64) -> Self {
        let mut roi = Self::brain_above(z_min);
        roi.halfspaces.push(HalfSpace {
            normal: -Vec3::x(),
            offset: 0.0,
        });
        roi.halfspaces.push(HalfSpace {
            normal: -Vec3::y(),
            offset: 0.0,
        });
        roi
    }

    /// Node mask: nodes touching the tissue and lying in every half-space.
    pub fn mask(&self, mesh: &SimplicialMesh) -> Vec<bool> {
        let tissue = mesh.region_nodes(self.region);
        mesh.nodes()
            .iter()
            .zip(tissue)
            .map(|(x, t)| t && self.halfspaces.iter().all(|h| h.contains(x)))
            .collect()
    }

    /// Mean of the masked node coordinates.
    pub fn centroid(&self, mesh: &SimplicialMesh) -> Result<Vec3> {
        let mask = self.mask(mesh);
        let (sum, count) = mesh
            .nodes()
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .fold((Vec3::zeros(), 0usize), |(s, c), (x, _)| (s + x, c + 1));
        if count == 0 {
            return Err(Error::Parameter("region of interest selects no nodes".into()));
        }
        Ok(sum / count as f64)
    }
}

/// Mean angle between the electrode centre directions and the direction of
/// `target`, both seen from the origin.
pub fn mean_angular_distance(centers: &[Vec3], target: &Vec3) -> f64 {
    let t = target.normalize();
    centers
        .iter()
        .map(|c| c.normalize().dot(&t).clamp(-1.0, 1.0).acos())
        .sum::<f64>()
        / centers.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::HeadSurface;

    #[test]
    fn presets_are_feasible() {
        let s = HeadSurface::sphere(0.09).unwrap();
        for name in ["symmetric12", "quadrant12"] {
            let l = layout_by_name(name).unwrap();
            assert_eq!(l.count(), 12);
            l.check_separation(&s).unwrap();
        }
        assert!(layout_by_name("ring7").is_err());
    }

    #[test]
    fn symmetric_preset_is_mirror_closed() {
        let (theta, phi) = symmetric12();
        for (t, p) in theta.iter().zip(&phi) {
            let mirrored = (2.0 * PI - p).rem_euclid(2.0 * PI);
            assert!(theta
                .iter()
                .zip(&phi)
                .any(|(t2, p2)| (t - t2).abs() < 1e-12 && ((p2 - mirrored).abs() < 1e-12)));
        }
    }
}
