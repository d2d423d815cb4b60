//! Structured three-layer ball phantom.
//!
//! The reference cube `[-1, 1]^3` carries a tensor grid whose breakpoints
//! include the layer interfaces. Each grid cell is split into six Kuhn
//! tetrahedra, with the main diagonal of every cell pointing away from the
//! origin so that the triangulation is invariant under reflections of the
//! coordinate axes. Nested cube shells are sent onto concentric spheres by an
//! equiangular cubed-sphere map, so the layer interfaces are conforming.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;

use super::{signed_volume, Region, SimplicialMesh, Vec3, TET_FACES};
use crate::error::{Error, Result};

/// Parameters of the layered ball phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredBall {
    pub outer_radius: f64,
    /// Inner and outer radius of the skull shell.
    pub skull_shell: [f64; 2],
    pub target_edge_length: f64,
    /// Vertical extent below the equatorial plane. Values smaller than
    /// `outer_radius` compress the lower hemisphere into a half-spheroid; the
    /// upper hemisphere, where electrodes live, stays spherical.
    pub flat_bottom_height: f64,
}

impl LayeredBall {
    pub fn validate(&self) -> Result<()> {
        let [r_in, r_out] = self.skull_shell;
        let finite = [self.outer_radius, r_in, r_out, self.target_edge_length, self.flat_bottom_height]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("phantom parameters must be finite".into()));
        }
        if !(0.0 < r_in && r_in < r_out && r_out < self.outer_radius) {
            return Err(Error::Parameter(format!(
                "radii must satisfy 0 < r_in < r_out < outer_radius, got {r_in}, {r_out}, {}",
                self.outer_radius
            )));
        }
        if !(self.target_edge_length > 0.0) {
            return Err(Error::Parameter("target_edge_length must be positive".into()));
        }
        if !(self.flat_bottom_height > 0.0 && self.flat_bottom_height <= self.outer_radius) {
            return Err(Error::Parameter(format!(
                "flat_bottom_height must lie in (0, outer_radius], got {}",
                self.flat_bottom_height
            )));
        }
        Ok(())
    }

    /// Sorted grid coordinates on the reference axis.
    fn axis(&self) -> Vec<f64> {
        let a = self.outer_radius;
        let breaks = [0.0, self.skull_shell[0] / a, self.skull_shell[1] / a, 1.0];
        let mut half = vec![0.0];
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            let count = ((a * len / self.target_edge_length).round() as usize).max(1);
            for k in 1..=count {
                half.push(if k == count { w[1] } else { w[0] + len * k as f64 / count as f64 });
            }
        }
        let mut axis: Vec<f64> = half.iter().rev().map(|t| -t).collect();
        axis.extend_from_slice(&half[1..]);
        axis
    }

    fn map_to_phantom(&self, t: [f64; 3]) -> Vec3 {
        let s = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            return Vec3::zeros();
        }
        let w = Vec3::new(
            (FRAC_PI_4 * t[0] / s).tan(),
            (FRAC_PI_4 * t[1] / s).tan(),
            (FRAC_PI_4 * t[2] / s).tan(),
        );
        let mut p = w * (self.outer_radius * s / w.norm());
        if p.z < 0.0 {
            p.z *= self.flat_bottom_height / self.outer_radius;
        }
        p
    }
}

pub fn build_layered_ball_mesh(params: &LayeredBall) -> Result<SimplicialMesh> {
    params.validate()?;
    tessellate(params, params.axis())
}

/// Same phantom on a caller-chosen grid. `half_axis` lists reference radii in
/// `(0, 1]`, strictly increasing and ending at 1; layers without their own
/// breakpoints absorb into their neighbours.
pub fn build_ball_mesh_with_axis(params: &LayeredBall, half_axis: &[f64]) -> Result<SimplicialMesh> {
    params.validate()?;
    let ok = half_axis.last() == Some(&1.0)
        && half_axis[0] > 0.0
        && half_axis.windows(2).all(|w| w[0] < w[1]);
    if !ok {
        return Err(Error::Parameter("half_axis must increase strictly from above 0 to 1".into()));
    }
    let mut axis: Vec<f64> = half_axis.iter().rev().map(|t| -t).collect();
    axis.push(0.0);
    axis.extend_from_slice(half_axis);
    tessellate(params, axis)
}

fn tessellate(params: &LayeredBall, axis: Vec<f64>) -> Result<SimplicialMesh> {
    let n = axis.len();
    let a = params.outer_radius;
    let (s_in, s_out) = (params.skull_shell[0] / a, params.skull_shell[1] / a);
    let id = |i: usize, j: usize, k: usize| i + n * (j + n * k);

    let mut nodes = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                nodes.push(params.map_to_phantom([axis[i], axis[j], axis[k]]));
            }
        }
    }

    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut simplices = Vec::with_capacity(6 * (n - 1).pow(3));
    let mut regions = Vec::with_capacity(simplices.capacity());
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let lo = [i, j, k];
                // corner nearest to the origin and the direction away from it
                let mut near = [0usize; 3];
                let mut away = [0isize; 3];
                for d in 0..3 {
                    let centre = axis[lo[d]] + axis[lo[d] + 1];
                    if centre >= 0.0 {
                        near[d] = lo[d];
                        away[d] = 1;
                    } else {
                        near[d] = lo[d] + 1;
                        away[d] = -1;
                    }
                }
                let corner = |step: [usize; 3]| {
                    let g = |d: usize| (near[d] as isize + away[d] * step[d] as isize) as usize;
                    id(g(0), g(1), g(2))
                };
                for perm in PERMS {
                    let mut step = [0usize; 3];
                    let mut verts = [corner(step), 0, 0, 0];
                    for (slot, &d) in perm.iter().enumerate() {
                        step[d] = 1;
                        verts[slot + 1] = corner(step);
                    }
                    if signed_volume(verts.map(|v| &nodes[v])) < 0.0 {
                        verts.swap(2, 3);
                    }
                    let centroid = verts.iter().fold([0.0; 3], |mut c, &v| {
                        let (vi, vj, vk) = (v % n, (v / n) % n, v / (n * n));
                        c[0] += axis[vi] / 4.0;
                        c[1] += axis[vj] / 4.0;
                        c[2] += axis[vk] / 4.0;
                        c
                    });
                    let m = centroid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let region = if m < s_in {
                        Region::Brain
                    } else if m < s_out {
                        Region::Skull
                    } else {
                        Region::Skin
                    };
                    simplices.push(verts);
                    regions.push(region);
                }
            }
        }
    }

    let mut faces: HashMap<[usize; 3], ([usize; 3], u8)> = HashMap::with_capacity(simplices.len() * 3);
    for s in &simplices {
        for (local, _) in TET_FACES {
            let oriented = [s[local[0]], s[local[1]], s[local[2]]];
            let mut key = oriented;
            key.sort_unstable();
            faces.entry(key).and_modify(|e| e.1 += 1).or_insert((oriented, 1));
        }
    }
    let mut boundary: Vec<[usize; 3]> = faces.into_values().filter(|v| v.1 == 1).map(|v| v.0).collect();
    boundary.sort_unstable();

    SimplicialMesh::new(nodes, simplices, regions, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> LayeredBall {
        LayeredBall {
            outer_radius: 0.09,
            skull_shell: [0.07, 0.08],
            target_edge_length: 0.02,
            flat_bottom_height: 0.09,
        }
    }

    #[test]
    fn three_nonempty_regions() {
        let mesh = build_layered_ball_mesh(&example()).unwrap();
        for r in [Region::Skin, Region::Skull, Region::Brain] {
            assert!(mesh.regions().iter().any(|&x| x == r), "{r:?} empty");
        }
        assert!(mesh.interior_nodes().len() < mesh.node_count());
        for f in mesh.boundary_facets() {
            for &i in f {
                assert!((mesh.nodes()[i].norm() - 0.09).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reversed_shell_rejected() {
        let mut p = example();
        p.skull_shell = [0.08, 0.07];
        assert!(matches!(build_layered_ball_mesh(&p), Err(Error::Parameter(_))));
    }

    #[test]
    fn node_count_scales_with_refinement() {
        let count = |h: f64| {
            let mut p = example();
            p.target_edge_length = h;
            build_layered_ball_mesh(&p).unwrap().node_count()
        };
        let (c20, c10, c05) = (count(0.02), count(0.01), count(0.005));
        assert_eq!(c20, 13usize.pow(3));
        assert_eq!(c10, 19usize.pow(3));
        assert!(c10 > c20);
        // thin layers pin one interval at coarse sizes, so the cube law only
        // shows once every layer is subdivided
        let ratio = c05 as f64 / c10 as f64;
        assert!((8.0 * 0.7..8.0 * 1.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn flattened_bottom_keeps_upper_hemisphere() {
        let mut p = example();
        p.flat_bottom_height = 0.05;
        let mesh = build_layered_ball_mesh(&p).unwrap();
        let zmin = mesh.nodes().iter().map(|x| x.z).fold(f64::INFINITY, f64::min);
        assert!((zmin + 0.05).abs() < 1e-12);
        for f in mesh.boundary_facets() {
            for &i in f {
                let x = mesh.nodes()[i];
                if x.z >= 0.0 {
                    assert!((x.norm() - 0.09).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mesh_is_mirror_symmetric() {
        let mesh = build_layered_ball_mesh(&example()).unwrap();
        let map = mesh.mirror_map_y(1e-9).expect("mirror image of every node");
        assert!(map.iter().enumerate().all(|(i, &j)| map[j] == i));
    }
}
