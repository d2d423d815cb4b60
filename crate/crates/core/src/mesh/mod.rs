//! Tetrahedral meshes of the layered head phantom.
//!
//! A [`SimplicialMesh`] is validated on construction: every simplex is
//! positively oriented, the boundary facets tile the topological boundary
//! with outward orientation, and brain simplices stay away from the surface.

mod distance;
mod generate;
mod io;
mod mass;
mod planar;
mod surface;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub use distance::{boundary_distance, point_triangle_distance};
pub use generate::{build_ball_mesh_with_axis, build_layered_ball_mesh, LayeredBall};
pub use io::{load_mesh, read_mesh, save_mesh, save_planar_mesh, write_mesh, write_planar_mesh, MeshFile};
pub use mass::{mass_matrix, mass_matrix_on};
pub use planar::{PlanarMesh, Vec2};
pub use surface::{HeadSurface, SurfaceFrame};

pub type Vec3 = Vector3<f64>;

/// Tissue label of a simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Skin = 0,
    Skull = 1,
    Brain = 2,
}

impl Region {
    pub fn from_code(code: u8) -> Option<Region> {
        match code {
            0 => Some(Region::Skin),
            1 => Some(Region::Skull),
            2 => Some(Region::Brain),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Volume and barycentric-coordinate gradients of one tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub volume: f64,
    pub gradients: [Vec3; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    nodes: Vec<Vec3>,
    simplices: Vec<[usize; 4]>,
    regions: Vec<Region>,
    boundary: Vec<[usize; 3]>,
    on_boundary: Vec<bool>,
    interior: Vec<usize>,
}

pub(crate) fn signed_volume(p: [&Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

fn sorted3(f: [usize; 3]) -> [usize; 3] {
    let mut s = f;
    s.sort_unstable();
    s
}

/// The four faces of a tetrahedron, each paired with the local index of the
/// opposite vertex.
pub(crate) const TET_FACES: [([usize; 3], usize); 4] =
    [([1, 2, 3], 0), ([0, 3, 2], 1), ([0, 1, 3], 2), ([0, 2, 1], 3)];

impl SimplicialMesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        nodes: Vec<Vec3>,
        simplices: Vec<[usize; 4]>,
        regions: Vec<Region>,
        boundary: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let n = nodes.len();
        if simplices.len() != regions.len() {
            return Err(Error::validation(
                "region-partition",
                format!("{} simplices but {} region labels", simplices.len(), regions.len()),
            ));
        }
        if simplices.is_empty() {
            return Err(Error::validation("non-empty", "mesh has no simplices"));
        }
        for (k, s) in simplices.iter().enumerate() {
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                return Err(Error::validation(
                    "index-range",
                    format!("simplex {k} references node {bad} but only {n} nodes exist"),
                ));
            }
            let mut sorted = *s;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::validation(
                    "positive-orientation",
                    format!("simplex {k} repeats a vertex"),
                ));
            }
            let vol = signed_volume([&nodes[s[0]], &nodes[s[1]], &nodes[s[2]], &nodes[s[3]]]);
            if !(vol > 0.0) {
                return Err(Error::validation(
                    "positive-orientation",
                    format!("simplex {k} has signed volume {vol:e}"),
                ));
            }
        }
        for (k, f) in boundary.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::validation(
                    "index-range",
                    format!("boundary facet {k} references node {bad} but only {n} nodes exist"),
                ));
            }
        }

        // face -> (count, owning simplex, opposite vertex)
        let mut faces: HashMap<[usize; 3], (u32, usize, usize)> = HashMap::with_capacity(simplices.len() * 3);
        for (k, s) in simplices.iter().enumerate() {
            for (local, opp) in TET_FACES {
                let key = sorted3([s[local[0]], s[local[1]], s[local[2]]]);
                let e = faces.entry(key).or_insert((0, k, s[opp]));
                e.0 += 1;
                if e.0 > 2 {
                    return Err(Error::validation(
                        "boundary-tiling",
                        format!("face {key:?} is shared by more than two simplices"),
                    ));
                }
            }
        }
        let topo_boundary = faces.values().filter(|v| v.0 == 1).count();
        let mut seen = HashMap::with_capacity(boundary.len());
        for (k, f) in boundary.iter().enumerate() {
            let key = sorted3(*f);
            if seen.insert(key, k).is_some() {
                return Err(Error::validation(
                    "boundary-tiling",
                    format!("boundary facet {k} is listed twice"),
                ));
            }
            match faces.get(&key) {
                Some(&(1, _, opp)) => {
                    let (a, b, c) = (&nodes[f[0]], &nodes[f[1]], &nodes[f[2]]);
                    let normal = (b - a).cross(&(c - a));
                    if normal.dot(&(a - nodes[opp])) <= 0.0 {
                        return Err(Error::validation(
                            "facet-orientation",
                            format!("boundary facet {k} is not outward oriented"),
                        ));
                    }
                }
                _ => {
                    return Err(Error::validation(
                        "boundary-tiling",
                        format!("boundary facet {k} ({f:?}) is not a face of exactly one simplex"),
                    ))
                }
            }
        }
        if seen.len() != topo_boundary {
            return Err(Error::validation(
                "boundary-tiling",
                format!(
                    "{} boundary facets listed but the topological boundary has {topo_boundary}",
                    seen.len()
                ),
            ));
        }

        let mut on_boundary = vec![false; n];
        for f in &boundary {
            for &i in f {
                on_boundary[i] = true;
            }
        }
        for (k, s) in simplices.iter().enumerate() {
            if regions[k] == Region::Brain && s.iter().any(|&i| on_boundary[i]) {
                return Err(Error::validation(
                    "brain-interior",
                    format!("brain simplex {k} touches the boundary"),
                ));
            }
        }
        let interior: Vec<usize> = (0..n).filter(|&i| !on_boundary[i]).collect();
        if interior.len() == n {
            return Err(Error::validation("interior-count", "mesh has no boundary nodes"));
        }

        Ok(SimplicialMesh {
            nodes,
            simplices,
            regions,
            boundary,
            on_boundary,
            interior,
        })
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn simplices(&self) -> &[[usize; 4]] {
        &self.simplices
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn boundary_facets(&self) -> &[[usize; 3]] {
        &self.boundary
    }

    /// Nodes that belong to no boundary facet, in increasing order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn simplex_count(&self) -> usize {
        self.simplices.len()
    }

    pub fn element_geometry(&self) -> Vec<ElementGeometry> {
        self.simplices
            .iter()
            .map(|s| {
                let p = s.map(|i| self.nodes[i]);
                let d = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
                let volume = d.determinant() / 6.0;
                // validated meshes are never degenerate
                let inv = d.try_inverse().expect("degenerate simplex in validated mesh");
                let g1: Vec3 = inv.row(0).transpose();
                let g2: Vec3 = inv.row(1).transpose();
                let g3: Vec3 = inv.row(2).transpose();
                ElementGeometry {
                    volume,
                    gradients: [-(g1 + g2 + g3), g1, g2, g3],
                }
            })
            .collect()
    }

    /// Measure of the whole domain.
    pub fn volume(&self) -> f64 {
        self.simplices
            .iter()
            .map(|s| signed_volume([&self.nodes[s[0]], &self.nodes[s[1]], &self.nodes[s[2]], &self.nodes[s[3]]]))
            .sum()
    }

    /// Regions of all simplices incident to each node.
    pub fn node_regions(&self) -> Vec<Vec<Region>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (s, &r) in self.simplices.iter().zip(&self.regions) {
            for &i in s {
                if !out[i].contains(&r) {
                    out[i].push(r);
                }
            }
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    /// Nodes incident to at least one simplex of `region`.
    pub fn region_nodes(&self, region: Region) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for (s, &r) in self.simplices.iter().zip(&self.regions) {
            if r == region {
                for &i in s {
                    mask[i] = true;
                }
            }
        }
        mask
    }

    /// Unique edges as sorted node pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.simplices.len() * 6);
        for s in &self.simplices {
            for a in 0..4 {
                for b in a + 1..4 {
                    let (i, j) = (s[a].min(s[b]), s[a].max(s[b]));
                    edges.push((i, j));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Area of each boundary facet.
    pub fn facet_areas(&self) -> Vec<f64> {
        self.boundary
            .iter()
            .map(|f| {
                let (a, b, c) = (&self.nodes[f[0]], &self.nodes[f[1]], &self.nodes[f[2]]);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect()
    }

    /// Permutation `p` with `nodes[p[i]]` equal to `nodes[i]` reflected
    /// through the plane `y = 0`, when the node cloud has that symmetry.
    pub fn mirror_map_y(&self, tol: f64) -> Option<Vec<usize>> {
        let key = |p: &Vec3| -> (i64, i64, i64) {
            let q = |v: f64| (v / tol).round() as i64;
            (q(p.x), q(p.y), q(p.z))
        };
        let index: HashMap<_, _> = self.nodes.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        self.nodes
            .iter()
            .map(|p| index.get(&key(&Vec3::new(p.x, -p.y, p.z))).copied())
            .collect()
    }
}
