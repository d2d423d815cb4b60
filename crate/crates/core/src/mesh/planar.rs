use std::collections::HashMap;

use nalgebra::Vector2;

use super::Region;
use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Triangulated planar domain with segment boundary, validated against the
/// same invariants as the tetrahedral mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMesh {
    nodes: Vec<Vec2>,
    simplices: Vec<[usize; 3]>,
    regions: Vec<Region>,
    boundary: Vec<[usize; 2]>,
    interior: Vec<usize>,
}

fn signed_area(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
}

impl PlanarMesh {
    pub fn new(
        nodes: Vec<Vec2>,
        simplices: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary: Vec<[usize; 2]>,
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
        let out_of_range = simplices
            .iter()
            .flat_map(|s| s.iter())
            .chain(boundary.iter().flat_map(|f| f.iter()))
            .find(|&&i| i >= n);
        if let Some(&bad) = out_of_range {
            return Err(Error::validation(
                "index-range",
                format!("node index {bad} but only {n} nodes exist"),
            ));
        }
        let mut edges: HashMap<(usize, usize), (u32, usize)> = HashMap::new();
        for (k, s) in simplices.iter().enumerate() {
            let area = signed_area(&nodes[s[0]], &nodes[s[1]], &nodes[s[2]]);
            if !(area > 0.0) {
                return Err(Error::validation(
                    "positive-orientation",
                    format!("triangle {k} has signed area {area:e}"),
                ));
            }
            for e in 0..3 {
                let (a, b) = (s[e], s[(e + 1) % 3]);
                let ent = edges.entry((a.min(b), a.max(b))).or_insert((0, s[(e + 2) % 3]));
                ent.0 += 1;
            }
        }
        let topo = edges.values().filter(|v| v.0 == 1).count();
        let mut seen = std::collections::HashSet::new();
        for (k, f) in boundary.iter().enumerate() {
            let key = (f[0].min(f[1]), f[0].max(f[1]));
            if !seen.insert(key) {
                return Err(Error::validation("boundary-tiling", format!("segment {k} listed twice")));
            }
            match edges.get(&key) {
                Some(&(1, opp)) => {
                    // outward: the opposite vertex lies to the left of the directed segment
                    if signed_area(&nodes[f[0]], &nodes[f[1]], &nodes[opp]) <= 0.0 {
                        return Err(Error::validation(
                            "facet-orientation",
                            format!("boundary segment {k} is not outward oriented"),
                        ));
                    }
                }
                _ => {
                    return Err(Error::validation(
                        "boundary-tiling",
                        format!("boundary segment {k} is not an edge of exactly one triangle"),
                    ))
                }
            }
        }
        if seen.len() != topo {
            return Err(Error::validation(
                "boundary-tiling",
                format!("{} segments listed but the topological boundary has {topo}", seen.len()),
            ));
        }
        let mut on_boundary = vec![false; n];
        for f in &boundary {
            on_boundary[f[0]] = true;
            on_boundary[f[1]] = true;
        }
        for (k, s) in simplices.iter().enumerate() {
            if regions[k] == Region::Brain && s.iter().any(|&i| on_boundary[i]) {
                return Err(Error::validation(
                    "brain-interior",
                    format!("brain triangle {k} touches the boundary"),
                ));
            }
        }
        let interior: Vec<usize> = (0..n).filter(|&i| !on_boundary[i]).collect();
        if interior.len() == n {
            return Err(Error::validation("interior-count", "mesh has no boundary nodes"));
        }
        Ok(PlanarMesh {
            nodes,
            simplices,
            regions,
            boundary,
            interior,
        })
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn simplices(&self) -> &[[usize; 3]] {
        &self.simplices
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn boundary_segments(&self) -> &[[usize; 2]] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn area(&self) -> f64 {
        self.simplices
            .iter()
            .map(|s| signed_area(&self.nodes[s[0]], &self.nodes[s[1]], &self.nodes[s[2]]))
            .sum()
    }
}
