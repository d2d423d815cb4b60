use crate::error::{Error, Result};
use crate::mesh::{build_layered_ball_mesh, ElementGeometry, HeadSurface, LayeredBall, Region, SimplicialMesh};

/// A meshed phantom together with its smooth surface parametrization and
/// cached element geometry.
#[derive(Debug, Clone)]
pub struct HeadModel {
    mesh: SimplicialMesh,
    geometry: Vec<ElementGeometry>,
    surface: HeadSurface,
}

/// Conductivity of each tissue, S/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConductivity {
    pub skin: f64,
    pub skull: f64,
    pub brain: f64,
}

impl LayerConductivity {
    pub fn of(&self, region: Region) -> f64 {
        match region {
            Region::Skin => self.skin,
            Region::Skull => self.skull,
            Region::Brain => self.brain,
        }
    }
}

impl HeadModel {
    pub fn new(mesh: SimplicialMesh, surface: HeadSurface) -> Self {
        let geometry = mesh.element_geometry();
        HeadModel {
            mesh,
            geometry,
            surface,
        }
    }

    pub fn layered_ball(params: &LayeredBall) -> Result<Self> {
        let mesh = build_layered_ball_mesh(params)?;
        Ok(Self::new(mesh, HeadSurface::sphere(params.outer_radius)?))
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn surface(&self) -> &HeadSurface {
        &self.surface
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Nodal conductivity of the layered background. Nodes on a tissue
    /// interface take the smallest conductivity of the touching tissues.
    pub fn layered_conductivity(&self, layers: &LayerConductivity) -> Result<Vec<f64>> {
        for (name, v) in [("skin", layers.skin), ("skull", layers.skull), ("brain", layers.brain)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} conductivity must be positive, got {v}")));
            }
        }
        Ok(self
            .mesh
            .node_regions()
            .iter()
            .map(|rs| rs.iter().map(|&r| layers.of(r)).fold(f64::INFINITY, f64::min))
            .collect())
    }
}
