use std::f64::consts::{FRAC_PI_2, PI};

use super::Vec3;
use crate::error::{Error, Result};

/// Point, outward normal and coordinate tangents of the head surface at one
/// (polar, azimuthal) parameter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame {
    pub point: Vec3,
    pub normal: Vec3,
    pub t_theta: Vec3,
    pub t_phi: Vec3,
    /// Derivatives of the unit normal with respect to the two angles.
    pub dnormal_theta: Vec3,
    pub dnormal_phi: Vec3,
}

/// Smooth parametrization of the upper part of the phantom surface by polar
/// and azimuthal angles, with the pole on top of the phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSurface {
    radius: f64,
}

impl HeadSurface {
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("surface radius must be positive, got {radius}")));
        }
        Ok(HeadSurface { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn check_angles(theta: f64, phi: f64) -> Result<()> {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::Domain(format!("polar angle {theta} outside (0, pi/2)")));
        }
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::Domain(format!("azimuthal angle {phi} outside [0, 2pi)")));
        }
        Ok(())
    }

    /// Frame at `(theta, phi)` after checking the parameter domain.
    pub fn surface_frame(&self, theta: f64, phi: f64) -> Result<SurfaceFrame> {
        Self::check_angles(theta, phi)?;
        Ok(self.frame(theta, phi))
    }

    /// Frame without domain checks; the formulas extend smoothly past the
    /// parameter box, which finite-difference probes rely on.
    pub fn frame(&self, theta: f64, phi: f64) -> SurfaceFrame {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let r = self.radius;
        let normal = Vec3::new(st * cp, st * sp, ct);
        let t_theta = Vec3::new(ct * cp, ct * sp, -st) * r;
        let t_phi = Vec3::new(-st * sp, st * cp, 0.0) * r;
        SurfaceFrame {
            point: normal * r,
            normal,
            t_theta,
            t_phi,
            dnormal_theta: t_theta / r,
            dnormal_phi: t_phi / r,
        }
    }

    /// Inverse of the parametrization for points on (or radially projected
    /// onto) the surface.
    pub fn angles_of(&self, p: &Vec3) -> (f64, f64) {
        let theta = (p.z / p.norm()).clamp(-1.0, 1.0).acos();
        let phi = p.y.atan2(p.x).rem_euclid(2.0 * PI);
        (theta, phi)
    }
}
