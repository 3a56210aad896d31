//! Closed-form angle-preserving maps from the standard tube onto a torus of
//! major radius `R` and minor radius 1, wrapping either the height around
//! the major circle or the angle around the minor circle.

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::tube::TubeCoords;

/// Which tube direction wraps around the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BendMode {
    /// Tube height follows the major circle (the tube bends like a hose).
    Major,
    /// Tube angle follows the minor circle (the tube wraps the torus wall).
    Minor,
}

/// Largest admissible major radius when the height range `delta_z` wraps the
/// major circle: the bend must stay short of a full loop.
pub fn major_radius_bound(delta_z: f64) -> f64 {
    (1.0 + (std::f64::consts::TAU / delta_z).powi(2)).sqrt()
}

/// Smallest admissible major radius when the angle wraps the minor circle:
/// the height range must fit around the torus without overlap.
pub fn minor_radius_bound(delta_z: f64) -> f64 {
    (1.0 + (delta_z / std::f64::consts::TAU).powi(2)).sqrt()
}

/// Pick a radius inside the admissible range from a normalized parameter:
/// for the major mode `rho` in (0, 1) interpolates between the limits, for
/// the minor mode `rho` > 1 scales the lower bound.
pub fn admissible_radius(mode: BendMode, delta_z: f64, rho: f64) -> Result<f64> {
    if !(delta_z > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "height range {delta_z} must be positive"
        )));
    }
    match mode {
        BendMode::Major => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "major bend parameter {rho} outside (0, 1)"
                )));
            }
            Ok(1.0 + rho * (major_radius_bound(delta_z) - 1.0))
        }
        BendMode::Minor => {
            if !(rho > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "minor bend parameter {rho} must exceed 1"
                )));
            }
            Ok(rho * minor_radius_bound(delta_z))
        }
    }
}

/// The minor angle as a function of the conformal parameter `t`, satisfying
/// `d(theta)/dt = 2 (R + cos theta) / sqrt(R^2 - 1)` with `theta(0) = 0`.
/// Continuous and strictly increasing for all `t`; each advance of `t` by pi
/// wraps the minor circle once.
fn wrap_theta(t: f64, r: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let a = ((r + 1.0) / (r - 1.0)).sqrt();
    let k = (t / tau).round();
    let tw = t - tau * k;
    2.0 * ((a * tw.sin()).atan2(tw.cos()) + tau * k)
}

fn torus_point(r: f64, theta: f64, phi: f64) -> Point3<f64> {
    let ring = r + theta.cos();
    Point3::new(ring * phi.cos(), ring * phi.sin(), theta.sin())
}

/// Image of the tube point `(u, z_hat)` (height already shifted to start at
/// zero) on the torus of major radius `r`. The caller is responsible for
/// radius admissibility.
pub fn bend_point(mode: BendMode, r: f64, u: f64, z_hat: f64) -> Point3<f64> {
    let s = (r * r - 1.0).sqrt();
    match mode {
        BendMode::Major => {
            let theta = wrap_theta(s * z_hat / 2.0, r);
            torus_point(r, theta, u)
        }
        BendMode::Minor => {
            let theta = wrap_theta(u / 2.0, r);
            torus_point(r, theta, z_hat / s)
        }
    }
}

/// Bend a parameterized tube onto the torus of major radius `r`. The height
/// range of the coordinates determines admissibility: the major mode must
/// not wrap the major circle fully, the minor mode must not overlap itself.
/// The bottom boundary lands on the outer equator and the tube curls away
/// from it.
pub fn bend_tube(coords: &TubeCoords, mode: BendMode, r: f64) -> Result<Vec<Point3<f64>>> {
    if coords.is_empty() {
        return Err(Error::InvalidParameter("no coordinates to bend".into()));
    }
    let z_min = coords.z.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_max = coords.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dz = z_max - z_min;
    if !(dz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degenerate height range {dz}"
        )));
    }
    match mode {
        BendMode::Major => {
            let bound = major_radius_bound(dz);
            if !(r > 1.0 && r < bound) {
                return Err(Error::InadmissibleRadius {
                    r,
                    msg: format!("major bend needs a radius in (1, {bound:.6})"),
                });
            }
        }
        BendMode::Minor => {
            let bound = minor_radius_bound(dz);
            if !(r > bound) {
                return Err(Error::InadmissibleRadius {
                    r,
                    msg: format!("minor bend needs a radius above {bound:.6}"),
                });
            }
        }
    }
    Ok(coords
        .u
        .iter()
        .zip(&coords.z)
        .map(|(&u, &z)| bend_point(mode, r, u, z - z_min))
        .collect())
}
