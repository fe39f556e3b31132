//! Near-light photometric forward model.
//!
//! A Lambertian point at up-to-scale position `x` with unit normal `n`, seen
//! from a camera at up-to-scale center `c` with rotation `R`, is lit by point
//! lights rigidly attached to the camera at metric offsets `b_j`. With metric
//! scale `lambda`, scaled albedo `rho` and relative gain `g`:
//!
//! ```text
//! u_j = R b_j + lambda c - lambda x            (point -> light, meters)
//! S   = sum_j max(0, n . u_j) / |u_j|^3        (cos(theta_j) / d_j^2)
//! I   = (rho g V S / pi)^(1 / gamma)
//! ```
//!
//! The normal is oriented toward the cameras, so a lit point has `n . u_j > 0`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::recon_io::{CalibrationRig, CameraPose};

/// Lights closer than this to the point are treated as coincident.
pub const MIN_LIGHT_DISTANCE_M: f64 = 1e-9;

/// The unknowns of the photometric problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricParams {
    pub lambda: f64,
    pub albedos: BTreeMap<u64, f64>,
    pub gains: BTreeMap<u32, f64>,
}

/// Per-sample slice of [`PhotometricParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleParams {
    pub lambda: f64,
    pub albedo: f64,
    pub gain: f64,
}

/// Derivatives of the predicted intensity at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub intensity: f64,
    pub d_lambda: f64,
    pub d_albedo: f64,
    pub d_gain: f64,
    /// Zero radiance: derivatives are reported as zero and the sample should
    /// be left out of the normal equations.
    pub flagged: bool,
}

/// Light `j` in world coordinates: `R b_j + lambda c`.
pub fn light_position_world(pose: &CameraPose, offset: &Vector3<f64>, lambda: f64) -> Vector3<f64> {
    pose.rotation * offset + pose.center * lambda
}

/// Geometric irradiance `S` and its derivative in `lambda`.
fn irradiance_with_derivative(
    x: &Vector3<f64>,
    n: &Vector3<f64>,
    pose: &CameraPose,
    lambda: f64,
    rig: &CalibrationRig,
) -> Result<(f64, f64)> {
    let w = pose.center - x;
    let mut s = 0.0;
    let mut ds = 0.0;
    for b in &rig.light_offsets {
        let u = pose.rotation * b + w * lambda;
        let d2 = u.norm_squared();
        let d = d2.sqrt();
        if d < MIN_LIGHT_DISTANCE_M {
            return Err(Error::SingularGeometry);
        }
        let nu = n.dot(&u);
        if nu <= 0.0 {
            continue;
        }
        let d3 = d2 * d;
        s += nu / d3;
        ds += n.dot(&w) / d3 - 3.0 * nu * u.dot(&w) / (d3 * d2);
    }
    Ok((s, ds))
}

/// Sum over lights of `cos(theta) / d^2`, before albedo, gain, vignetting and gamma.
pub fn geometric_irradiance(
    x: &Vector3<f64>,
    n: &Vector3<f64>,
    pose: &CameraPose,
    lambda: f64,
    rig: &CalibrationRig,
) -> Result<f64> {
    irradiance_with_derivative(x, n, pose, lambda, rig).map(|(s, _)| s)
}

/// Predicted gamma-compressed intensity. Not clipped at 1.
pub fn predict_intensity(
    x: &Vector3<f64>,
    n: &Vector3<f64>,
    pose: &CameraPose,
    params: SampleParams,
    rig: &CalibrationRig,
    vignette_factor: f64,
) -> Result<f64> {
    let s = geometric_irradiance(x, n, pose, params.lambda, rig)?;
    let radiance = params.albedo * params.gain * vignette_factor * s / PI;
    Ok(radiance.max(0.0).powf(1.0 / rig.gamma))
}

pub fn partials(
    x: &Vector3<f64>,
    n: &Vector3<f64>,
    pose: &CameraPose,
    params: SampleParams,
    rig: &CalibrationRig,
    vignette_factor: f64,
) -> Result<Partials> {
    let (s, ds) = irradiance_with_derivative(x, n, pose, params.lambda, rig)?;
    let radiance = params.albedo * params.gain * vignette_factor * s / PI;
    if radiance <= 0.0 {
        return Ok(Partials {
            intensity: 0.0,
            d_lambda: 0.0,
            d_albedo: 0.0,
            d_gain: 0.0,
            flagged: true,
        });
    }
    let inv_gamma = 1.0 / rig.gamma;
    let intensity = radiance.powf(inv_gamma);
    Ok(Partials {
        intensity,
        d_lambda: intensity * inv_gamma * ds / s,
        d_albedo: intensity * inv_gamma / params.albedo,
        d_gain: intensity * inv_gamma / params.gain,
        flagged: false,
    })
}

/// Huber residual in IRLS form: the raw residual and its weight.
pub fn robust_residual(predicted: f64, observed: f64, epsilon: f64) -> (f64, f64) {
    let r = predicted - observed;
    let a = r.abs();
    let w = if a <= epsilon { 1.0 } else { epsilon / a };
    (r, w)
}

/// Huber loss: `r^2 / 2` inside `epsilon`, linear outside.
pub fn huber_cost(residual: f64, epsilon: f64) -> f64 {
    let a = residual.abs();
    if a <= epsilon {
        0.5 * a * a
    } else {
        epsilon * (a - 0.5 * epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon_io::VignetteModel;
    use nalgebra::Matrix3;

    fn single_light(b: Vector3<f64>, gamma: f64) -> CalibrationRig {
        CalibrationRig::new(vec![b], gamma, VignetteModel::none()).unwrap()
    }

    fn origin_pose() -> CameraPose {
        CameraPose::new(1, Matrix3::identity(), Vector3::zeros())
    }

    const FACING: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

    fn unity(lambda: f64) -> SampleParams {
        SampleParams { lambda, albedo: PI, gain: 1.0 }
    }

    #[test]
    fn light_position_examples() {
        let p = origin_pose();
        let b = Vector3::new(0.003, 0.0, 0.0);
        assert_eq!(light_position_world(&p, &b, 7.0), b);
        let p2 = CameraPose::new(1, Matrix3::identity(), Vector3::new(0.0, 0.0, -2.0));
        assert_eq!(light_position_world(&p2, &Vector3::zeros(), 3.0), Vector3::new(0.0, 0.0, -6.0));
        // 90 degree yaw about +z maps camera x onto world y.
        let yaw = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let p3 = CameraPose::new(1, yaw, Vector3::zeros());
        let l = light_position_world(&p3, &b, 1.0);
        assert!((l - Vector3::new(0.0, 0.003, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn unity_configuration() {
        let rig = single_light(Vector3::zeros(), 1.0);
        let x = Vector3::new(0.0, 0.0, 1.0);
        let i = predict_intensity(&x, &FACING, &origin_pose(), unity(1.0), &rig, 1.0).unwrap();
        assert!((i - 1.0).abs() < 1e-15);
        let x2 = Vector3::new(0.0, 0.0, 2.0);
        let i2 = predict_intensity(&x2, &FACING, &origin_pose(), unity(1.0), &rig, 1.0).unwrap();
        assert!((i2 - 0.25).abs() < 1e-15);
        let p = partials(&x, &FACING, &origin_pose(), unity(1.0), &rig, 1.0).unwrap();
        assert!((p.d_albedo - 1.0 / PI).abs() < 1e-15);
        assert!((p.d_gain - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_compression_applied_last() {
        let rig = single_light(Vector3::zeros(), 2.2);
        let x = Vector3::new(0.0, 0.0, 1.0);
        let params = SampleParams { lambda: 1.0, albedo: PI * 0.25, gain: 1.0 };
        let i = predict_intensity(&x, &FACING, &origin_pose(), params, &rig, 1.0).unwrap();
        assert!((i - 0.25f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert!((i - 0.5326).abs() < 1e-4);
    }

    #[test]
    fn back_facing_light_contributes_nothing() {
        let rig = single_light(Vector3::zeros(), 1.0);
        let x = Vector3::new(0.0, 0.0, 1.0);
        let away = -FACING;
        let p = partials(&x, &away, &origin_pose(), unity(1.0), &rig, 1.0).unwrap();
        assert!(p.flagged);
        assert_eq!(p.intensity, 0.0);
        assert_eq!(p.d_lambda, 0.0);
    }

    #[test]
    fn coincident_light_is_singular() {
        let rig = single_light(Vector3::zeros(), 1.0);
        let r = predict_intensity(&Vector3::zeros(), &FACING, &origin_pose(), unity(1.0), &rig, 1.0);
        assert!(matches!(r, Err(Error::SingularGeometry)));
    }

    #[test]
    fn huber_branches() {
        let eps = 0.02;
        assert_eq!(robust_residual(0.51, 0.5, eps).1, 1.0);
        let (r, w) = robust_residual(0.5 + 2.0 * eps, 0.5, eps);
        assert!((r - 2.0 * eps).abs() < 1e-15);
        assert!((w - 0.5).abs() < 1e-12);
        assert!((huber_cost(eps, eps) - 0.5 * eps * eps).abs() < 1e-18);
    }
}
