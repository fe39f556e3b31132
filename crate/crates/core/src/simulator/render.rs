//! Forward rendering of sampled intensities.
//!
//! Works directly in metric world coordinates and evaluates each light's
//! contribution as `cos(theta) / d^2`. It deliberately shares no code with
//! [`crate::photomodel`] so that each can serve as the other's oracle.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::recon_io::{CalibrationRig, CameraPose, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Gaussian noise standard deviation in gamma-compressed intensity.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Light intensity shared by all sources; folded into the scaled albedos.
    pub light_power: f64,
    /// Half field of view, degrees. Also normalizes the vignette radius.
    pub half_fov_deg: f64,
    /// Fraction of samples forced to full white to emulate specular highlights.
    pub specular_fraction: f64,
}

impl RenderSpec {
    /// Light power that puts a unit-albedo, head-on point at `distance`
    /// at linear radiance `target`.
    pub fn auto_light_power(distance: f64, n_lights: usize, target: f64) -> f64 {
        target * PI * distance * distance / n_lights.max(1) as f64
    }
}

/// A rendered sample with its noise-free value kept for tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedSample {
    pub point_index: usize,
    pub view_index: usize,
    pub clean: f64,
    pub observation: Observation,
}

/// Sum over visible lights of `cos(theta) / d^2` at a metric point.
fn irradiance(point: &Vector3<f64>, normal: &Vector3<f64>, pose: &CameraPose, rig: &CalibrationRig) -> Option<f64> {
    let mut total = 0.0;
    let mut lit = false;
    for offset in &rig.light_offsets {
        let light = pose.center + pose.rotation * offset;
        let to_light = light - point;
        let dist_sq = to_light.dot(&to_light);
        let cos = normal.dot(&to_light) / dist_sq.sqrt();
        if cos > 0.0 {
            lit = true;
            total += cos / dist_sq;
        }
    }
    lit.then_some(total)
}

/// Noise-free intensity of a metric point, or `None` when it is not visible.
pub fn clean_intensity(
    point: &Vector3<f64>,
    normal: &Vector3<f64>,
    scaled_albedo: f64,
    gain: f64,
    pose: &CameraPose,
    rig: &CalibrationRig,
    vignette: f64,
) -> Option<f64> {
    let e = irradiance(point, normal, pose, rig)?;
    let radiance = scaled_albedo * gain * vignette * e / PI;
    Some(radiance.powf(1.0 / rig.gamma))
}

/// Angle off the optical axis normalized by the half field of view,
/// or `None` behind the camera or outside the field of view.
fn view_radius(point: &Vector3<f64>, pose: &CameraPose, half_fov_deg: f64) -> Option<f64> {
    let local = pose.rotation.transpose() * (point - pose.center);
    if local.z <= 0.0 {
        return None;
    }
    let angle = local.xy().norm().atan2(local.z);
    let r = angle / half_fov_deg.to_radians();
    (r <= 1.0).then_some(r)
}

/// Render every visible (point, view) pair. Sample noise is drawn from a
/// ChaCha stream keyed by the sample index, so parallel order never matters.
pub fn render(
    scene: &Scene,
    poses: &[CameraPose],
    rig: &CalibrationRig,
    gains: &[f64],
    spec: &RenderSpec,
) -> Vec<RenderedSample> {
    let n_views = poses.len();
    (0..scene.positions.len() * n_views)
        .into_par_iter()
        .filter_map(|idx| {
            let (i, k) = (idx / n_views, idx % n_views);
            let pose = &poses[k];
            let x = &scene.positions[i];
            let radius = view_radius(x, pose, spec.half_fov_deg)?;
            let vignette = rig.vignette.evaluate(radius);
            let albedo = scene.albedos[i] * spec.light_power;
            let clean = clean_intensity(x, &scene.normals[i], albedo, gains[k], pose, rig, vignette)?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(idx as u64);
            let noise: f64 = rng.sample(StandardNormal);
            let specular = spec.specular_fraction > 0.0 && rng.random::<f64>() < spec.specular_fraction;
            let intensity = if specular {
                1.0
            } else {
                (clean + spec.noise_sigma * noise).clamp(0.0, 1.0)
            };
            Some(RenderedSample {
                point_index: i,
                view_index: k,
                clean,
                observation: Observation {
                    point_id: i as u64 + 1,
                    image_id: pose.image_id,
                    intensity,
                    vignette_factor: vignette,
                },
            })
        })
        .collect()
}
