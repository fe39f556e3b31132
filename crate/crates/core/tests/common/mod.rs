#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3};
use nearlight_core::photomodel::SampleParams;
use nearlight_core::recon_io::VignetteModel;
use nearlight_core::simulator::{simulate, Dataset, SimulationSpec, Surface};
use nearlight_core::{CalibrationRig, CameraPose, Reconstruction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One randomly drawn photometric sample, in up-to-scale units.
pub struct ModelCase {
    pub x: Vector3<f64>,
    pub n: Vector3<f64>,
    pub pose: CameraPose,
    pub params: SampleParams,
    pub rig: CalibrationRig,
    pub vignette: f64,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Endoscopy-like sample: camera 3 to 30 mm from the point, one to three
/// lights within 5 mm, normal within 80 degrees of the viewing direction.
pub fn random_case(rng: &mut ChaCha8Rng) -> ModelCase {
    let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
    let rotation = UnitQuaternion::from_euler_angles(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    )
    .to_rotation_matrix()
    .into_inner();
    let center_metric = Vector3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
    let depth = rng.random_range(0.003..0.03);
    let x_metric = center_metric + rotation * (unit_vector(rng).xy().push(0.0) * 0.3 * depth + Vector3::new(0.0, 0.0, depth));
    let view = (center_metric - x_metric).normalize();
    let n = loop {
        let candidate = (view + unit_vector(rng) * rng.random_range(0.0..1.5)).normalize();
        if candidate.dot(&view) > 0.17 {
            break candidate;
        }
    };
    let n_lights = rng.random_range(1..=3);
    let lights = (0..n_lights)
        .map(|_| unit_vector(rng) * rng.random_range(0.001..0.005))
        .collect();
    let gamma = if rng.random_bool(0.3) { 1.0 } else { rng.random_range(1.0..2.6) };
    ModelCase {
        x: x_metric / lambda,
        n,
        pose: CameraPose::new(1, rotation, center_metric / lambda),
        params: SampleParams {
            lambda,
            albedo: rng.random_range(1e-6..1e-4),
            gain: rng.random_range(0.5..2.0),
        },
        rig: CalibrationRig::new(lights, gamma, VignetteModel::none()).unwrap(),
        vignette: rng.random_range(0.3..=1.0),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Endoscope preset with the requested surface, distance, noise and scale.
pub fn dataset(surface: Surface, distance: f64, seed: u64, noise: f64, lambda_gt: f64) -> Dataset {
    let mut spec = SimulationSpec::endoscope(surface, distance, seed);
    spec.noise_sigma = noise;
    spec.lambda_gt = lambda_gt;
    simulate(&spec).unwrap()
}

/// Polyp-like bump scaled with the viewing distance.
pub fn bump(distance: f64) -> Surface {
    Surface::SphereCap {
        radius: 0.3 * distance,
        height: 0.15 * distance,
    }
}

/// Copy of the dataset geometry carrying its true normals.
pub fn with_true_normals(ds: &Dataset) -> Reconstruction {
    let mut recon = ds.recon.clone();
    for (id, n) in &ds.truth.normals {
        if let Some(p) = recon.points.get_mut(id) {
            p.normal = Some(*n);
        }
    }
    recon
}

pub fn rel_err(estimate: f64, truth: f64) -> f64 {
    (estimate / truth - 1.0).abs()
}
