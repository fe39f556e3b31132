use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Surface shapes. All lie around the plane `z = 0` and face `-z`, where the
/// cameras are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Surface {
    Plane,
    /// Spherical bump of `radius` protruding `height` toward the camera.
    SphereCap { radius: f64, height: f64 },
    /// `z = amplitude * sin(2 pi x / wavelength) * sin(2 pi y / wavelength)`.
    SinusoidalRelief { amplitude: f64, wavelength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlbedoField {
    Constant { value: f64 },
    /// `low` for `x < 0`, `high` otherwise.
    TwoTone { low: f64, high: f64 },
    /// Linear in `x` across the patch.
    SmoothGradient { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub surface: Surface,
    /// Side of the square patch, meters.
    pub extent: f64,
    pub n_points: usize,
    pub albedo: AlbedoField,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 50 {
            return Err(Error::InvalidInput(format!("scene needs at least 50 points, got {}", self.n_points)));
        }
        if !(self.extent > 0.0) {
            return Err(Error::InvalidInput("scene extent must be positive".into()));
        }
        let albedo_ok = |v: f64| v > 0.0 && v <= 1.0;
        let ok = match self.albedo {
            AlbedoField::Constant { value } => albedo_ok(value),
            AlbedoField::TwoTone { low, high } => albedo_ok(low) && albedo_ok(high),
            AlbedoField::SmoothGradient { from, to } => albedo_ok(from) && albedo_ok(to),
        };
        if !ok {
            return Err(Error::InvalidInput("albedo values must lie in (0, 1]".into()));
        }
        match self.surface {
            Surface::SphereCap { radius, height } => {
                if !(radius > 0.0 && height > 0.0 && height <= 2.0 * radius) {
                    return Err(Error::InvalidInput("sphere cap needs 0 < height <= 2 radius".into()));
                }
                if cap_footprint(radius, height) >= 0.5 * self.extent {
                    return Err(Error::InvalidInput("sphere cap footprint does not fit in the patch".into()));
                }
            }
            Surface::SinusoidalRelief { wavelength, .. } => {
                if !(wavelength > 0.0) {
                    return Err(Error::InvalidInput("relief wavelength must be positive".into()));
                }
            }
            Surface::Plane => {}
        }
        Ok(())
    }
}

/// Metric point cloud with analytic normals and true (unscaled) albedos.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub positions: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub albedos: Vec<f64>,
    /// Points on the raised feature (sphere cap), if any.
    pub on_feature: Vec<bool>,
    pub extent: f64,
}

fn cap_footprint(radius: f64, height: f64) -> f64 {
    let c = radius - height;
    (radius * radius - c * c).max(0.0).sqrt()
}

fn albedo_at(field: &AlbedoField, x: f64, extent: f64) -> f64 {
    match *field {
        AlbedoField::Constant { value } => value,
        AlbedoField::TwoTone { low, high } => {
            if x < 0.0 {
                low
            } else {
                high
            }
        }
        AlbedoField::SmoothGradient { from, to } => {
            let t = (x / extent + 0.5).clamp(0.0, 1.0);
            from + (to - from) * t
        }
    }
}

/// Exactly `count` jittered-grid samples over the square, skipping cells
/// whose center fails `keep`. Surplus cells are dropped at random.
fn jittered_square(count: usize, extent: f64, keep_fraction: f64, keep: impl Fn(f64, f64) -> bool, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    if count == 0 {
        return Vec::new();
    }
    let mut g = ((count as f64 / keep_fraction).sqrt().ceil() as usize).max(1);
    loop {
        let cell = extent / g as f64;
        let cells: Vec<(usize, usize)> = (0..g)
            .flat_map(|i| (0..g).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                let cx = -0.5 * extent + (i as f64 + 0.5) * cell;
                let cy = -0.5 * extent + (j as f64 + 0.5) * cell;
                keep(cx, cy)
            })
            .collect();
        if cells.len() < count {
            g += 1;
            continue;
        }
        let mut chosen = cells;
        chosen.shuffle(rng);
        chosen.truncate(count);
        chosen.sort_unstable();
        return chosen
            .into_iter()
            .map(|(i, j)| {
                let x = -0.5 * extent + (i as f64 + rng.random::<f64>()) * cell;
                let y = -0.5 * extent + (j as f64 + rng.random::<f64>()) * cell;
                (x, y)
            })
            .collect();
    }
}

/// Sample the surface and evaluate normals and albedos.
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.extent;
    let mut scene = Scene {
        positions: Vec::with_capacity(spec.n_points),
        normals: Vec::with_capacity(spec.n_points),
        albedos: Vec::with_capacity(spec.n_points),
        on_feature: Vec::with_capacity(spec.n_points),
        extent: e,
    };
    let flat = Vector3::new(0.0, 0.0, -1.0);

    match spec.surface {
        Surface::Plane => {
            for (x, y) in jittered_square(spec.n_points, e, 1.0, |_, _| true, &mut rng) {
                scene.positions.push(Vector3::new(x, y, 0.0));
                scene.normals.push(flat);
                scene.on_feature.push(false);
            }
        }
        Surface::SinusoidalRelief { amplitude, wavelength } => {
            let k = std::f64::consts::TAU / wavelength;
            for (x, y) in jittered_square(spec.n_points, e, 1.0, |_, _| true, &mut rng) {
                let z = amplitude * (k * x).sin() * (k * y).sin();
                let fx = amplitude * k * (k * x).cos() * (k * y).sin();
                let fy = amplitude * k * (k * x).sin() * (k * y).cos();
                scene.positions.push(Vector3::new(x, y, z));
                scene.normals.push(Vector3::new(fx, fy, -1.0).normalize());
                scene.on_feature.push(false);
            }
        }
        Surface::SphereCap { radius, height } => {
            let a = cap_footprint(radius, height);
            let center = Vector3::new(0.0, 0.0, radius - height);
            let cap_area = std::f64::consts::TAU * radius * height;
            let plane_area = e * e - std::f64::consts::PI * a * a;
            let n_cap = ((spec.n_points as f64) * cap_area / (cap_area + plane_area)).round() as usize;
            let n_cap = n_cap.clamp(1, spec.n_points - 1);
            let n_plane = spec.n_points - n_cap;
            let keep_fraction = plane_area / (e * e);
            for (x, y) in jittered_square(n_plane, e, keep_fraction, |x, y| x * x + y * y > a * a, &mut rng) {
                // Jitter may push a sample across the rim; clamp it back outside.
                let r = (x * x + y * y).sqrt();
                let (x, y) = if r <= a { (x * a * 1.000001 / r, y * a * 1.000001 / r) } else { (x, y) };
                scene.positions.push(Vector3::new(x, y, 0.0));
                scene.normals.push(flat);
                scene.on_feature.push(false);
            }
            // Equal-area cells: uniform in z and azimuth on the sphere zone.
            let rings = ((n_cap as f64).sqrt().round() as usize).max(1);
            let z_apex = center.z - radius;
            for ring in 0..rings {
                let per = n_cap / rings + usize::from(ring < n_cap % rings);
                let phase = rng.random::<f64>();
                for s in 0..per {
                    let t = (ring as f64 + rng.random::<f64>()) / rings as f64;
                    let z = z_apex + t * height;
                    let phi = std::f64::consts::TAU * (s as f64 + phase) / per as f64;
                    let dz = z - center.z;
                    let rho = (radius * radius - dz * dz).max(0.0).sqrt();
                    let p = Vector3::new(rho * phi.cos(), rho * phi.sin(), z);
                    scene.positions.push(p);
                    scene.normals.push((p - center) / radius);
                    scene.on_feature.push(true);
                }
            }
        }
    }
    scene.albedos = scene.positions.iter().map(|p| albedo_at(&spec.albedo, p.x, e)).collect();
    Ok(scene)
}
