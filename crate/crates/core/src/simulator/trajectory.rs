use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recon_io::CameraPose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// First camera's distance to the surface center, meters.
    pub distance: f64,
    pub n_views: usize,
    /// Standard deviation of the sideways camera offset, meters.
    pub lateral_jitter: f64,
    /// Standard deviation of the roll about the viewing axis, degrees.
    pub rotational_jitter: f64,
    /// Fraction of `distance` the camera advances toward the surface over
    /// the sequence, spread evenly across views.
    #[serde(default)]
    pub approach: f64,
    pub seed: u64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0) {
            return Err(Error::InvalidInput("trajectory distance must be positive".into()));
        }
        if self.n_views < 2 {
            return Err(Error::InvalidInput(format!(
                "trajectory needs at least 2 views (n_views >= 2), got {}",
                self.n_views
            )));
        }
        if !(0.0..1.0).contains(&self.approach) {
            return Err(Error::InvalidInput("approach must lie in [0, 1)".into()));
        }
        if self.lateral_jitter < 0.0 || self.rotational_jitter < 0.0 {
            return Err(Error::InvalidInput("jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Camera-to-world rotation whose +z axis points from `eye` to `target`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let f = (target - eye).normalize();
    let up = if f.y.abs() < 0.99 { Vector3::y() } else { Vector3::x() };
    let x = up.cross(&f).normalize();
    let y = f.cross(&x);
    Matrix3::from_columns(&[x, y, f])
}

/// Metric camera poses facing the surface center at the origin.
///
/// View 1 sits on the surface normal axis at `distance`; later views advance
/// toward the surface, are displaced sideways, re-aimed at the center, and
/// rolled about the viewing axis.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<Vec<CameraPose>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lateral = Normal::new(0.0, spec.lateral_jitter).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let roll = Normal::new(0.0, spec.rotational_jitter.to_radians()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let target = Vector3::zeros();
    let base = Vector3::new(0.0, 0.0, -spec.distance);
    let mut poses = Vec::with_capacity(spec.n_views);
    for k in 0..spec.n_views {
        let (center, rotation) = if k == 0 {
            (base, look_at(&base, &target))
        } else {
            let advance = spec.approach * spec.distance * k as f64 / (spec.n_views - 1) as f64;
            let c = base + Vector3::new(lateral.sample(&mut rng), lateral.sample(&mut rng), advance);
            let r = look_at(&c, &target);
            let axis = Unit::new_normalize(r.column(2).into_owned());
            let rolled = Rotation3::from_axis_angle(&axis, roll.sample(&mut rng)).matrix() * r;
            (c, rolled)
        };
        poses.push(CameraPose::new(k as u32 + 1, rotation, center));
    }
    Ok(poses)
}
