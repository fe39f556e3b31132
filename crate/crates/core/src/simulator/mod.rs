//! Synthetic near-light datasets with known metric scale.
//!
//! A parametric metric surface is viewed from a short jittered trajectory by
//! a camera carrying point lights, rendered with Lambertian shading plus
//! Gaussian pixel noise, and then emitted as an up-to-scale reconstruction by
//! dividing all lengths by the ground-truth scale.

mod render;
mod scene;
mod trajectory;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recon_io::{
    parse_calibration, parse_observations, read_sparse_model_dir, write_calibration, write_observations,
    write_sparse_model_dir, AlbedoStats, CalibrationRig, CameraPose, CameraRecord, ObservationSet, Reconstruction,
    ScenePoint, VignetteModel,
};

pub use render::{clean_intensity, render, RenderSpec, RenderedSample};
pub use scene::{make_scene, AlbedoField, Scene, SceneSpec, Surface};
pub use trajectory::{look_at, make_trajectory, TrajectorySpec};

/// Everything needed to regenerate a dataset bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    /// Light offsets in the camera frame, meters.
    pub lights: Vec<[f64; 3]>,
    pub gamma: f64,
    pub noise_sigma: f64,
    /// Shared light power; chosen from the viewing distance when absent.
    pub light_power: Option<f64>,
    pub half_fov_deg: f64,
    pub specular_fraction: f64,
    pub lambda_gt: f64,
    /// Non-reference gains are drawn log-uniformly in `[1 / spread, spread]`.
    pub gain_spread: f64,
    /// Std-dev of the Gaussian perturbation of points and camera centers, as a fraction of the extent.
    pub geometry_noise: f64,
    pub seed: u64,
}

/// Target linear radiance of a head-on unit-albedo point at the viewing distance.
const AUTO_EXPOSURE: f64 = 0.3;

impl SimulationSpec {
    /// Endoscope-like defaults: three lights on a 3 mm circle, gamma 2.2,
    /// four views closing in on the surface by half the distance, 4 gray
    /// levels of noise, 1000 points on a patch twice as wide as the distance.
    pub fn endoscope(surface: Surface, distance: f64, seed: u64) -> Self {
        let rig = CalibrationRig::endoscope_default();
        SimulationSpec {
            scene: SceneSpec {
                surface,
                extent: 2.0 * distance,
                n_points: 1000,
                albedo: AlbedoField::SmoothGradient { from: 0.45, to: 0.9 },
                seed,
            },
            trajectory: TrajectorySpec {
                distance,
                n_views: 4,
                lateral_jitter: 0.5 * distance,
                rotational_jitter: 5.0,
                approach: 0.5,
                seed,
            },
            lights: rig.light_offsets.iter().map(|b| [b.x, b.y, b.z]).collect(),
            gamma: rig.gamma,
            noise_sigma: 4.0 / 255.0,
            light_power: None,
            half_fov_deg: 70.0,
            specular_fraction: 0.0,
            lambda_gt: 1.0,
            gain_spread: 1.25,
            geometry_noise: 0.0,
            seed,
        }
    }

    pub fn rig(&self) -> Result<CalibrationRig> {
        CalibrationRig::new(
            self.lights.iter().map(|l| Vector3::new(l[0], l[1], l[2])).collect(),
            self.gamma,
            VignetteModel::none(),
        )
    }

    pub fn render_spec(&self) -> RenderSpec {
        RenderSpec {
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            light_power: self
                .light_power
                .unwrap_or_else(|| RenderSpec::auto_light_power(self.trajectory.distance, self.lights.len(), AUTO_EXPOSURE)),
            half_fov_deg: self.half_fov_deg,
            specular_fraction: self.specular_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.trajectory.validate()?;
        if !(self.lambda_gt > 0.0) {
            return Err(Error::InvalidInput("lambda_gt must be positive".into()));
        }
        if self.noise_sigma < 0.0 || self.geometry_noise < 0.0 || !(0.0..=1.0).contains(&self.specular_fraction) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        if !(self.gain_spread >= 1.0) {
            return Err(Error::InvalidInput("gain_spread must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ground truth accompanying an emitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub lambda_gt: f64,
    /// Relative gains, image 1 is the reference.
    pub gains: BTreeMap<u32, f64>,
    /// Scaled albedos (true albedo times light power times reference gain).
    pub albedos: BTreeMap<u64, f64>,
    pub albedo_stats: AlbedoStats,
    /// Points on the raised feature, for diameter checks.
    pub feature_point_ids: Vec<u64>,
    /// Metric footprint diameter of the feature, when there is one.
    pub feature_diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SimulationSpec>,
    /// Oriented true normals (written to a CSV sidecar).
    #[serde(skip)]
    pub normals: BTreeMap<u64, Vector3<f64>>,
    /// Uncorrupted geometry in the same up-to-scale units as the emitted model.
    #[serde(skip)]
    pub geometry: Option<Reconstruction>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub recon: Reconstruction,
    pub observations: ObservationSet,
    pub rig: CalibrationRig,
    pub truth: GroundTruth,
}

fn default_camera(half_fov_deg: f64) -> CameraRecord {
    let size = 640u32;
    let f = 0.5 * size as f64 / half_fov_deg.to_radians().tan();
    CameraRecord {
        camera_id: 1,
        model: "PINHOLE".into(),
        width: size,
        height: size,
        params: vec![f, f, 0.5 * size as f64, 0.5 * size as f64],
    }
}

/// Divide metric lengths by `lambda_gt`, optionally perturbing points and
/// camera centers by Gaussian noise of `geometry_noise * extent` (meters).
#[allow(clippy::too_many_arguments)]
pub fn emit_dataset(
    scene: &Scene,
    poses: &[CameraPose],
    samples: &[RenderedSample],
    rig: &CalibrationRig,
    gains: &[f64],
    light_power: f64,
    lambda_gt: f64,
    geometry_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(lambda_gt > 0.0) {
        return Err(Error::InvalidInput("lambda_gt must be positive".into()));
    }
    let true_points: Vec<ScenePoint> = scene
        .positions
        .iter()
        .enumerate()
        .map(|(i, x)| ScenePoint::new(i as u64 + 1, x / lambda_gt))
        .collect();
    let true_poses: Vec<CameraPose> = poses
        .iter()
        .map(|p| CameraPose {
            center: p.center / lambda_gt,
            ..p.clone()
        })
        .collect();
    let camera = default_camera(70.0);
    let truth_geometry = Reconstruction::new(true_points.clone(), true_poses.clone(), vec![camera.clone()])?;

    let recon = if geometry_noise > 0.0 {
        let sigma = geometry_noise * scene.extent / lambda_gt;
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE_0000_0002);
        let mut jitter = |v: &Vector3<f64>| v + Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        let points = true_points
            .iter()
            .map(|p| ScenePoint::new(p.point_id, jitter(&p.position)))
            .collect();
        let poses = true_poses
            .iter()
            .map(|p| CameraPose {
                center: jitter(&p.center),
                ..p.clone()
            })
            .collect();
        Reconstruction::new(points, poses, vec![camera])?
    } else {
        truth_geometry.clone()
    };

    let observations = ObservationSet::new(samples.iter().map(|s| s.observation).collect())?;
    let albedos: BTreeMap<u64, f64> = scene
        .albedos
        .iter()
        .enumerate()
        .map(|(i, a)| (i as u64 + 1, a * light_power * gains[0]))
        .collect();
    let feature_point_ids: Vec<u64> = scene
        .on_feature
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| i as u64 + 1)
        .collect();
    let feature_diameter = scene.on_feature.iter().any(|f| *f).then(|| {
        // Footprint rim: widest horizontal extent of the feature.
        scene
            .positions
            .iter()
            .zip(&scene.on_feature)
            .filter(|(_, f)| **f)
            .map(|(p, _)| 2.0 * p.x.hypot(p.y))
            .fold(0.0, f64::max)
    });
    let truth = GroundTruth {
        lambda_gt,
        gains: poses.iter().zip(gains).map(|(p, g)| (p.image_id, g / gains[0])).collect(),
        albedo_stats: AlbedoStats::from_values(albedos.values()),
        albedos,
        feature_point_ids,
        feature_diameter,
        config: None,
        normals: scene
            .normals
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u64 + 1, *n))
            .collect(),
        geometry: Some(truth_geometry),
    };
    Ok(Dataset {
        recon,
        observations,
        rig: rig.clone(),
        truth,
    })
}

/// Run scene, trajectory, rendering and emission for `spec`.
pub fn simulate(spec: &SimulationSpec) -> Result<Dataset> {
    spec.validate()?;
    let rig = spec.rig()?;
    let scene = make_scene(&spec.scene)?;
    let poses = make_trajectory(&spec.trajectory)?;
    let mut gain_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_C0DE_0000_0001);
    let spread = spec.gain_spread.ln();
    let gains: Vec<f64> = (0..poses.len())
        .map(|k| {
            if k == 0 || spread == 0.0 {
                1.0
            } else {
                gain_rng.random_range(-spread..=spread).exp()
            }
        })
        .collect();
    let render_spec = spec.render_spec();
    let samples = render(&scene, &poses, &rig, &gains, &render_spec);
    let mut ds = emit_dataset(
        &scene,
        &poses,
        &samples,
        &rig,
        &gains,
        render_spec.light_power,
        spec.lambda_gt,
        spec.geometry_noise,
        spec.seed,
    )?;
    if let Surface::SphereCap { radius, height } = spec.scene.surface {
        let c = radius - height;
        ds.truth.feature_diameter = Some(2.0 * (radius * radius - c * c).sqrt());
    }
    ds.truth.config = Some(spec.clone());
    Ok(ds)
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GROUND_TRUTH_NORMALS_FILE: &str = "ground_truth_normals.csv";
pub const GROUND_TRUTH_MODEL_DIR: &str = "ground_truth_model";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";

impl Dataset {
    /// Write model files, observations, calibration and ground-truth sidecars into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_sparse_model_dir(&self.recon, dir)?;
        write_observations(&self.observations, BufWriter::new(File::create(dir.join(OBSERVATIONS_FILE))?))?;
        write_calibration(&self.rig, BufWriter::new(File::create(dir.join(CALIBRATION_FILE))?))?;
        let mut f = BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?);
        serde_json::to_writer_pretty(&mut f, &self.truth)?;
        let mut w = csv::Writer::from_path(dir.join(GROUND_TRUTH_NORMALS_FILE))?;
        w.write_record(["point_id", "nx", "ny", "nz"])?;
        for (id, n) in &self.truth.normals {
            w.write_record([id.to_string(), n.x.to_string(), n.y.to_string(), n.z.to_string()])?;
        }
        w.flush()?;
        if let Some(g) = &self.truth.geometry {
            write_sparse_model_dir(g, &dir.join(GROUND_TRUTH_MODEL_DIR))?;
        }
        Ok(())
    }

    /// Read back a directory produced by [`Dataset::write`]. Ground-truth
    /// sidecars are optional; without them the truth is empty.
    pub fn read(dir: &Path) -> Result<Self> {
        let recon = read_sparse_model_dir(dir)?;
        let observations = parse_observations(BufReader::new(File::open(dir.join(OBSERVATIONS_FILE))?))?;
        let rig = parse_calibration(BufReader::new(File::open(dir.join(CALIBRATION_FILE))?))?;
        let truth = read_ground_truth(dir)?;
        Ok(Dataset {
            recon,
            observations,
            rig,
            truth,
        })
    }
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let mut truth: GroundTruth = serde_json::from_reader(BufReader::new(File::open(dir.join(GROUND_TRUTH_FILE))?))?;
    let normals_path = dir.join(GROUND_TRUTH_NORMALS_FILE);
    if normals_path.exists() {
        let mut rdr = csv::Reader::from_path(normals_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(GROUND_TRUTH_NORMALS_FILE, line, "malformed normal row"))
            };
            let id: u64 = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(GROUND_TRUTH_NORMALS_FILE, line, "malformed point id"))?;
            truth.normals.insert(id, Vector3::new(parse(1)?, parse(2)?, parse(3)?));
        }
    }
    let model = dir.join(GROUND_TRUTH_MODEL_DIR);
    if model.exists() {
        truth.geometry = Some(read_sparse_model_dir(&model)?);
    }
    Ok(truth)
}
