//! Data model and text formats for everything that crosses the library boundary:
//! up-to-scale sparse reconstructions, sampled intensities, the light rig
//! calibration and estimation reports.

mod calibration;
mod colmap;
mod observations;
mod report;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub use calibration::{parse_calibration, write_calibration, CalibrationRig, VignetteKind, VignetteModel};
pub use colmap::{parse_sparse_model, read_sparse_model_dir, serialize_sparse_model, write_sparse_model_dir, SparseModelText};
pub use observations::{parse_observations, write_observations, Observation, ObservationSet};
pub use report::{parse_report, write_albedo_csv, write_profile_csv, write_report, AlbedoStats, ReportDocument};

/// Camera pose in the camera-to-world convention.
///
/// `center` is in up-to-scale world units; multiplying it by the metric scale
/// gives the optical center in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub image_id: u32,
    pub camera_id: u32,
    pub name: String,
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraPose {
    pub fn new(image_id: u32, rotation: Matrix3<f64>, center: Vector3<f64>) -> Self {
        CameraPose {
            image_id,
            camera_id: 1,
            name: format!("image_{image_id:04}.png"),
            rotation,
            center,
        }
    }

    /// Viewing direction (camera +z axis) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Express a world point in the camera frame.
    pub fn world_to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (x - self.center)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    pub point_id: u64,
    pub position: Vector3<f64>,
    pub normal: Option<Vector3<f64>>,
    pub neighbor_count_used: Option<usize>,
}

impl ScenePoint {
    pub fn new(point_id: u64, position: Vector3<f64>) -> Self {
        ScenePoint {
            point_id,
            position,
            normal: None,
            neighbor_count_used: None,
        }
    }
}

/// Intrinsics record kept only so that models survive a parse/serialize cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRecord {
    pub camera_id: u32,
    pub model: String,
    pub width: u32,
    pub height: u32,
    pub params: Vec<f64>,
}

/// Up-to-scale multi-view reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub points: BTreeMap<u64, ScenePoint>,
    /// Sorted by strictly increasing `image_id`.
    pub poses: Vec<CameraPose>,
    /// Image whose gain is pinned to one.
    pub reference_image_id: u32,
    pub cameras: Vec<CameraRecord>,
}

impl Reconstruction {
    /// Builds a reconstruction, sorting poses and taking the smallest image id
    /// as the gain reference.
    pub fn new(points: Vec<ScenePoint>, mut poses: Vec<CameraPose>, cameras: Vec<CameraRecord>) -> Result<Self> {
        poses.sort_by_key(|p| p.image_id);
        if poses.windows(2).any(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::InvalidInput("duplicate image ids".into()));
        }
        let reference_image_id = poses
            .first()
            .map(|p| p.image_id)
            .ok_or_else(|| Error::InvalidInput("reconstruction has no images".into()))?;
        let mut map = BTreeMap::new();
        for p in points {
            let id = p.point_id;
            if map.insert(id, p).is_some() {
                return Err(Error::InvalidInput(format!("duplicate point id {id}")));
            }
        }
        Ok(Reconstruction {
            points: map,
            poses,
            reference_image_id,
            cameras,
        })
    }

    pub fn pose(&self, image_id: u32) -> Option<&CameraPose> {
        self.poses
            .binary_search_by_key(&image_id, |p| p.image_id)
            .ok()
            .map(|i| &self.poses[i])
    }

    pub fn pose_index(&self, image_id: u32) -> Option<usize> {
        self.poses.binary_search_by_key(&image_id, |p| p.image_id).ok()
    }

    pub fn point(&self, point_id: u64) -> Option<&ScenePoint> {
        self.points.get(&point_id)
    }

    pub fn image_ids(&self) -> Vec<u32> {
        self.poses.iter().map(|p| p.image_id).collect()
    }

    /// Switch the gain reference to another existing image.
    pub fn with_reference(mut self, image_id: u32) -> Result<Self> {
        if self.pose(image_id).is_none() {
            return Err(Error::InvalidInput(format!("reference image {image_id} not in reconstruction")));
        }
        self.reference_image_id = image_id;
        Ok(self)
    }

    /// Multiply every point position and camera center by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for p in out.points.values_mut() {
            p.position *= s;
        }
        for pose in &mut out.poses {
            pose.center *= s;
        }
        out
    }

    /// Every observation must refer to a known point and image.
    pub fn check_observations(&self, obs: &ObservationSet) -> Result<()> {
        for o in obs.iter() {
            if !self.points.contains_key(&o.point_id) {
                return Err(Error::InvalidInput(format!(
                    "observation references unknown point {}",
                    o.point_id
                )));
            }
            if self.pose(o.image_id).is_none() {
                return Err(Error::InvalidInput(format!(
                    "observation references unknown image {}",
                    o.image_id
                )));
            }
        }
        Ok(())
    }
}
