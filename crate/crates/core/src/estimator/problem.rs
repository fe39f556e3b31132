//! Flattened, index-based view of a photometric problem shared by the
//! initialization search and the least-squares solver.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::photomodel::{self, huber_cost, PhotometricParams, SampleParams};
use crate::recon_io::{CalibrationRig, CameraPose, ObservationSet, Reconstruction};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub point: usize,
    pub image: usize,
    pub observed: f64,
    pub vignette: f64,
}

/// Parameter values in index form. `gains[ref_image] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct State {
    pub lambda: f64,
    pub albedos: Vec<f64>,
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub point_ids: Vec<u64>,
    pub image_ids: Vec<u32>,
    pub ref_image: usize,
    pub positions: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub poses: Vec<CameraPose>,
    pub samples: Vec<Sample>,
    /// Sample indices grouped by image.
    pub by_image: Vec<Vec<usize>>,
    pub rig: CalibrationRig,
    /// Geometry was divided by this length; internal lambda = external lambda * unit.
    pub unit: f64,
}

/// Median camera-to-point distance over all observations.
pub(crate) fn median_view_distance(recon: &Reconstruction, obs: &ObservationSet) -> f64 {
    let mut d: Vec<f64> = obs
        .iter()
        .filter_map(|o| {
            let p = recon.point(o.point_id)?;
            let c = recon.pose(o.image_id)?;
            Some((c.center - p.position).norm())
        })
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl Problem {
    /// Index the observations. Every observed point must carry a normal.
    pub fn build(recon: &Reconstruction, rig: &CalibrationRig, obs: &ObservationSet, normalize: bool) -> Result<Self> {
        let unit = if normalize { median_view_distance(recon, obs) } else { 1.0 };
        let point_ids = obs.point_ids();
        let image_ids = obs.image_ids();
        let ref_image = image_ids
            .iter()
            .position(|&id| id == recon.reference_image_id)
            .ok_or_else(|| {
                Error::InsufficientData(format!(
                    "reference image {} has no usable observations",
                    recon.reference_image_id
                ))
            })?;
        let mut positions = Vec::with_capacity(point_ids.len());
        let mut normals = Vec::with_capacity(point_ids.len());
        for id in &point_ids {
            let p = recon
                .point(*id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown point {id}")))?;
            positions.push(p.position / unit);
            normals.push(
                p.normal
                    .ok_or_else(|| Error::InvalidInput(format!("point {id} has no normal")))?,
            );
        }
        let mut poses = Vec::with_capacity(image_ids.len());
        for id in &image_ids {
            let mut pose = recon
                .pose(*id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown image {id}")))?
                .clone();
            pose.center /= unit;
            poses.push(pose);
        }
        let point_index: BTreeMap<u64, usize> = point_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let image_index: BTreeMap<u32, usize> = image_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let samples: Vec<Sample> = obs
            .iter()
            .map(|o| Sample {
                point: point_index[&o.point_id],
                image: image_index[&o.image_id],
                observed: o.intensity,
                vignette: o.vignette_factor,
            })
            .collect();
        let mut by_image = vec![Vec::new(); image_ids.len()];
        for (s, sample) in samples.iter().enumerate() {
            by_image[sample.image].push(s);
        }
        Ok(Problem {
            point_ids,
            image_ids,
            ref_image,
            positions,
            normals,
            poses,
            samples,
            by_image,
            rig: rig.clone(),
            unit,
        })
    }

    pub fn n_points(&self) -> usize {
        self.point_ids.len()
    }

    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    /// Sum over lights of cos/d^2 for sample `s` at internal scale `lambda`.
    pub fn irradiance(&self, s: &Sample, lambda: f64) -> Result<f64> {
        photomodel::geometric_irradiance(
            &self.positions[s.point],
            &self.normals[s.point],
            &self.poses[s.image],
            lambda,
            &self.rig,
        )
    }

    pub fn sample_params(&self, s: &Sample, state: &State) -> SampleParams {
        SampleParams {
            lambda: state.lambda,
            albedo: state.albedos[s.point],
            gain: state.gains[s.image],
        }
    }

    pub fn predict(&self, s: &Sample, state: &State) -> Result<f64> {
        photomodel::predict_intensity(
            &self.positions[s.point],
            &self.normals[s.point],
            &self.poses[s.image],
            self.sample_params(s, state),
            &self.rig,
            s.vignette,
        )
    }

    /// Residuals `predicted - observed` in sample order.
    pub fn residuals(&self, state: &State) -> Result<Vec<f64>> {
        self.samples
            .par_iter()
            .map(|s| self.predict(s, state).map(|p| p - s.observed))
            .collect()
    }

    /// Total Huber cost, optionally restricted by a per-point mask.
    pub fn robust_cost(&self, state: &State, epsilon: f64, mask: Option<&[bool]>) -> Result<f64> {
        let r = self.residuals(state)?;
        Ok(self
            .samples
            .iter()
            .zip(&r)
            .filter(|(s, _)| mask.is_none_or(|m| m[s.point]))
            .map(|(_, r)| huber_cost(*r, epsilon))
            .sum())
    }

    pub fn to_params(&self, state: &State) -> PhotometricParams {
        PhotometricParams {
            lambda: state.lambda / self.unit,
            albedos: self.point_ids.iter().copied().zip(state.albedos.iter().copied()).collect(),
            gains: self.image_ids.iter().copied().zip(state.gains.iter().copied()).collect(),
        }
    }

    /// Index-form state from keyed parameters; missing entries are an error.
    pub fn state_from(&self, params: &PhotometricParams) -> Result<State> {
        let ref_gain = params.gains.get(&self.image_ids[self.ref_image]).copied().unwrap_or(1.0);
        // Re-express in the gauge where the reference gain is one.
        let albedos = self
            .point_ids
            .iter()
            .map(|id| {
                params
                    .albedos
                    .get(id)
                    .map(|a| a * ref_gain)
                    .ok_or_else(|| Error::InvalidInput(format!("no initial albedo for point {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let gains = self
            .image_ids
            .iter()
            .map(|id| {
                params
                    .gains
                    .get(id)
                    .map(|g| g / ref_gain)
                    .ok_or_else(|| Error::InvalidInput(format!("no initial gain for image {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut state = State {
            lambda: params.lambda * self.unit,
            albedos,
            gains,
        };
        state.gains[self.ref_image] = 1.0;
        Ok(state)
    }
}
