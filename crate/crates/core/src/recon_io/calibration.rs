use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on a light offset; anything longer is not an endoscope tip.
pub const MAX_LIGHT_OFFSET_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VignetteKind {
    None,
    RadialPolynomial,
}

/// Radial vignetting `V(r) = 1 + c1 r^2 + c2 r^4 + ...` in normalized image radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VignetteModel {
    pub kind: VignetteKind,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl VignetteModel {
    pub fn none() -> Self {
        VignetteModel {
            kind: VignetteKind::None,
            coefficients: Vec::new(),
        }
    }

    pub fn radial(coefficients: Vec<f64>) -> Result<Self> {
        let v = VignetteModel {
            kind: VignetteKind::RadialPolynomial,
            coefficients,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn evaluate(&self, radius: f64) -> f64 {
        match self.kind {
            VignetteKind::None => 1.0,
            VignetteKind::RadialPolynomial => {
                let r2 = radius * radius;
                let mut pow = 1.0;
                let mut v = 1.0;
                for c in &self.coefficients {
                    pow *= r2;
                    v += c * pow;
                }
                v
            }
        }
    }

    fn validate(&self) -> Result<()> {
        for i in 0..=100 {
            let r = i as f64 / 100.0;
            let v = self.evaluate(r);
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "vignette evaluates to {v} at radius {r}; must stay in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Metric light rig attached to the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRig {
    /// Light offsets from the optical center, camera frame, meters.
    pub light_offsets: Vec<Vector3<f64>>,
    pub gamma: f64,
    pub vignette: VignetteModel,
}

impl CalibrationRig {
    pub fn new(light_offsets: Vec<Vector3<f64>>, gamma: f64, vignette: VignetteModel) -> Result<Self> {
        if light_offsets.is_empty() {
            return Err(Error::InvalidInput("calibration needs at least one light".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        for b in &light_offsets {
            if !(b.norm() < MAX_LIGHT_OFFSET_M) {
                return Err(Error::InvalidInput(format!(
                    "light offset {:?} exceeds {MAX_LIGHT_OFFSET_M} m",
                    b.as_slice()
                )));
            }
        }
        vignette.validate()?;
        Ok(CalibrationRig {
            light_offsets,
            gamma,
            vignette,
        })
    }

    /// `count` lights evenly spaced on a circle of `radius` around the optical axis.
    pub fn ring(count: usize, radius: f64, gamma: f64) -> Result<Self> {
        let lights = (0..count)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / count as f64;
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        Self::new(lights, gamma, VignetteModel::none())
    }

    /// Three lights at 120 degrees on a 3 mm circle, gamma 2.2.
    pub fn endoscope_default() -> Self {
        Self::ring(3, 0.003, 2.2).expect("default rig is valid")
    }

    pub fn has_baseline(&self) -> bool {
        self.light_offsets.iter().any(|b| b.norm() > 1e-12)
    }
}

#[derive(Serialize, Deserialize)]
struct RigDocument {
    lights: Vec<[f64; 3]>,
    gamma: f64,
    #[serde(default = "VignetteModel::none")]
    vignette: VignetteModel,
}

pub fn parse_calibration<R: Read>(reader: R) -> Result<CalibrationRig> {
    let doc: RigDocument = serde_json::from_reader(reader)?;
    CalibrationRig::new(
        doc.lights.iter().map(|l| Vector3::new(l[0], l[1], l[2])).collect(),
        doc.gamma,
        doc.vignette,
    )
}

pub fn write_calibration<W: Write>(rig: &CalibrationRig, writer: W) -> Result<()> {
    let doc = RigDocument {
        lights: rig.light_offsets.iter().map(|b| [b.x, b.y, b.z]).collect(),
        gamma: rig.gamma,
        vignette: rig.vignette.clone(),
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}
