//! Simulated experiments: distance sweeps and ablations with ground truth
//! substituted for estimated quantities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimationReport, EstimatorConfig, Injection};
use crate::simulator::{simulate, Dataset, SimulationSpec, Surface};

/// Ground truth that can be substituted for an estimated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    GtNormals,
    GtGains,
    GtPoses,
    NoInit,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::GtNormals, Ablation::GtGains, Ablation::GtPoses, Ablation::NoInit];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::GtNormals => "gt-normals",
            Ablation::GtGains => "gt-gains",
            Ablation::GtPoses => "gt-poses",
            Ablation::NoInit => "no-init",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown ablation '{s}' (expected gt-normals, gt-gains, gt-poses or no-init)")))
    }
}

/// Injection that substitutes the dataset's ground truth for each ablation.
pub fn injection_for(ds: &Dataset, ablations: &[Ablation]) -> Result<Injection> {
    let mut injection = Injection::default();
    for a in ablations {
        match a {
            Ablation::GtNormals => {
                if ds.truth.normals.is_empty() {
                    return Err(Error::InvalidInput("dataset carries no ground-truth normals".into()));
                }
                injection.normals = Some(ds.truth.normals.clone());
            }
            Ablation::GtGains => injection.gains = Some(ds.truth.gains.clone()),
            Ablation::GtPoses => {
                let geometry = ds
                    .truth
                    .geometry
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("dataset carries no ground-truth geometry".into()))?;
                injection.geometry = Some(geometry);
            }
            Ablation::NoInit => injection.skip_init = true,
        }
    }
    Ok(injection)
}

/// Relative error of an estimate against the dataset's true scale.
pub fn scale_error(report: &EstimationReport, ds: &Dataset) -> f64 {
    (report.lambda_hat / ds.truth.lambda_gt - 1.0).abs()
}

/// Polyp-like bump used by the sweep, proportioned to the viewing distance.
pub fn sweep_surface(distance: f64) -> Surface {
    Surface::SphereCap {
        radius: 0.3 * distance,
        height: 0.15 * distance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Viewing distances in meters.
    pub distances: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub geometry_noise: f64,
    pub lambda_gt: f64,
    pub ablations: Vec<Ablation>,
    pub estimator: EstimatorConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            distances: vec![0.003, 0.005, 0.008, 0.012, 0.016, 0.020],
            trials: 5,
            seed: 0,
            noise_sigma: 4.0 / 255.0,
            geometry_noise: 0.0,
            lambda_gt: 1.0,
            ablations: Vec::new(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() || self.distances.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidInput("sweep needs at least one positive distance".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("sweep needs trials >= 1".into()));
        }
        Ok(())
    }

    /// Seed of one trial; identical across distances so trials pair up.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(trial as u64)
    }

    pub fn trial_spec(&self, distance: f64, trial: usize) -> SimulationSpec {
        let mut spec = SimulationSpec::endoscope(sweep_surface(distance), distance, self.trial_seed(trial));
        spec.noise_sigma = self.noise_sigma;
        spec.geometry_noise = self.geometry_noise;
        spec.lambda_gt = self.lambda_gt;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub distance: f64,
    pub trial: usize,
    pub seed: u64,
    pub lambda_hat: f64,
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance: f64,
    pub mean_error: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std_error: f64,
    pub trials: Vec<TrialResult>,
}

pub fn run_trial(cfg: &SweepConfig, distance: f64, trial: usize) -> Result<TrialResult> {
    let spec = cfg.trial_spec(distance, trial);
    let ds = simulate(&spec)?;
    let injection = injection_for(&ds, &cfg.ablations)?;
    let report = estimate(&ds.recon, &ds.rig, &ds.observations, &cfg.estimator, &injection)?;
    Ok(TrialResult {
        distance,
        trial,
        seed: spec.seed,
        lambda_hat: report.lambda_hat,
        error: scale_error(&report, &ds),
        converged: report.converged,
    })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// All (distance, trial) runs in parallel, rows in the order of `cfg.distances`.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.distances.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, t)| run_trial(cfg, cfg.distances[i], t))
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .chunks(cfg.trials)
        .map(|chunk| {
            let errors: Vec<f64> = chunk.iter().map(|r| r.error).collect();
            let (mean_error, std_error) = mean_std(&errors);
            SweepRow {
                distance: chunk[0].distance,
                mean_error,
                std_error,
                trials: chunk.to_vec(),
            }
        })
        .collect())
}
