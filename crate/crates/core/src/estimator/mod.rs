//! Metric scale estimation: observation filtering, grid initialization and
//! robust Levenberg-Marquardt refinement of scale, albedos and gains.

mod filter;
mod init;
mod lm;
mod measure;
mod problem;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normals::{estimate_normals, orient_normals, NormalConfig};
use crate::photomodel::PhotometricParams;
use crate::recon_io::{CalibrationRig, ObservationSet, Reconstruction};

pub use filter::{filter_observations, MIN_OBSERVATIONS};
pub use init::{init_albedos, init_gain, init_search, trial_cost, InitOutcome, GAIN_MAX, GAIN_MIN};
pub use measure::measure_diameter;

use problem::{Problem, State};

/// Logarithmic scale grid. Bounds are relative to the reconstruction after it
/// has been normalized to unit median camera-to-point distance, so they read
/// as metric viewing distances in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSearchConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub samples: usize,
    pub irls_iterations: usize,
}

impl Default for InitSearchConfig {
    fn default() -> Self {
        InitSearchConfig {
            lambda_min: 1e-4,
            lambda_max: 1e1,
            samples: 200,
            irls_iterations: 10,
        }
    }
}

impl InitSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max) || self.samples < 2 {
            return Err(Error::InvalidInput(format!(
                "init search needs 0 < lambda_min < lambda_max and samples >= 2 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Huber threshold and the intensity window outside which samples are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustLossConfig {
    pub epsilon: f64,
    pub saturation_threshold: f64,
    pub floor_threshold: f64,
}

impl Default for RobustLossConfig {
    fn default() -> Self {
        RobustLossConfig {
            epsilon: 5.0 / 255.0,
            saturation_threshold: 250.0 / 255.0,
            floor_threshold: 5.0 / 255.0,
        }
    }
}

impl RobustLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.floor_threshold > 0.0
            && self.floor_threshold < self.saturation_threshold
            && self.saturation_threshold <= 1.0;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "loss config needs epsilon > 0 and 0 < floor < saturation <= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    #[default]
    Schur,
    /// Full dense normal equations; only sensible for a few hundred points.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parameter_tolerance: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    #[serde(default = "default_function_tolerance")]
    pub function_tolerance: f64,
    pub initial_damping: f64,
    pub linear_solver: LinearSolver,
}

fn default_function_tolerance() -> f64 {
    1e-11
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            parameter_tolerance: 1e-10,
            function_tolerance: default_function_tolerance(),
            initial_damping: 1e-4,
            linear_solver: LinearSolver::Schur,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EstimatorConfig {
    pub init: InitSearchConfig,
    pub loss: RobustLossConfig,
    pub solver: SolverConfig,
    pub normals: NormalConfig,
}

/// Ground-truth quantities substituted for estimated ones (ablations).
#[derive(Debug, Clone, Default)]
pub struct Injection {
    /// Replace fitted normals. Orientation is re-applied.
    pub normals: Option<BTreeMap<u64, Vector3<f64>>>,
    /// Fix the gains instead of estimating them. Re-expressed relative to the reference image.
    pub gains: Option<BTreeMap<u32, f64>>,
    /// Replace camera poses and point positions (same ids, any common scale).
    pub geometry: Option<Reconstruction>,
    /// Start from the constant point (lambda = 1 in normalized units, unit albedos and gains).
    pub skip_init: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub lambda_hat: f64,
    pub gains: BTreeMap<u32, f64>,
    pub albedos: BTreeMap<u64, f64>,
    /// Oriented normals the estimate was computed with.
    pub normals: BTreeMap<u64, Vector3<f64>>,
    /// RMS of `predicted - observed`, intensity units.
    pub residual_rms: f64,
    /// Fraction of residuals within the Huber threshold.
    pub inlier_fraction: f64,
    pub iterations: usize,
    pub converged: bool,
    pub init_lambda: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub warnings: Vec<String>,
    /// `(lambda, cost)` of the initialization grid when it ran.
    pub residual_profile: Option<Vec<(f64, f64)>>,
}

fn finish_report(
    problem: &Problem,
    outcome: lm::LmOutcome,
    init_lambda: f64,
    profile: Option<Vec<(f64, f64)>>,
    loss: &RobustLossConfig,
    mut warnings: Vec<String>,
) -> Result<EstimationReport> {
    let residuals = problem.residuals(&outcome.state)?;
    let n = residuals.len().max(1) as f64;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let inliers = residuals.iter().filter(|r| r.abs() <= loss.epsilon).count() as f64 / n;
    let params = problem.to_params(&outcome.state);
    warnings.extend(outcome.warnings);
    Ok(EstimationReport {
        lambda_hat: params.lambda,
        gains: params.gains,
        albedos: params.albedos,
        normals: problem
            .point_ids
            .iter()
            .copied()
            .zip(problem.normals.iter().copied())
            .collect(),
        residual_rms: rms,
        inlier_fraction: inliers,
        iterations: outcome.iterations,
        converged: outcome.converged,
        init_lambda,
        initial_cost: outcome.initial_cost,
        final_cost: outcome.final_cost,
        warnings,
        residual_profile: profile.map(|p| p.into_iter().map(|(l, c)| (l / problem.unit, c)).collect()),
    })
}

/// Refine `initial` by robust Levenberg-Marquardt. Observed points need normals.
pub fn optimize(
    initial: &PhotometricParams,
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
    loss: &RobustLossConfig,
    solver: &SolverConfig,
) -> Result<EstimationReport> {
    if !rig.has_baseline() {
        return Err(Error::DegenerateBaseline);
    }
    loss.validate()?;
    recon.check_observations(obs)?;
    let problem = Problem::build(recon, rig, obs, true)?;
    let state = problem.state_from(initial)?;
    let outcome = lm::run(&problem, state, false, loss, solver)?;
    finish_report(&problem, outcome, initial.lambda, None, loss, obs.warnings.clone())
}

/// Full pipeline: filter, normals, initialization search, refinement.
pub fn estimate(
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
    cfg: &EstimatorConfig,
    injection: &Injection,
) -> Result<EstimationReport> {
    if !rig.has_baseline() {
        return Err(Error::DegenerateBaseline);
    }
    cfg.init.validate()?;
    cfg.normals.validate()?;
    recon.check_observations(obs)?;
    let filtered = filter_observations(obs, &cfg.loss)?;

    let mut geometry = match &injection.geometry {
        Some(gt) => {
            gt.check_observations(&filtered)?;
            let mut g = gt.clone();
            g.reference_image_id = recon.reference_image_id;
            g
        }
        None => recon.clone(),
    };

    let mut warnings = Vec::new();
    let observed = filtered.point_ids();
    if let Some(gt_normals) = &injection.normals {
        for id in &observed {
            let p = geometry.points.get_mut(id).expect("checked above");
            p.normal = gt_normals.get(id).map(|n| n.normalize());
        }
        geometry = orient_normals(&geometry, &filtered);
    } else if observed.iter().all(|id| geometry.points[id].normal.is_some()) {
        geometry = orient_normals(&geometry, &filtered);
    } else {
        let (with_normals, w) = estimate_normals(&geometry, &filtered, &cfg.normals)?;
        geometry = with_normals;
        warnings.extend(w);
    }

    let usable = filtered.retain(|o| geometry.points[&o.point_id].normal.is_some());
    if usable.len() < MIN_OBSERVATIONS || usable.n_images() < 2 {
        return Err(Error::InsufficientData("too few observations with a usable normal".into()));
    }
    warnings.splice(0..0, usable.warnings.iter().cloned());

    let problem = Problem::build(&geometry, rig, &usable, true)?;
    let fixed_gains = match &injection.gains {
        Some(g) => {
            let ref_id = problem.image_ids[problem.ref_image];
            let ref_gain = *g
                .get(&ref_id)
                .ok_or_else(|| Error::InvalidInput(format!("injected gains miss image {ref_id}")))?;
            Some(
                problem
                    .image_ids
                    .iter()
                    .map(|id| {
                        g.get(id)
                            .map(|v| v / ref_gain)
                            .ok_or_else(|| Error::InvalidInput(format!("injected gains miss image {id}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };

    let (state, profile) = if injection.skip_init {
        let state = State {
            lambda: 1.0,
            albedos: vec![1.0; problem.n_points()],
            gains: fixed_gains.clone().unwrap_or_else(|| vec![1.0; problem.n_images()]),
        };
        (state, None)
    } else {
        let (trial, profile) = problem.search(fixed_gains.as_deref(), &cfg.init, &cfg.loss)?;
        warnings.extend(trial.warnings);
        (trial.state, Some(profile))
    };
    let init_lambda = state.lambda / problem.unit;
    let outcome = lm::run(&problem, state, fixed_gains.is_some(), &cfg.loss, &cfg.solver)?;
    finish_report(&problem, outcome, init_lambda, profile, &cfg.loss, warnings)
}
