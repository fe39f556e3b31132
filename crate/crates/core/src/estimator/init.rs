//! Joint initialization of scale, albedos and gains.
//!
//! For each trial scale on a logarithmic grid the albedos are obtained by
//! inverting the forward model in the reference image, each remaining gain
//! by a robust scalar regression in linear (de-gammaed) intensity, and the
//! trial is scored with the full robust cost. The cheapest trial wins.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::problem::{median, Problem, State};
use super::{InitSearchConfig, RobustLossConfig};
use crate::error::{Error, Result};
use crate::photomodel::{robust_residual, PhotometricParams};
use crate::recon_io::{CalibrationRig, ObservationSet, Reconstruction};

pub const GAIN_MIN: f64 = 1e-3;
pub const GAIN_MAX: f64 = 1e3;

/// Outcome of the initialization search, in the caller's units.
#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    pub params: PhotometricParams,
    /// `(lambda, total robust cost)` per grid sample, ascending in lambda.
    pub profile: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Trial {
    pub state: State,
    pub cost: f64,
    pub warnings: Vec<String>,
}

/// IRLS fit of `y ~ g * p` under Huber weights. Returns the gain and a warning
/// when the data cannot determine it.
pub(crate) fn regress_gain(pairs: &[(f64, f64)], epsilon: f64, iterations: usize) -> (f64, Option<String>) {
    if pairs.len() < 3 {
        return (1.0, Some(format!("gain undetermined: only {} shared observations", pairs.len())));
    }
    let mut ratios: Vec<f64> = pairs.iter().filter(|(p, _)| *p > 0.0).map(|(p, y)| y / p).collect();
    let Some(mut g) = median(&mut ratios) else {
        return (1.0, Some("gain undetermined: all predictions are zero".into()));
    };
    for _ in 0..iterations {
        let (mut num, mut den) = (0.0, 0.0);
        for &(p, y) in pairs {
            let (_, w) = robust_residual(g * p, y, epsilon);
            num += w * y * p;
            den += w * p * p;
        }
        if den <= 0.0 {
            break;
        }
        let next = num / den;
        let done = (next - g).abs() <= 1e-15 * g.abs();
        g = next;
        if done {
            break;
        }
    }
    (g.clamp(GAIN_MIN, GAIN_MAX), None)
}

impl Problem {
    /// Albedos inverted from the reference image at internal scale `lambda`.
    /// The mask marks points whose albedo came from a successful inversion.
    pub(crate) fn reference_albedos(&self, lambda: f64) -> Result<(Vec<f64>, Vec<bool>, Vec<String>)> {
        let samples = &self.by_image[self.ref_image];
        if samples.is_empty() {
            return Err(Error::InsufficientData("no points visible in the reference image".into()));
        }
        let gamma = self.rig.gamma;
        let mut albedos = vec![f64::NAN; self.n_points()];
        let mut mask = vec![false; self.n_points()];
        for &si in samples {
            let s = &self.samples[si];
            let irr = self.irradiance(s, lambda)?;
            if irr > 0.0 && irr.is_finite() {
                albedos[s.point] = PI * s.observed.powf(gamma) / (s.vignette * irr);
                mask[s.point] = true;
            }
        }
        let mut good: Vec<f64> = albedos.iter().copied().filter(|a| a.is_finite()).collect();
        let fallback = median(&mut good)
            .ok_or_else(|| Error::InsufficientData("no albedo could be inverted in the reference image".into()))?;
        let mut warnings = Vec::new();
        let failed = samples.iter().filter(|&&si| !mask[self.samples[si].point]).count();
        if failed > 0 {
            warnings.push(format!("{failed} reference point(s) unlit; albedo seeded with the median"));
        }
        let unseen = albedos.iter().filter(|a| a.is_nan()).count() - failed;
        if unseen > 0 {
            warnings.push(format!("{unseen} point(s) not seen in the reference image; albedo seeded with the median"));
        }
        for a in albedos.iter_mut().filter(|a| a.is_nan()) {
            *a = fallback;
        }
        Ok((albedos, mask, warnings))
    }

    /// Linear-space gain regression for image `k` against the masked albedos.
    pub(crate) fn regress_image_gain(
        &self,
        k: usize,
        lambda: f64,
        albedos: &[f64],
        mask: &[bool],
        epsilon: f64,
        iterations: usize,
    ) -> Result<(f64, Option<String>)> {
        let mut pairs = Vec::with_capacity(self.by_image[k].len());
        for &si in &self.by_image[k] {
            let s = &self.samples[si];
            if !mask[s.point] {
                continue;
            }
            let p = albedos[s.point] * s.vignette * self.irradiance(s, lambda)? / PI;
            pairs.push((p, s.observed.powf(self.rig.gamma)));
        }
        let (g, warn) = regress_gain(&pairs, epsilon, iterations);
        Ok((g, warn.map(|w| format!("image {}: {w}", self.image_ids[k]))))
    }

    pub(crate) fn trial(
        &self,
        lambda: f64,
        fixed_gains: Option<&[f64]>,
        cfg: &InitSearchConfig,
        loss: &RobustLossConfig,
    ) -> Result<Trial> {
        let (albedos, mask, mut warnings) = self.reference_albedos(lambda)?;
        let mut gains = vec![1.0; self.n_images()];
        for (k, gain) in gains.iter_mut().enumerate() {
            if k == self.ref_image {
                continue;
            }
            if let Some(fixed) = fixed_gains {
                *gain = fixed[k];
                continue;
            }
            let (g, warn) = self.regress_image_gain(k, lambda, &albedos, &mask, loss.epsilon, cfg.irls_iterations)?;
            *gain = g;
            warnings.extend(warn);
        }
        let state = State { lambda, albedos, gains };
        let cost = self.robust_cost(&state, loss.epsilon, Some(&mask))?;
        Ok(Trial { state, cost, warnings })
    }

    /// Log-spaced trial scales in internal units.
    pub(crate) fn lambda_grid(cfg: &InitSearchConfig) -> Vec<f64> {
        let (lo, hi) = (cfg.lambda_min.ln(), cfg.lambda_max.ln());
        (0..cfg.samples)
            .map(|i| (lo + (hi - lo) * i as f64 / (cfg.samples - 1) as f64).exp())
            .collect()
    }

    /// Grid search; returns the winning trial and the full profile in internal units.
    pub(crate) fn search(
        &self,
        fixed_gains: Option<&[f64]>,
        cfg: &InitSearchConfig,
        loss: &RobustLossConfig,
    ) -> Result<(Trial, Vec<(f64, f64)>)> {
        cfg.validate()?;
        let grid = Self::lambda_grid(cfg);
        let trials: Vec<Option<Trial>> = grid
            .par_iter()
            .map(|&l| match self.trial(l, fixed_gains, cfg, loss) {
                Ok(t) if t.cost.is_finite() => Ok(Some(t)),
                Ok(_) | Err(Error::SingularGeometry) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let profile: Vec<(f64, f64)> = grid
            .iter()
            .zip(&trials)
            .map(|(&l, t)| (l, t.as_ref().map_or(f64::INFINITY, |t| t.cost)))
            .collect();
        // First minimum wins on ties so the result does not depend on scheduling.
        let best = trials
            .into_iter()
            .flatten()
            .fold(None::<Trial>, |best, t| match best {
                Some(b) if b.cost <= t.cost => Some(b),
                _ => Some(t),
            })
            .ok_or_else(|| Error::InsufficientData("every trial scale was singular".into()))?;
        Ok((best, profile))
    }
}

fn problem_for(recon: &Reconstruction, rig: &CalibrationRig, obs: &ObservationSet, normalize: bool) -> Result<Problem> {
    recon.check_observations(obs)?;
    Problem::build(recon, rig, obs, normalize)
}

/// Albedos inverted from the reference image at scale `lambda`, keyed by point id.
///
/// Only points observed in the reference image are returned.
pub fn init_albedos(
    lambda: f64,
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
) -> Result<(BTreeMap<u64, f64>, Vec<String>)> {
    let problem = problem_for(recon, rig, obs, false)?;
    let (albedos, _, warnings) = problem.reference_albedos(lambda)?;
    let in_ref: std::collections::BTreeSet<usize> = problem.by_image[problem.ref_image]
        .iter()
        .map(|&si| problem.samples[si].point)
        .collect();
    let map = in_ref
        .into_iter()
        .map(|i| (problem.point_ids[i], albedos[i]))
        .collect();
    Ok((map, warnings))
}

/// Robust gain of `image_id` relative to the reference, given albedos at scale `lambda`.
pub fn init_gain(
    lambda: f64,
    albedos: &BTreeMap<u64, f64>,
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
    image_id: u32,
    loss: &RobustLossConfig,
    irls_iterations: usize,
) -> Result<(f64, Option<String>)> {
    let problem = problem_for(recon, rig, obs, false)?;
    let k = problem
        .image_ids
        .iter()
        .position(|&id| id == image_id)
        .ok_or_else(|| Error::InvalidInput(format!("image {image_id} has no observations")))?;
    let mut values = vec![0.0; problem.n_points()];
    let mut mask = vec![false; problem.n_points()];
    for (i, id) in problem.point_ids.iter().enumerate() {
        if let Some(a) = albedos.get(id) {
            values[i] = *a;
            mask[i] = true;
        }
    }
    problem.regress_image_gain(k, lambda, &values, &mask, loss.epsilon, irls_iterations)
}

/// Exhaustive log-grid search over the scale. Every observed point needs a normal.
pub fn init_search(
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
    cfg: &InitSearchConfig,
    loss: &RobustLossConfig,
) -> Result<InitOutcome> {
    let problem = problem_for(recon, rig, obs, true)?;
    let (best, profile) = problem.search(None, cfg, loss)?;
    Ok(InitOutcome {
        params: problem.to_params(&best.state),
        profile: profile.into_iter().map(|(l, c)| (l / problem.unit, c)).collect(),
        warnings: best.warnings,
    })
}

/// Cost the initialization assigns to one trial scale (caller's units).
pub fn trial_cost(
    recon: &Reconstruction,
    rig: &CalibrationRig,
    obs: &ObservationSet,
    lambda: f64,
    cfg: &InitSearchConfig,
    loss: &RobustLossConfig,
) -> Result<f64> {
    let problem = problem_for(recon, rig, obs, false)?;
    Ok(problem.trial(lambda, None, cfg, loss)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_data_gives_exact_gain() {
        let pairs: Vec<(f64, f64)> = (1..20).map(|i| (i as f64 * 0.01, 2.0 * i as f64 * 0.01)).collect();
        let (g, w) = regress_gain(&pairs, 0.02, 10);
        assert!(w.is_none());
        assert!((g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_pairs_is_undetermined() {
        let (g, w) = regress_gain(&[(0.1, 0.2), (0.2, 0.4)], 0.02, 10);
        assert_eq!(g, 1.0);
        assert!(w.is_some());
    }

    #[test]
    fn all_zero_predictions_is_undetermined() {
        let (g, w) = regress_gain(&[(0.0, 0.2), (0.0, 0.4), (0.0, 0.1)], 0.02, 10);
        assert_eq!(g, 1.0);
        assert!(w.unwrap().contains("zero"));
    }

    #[test]
    fn gain_is_clamped() {
        let pairs: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, i as f64 * 1e5)).collect();
        assert_eq!(regress_gain(&pairs, 0.02, 10).0, GAIN_MAX);
    }
}
