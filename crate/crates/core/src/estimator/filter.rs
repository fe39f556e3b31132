use super::RobustLossConfig;
use crate::error::{Error, Result};
use crate::recon_io::ObservationSet;

pub const MIN_OBSERVATIONS: usize = 10;

/// Drop saturated (specular) and near-black samples, then re-apply the
/// two-views-per-point rule.
pub fn filter_observations(obs: &ObservationSet, loss: &RobustLossConfig) -> Result<ObservationSet> {
    loss.validate()?;
    let before = obs.len();
    let mut saturated = 0usize;
    let mut dark = 0usize;
    let mut out = obs.retain(|o| {
        if o.intensity >= loss.saturation_threshold {
            saturated += 1;
            false
        } else if o.intensity <= loss.floor_threshold {
            dark += 1;
            false
        } else {
            true
        }
    });
    if saturated + dark > 0 {
        out.warnings.push(format!(
            "filtered {saturated} saturated and {dark} dark observation(s) of {before}"
        ));
    }
    if out.len() < MIN_OBSERVATIONS || out.n_images() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} observation(s) in {} image(s) survive filtering; need at least {MIN_OBSERVATIONS} in 2 images",
            out.len(),
            out.n_images()
        )));
    }
    Ok(out)
}
