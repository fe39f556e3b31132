//! Closed-form scale for the on-axis two-view configuration.
//!
//! A single light sits at metric offset `b` from the optical center. The
//! point lies on the optical axis at up-to-scale depth `z` with its normal
//! facing the camera; the second camera is translated by up-to-scale `t`
//! along the same axis as the light offset. Eliminating the unknown albedo
//! from the two intensities leaves
//!
//! ```text
//! b^2 + l^2 z^2 = c ((l t + b)^2 + l^2 z^2),   c = (I2 / I1)^(2/3)
//! ```
//!
//! which is quadratic in the scale `l`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoViewConfig {
    /// Camera-light baseline, meters.
    pub b: f64,
    /// Up-to-scale depth of the point.
    pub z: f64,
    /// Up-to-scale translation of the second camera.
    pub t: f64,
    pub i1: f64,
    pub i2: f64,
}

/// Intensities of the on-axis point in both views.
pub fn two_view_intensity(lambda: f64, z: f64, t: f64, b: f64, rho_prime: f64) -> (f64, f64) {
    let depth = lambda * z;
    let k = rho_prime / PI * depth;
    let i1 = k / (b * b + depth * depth).powf(1.5);
    let shifted = lambda * t + b;
    let i2 = k / (shifted * shifted + depth * depth).powf(1.5);
    (i1, i2)
}

/// Residual of the scale equation relative to its larger side.
fn relative_residual(cfg: &TwoViewConfig, c: f64, lambda: f64) -> f64 {
    let lz2 = (lambda * cfg.z).powi(2);
    let lhs = cfg.b * cfg.b + lz2;
    let rhs = c * ((lambda * cfg.t + cfg.b).powi(2) + lz2);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
}

/// All positive real roots of the scale equation, ascending.
pub fn solve_two_view_scale(cfg: &TwoViewConfig) -> Result<Vec<f64>> {
    if !(cfg.z > 0.0 && cfg.i1 > 0.0 && cfg.i2 > 0.0) {
        return Err(Error::InvalidInput("two-view config needs z, I1, I2 > 0".into()));
    }
    if cfg.b == 0.0 {
        return Err(Error::DegenerateBaseline);
    }
    if cfg.t == 0.0 && cfg.i1 == cfg.i2 {
        return Err(Error::DegenerateMotion);
    }
    let c = (cfg.i2 / cfg.i1).powf(2.0 / 3.0);
    let (b, z, t) = (cfg.b, cfg.z, cfg.t);
    let qa = (1.0 - c) * z * z - c * t * t;
    let qb = -2.0 * c * b * t;
    let qc = (1.0 - c) * b * b;

    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    let mut roots = Vec::with_capacity(2);
    if qa.abs() < 1e-14 * scale {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        let tol = 1e-14 * (qb * qb).max(4.0 * (qa * qc).abs());
        if disc >= -tol {
            let sq = disc.max(0.0).sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                roots.push(q / qa);
                roots.push(qc / q);
            } else {
                roots.push(0.0);
            }
        }
    }

    // One Newton step on the polynomial tightens roots from the cancellation-free formula.
    let poly = |l: f64| (qa * l + qb) * l + qc;
    let dpoly = |l: f64| 2.0 * qa * l + qb;
    let mut out: Vec<f64> = roots
        .into_iter()
        .map(|l| {
            let d = dpoly(l);
            if d != 0.0 {
                l - poly(l) / d
            } else {
                l
            }
        })
        .filter(|&l| l > 0.0 && l.is_finite())
        .filter(|&l| relative_residual(cfg, c, l) < 1e-9)
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if out.is_empty() {
        return Err(Error::NoSolution);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_forward_generated_scale() {
        let (i1, i2) = two_view_intensity(2.0, 0.01, 0.005, 0.003, PI);
        let roots = solve_two_view_scale(&TwoViewConfig { b: 0.003, z: 0.01, t: 0.005, i1, i2 }).unwrap();
        assert!(roots.iter().any(|r| (r - 2.0).abs() < 2e-9), "{roots:?}");
    }

    #[test]
    fn zero_baseline_is_degenerate() {
        let r = solve_two_view_scale(&TwoViewConfig { b: 0.0, z: 1.0, t: 0.1, i1: 0.3, i2: 0.2 });
        assert!(matches!(r, Err(Error::DegenerateBaseline)));
    }

    #[test]
    fn no_motion_equal_intensity_is_degenerate() {
        let r = solve_two_view_scale(&TwoViewConfig { b: 0.003, z: 1.0, t: 0.0, i1: 0.3, i2: 0.3 });
        assert!(matches!(r, Err(Error::DegenerateMotion)));
    }

    #[test]
    fn no_motion_different_intensity_has_no_solution() {
        let r = solve_two_view_scale(&TwoViewConfig { b: 0.003, z: 1.0, t: 0.0, i1: 0.3, i2: 0.2 });
        assert!(matches!(r, Err(Error::NoSolution)));
    }

    #[test]
    fn unit_configuration_intensity() {
        let (i1, i2) = two_view_intensity(1.0, 1.0, 0.0, 0.0, PI);
        assert_eq!((i1, i2), (1.0, 1.0));
        // b -> 0 limit reduces to rho / (pi (lz)^2).
        let (i1, _) = two_view_intensity(2.0, 0.5, 0.1, 0.0, PI);
        assert!((i1 - 1.0).abs() < 1e-15);
    }
}
