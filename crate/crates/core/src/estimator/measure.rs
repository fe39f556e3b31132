use crate::error::{Error, Result};
use crate::recon_io::Reconstruction;

/// Longest metric distance between any two of the given points.
pub fn measure_diameter(point_ids: &[u64], recon: &Reconstruction, lambda_hat: f64) -> Result<f64> {
    if point_ids.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "diameter needs at least 2 points, got {}",
            point_ids.len()
        )));
    }
    let pts = point_ids
        .iter()
        .map(|id| {
            recon
                .point(*id)
                .map(|p| p.position * lambda_hat)
                .ok_or_else(|| Error::InvalidInput(format!("unknown point {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon_io::{CameraPose, ScenePoint};
    use nalgebra::{Matrix3, Vector3};

    fn recon() -> Reconstruction {
        Reconstruction::new(
            vec![
                ScenePoint::new(1, Vector3::zeros()),
                ScenePoint::new(2, Vector3::new(0.0, 0.0, 2.0)),
            ],
            vec![CameraPose::new(1, Matrix3::identity(), Vector3::zeros())],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn two_points() {
        assert_eq!(measure_diameter(&[1, 2], &recon(), 1.5).unwrap(), 3.0);
    }

    #[test]
    fn single_point_rejected() {
        assert!(matches!(measure_diameter(&[1], &recon(), 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn unknown_point_rejected() {
        assert!(matches!(measure_diameter(&[1, 7], &recon(), 1.0), Err(Error::InvalidInput(_))));
    }
}
