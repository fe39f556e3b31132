//! Surface normals from plane fits over each point's nearest neighbors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::recon_io::{ObservationSet, Reconstruction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalConfig {
    /// Neighbors used per plane fit (the query point is fitted along with them).
    pub p: usize,
    pub min_neighbors: usize,
}

impl Default for NormalConfig {
    fn default() -> Self {
        NormalConfig { p: 10, min_neighbors: 4 }
    }
}

impl NormalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_neighbors < 3 || self.p < self.min_neighbors {
            return Err(Error::InvalidInput(format!(
                "normal config needs p >= min_neighbors >= 3 (p={}, min_neighbors={})",
                self.p, self.min_neighbors
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    TooFewPoints,
    RankDeficient,
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::TooFewPoints => write!(f, "fewer than 3 positions"),
            FitError::RankDeficient => write!(f, "neighbors are collinear or coincident"),
        }
    }
}

/// The `p` nearest points to `query_id`, excluding the query itself.
/// Ties are broken by the smaller id.
pub fn knn(points: &[(u64, Vector3<f64>)], query_id: u64, p: usize) -> Vec<u64> {
    let Some(query) = points.iter().find(|(id, _)| *id == query_id).map(|(_, x)| *x) else {
        return Vec::new();
    };
    let mut cand: Vec<(f64, u64)> = points
        .iter()
        .filter(|(id, _)| *id != query_id)
        .map(|(id, x)| ((x - query).norm_squared(), *id))
        .collect();
    let k = p.min(cand.len());
    let cmp = |a: &(f64, u64), b: &(f64, u64)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() && k > 0 {
        cand.select_nth_unstable_by(k - 1, cmp);
    }
    cand.truncate(k);
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, id)| id).collect()
}

/// Total-least-squares plane normal: eigenvector of the centered covariance
/// with the smallest eigenvalue. The sign is arbitrary.
pub fn fit_normal(positions: &[Vector3<f64>]) -> std::result::Result<Vector3<f64>, FitError> {
    if positions.len() < 3 {
        return Err(FitError::TooFewPoints);
    }
    let n = positions.len() as f64;
    let centroid = positions.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for x in positions {
        let d = x - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, largest) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(largest > 0.0) || mid <= 1e-12 * largest {
        return Err(FitError::RankDeficient);
    }
    Ok(eig.eigenvectors.column(order[0]).normalize())
}

/// Flip `normal` so that it faces `viewer`. An exactly perpendicular normal keeps its sign.
pub fn orient_toward(normal: Vector3<f64>, position: &Vector3<f64>, viewer: &Vector3<f64>) -> Vector3<f64> {
    if normal.dot(&(viewer - position)) < 0.0 {
        -normal
    } else {
        normal
    }
}

/// Mean center of the cameras observing each point; all cameras when unobserved.
fn mean_observer_centers(recon: &Reconstruction, obs: &ObservationSet) -> BTreeMap<u64, Vector3<f64>> {
    let mut acc: BTreeMap<u64, (Vector3<f64>, usize)> = BTreeMap::new();
    for o in obs.iter() {
        if let Some(pose) = recon.pose(o.image_id) {
            let e = acc.entry(o.point_id).or_insert((Vector3::zeros(), 0));
            e.0 += pose.center;
            e.1 += 1;
        }
    }
    let all = recon.poses.iter().map(|p| p.center).sum::<Vector3<f64>>() / recon.poses.len().max(1) as f64;
    recon
        .points
        .keys()
        .map(|id| {
            let c = acc.get(id).map(|(s, k)| s / *k as f64).unwrap_or(all);
            (*id, c)
        })
        .collect()
}

/// Orient every present normal toward the mean center of the cameras that observe it.
pub fn orient_normals(recon: &Reconstruction, obs: &ObservationSet) -> Reconstruction {
    let viewers = mean_observer_centers(recon, obs);
    let mut out = recon.clone();
    for (id, p) in out.points.iter_mut() {
        if let Some(n) = p.normal {
            p.normal = Some(orient_toward(n, &p.position, &viewers[id]));
        }
    }
    out
}

/// Fit and orient normals for every observed point. Points whose normal
/// cannot be fitted are left without one and reported in the warnings.
pub fn estimate_normals(
    recon: &Reconstruction,
    obs: &ObservationSet,
    cfg: &NormalConfig,
) -> Result<(Reconstruction, Vec<String>)> {
    cfg.validate()?;
    let cloud: Vec<(u64, Vector3<f64>)> = recon.points.values().map(|p| (p.point_id, p.position)).collect();
    let targets = obs.point_ids();
    let fits: Vec<(u64, std::result::Result<(Vector3<f64>, usize), String>)> = targets
        .par_iter()
        .map(|&id| {
            let neighbors = knn(&cloud, id, cfg.p);
            if neighbors.len() < cfg.min_neighbors {
                return (id, Err(format!("only {} neighbors available", neighbors.len())));
            }
            let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(neighbors.len() + 1);
            pts.push(recon.points[&id].position);
            pts.extend(neighbors.iter().map(|n| recon.points[n].position));
            (
                id,
                fit_normal(&pts).map(|n| (n, neighbors.len())).map_err(|e| e.to_string()),
            )
        })
        .collect();

    let mut out = recon.clone();
    let mut warnings = Vec::new();
    for (id, fit) in fits {
        let p = out.points.get_mut(&id).expect("observed point exists");
        match fit {
            Ok((n, used)) => {
                p.normal = Some(n);
                p.neighbor_count_used = Some(used);
            }
            Err(reason) => {
                p.normal = None;
                warnings.push(
                    Error::NormalEstimation {
                        point_id: id,
                        reason,
                    }
                    .to_string(),
                );
            }
        }
    }
    Ok((orient_normals(&out, obs), warnings))
}
