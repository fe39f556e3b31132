use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::EstimationReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbedoStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl AlbedoStats {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let mut n = 0usize;
        let mut stats = AlbedoStats {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            mean: 0.0,
        };
        for &v in values {
            n += 1;
            stats.min = stats.min.min(v);
            stats.max = stats.max.max(v);
            stats.mean += v;
        }
        if n == 0 {
            return AlbedoStats { min: 0.0, max: 0.0, mean: 0.0 };
        }
        stats.mean /= n as f64;
        stats
    }
}

/// On-disk form of an [`EstimationReport`]. Gains are keyed by image id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub lambda: f64,
    pub init_lambda: f64,
    pub gains: BTreeMap<u32, f64>,
    pub albedo_stats: AlbedoStats,
    pub residual_rms_gray_levels: f64,
    pub inlier_fraction: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ReportDocument {
    pub fn from_report(report: &EstimationReport, config: Option<serde_json::Value>) -> Self {
        ReportDocument {
            lambda: report.lambda_hat,
            init_lambda: report.init_lambda,
            gains: report.gains.clone(),
            albedo_stats: AlbedoStats::from_values(report.albedos.values()),
            residual_rms_gray_levels: report.residual_rms * 255.0,
            inlier_fraction: report.inlier_fraction,
            iterations: report.iterations,
            converged: report.converged,
            warnings: report.warnings.clone(),
            config,
        }
    }
}

pub fn write_report<W: Write>(report: &EstimationReport, config: Option<serde_json::Value>, mut writer: W) -> Result<()> {
    let doc = ReportDocument::from_report(report, config);
    serde_json::to_writer_pretty(&mut writer, &doc)?;
    writeln!(writer)?;
    Ok(())
}

pub fn parse_report<R: Read>(reader: R) -> Result<ReportDocument> {
    Ok(serde_json::from_reader(reader)?)
}

/// `point_id,albedo` rows, with oriented normals appended when known.
pub fn write_albedo_csv<W: Write>(report: &EstimationReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_id", "albedo", "normal_x", "normal_y", "normal_z"])?;
    for (id, a) in &report.albedos {
        let n = report.normals.get(id);
        let comp = |k: usize| n.map(|n| n[k].to_string()).unwrap_or_default();
        w.write_record([id.to_string(), a.to_string(), comp(0), comp(1), comp(2)])?;
    }
    w.flush()?;
    Ok(())
}

/// `lambda,cost` rows of the initialization grid.
pub fn write_profile_csv<W: Write>(profile: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "cost"])?;
    for (l, c) in profile {
        w.write_record([l.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
