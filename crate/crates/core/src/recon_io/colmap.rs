//! COLMAP text sparse-model reader/writer (`cameras.txt`, `images.txt`,
//! `points3D.txt`).
//!
//! COLMAP stores world-to-camera poses; they are converted to
//! camera-to-world on the way in and back on the way out.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::{CameraPose, CameraRecord, Reconstruction, ScenePoint};
use crate::error::{Error, Result};

const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

/// The three text streams of a sparse model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseModelText {
    pub cameras: String,
    pub images: String,
    pub points3d: String,
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
}

fn field<T: std::str::FromStr>(tokens: &[&str], idx: usize, what: &str, src: &str, line: usize) -> Result<T> {
    let tok = tokens
        .get(idx)
        .ok_or_else(|| Error::parse(src, line, format!("missing field {what}")))?;
    tok.parse::<T>()
        .map_err(|_| Error::parse(src, line, format!("invalid {what}: '{tok}'")))
}

fn parse_cameras(text: &str) -> Result<Vec<CameraRecord>> {
    const SRC: &str = "cameras.txt";
    let mut cameras: Vec<CameraRecord> = Vec::new();
    for (line, l) in content_lines(text) {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 4 {
            return Err(Error::parse(SRC, line, "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"));
        }
        let camera_id: u32 = field(&tokens, 0, "CAMERA_ID", SRC, line)?;
        if cameras.iter().any(|c| c.camera_id == camera_id) {
            return Err(Error::parse(SRC, line, format!("duplicate camera id {camera_id}")));
        }
        let params = tokens[4..]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(SRC, line, format!("invalid camera parameter '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        cameras.push(CameraRecord {
            camera_id,
            model: tokens[1].to_string(),
            width: field(&tokens, 2, "WIDTH", SRC, line)?,
            height: field(&tokens, 3, "HEIGHT", SRC, line)?,
            params,
        });
    }
    Ok(cameras)
}

/// Nearest rotation to a unit quaternion that may be slightly off the unit sphere.
fn rotation_from_colmap_quaternion(q: [f64; 4], line: usize) -> Result<Matrix3<f64>> {
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = quat.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        return Err(Error::parse(
            "images.txt",
            line,
            format!("quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}"),
        ));
    }
    Ok(*UnitQuaternion::from_quaternion(quat).to_rotation_matrix().matrix())
}

fn parse_images(text: &str) -> Result<Vec<CameraPose>> {
    const SRC: &str = "images.txt";
    let mut poses: Vec<CameraPose> = Vec::new();
    let mut lines = content_lines(text).peekable();
    while let Some((line, l)) = lines.next() {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.is_empty() {
            // Blank trailing lines after the last record.
            if lines.peek().is_none() {
                break;
            }
            return Err(Error::parse(SRC, line, "expected image header line"));
        }
        if tokens.len() < 10 {
            return Err(Error::parse(
                SRC,
                line,
                "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME",
            ));
        }
        let image_id: u32 = field(&tokens, 0, "IMAGE_ID", SRC, line)?;
        let mut q = [0.0; 4];
        for (k, name) in ["QW", "QX", "QY", "QZ"].iter().enumerate() {
            q[k] = field(&tokens, 1 + k, name, SRC, line)?;
        }
        let mut t = Vector3::zeros();
        for (k, name) in ["TX", "TY", "TZ"].iter().enumerate() {
            t[k] = field(&tokens, 5 + k, name, SRC, line)?;
        }
        let camera_id: u32 = field(&tokens, 8, "CAMERA_ID", SRC, line)?;
        let name = tokens[9..].join(" ");
        if poses.iter().any(|p| p.image_id == image_id) {
            return Err(Error::parse(SRC, line, format!("duplicate image id {image_id}")));
        }
        let r_wc = rotation_from_colmap_quaternion(q, line)?;
        let rotation = r_wc.transpose();
        poses.push(CameraPose {
            image_id,
            camera_id,
            name,
            rotation,
            center: -(rotation * t),
        });
        // 2D feature track line; observations come from a separate table.
        lines.next();
    }
    Ok(poses)
}

fn parse_points(text: &str) -> Result<Vec<ScenePoint>> {
    const SRC: &str = "points3D.txt";
    let mut points = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, l) in content_lines(text) {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 8 {
            return Err(Error::parse(SRC, line, "expected POINT3D_ID X Y Z R G B ERROR TRACK[]"));
        }
        let point_id: u64 = field(&tokens, 0, "POINT3D_ID", SRC, line)?;
        let position = Vector3::new(
            field(&tokens, 1, "X", SRC, line)?,
            field(&tokens, 2, "Y", SRC, line)?,
            field(&tokens, 3, "Z", SRC, line)?,
        );
        for (k, name) in ["R", "G", "B"].iter().enumerate() {
            field::<u8>(&tokens, 4 + k, name, SRC, line)?;
        }
        field::<f64>(&tokens, 7, "ERROR", SRC, line)?;
        if (tokens.len() - 8) % 2 != 0 {
            return Err(Error::parse(SRC, line, "track must hold IMAGE_ID POINT2D_IDX pairs"));
        }
        if !seen.insert(point_id) {
            return Err(Error::parse(SRC, line, format!("duplicate point id {point_id}")));
        }
        points.push(ScenePoint::new(point_id, position));
    }
    Ok(points)
}

/// Parse the three streams of a COLMAP text model.
pub fn parse_sparse_model(model: &SparseModelText) -> Result<Reconstruction> {
    let cameras = parse_cameras(&model.cameras)?;
    let poses = parse_images(&model.images)?;
    let points = parse_points(&model.points3d)?;
    Reconstruction::new(points, poses, cameras)
}

pub fn serialize_sparse_model(recon: &Reconstruction) -> SparseModelText {
    let mut cameras = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    for c in &recon.cameras {
        let _ = write!(cameras, "{} {} {} {}", c.camera_id, c.model, c.width, c.height);
        for p in &c.params {
            let _ = write!(cameras, " {p}");
        }
        cameras.push('\n');
    }

    let mut images = String::from(
        "# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    for pose in &recon.poses {
        let r_wc = pose.rotation.transpose();
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r_wc));
        let t = -(r_wc * pose.center);
        let _ = writeln!(
            images,
            "{} {} {} {} {} {} {} {} {} {}\n",
            pose.image_id, q.w, q.i, q.j, q.k, t.x, t.y, t.z, pose.camera_id, pose.name
        );
    }

    let mut points3d = String::from(
        "# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n",
    );
    for p in recon.points.values() {
        let x = p.position;
        let _ = writeln!(points3d, "{} {} {} {} 128 128 128 0", p.point_id, x.x, x.y, x.z);
    }

    SparseModelText {
        cameras,
        images,
        points3d,
    }
}

pub fn read_sparse_model_dir(dir: &Path) -> Result<Reconstruction> {
    let model = SparseModelText {
        cameras: fs::read_to_string(dir.join("cameras.txt"))?,
        images: fs::read_to_string(dir.join("images.txt"))?,
        points3d: fs::read_to_string(dir.join("points3D.txt"))?,
    };
    parse_sparse_model(&model)
}

pub fn write_sparse_model_dir(recon: &Reconstruction, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serialize_sparse_model(recon);
    fs::write(dir.join("cameras.txt"), text.cameras)?;
    fs::write(dir.join("images.txt"), text.images)?;
    fs::write(dir.join("points3D.txt"), text.points3d)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> SparseModelText {
        SparseModelText {
            cameras: "# c\n1 PINHOLE 640 480 500 500 320 240\n".into(),
            images: "# images\n1 1 0 0 0 0 0 -5 1 a.png\n10.0 20.0 3\n2 1 0 0 0 0.5 0 -5 1 b.png\n\n".into(),
            points3d: "# p\n1 0 0 0 10 20 30 0.5\n2 1 0 0 10 20 30 0.5 1 0 2 0\n3 0 1 0 10 20 30 0.5\n".into(),
        }
    }

    #[test]
    fn parses_minimal_model() {
        let r = parse_sparse_model(&fixture()).unwrap();
        assert_eq!(r.poses.len(), 2);
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.reference_image_id, 1);
        let p = r.pose(1).unwrap();
        assert!((p.center - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-15);
        assert!((p.rotation - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_unit_quaternion_with_line_number() {
        let mut m = fixture();
        m.images = "# images\n1 1.1 0 0 0 0 0 -5 1 a.png\n\n".into();
        match parse_sparse_model(&m) {
            Err(Error::Parse { line, source_name, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(source_name, "images.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renormalizes_slightly_off_quaternion() {
        let mut m = fixture();
        m.images = "1 1.0005 0 0 0 0 0 -5 1 a.png\n\n".into();
        let r = parse_sparse_model(&m).unwrap();
        let rot = r.poses[0].rotation;
        assert!((rot * rot.transpose() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn rejects_duplicate_point_ids() {
        let mut m = fixture();
        m.points3d = "1 0 0 0 1 2 3 0\n1 0 0 1 1 2 3 0\n".into();
        assert!(matches!(parse_sparse_model(&m), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_duplicate_image_ids() {
        let mut m = fixture();
        m.images = "1 1 0 0 0 0 0 0 1 a.png\n\n1 1 0 0 0 0 0 0 1 b.png\n\n".into();
        assert!(matches!(parse_sparse_model(&m), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn malformed_point_line_reports_line() {
        let mut m = fixture();
        m.points3d = "# header\n# header\n1 0 0 x 1 2 3 0\n".into();
        assert!(matches!(parse_sparse_model(&m), Err(Error::Parse { line: 3, .. })));
    }
}
