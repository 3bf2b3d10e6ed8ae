//! TUM trajectory format: one pose per line,
//! `timestamp tx ty tz qx qy qz qw` (quaternion scalar-last, unit norm).

use super::IoError;
use crate::eval::Trajectory;
use crate::geometry::{Pose, Rot3, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Writes a trajectory in TUM format. At least one pose is required; a
/// header-only file would not be a valid trajectory.
pub fn write_tum(trajectory: &Trajectory, path: &Path) -> Result<(), IoError> {
    if trajectory.is_empty() {
        return Err(IoError::InvalidData(
            "refusing to write an empty trajectory".into(),
        ));
    }
    let mut file = std::io::BufWriter::new(File::create(path)?);
    for (t, pose) in trajectory.entries() {
        let q = pose.rotation.to_quaternion();
        let v = q.as_vector(); // [i, j, k, w]
        writeln!(
            file,
            "{} {} {} {} {} {} {} {}",
            t,
            pose.translation.x,
            pose.translation.y,
            pose.translation.z,
            v[0],
            v[1],
            v[2],
            v[3]
        )?;
    }
    Ok(())
}

/// Reads a TUM trajectory. Lines starting with '#' are comments;
/// quaternions must be unit within 1e-6.
pub fn read_tum(path: &Path) -> Result<Trajectory, IoError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Parse {
                line: line_no,
                message: format!("bad number: {e}"),
            })?;
        if vals.len() != 8 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("expected 8 fields, got {}", vals.len()),
            });
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("quaternion norm {} is not unit", q.norm()),
            });
        }
        let rotation = Rot3::from_quaternion(&UnitQuaternion::from_quaternion(q));
        entries.push((
            vals[0],
            Pose::new(rotation, Vec3::new(vals[1], vals[2], vals[3])),
        ));
    }
    Trajectory::new(entries).map_err(|e| IoError::InvalidData(e.to_string()))
}
