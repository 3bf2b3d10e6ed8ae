//! PLY reader/writer for Doppler point clouds.
//!
//! Accepted input: ASCII or binary-little-endian PLY with a single vertex
//! element carrying `x`, `y`, `z` (float32/float64, meters) and a Doppler
//! property under any of the names `doppler`, `velocity`, or
//! `radial_velocity` (float, m/s). Extra scalar vertex properties are
//! skipped. The scan timestamp comes from a header comment
//! `comment timestamp <seconds>`, or from an all-digits filename in
//! integer nanoseconds, or defaults to zero.
//!
//! Line-of-sight vectors are recomputed from positions on read;
//! out-of-range and non-finite points are dropped at ingestion.

use super::IoError;
use crate::geometry::Vec3;
use crate::scan::{los_from_position, DopplerPoint, DopplerScan, ScanParams};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const DOPPLER_PROPERTY_NAMES: [&str; 3] = ["doppler", "velocity", "radial_velocity"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<ScalarType> {
        match s {
            "char" | "int8" => Some(ScalarType::I8),
            "uchar" | "uint8" => Some(ScalarType::U8),
            "short" | "int16" => Some(ScalarType::I16),
            "ushort" | "uint16" => Some(ScalarType::U16),
            "int" | "int32" => Some(ScalarType::I32),
            "uint" | "uint32" => Some(ScalarType::U32),
            "float" | "float32" => Some(ScalarType::F32),
            "double" | "float64" => Some(ScalarType::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_f64(self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

struct Header {
    format: Format,
    vertex_count: usize,
    properties: Vec<(String, ScalarType)>,
    timestamp: Option<f64>,
    data_start_line: usize,
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header, IoError> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let read_line = |reader: &mut R, line: &mut String, line_no: &mut usize| -> Result<(), IoError> {
        line.clear();
        let n = reader.read_line(line)?;
        *line_no += 1;
        if n == 0 {
            return Err(IoError::Parse {
                line: *line_no,
                message: "unexpected end of header".into(),
            });
        }
        Ok(())
    };

    read_line(reader, &mut line, &mut line_no)?;
    if line.trim_end() != "ply" {
        return Err(IoError::Parse {
            line: line_no,
            message: "missing 'ply' magic".into(),
        });
    }

    let mut format = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut timestamp = None;
    let mut in_vertex_element = false;
    loop {
        read_line(reader, &mut line, &mut line_no)?;
        let trimmed = line.trim_end();
        let mut tokens = trimmed.split_whitespace();
        match tokens.next() {
            Some("format") => {
                format = match tokens.next() {
                    Some("ascii") => Some(Format::Ascii),
                    Some("binary_little_endian") => Some(Format::BinaryLittleEndian),
                    other => {
                        return Err(IoError::UnsupportedFormat(format!(
                            "format '{}' (only ascii and binary_little_endian)",
                            other.unwrap_or("")
                        )))
                    }
                };
            }
            Some("comment") => {
                let rest: Vec<&str> = tokens.collect();
                if rest.len() == 2 && rest[0] == "timestamp" {
                    timestamp = rest[1].parse::<f64>().ok();
                }
            }
            Some("element") => {
                let name = tokens.next().unwrap_or("");
                let count: usize = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or(IoError::Parse {
                        line: line_no,
                        message: "element needs a count".into(),
                    })?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(IoError::Parse {
                            line: line_no,
                            message: "duplicate vertex element".into(),
                        });
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else if count > 0 {
                    return Err(IoError::UnsupportedFormat(format!(
                        "non-vertex element '{name}' with {count} entries"
                    )));
                } else {
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let ty_token = tokens.next().unwrap_or("");
                if ty_token == "list" {
                    return Err(IoError::UnsupportedFormat(
                        "list property on vertex element".into(),
                    ));
                }
                let ty = ScalarType::parse(ty_token).ok_or(IoError::Parse {
                    line: line_no,
                    message: format!("unknown property type '{ty_token}'"),
                })?;
                let name = tokens.next().ok_or(IoError::Parse {
                    line: line_no,
                    message: "property needs a name".into(),
                })?;
                properties.push((name.to_string(), ty));
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("unexpected header keyword '{other}'"),
                })
            }
            None => {}
        }
    }

    Ok(Header {
        format: format.ok_or(IoError::Parse {
            line: line_no,
            message: "missing format line".into(),
        })?,
        vertex_count: vertex_count.ok_or(IoError::Parse {
            line: line_no,
            message: "missing vertex element".into(),
        })?,
        properties,
        timestamp,
        data_start_line: line_no,
    })
}

fn timestamp_from_filename(path: &Path) -> Option<f64> {
    let stem = path.file_stem()?.to_str()?;
    if !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()) {
        let ns: u128 = stem.parse().ok()?;
        Some(ns as f64 * 1e-9)
    } else {
        None
    }
}

/// Reads a Doppler PLY file. Ranges outside `[params.range_min,
/// params.range_max]` and non-finite rows are dropped; LOS vectors are
/// recomputed from positions.
pub fn read_doppler_ply(path: &Path, params: &ScanParams) -> Result<DopplerScan, IoError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let header = parse_header(&mut reader)?;

    let find = |name: &str| header.properties.iter().position(|(n, _)| n == name);
    let ix = find("x").ok_or_else(|| IoError::UnsupportedFormat("missing property x".into()))?;
    let iy = find("y").ok_or_else(|| IoError::UnsupportedFormat("missing property y".into()))?;
    let iz = find("z").ok_or_else(|| IoError::UnsupportedFormat("missing property z".into()))?;
    let id = DOPPLER_PROPERTY_NAMES
        .iter()
        .find_map(|n| find(n))
        .ok_or_else(|| {
            IoError::UnsupportedFormat(format!(
                "no Doppler property; accepted names: {}",
                DOPPLER_PROPERTY_NAMES.join(", ")
            ))
        })?;
    for &i in &[ix, iy, iz, id] {
        let (name, ty) = &header.properties[i];
        if !matches!(ty, ScalarType::F32 | ScalarType::F64) {
            return Err(IoError::UnsupportedFormat(format!(
                "property '{name}' must be float or double"
            )));
        }
    }

    let n_props = header.properties.len();
    let mut rows: Vec<[f64; 4]> = Vec::with_capacity(header.vertex_count);
    match header.format {
        Format::Ascii => {
            let mut line = String::new();
            let mut line_no = header.data_start_line;
            for _ in 0..header.vertex_count {
                line.clear();
                line_no += 1;
                if reader.read_line(&mut line)? == 0 {
                    return Err(IoError::Parse {
                        line: line_no,
                        message: "unexpected end of file in vertex data".into(),
                    });
                }
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| IoError::Parse {
                        line: line_no,
                        message: format!("bad number: {e}"),
                    })?;
                if values.len() != n_props {
                    return Err(IoError::Parse {
                        line: line_no,
                        message: format!("expected {n_props} values, got {}", values.len()),
                    });
                }
                rows.push([values[ix], values[iy], values[iz], values[id]]);
            }
        }
        Format::BinaryLittleEndian => {
            let offsets: Vec<usize> = header
                .properties
                .iter()
                .scan(0usize, |acc, (_, ty)| {
                    let here = *acc;
                    *acc += ty.size();
                    Some(here)
                })
                .collect();
            let stride: usize = header.properties.iter().map(|(_, t)| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for row in 0..header.vertex_count {
                reader.read_exact(&mut buf).map_err(|_| IoError::Parse {
                    line: header.data_start_line,
                    message: format!("binary payload truncated at vertex {row}"),
                })?;
                let val = |i: usize| header.properties[i].1.read_f64(&buf[offsets[i]..]);
                rows.push([val(ix), val(iy), val(iz), val(id)]);
            }
        }
    }

    let timestamp = header
        .timestamp
        .or_else(|| timestamp_from_filename(path))
        .unwrap_or(0.0);
    let mut points = Vec::with_capacity(rows.len());
    for [x, y, z, s] in rows {
        if ![x, y, z, s].iter().all(|v| v.is_finite()) {
            continue;
        }
        let position = Vec3::new(x, y, z);
        if position.norm() >= params.range_max {
            continue;
        }
        let Ok(los) = los_from_position(&position, params.range_min) else {
            continue;
        };
        points.push(DopplerPoint {
            position,
            los,
            doppler: s,
        });
    }
    Ok(DopplerScan::new(timestamp, points))
}

/// Writes a scan as PLY with double-precision x, y, z, doppler and the
/// timestamp in a header comment. ASCII output uses the shortest exact
/// decimal representation, so read(write(s)) round-trips losslessly.
pub fn write_doppler_ply(scan: &DopplerScan, path: &Path, binary: bool) -> Result<(), IoError> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    writeln!(file, "ply")?;
    writeln!(
        file,
        "format {} 1.0",
        if binary { "binary_little_endian" } else { "ascii" }
    )?;
    writeln!(file, "comment timestamp {}", scan.timestamp)?;
    writeln!(file, "element vertex {}", scan.len())?;
    for name in ["x", "y", "z"] {
        writeln!(file, "property double {name}")?;
    }
    writeln!(file, "property double doppler")?;
    writeln!(file, "end_header")?;
    if binary {
        for p in &scan.points {
            for v in [p.position.x, p.position.y, p.position.z, p.doppler] {
                file.write_all(&v.to_le_bytes())?;
            }
        }
    } else {
        for p in &scan.points {
            writeln!(
                file,
                "{} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.doppler
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("doppler-odom-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn single_vertex_ascii() {
        let path = tmp("one.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float doppler\nend_header\n1.0 0.0 0.0 -3.0\n",
        )
        .unwrap();
        let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(scan.points[0].los, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(scan.points[0].doppler, -3.0);
        assert_eq!(scan.timestamp, 0.0);
    }

    #[test]
    fn missing_doppler_is_unsupported() {
        let path = tmp("nodop.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 0 0\n",
        )
        .unwrap();
        match read_doppler_ply(&path, &ScanParams::default()) {
            Err(IoError::UnsupportedFormat(msg)) => {
                assert!(msg.contains("radial_velocity"), "{msg}");
            }
            other => panic!("expected unsupported format, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_line() {
        let path = tmp("bad.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex nope\nend_header\n",
        )
        .unwrap();
        match read_doppler_ply(&path, &ScanParams::default()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn alternate_doppler_names_accepted() {
        for name in DOPPLER_PROPERTY_NAMES {
            let path = tmp(&format!("alt_{name}.ply"));
            std::fs::write(
                &path,
                format!(
                    "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float {name}\nend_header\n2 0 0 1.5\n"
                ),
            )
            .unwrap();
            let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
            assert_eq!(scan.points[0].doppler, 1.5);
        }
    }

    #[test]
    fn timestamp_sources() {
        let path = tmp("stamped.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\ncomment timestamp 2.25\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float doppler\nend_header\n1 0 0 0\n",
        )
        .unwrap();
        let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
        assert_eq!(scan.timestamp, 2.25);

        let path = tmp("1500000000.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float doppler\nend_header\n1 0 0 0\n",
        )
        .unwrap();
        let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
        assert!((scan.timestamp - 1.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_points_dropped() {
        let path = tmp("ranges.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float doppler\nend_header\n0.1 0 0 0\n5 0 0 0\n500 0 0 0\n",
        )
        .unwrap();
        let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(scan.points[0].position.x, 5.0);
    }

    #[test]
    fn ascii_and_binary_round_trip_identically() {
        let mut rng = StdRng::seed_from_u64(7);
        let points: Vec<DopplerPoint> = (0..200)
            .map(|_| {
                let p = Vec3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-5.0..5.0),
                );
                DopplerPoint {
                    position: p,
                    los: p / p.norm(),
                    doppler: rng.random_range(-30.0..30.0),
                }
            })
            .filter(|p| p.position.norm() > 0.6)
            .collect();
        let scan = DopplerScan::new(1.375, points);
        let pa = tmp("rt_ascii.ply");
        let pb = tmp("rt_bin.ply");
        write_doppler_ply(&scan, &pa, false).unwrap();
        write_doppler_ply(&scan, &pb, true).unwrap();
        let ra = read_doppler_ply(&pa, &ScanParams::default()).unwrap();
        let rb = read_doppler_ply(&pb, &ScanParams::default()).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.timestamp, scan.timestamp);
        assert_eq!(ra.len(), scan.len());
        for (a, b) in ra.points.iter().zip(&scan.points) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.doppler, b.doppler);
        }
    }

    #[test]
    fn extra_properties_are_skipped() {
        let path = tmp("extra.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty uchar intensity\nproperty float doppler\nend_header\n3 4 0 200 -2\n",
        )
        .unwrap();
        let scan = read_doppler_ply(&path, &ScanParams::default()).unwrap();
        assert_eq!(scan.points[0].doppler, -2.0);
        assert_eq!(scan.points[0].position, Vec3::new(3.0, 4.0, 0.0));
    }
}
