//! Heightmap snapshots: 16-bit PGM (heights scaled to the ceiling) and CSV
//! (meters, one grid row per line).

use std::path::Path;

use super::{ContainerSpec, ContainerState};
use crate::error::{IoContext, PackError, Result};

pub fn write_heightmap_pgm(state: &ContainerState, path: &Path) -> Result<()> {
    let (nx, ny) = state.dims();
    let ceiling = state.spec.ceiling();
    let mut out = format!("P5\n{ny} {nx}\n65535\n").into_bytes();
    for &h in state.heightmap() {
        let v = ((h / ceiling).clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend(v.to_be_bytes());
    }
    std::fs::write(path, out).at_path(path)
}

pub fn write_heightmap_csv(state: &ContainerState, path: &Path) -> Result<()> {
    let (_, ny) = state.dims();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in state.heightmap().chunks(ny) {
        w.write_record(row.iter().map(|h| format!("{h:?}")))?;
    }
    w.flush().at_path(path)
}

/// Reads a heightmap snapshot (`.csv` or `.pgm`) sized for `spec`.
pub fn read_heightmap(spec: ContainerSpec, path: &Path) -> Result<ContainerState> {
    let bytes = std::fs::read(path).at_path(path)?;
    let values = if bytes.starts_with(b"P5") {
        parse_pgm(&bytes, spec.ceiling())?
    } else {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(bytes.as_slice());
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            for field in rec?.iter() {
                values.push(field.trim().parse::<f64>().map_err(|_| PackError::Input {
                    path: path.to_owned(),
                    line: line + 1,
                    message: format!("bad height {field:?}"),
                })?);
            }
        }
        values
    };
    ContainerState::with_heightmap(spec, values)
}

fn parse_pgm(bytes: &[u8], ceiling: f64) -> Result<Vec<f64>> {
    let err = |offset, message: &str| PackError::Format {
        format: "PGM",
        offset,
        message: message.into(),
    };
    // Header: magic, width, height, maxval, each whitespace-separated.
    let mut fields = Vec::new();
    let mut pos = 2;
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        fields.push(
            tok.parse::<usize>()
                .map_err(|_| err(start, "bad header field"))?,
        );
    }
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos, "unsupported maxval"));
    }
    let bpp = if maxval > 255 { 2 } else { 1 };
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() < w * h * bpp {
        return Err(err(bytes.len(), "truncated pixel data"));
    }
    Ok((0..w * h)
        .map(|k| {
            let v = if bpp == 2 {
                u16::from_be_bytes([body[2 * k], body[2 * k + 1]]) as f64
            } else {
                body[k] as f64
            };
            v / maxval as f64 * ceiling
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = ContainerSpec {
            cell_size: 0.05,
            ..ContainerSpec::default()
        };
        let (nx, ny) = (spec.nx(), spec.ny());
        let values: Vec<f64> = (0..nx * ny).map(|k| k as f64 * 0.0013).collect();
        let state = ContainerState::with_heightmap(spec, values.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_heightmap_csv(&state, &path).unwrap();
        assert_eq!(
            read_heightmap(spec, &path).unwrap().heightmap(),
            values.as_slice()
        );
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let spec = ContainerSpec {
            cell_size: 0.05,
            ..ContainerSpec::default()
        };
        let (nx, ny) = (spec.nx(), spec.ny());
        let values: Vec<f64> = (0..nx * ny).map(|k| (k % 7) as f64 * 0.03).collect();
        let state = ContainerState::with_heightmap(spec, values.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        write_heightmap_pgm(&state, &path).unwrap();
        let back = read_heightmap(spec, &path).unwrap();
        let step = spec.ceiling() / 65535.0;
        for (a, b) in back.heightmap().iter().zip(&values) {
            assert!((a - b).abs() <= step);
        }
    }
}
