use std::path::Path;

use serde::Serialize;

use super::ContainerState;
use crate::error::{PackError, Result};
use crate::mesh::HeightfieldPair;

/// Side length of the square policy observation.
pub const OBSERVATION_SIZE: usize = 224;

/// Gap, in cells, between the box region and the object projection.
const GUTTER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Policy input: box heightmap anchored at the top-left, the next object's top
/// profile to its right after a two-cell gutter, zeros elsewhere. Heights are
/// divided by the container ceiling.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pixels: Vec<f32>,
    pub box_region: Rect,
    pub object_region: Option<Rect>,
}

impl Observation {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * OBSERVATION_SIZE + col]
    }

    /// Row-major little-endian float32 bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u8> = self
            .pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::GrayImage::from_raw(OBSERVATION_SIZE as u32, OBSERVATION_SIZE as u32, data)
            .expect("buffer matches image size")
            .save(path)?;
        Ok(())
    }
}

pub fn render_observation(
    state: &ContainerState,
    next: Option<&HeightfieldPair>,
) -> Result<Observation> {
    let (nx, ny) = state.dims();
    let size = OBSERVATION_SIZE;
    if nx > size || ny > size {
        return Err(PackError::Resolution(format!(
            "{nx}x{ny} box grid exceeds the {size}x{size} observation"
        )));
    }
    let norm = state.spec.ceiling();
    let mut pixels = vec![0f32; size * size];
    for i in 0..nx {
        for j in 0..ny {
            pixels[i * size + j] = (state.height(i, j) / norm).clamp(0.0, 1.0) as f32;
        }
    }
    let object_region = match next {
        None => None,
        Some(p) => {
            let col = ny + GUTTER;
            if p.nu > size || col + p.nv > size {
                return Err(PackError::Resolution(format!(
                    "{}x{} object projection does not fit beside the {nx}x{ny} box",
                    p.nu, p.nv
                )));
            }
            for (u, v) in p.cells() {
                pixels[u * size + col + v] = (p.top[p.index(u, v)] / norm).clamp(0.0, 1.0) as f32;
            }
            Some(Rect {
                row: 0,
                col,
                rows: p.nu,
                cols: p.nv,
            })
        }
    };
    Ok(Observation {
        pixels,
        box_region: Rect {
            row: 0,
            col: 0,
            rows: nx,
            cols: ny,
        },
        object_region,
    })
}
