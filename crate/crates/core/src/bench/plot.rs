//! Minimal PNG charts: grouped histograms and line charts on a unit y-axis.
//! There is no text rendering; every chart is written next to a CSV with the
//! plotted numbers and series names in legend order.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

const W: u32 = 720;
const H: u32 = 420;
const MARGIN: u32 = 40;

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        let mut c = Self {
            img: RgbImage::from_pixel(W, H, Rgb([255, 255, 255])),
        };
        for k in 0..=4 {
            let y = c.y_px(k as f64 / 4.0);
            c.hline(MARGIN, W - MARGIN, y, Rgb([225, 225, 225]));
        }
        c.hline(MARGIN, W - MARGIN, H - MARGIN, Rgb([0, 0, 0]));
        c.vline(MARGIN, MARGIN, H - MARGIN, Rgb([0, 0, 0]));
        c
    }

    fn y_px(&self, v: f64) -> u32 {
        let span = (H - 2 * MARGIN) as f64;
        (H - MARGIN) - (v.clamp(0.0, 1.0) * span).round() as u32
    }

    fn hline(&mut self, x0: u32, x1: u32, y: u32, c: Rgb<u8>) {
        for x in x0..=x1.min(W - 1) {
            self.img.put_pixel(x, y.min(H - 1), c);
        }
    }

    fn vline(&mut self, x: u32, y0: u32, y1: u32, c: Rgb<u8>) {
        for y in y0..=y1.min(H - 1) {
            self.img.put_pixel(x.min(W - 1), y, c);
        }
    }

    fn rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb<u8>) {
        for x in x0..x1.min(W) {
            for y in y0..y1.min(H) {
                self.img.put_pixel(x, y, c);
            }
        }
    }

    fn segment(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            for t in -1..=1 {
                let py = y + t;
                if (0..W as i64).contains(&x) && (0..H as i64).contains(&py) {
                    self.img.put_pixel(x as u32, py as u32, c);
                }
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn legend(&mut self, n: usize) {
        for k in 0..n {
            let x = MARGIN + 4 + 16 * k as u32;
            self.rect(x, 8, x + 12, 20, color(k));
        }
    }
}

fn color(k: usize) -> Rgb<u8> {
    Rgb(PALETTE[k % PALETTE.len()])
}

/// Histogram of values in `[0, 1]` with one bar per series in each bin,
/// heights normalized by series size.
pub fn histogram(path: &Path, series: &[Series], bins: usize) -> Result<()> {
    let bins = bins.max(1);
    let mut c = Canvas::new();
    let span = (W - 2 * MARGIN) as f64;
    let bin_w = span / bins as f64;
    let bar_w = (bin_w / series.len().max(1) as f64).max(1.0);
    let mut rows = vec!["series,bin_lo,bin_hi,fraction".to_string()];
    for (k, s) in series.iter().enumerate() {
        let mut counts = vec![0usize; bins];
        for v in &s.values {
            counts[((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let n = s.values.len().max(1) as f64;
        for (b, &count) in counts.iter().enumerate() {
            let frac = count as f64 / n;
            let x0 = MARGIN as f64 + b as f64 * bin_w + k as f64 * bar_w;
            c.rect(
                x0 as u32 + 1,
                c.y_px(frac),
                (x0 + bar_w) as u32,
                H - MARGIN,
                color(k),
            );
            rows.push(format!(
                "{},{},{},{frac}",
                s.name,
                b as f64 / bins as f64,
                (b + 1) as f64 / bins as f64
            ));
        }
    }
    c.legend(series.len());
    finish(path, c, rows)
}

/// One polyline per series; x is the value index, y the value in `[0, 1]`.
pub fn line_chart(path: &Path, series: &[Series]) -> Result<()> {
    let mut c = Canvas::new();
    let longest = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let span = (W - 2 * MARGIN) as f64;
    let x_px =
        |i: usize| MARGIN as i64 + (i as f64 / (longest.max(2) - 1) as f64 * span).round() as i64;
    let mut rows = vec!["series,step,value".to_string()];
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<(i64, i64)> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| (x_px(i), c.y_px(v) as i64))
            .collect();
        for w in pts.windows(2) {
            c.segment(w[0], w[1], color(k));
        }
        if let [p] = pts.as_slice() {
            c.segment(*p, *p, color(k));
        }
        rows.extend(
            s.values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{},{i},{v}", s.name)),
        );
    }
    c.legend(series.len());
    finish(path, c, rows)
}

fn finish(path: &Path, c: Canvas, rows: Vec<String>) -> Result<()> {
    c.img.save(path)?;
    let csv_path = path.with_extension("csv");
    std::fs::write(&csv_path, rows.join("\n") + "\n").map_err(|source| {
        crate::error::PackError::Io {
            path: csv_path,
            source,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_png_and_data() {
        let dir = tempfile::tempdir().unwrap();
        let series = vec![
            Series {
                name: "a".into(),
                values: vec![0.1, 0.5, 0.55, 1.0],
            },
            Series {
                name: "b".into(),
                values: vec![0.7],
            },
        ];
        let hist = dir.path().join("h.png");
        histogram(&hist, &series, 10).unwrap();
        let line = dir.path().join("l.png");
        line_chart(&line, &series).unwrap();
        for p in [&hist, &line] {
            let img = image::open(p).unwrap();
            assert_eq!((img.width(), img.height()), (W, H));
        }
        let data = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
        assert!(data.contains("a,0.5,0.6,0.5"), "{data}");
    }
}
