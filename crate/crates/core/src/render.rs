//! Raster rendering of IR matrices and performance curves.
//!
//! Matrices render one cell per `scale × scale` pixel block: columns are
//! sampled states, rows are interventions, the null intervention on top.
//! Images are written as PNG, so identical inputs give identical bytes.
//!
//! Color maps (stops interpolated linearly in RGB):
//!
//! | id        | stops                                                         |
//! |-----------|---------------------------------------------------------------|
//! | `dusk`    | 0 → `#140f3c`, 0.5 → `#b43c6e`, 1 → `#faf0b4`                  |
//! | `gray`    | 0 → `#000000`, 1 → `#ffffff`                                  |
//! | `redblue` | 0 → `#2166ac`, 0.5 → `#f7f7f7`, 1 → `#b2182b`                  |
//!
//! Raw mode maps `[0, 1]` onto the color map. Relative mode clamps values to
//! `[-bound, bound]` and maps that interval onto the color map. Missing cells
//! are hatched with `#808080` / `#dcdcdc` diagonal stripes.

use std::io::Cursor;
use std::str::FromStr;

use image::{ImageFormat, Rgb, RgbImage};
use thiserror::Error;

use crate::harness::MatrixGrid;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("raw mode expects values in [0, 1], found {value} at state {state}, intervention row {row}")]
    OutOfRange { value: f64, state: usize, row: usize },
    #[error("relative mode needs every null-intervention cell; state {0} is missing")]
    MissingBaseline(usize),
    #[error("invalid render setting: {0}")]
    Invalid(String),
    #[error("image encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    Raw,
    Relative,
}

impl FromStr for RenderMode {
    type Err = RenderError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(RenderMode::Raw),
            "relative" => Ok(RenderMode::Relative),
            _ => Err(RenderError::Invalid(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMap {
    Dusk,
    Gray,
    RedBlue,
}

impl FromStr for ColorMap {
    type Err = RenderError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dusk" => Ok(ColorMap::Dusk),
            "gray" => Ok(ColorMap::Gray),
            "redblue" => Ok(ColorMap::RedBlue),
            _ => Err(RenderError::Invalid(format!("unknown color map `{s}`"))),
        }
    }
}

impl ColorMap {
    fn stops(self) -> &'static [[u8; 3]] {
        match self {
            ColorMap::Dusk => &[[0x14, 0x0f, 0x3c], [0xb4, 0x3c, 0x6e], [0xfa, 0xf0, 0xb4]],
            ColorMap::Gray => &[[0x00, 0x00, 0x00], [0xff, 0xff, 0xff]],
            ColorMap::RedBlue => &[[0x21, 0x66, 0xac], [0xf7, 0xf7, 0xf7], [0xb2, 0x18, 0x2b]],
        }
    }

    /// Color at `t ∈ [0, 1]`.
    pub fn color(self, t: f64) -> Rgb<u8> {
        let stops = self.stops();
        let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
        let i = (t.floor() as usize).min(stops.len() - 2);
        let f = t - i as f64;
        let (a, b) = (stops[i], stops[i + 1]);
        Rgb(std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * f).round() as u8))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub mode: RenderMode,
    /// Truncation bound for relative mode.
    pub bound: f64,
    pub color_map: ColorMap,
    /// Pixels per cell edge.
    pub scale: u32,
}

impl RenderSpec {
    pub fn raw() -> Self {
        RenderSpec {
            mode: RenderMode::Raw,
            bound: 0.5,
            color_map: ColorMap::Dusk,
            scale: 1,
        }
    }

    pub fn relative() -> Self {
        RenderSpec {
            mode: RenderMode::Relative,
            bound: 0.5,
            color_map: ColorMap::RedBlue,
            scale: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedMatrix {
    pub image: RgbImage,
    /// Cells outside `[-bound, bound]` in relative mode; 0 in raw mode.
    pub truncated: usize,
    pub total_cells: usize,
}

impl RenderedMatrix {
    pub fn truncated_fraction(&self) -> f64 {
        self.truncated as f64 / self.total_cells as f64
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(&self.image)
    }
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

const HATCH_DARK: Rgb<u8> = Rgb([0x80, 0x80, 0x80]);
const HATCH_LIGHT: Rgb<u8> = Rgb([0xdc, 0xdc, 0xdc]);

/// Renders `grid`. Relative mode subtracts row 0 from every row first, which
/// leaves an already-normalized grid unchanged.
pub fn render_matrix(grid: &MatrixGrid, spec: &RenderSpec) -> Result<RenderedMatrix, RenderError> {
    if spec.scale == 0 || spec.scale > 64 {
        return Err(RenderError::Invalid(format!("scale {} not in 1..=64", spec.scale)));
    }
    if !(spec.bound > 0.0 && spec.bound <= 1.0) {
        return Err(RenderError::Invalid(format!("bound {} not in (0, 1]", spec.bound)));
    }
    let (rows, cols) = (grid.row_count(), grid.column_count());
    let mut values = grid.rows.clone();
    let mut truncated = 0;
    match spec.mode {
        RenderMode::Raw => {
            for (m, row) in values.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    if let Some(v) = v {
                        if !(0.0..=1.0).contains(v) {
                            return Err(RenderError::OutOfRange {
                                value: *v,
                                state: k,
                                row: m,
                            });
                        }
                    }
                }
            }
        }
        RenderMode::Relative => {
            let base: Vec<f64> = grid.rows[0]
                .iter()
                .enumerate()
                .map(|(k, v)| v.ok_or(RenderError::MissingBaseline(k)))
                .collect::<Result<_, _>>()?;
            for row in values.iter_mut() {
                for (v, b) in row.iter_mut().zip(&base) {
                    if let Some(x) = v {
                        *x -= b;
                        if x.abs() > spec.bound {
                            truncated += 1;
                        }
                    }
                }
            }
        }
    }

    let s = spec.scale;
    let mut image = RgbImage::new(cols as u32 * s, rows as u32 * s);
    for (m, row) in values.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            for dy in 0..s {
                for dx in 0..s {
                    let (x, y) = (k as u32 * s + dx, m as u32 * s + dy);
                    let px = match v {
                        Some(v) => {
                            let t = match spec.mode {
                                RenderMode::Raw => *v,
                                RenderMode::Relative => (v.clamp(-spec.bound, spec.bound) / spec.bound + 1.0) / 2.0,
                            };
                            spec.color_map.color(t)
                        }
                        None if (dx + dy) % 4 < 2 => HATCH_DARK,
                        None => HATCH_LIGHT,
                    };
                    image.put_pixel(x, y, px);
                }
            }
        }
    }
    Ok(RenderedMatrix {
        image,
        truncated,
        total_cells: rows * cols,
    })
}

/// Performance curve series: one line per pipeline, points at successive
/// checkpoints (evenly spaced), y = mean return.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

const SERIES_COLORS: [[u8; 3]; 6] = [
    [0x1b, 0x9e, 0x77],
    [0xd9, 0x5f, 0x02],
    [0x75, 0x70, 0xb3],
    [0xe7, 0x29, 0x8a],
    [0x66, 0xa6, 0x1e],
    [0xe6, 0xab, 0x02],
];

/// Plots series on a 640×400 canvas with white background and axes. Series
/// colors follow input order through a fixed six-color palette; there is no
/// text, so the legend is that order.
pub fn render_curves(series: &[Series]) -> Result<RgbImage, RenderError> {
    let (w, h, margin) = (640u32, 400u32, 40u32);
    let mut image = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let mut checkpoints: Vec<u64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    if checkpoints.is_empty() {
        return Err(RenderError::Invalid("no points to plot".into()));
    }
    let (mut lo, mut hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), y| (l.min(*y), h.max(*y)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let axis = Rgb([0x40, 0x40, 0x40]);
    draw_line(&mut image, (margin as i64, (h - margin) as i64), ((w - margin) as i64, (h - margin) as i64), axis);
    draw_line(&mut image, (margin as i64, margin as i64), (margin as i64, (h - margin) as i64), axis);

    let span_x = (w - 2 * margin) as f64;
    let span_y = (h - 2 * margin) as f64;
    let px = |c: u64| {
        let i = checkpoints.binary_search(&c).expect("checkpoint collected above");
        let f = if checkpoints.len() == 1 { 0.5 } else { i as f64 / (checkpoints.len() - 1) as f64 };
        (margin as f64 + f * span_x).round() as i64
    };
    let py = |y: f64| ((h - margin) as f64 - (y - lo) / (hi - lo) * span_y).round() as i64;
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(SERIES_COLORS[i % SERIES_COLORS.len()]);
        let pts: Vec<(i64, i64)> = s.points.iter().map(|(c, y)| (px(*c), py(*y))).collect();
        for pair in pts.windows(2) {
            draw_line(&mut image, pair[0], pair[1], color);
        }
        for &(x, y) in &pts {
            for dx in -2..=2 {
                for dy in -2..=2 {
                    put(&mut image, x + dx, y + dy, color);
                }
            }
        }
    }
    Ok(image)
}

fn put(image: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < image.width() && (y as u32) < image.height() {
        image.put_pixel(x as u32, y as u32, color);
    }
}

// Bresenham
fn draw_line(image: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(image, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
