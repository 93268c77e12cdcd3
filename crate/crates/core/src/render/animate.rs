use std::borrow::Cow;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{palette_rgb, Bounds, RenderError, PALETTE};
use crate::output::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnimationOptions {
    pub width: u16,
    pub height: u16,
    /// Inter-frame delay in hundredths of a second.
    pub delay_cs: u16,
    pub marker_radius: u16,
}

impl Default for AnimationOptions {
    fn default() -> Self {
        AnimationOptions {
            width: 480,
            height: 480,
            delay_cs: 5,
            marker_radius: 2,
        }
    }
}

/// Sidecar describing a rendered animation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationMeta {
    pub frame_count: usize,
    pub options: AnimationOptions,
    /// Shared axis limits.
    pub bounds: Bounds,
    /// Limits actually used for each frame; all equal to `bounds`.
    pub frame_bounds: Vec<Bounds>,
}

const BACKGROUND: u8 = 0;
const BORDER: u8 = 1;
const FIRST_CLASS: u8 = 2;

fn global_palette() -> Vec<u8> {
    let mut p = vec![255, 255, 255, 0, 0, 0];
    for k in 0..PALETTE.len() {
        p.extend_from_slice(&palette_rgb(k));
    }
    p
}

fn rasterize(points: &DMatrix<f64>, labels: &[usize], b: &Bounds, o: &AnimationOptions) -> Vec<u8> {
    let (w, h) = (o.width as usize, o.height as usize);
    let mut buf = vec![BACKGROUND; w * h];
    for x in 0..w {
        buf[x] = BORDER;
        buf[(h - 1) * w + x] = BORDER;
    }
    for y in 0..h {
        buf[y * w] = BORDER;
        buf[y * w + w - 1] = BORDER;
    }
    let r = o.marker_radius as i64;
    for (row, &k) in points.row_iter().zip(labels) {
        let cx = ((row[0] - b.x_min) / (b.x_max - b.x_min) * (w - 1) as f64).round() as i64;
        let cy = ((b.y_max - row[1]) / (b.y_max - b.y_min) * (h - 1) as f64).round() as i64;
        let color = FIRST_CLASS + (k % PALETTE.len()) as u8;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    buf[y as usize * w + x as usize] = color;
                }
            }
        }
    }
    buf
}

/// Encodes one GIF frame per entry of `frames`, all drawn inside the same
/// bounding box so points do not jitter between frames.
pub fn animate_frames(
    frames: &[DMatrix<f64>],
    labels: &[usize],
    opts: &AnimationOptions,
) -> Result<(Vec<u8>, AnimationMeta), RenderError> {
    let first = frames.first().ok_or(RenderError::EmptyInput)?;
    let n = first.nrows();
    if n == 0 {
        return Err(RenderError::EmptyInput);
    }
    if labels.len() != n {
        return Err(RenderError::LengthMismatch { points: n, labels: labels.len() });
    }
    for (i, f) in frames.iter().enumerate() {
        if f.nrows() != n || f.ncols() != 2 {
            return Err(RenderError::FrameSizeMismatch { frame: i, expected: n, found: f.nrows() });
        }
        if let Some(p) = f.row_iter().position(|r| !r[0].is_finite() || !r[1].is_finite()) {
            return Err(RenderError::NonFinite(p));
        }
    }
    if opts.width < 4 || opts.height < 4 {
        return Err(RenderError::Gif("image must be at least 4×4 pixels".into()));
    }
    let bounds = Bounds::around(frames).ok_or(RenderError::EmptyInput)?;

    let mut out = Vec::new();
    {
        let mut enc = gif::Encoder::new(&mut out, opts.width, opts.height, &global_palette()).map_err(|e| RenderError::Gif(e.to_string()))?;
        enc.set_repeat(gif::Repeat::Infinite).map_err(|e| RenderError::Gif(e.to_string()))?;
        for f in frames {
            let frame = gif::Frame {
                width: opts.width,
                height: opts.height,
                delay: opts.delay_cs,
                buffer: Cow::Owned(rasterize(f, labels, &bounds, opts)),
                ..Default::default()
            };
            enc.write_frame(&frame).map_err(|e| RenderError::Gif(e.to_string()))?;
        }
    }
    let meta = AnimationMeta {
        frame_count: frames.len(),
        options: *opts,
        bounds,
        frame_bounds: vec![bounds; frames.len()],
    };
    Ok((out, meta))
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    frame: usize,
    file: String,
}

#[derive(Debug, Deserialize)]
struct PointRow {
    sample_index: usize,
    x: f64,
    y: f64,
    label: usize,
}

fn frame_file_error(path: &Path, e: impl ToString) -> RenderError {
    RenderError::FrameFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn read_frame(path: &Path) -> Result<(DMatrix<f64>, Vec<usize>), RenderError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| frame_file_error(path, e))?;
    let mut rows: Vec<PointRow> = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r.map_err(|e| frame_file_error(path, e))?);
    }
    rows.sort_by_key(|r| r.sample_index);
    let m = DMatrix::from_fn(rows.len(), 2, |i, j| if j == 0 { rows[i].x } else { rows[i].y });
    Ok((m, rows.iter().map(|r| r.label).collect()))
}

/// Reads a tour directory (`index.csv` plus per-frame CSVs), writes the GIF to
/// `gif_path` and its metadata to `animation.json` beside it.
pub fn animate_tour_dir(dir: &Path, gif_path: &Path, opts: &AnimationOptions) -> Result<AnimationMeta, RenderError> {
    let index = dir.join("index.csv");
    let mut rdr = csv::Reader::from_path(&index).map_err(|e| frame_file_error(&index, e))?;
    let mut entries: Vec<IndexRow> = Vec::new();
    for r in rdr.deserialize() {
        entries.push(r.map_err(|e| frame_file_error(&index, e))?);
    }
    entries.sort_by_key(|e| e.frame);
    let mut frames = Vec::with_capacity(entries.len());
    let mut labels = Vec::new();
    for e in &entries {
        let (m, l) = read_frame(&dir.join(&e.file))?;
        labels = l;
        frames.push(m);
    }
    let (bytes, meta) = animate_frames(&frames, &labels, opts)?;
    atomic_write(gif_path, &bytes)?;
    let meta_path = gif_path.with_file_name("animation.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| RenderError::Gif(e.to_string()))?;
    atomic_write(&meta_path, &json)?;
    Ok(meta)
}
