//! SVG figures and GIF animations.

mod animate;
mod histogram;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use animate::{animate_frames, animate_tour_dir, AnimationMeta, AnimationOptions};
pub use histogram::{histogram, histogram_svg, Histogram};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("nothing to draw")]
    EmptyInput,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("frame {frame} has {found} points, expected {expected}")]
    FrameSizeMismatch { frame: usize, expected: usize, found: usize },
    #[error("gif encoding failed: {0}")]
    Gif(String),
    #[error("bad frame file {path}: {msg}")]
    FrameFile { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Okabe–Ito plus two Tol colours; class `k` gets `PALETTE[k % 10]`.
pub const PALETTE: [&str; 10] = [
    "#0072B2", "#E69F00", "#009E73", "#CC79A7", "#56B4E9", "#D55E00", "#F0E442", "#000000", "#999999", "#882255",
];

pub fn class_color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

pub(crate) fn palette_rgb(k: usize) -> [u8; 3] {
    let hex = &class_color(k)[1..];
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).expect("palette is valid hex");
    [byte(0), byte(2), byte(4)]
}

const MARGIN_FRACTION: f64 = 0.05;

/// Axis limits of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    /// Data extent plus a 5% margin on each side. A zero-width axis becomes a
    /// unit interval around its value.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a DMatrix<f64>>) -> Option<Self> {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            for r in p.row_iter() {
                x0 = x0.min(r[0]);
                x1 = x1.max(r[0]);
                y0 = y0.min(r[1]);
                y1 = y1.max(r[1]);
            }
        }
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        let pad = |lo: f64, hi: f64| {
            if hi - lo > 0.0 {
                let m = (hi - lo) * MARGIN_FRACTION;
                (lo - m, hi + m)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x_min, x_max) = pad(x0, x1);
        let (y_min, y_max) = pad(y0, y1);
        Some(Bounds { x_min, x_max, y_min, y_max })
    }

    pub(crate) fn to_pixel(self, x: f64, y: f64, area: &PlotArea) -> (f64, f64) {
        let px = area.left + (x - self.x_min) / (self.x_max - self.x_min) * area.width;
        let py = area.top + (self.y_max - y) / (self.y_max - self.y_min) * area.height;
        (px, py)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Legend text per class index; missing names fall back to the index.
    pub class_names: Vec<String>,
    pub width: u32,
    pub height: u32,
    pub marker_radius: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            class_names: Vec::new(),
            width: 640,
            height: 480,
            marker_radius: 2.5,
        }
    }
}

impl PlotStyle {
    pub fn titled(title: impl Into<String>) -> Self {
        PlotStyle {
            title: title.into(),
            ..Default::default()
        }
    }

    fn class_name(&self, k: usize) -> String {
        self.class_names.get(k).cloned().unwrap_or_else(|| k.to_string())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PlotArea {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl PlotArea {
    fn for_style(style: &PlotStyle, legend: bool) -> Self {
        let right = if legend { 140.0 } else { 20.0 };
        PlotArea {
            left: 60.0,
            top: 40.0,
            width: (style.width as f64 - 60.0 - right).max(10.0),
            height: (style.height as f64 - 40.0 - 50.0).max(10.0),
        }
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub(crate) fn svg_open(style: &PlotStyle) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = style.width,
        h = style.height
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white" class="background"/>"#, style.width, style.height);
    if !style.title.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            style.width / 2,
            escape(&style.title)
        );
    }
    s
}

pub(crate) fn svg_axes(s: &mut String, b: &Bounds, area: &PlotArea, style: &PlotStyle) {
    let _ = writeln!(
        s,
        r#"<g class="axes" font-family="sans-serif" font-size="11"><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        area.left, area.top, area.width, area.height
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = b.x_min + f * (b.x_max - b.x_min);
        let yv = b.y_min + f * (b.y_max - b.y_min);
        let px = area.left + f * area.width;
        let py = area.top + area.height - f * area.height;
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            area.top + area.height + 16.0,
            tick(xv)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, area.left - 6.0, py + 4.0, tick(yv));
    }
    if !style.x_label.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            area.left + area.width / 2.0,
            area.top + area.height + 36.0,
            escape(&style.x_label)
        );
    }
    if !style.y_label.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            area.top + area.height / 2.0,
            area.top + area.height / 2.0,
            escape(&style.y_label)
        );
    }
    s.push_str("</g>\n");
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn svg_legend(s: &mut String, classes: &[usize], style: &PlotStyle, area: &PlotArea) {
    s.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n");
    let x = area.left + area.width + 12.0;
    for (row, &k) in classes.iter().enumerate() {
        let y = area.top + 6.0 + 16.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<rect class="legend-swatch" x="{x:.2}" y="{y:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            class_color(k),
            x + 16.0,
            y + 9.0,
            escape(&style.class_name(k))
        );
    }
    s.push_str("</g>\n");
}

fn check_points(points: &DMatrix<f64>, labels: &[usize]) -> Result<(), RenderError> {
    if points.nrows() == 0 {
        return Err(RenderError::EmptyInput);
    }
    if points.ncols() != 2 || labels.len() != points.nrows() {
        return Err(RenderError::LengthMismatch {
            points: points.nrows(),
            labels: labels.len(),
        });
    }
    if let Some(i) = points.row_iter().position(|r| !r[0].is_finite() || !r[1].is_finite()) {
        return Err(RenderError::NonFinite(i));
    }
    Ok(())
}

/// Scatter plot of N×2 points, one circle per point coloured by class.
pub fn scatter_svg(points: &DMatrix<f64>, labels: &[usize], style: &PlotStyle) -> Result<String, RenderError> {
    check_points(points, labels)?;
    let bounds = Bounds::around([points]).ok_or(RenderError::EmptyInput)?;
    scatter_svg_with_bounds(points, labels, style, &bounds)
}

pub fn scatter_svg_with_bounds(
    points: &DMatrix<f64>,
    labels: &[usize],
    style: &PlotStyle,
    bounds: &Bounds,
) -> Result<String, RenderError> {
    check_points(points, labels)?;
    let area = PlotArea::for_style(style, true);
    let mut s = svg_open(style);
    svg_axes(&mut s, bounds, &area, style);
    s.push_str("<g class=\"points\">\n");
    for (r, &k) in points.row_iter().zip(labels) {
        let (px, py) = bounds.to_pixel(r[0], r[1], &area);
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="{}" fill="{}" fill-opacity="0.7"/>"#,
            style.marker_radius,
            class_color(k)
        );
    }
    s.push_str("</g>\n");
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    svg_legend(&mut s, &classes, style, &area);
    s.push_str("</svg>\n");
    Ok(s)
}

/// One polyline per named series, e.g. train and test accuracy per layer.
pub fn line_plot_svg(series: &[(String, Vec<(f64, f64)>)], style: &PlotStyle) -> Result<String, RenderError> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Err(RenderError::EmptyInput);
    }
    if let Some(i) = all.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(RenderError::NonFinite(i));
    }
    let flat = DMatrix::from_fn(all.len(), 2, |i, j| if j == 0 { all[i].0 } else { all[i].1 });
    let bounds = Bounds::around([&flat]).ok_or(RenderError::EmptyInput)?;
    let area = PlotArea::for_style(style, true);
    let mut s = svg_open(style);
    svg_axes(&mut s, &bounds, &area, style);
    for (idx, (_, pts)) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = bounds.to_pixel(x, y, &area);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            class_color(idx),
            coords.join(" ")
        );
        for c in &coords {
            let (px, py) = c.split_once(',').expect("formatted above");
            let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{}"/>"#, class_color(idx));
        }
    }
    let legend_style = PlotStyle {
        class_names: series.iter().map(|(n, _)| n.clone()).collect(),
        ..style.clone()
    };
    svg_legend(&mut s, &(0..series.len()).collect::<Vec<_>>(), &legend_style, &area);
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_two_classes() {
        let p = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 2.0, -1.0, 0.5]);
        let svg = scatter_svg(&p, &[0, 1, 1], &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("legend-swatch").count(), 2);
        assert_eq!(svg, scatter_svg(&p, &[0, 1, 1], &PlotStyle::default()).unwrap());
    }

    #[test]
    fn identical_points_get_unit_box() {
        let p = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, 3.0, -2.0]);
        let b = Bounds::around([&p]).unwrap();
        assert_eq!(b, Bounds { x_min: 2.5, x_max: 3.5, y_min: -2.5, y_max: -1.5 });
        let svg = scatter_svg(&p, &[0, 0], &PlotStyle::default()).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn margin_is_five_percent() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 20.0]);
        let b = Bounds::around([&p]).unwrap();
        assert_eq!((b.x_min, b.x_max, b.y_min, b.y_max), (-0.5, 10.5, -1.0, 21.0));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(scatter_svg(&DMatrix::zeros(0, 2), &[], &PlotStyle::default()), Err(RenderError::EmptyInput)));
        let p = DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(matches!(scatter_svg(&p, &[0], &PlotStyle::default()), Err(RenderError::NonFinite(0))));
    }

    #[test]
    fn palette_parses() {
        assert_eq!(palette_rgb(0), [0x00, 0x72, 0xB2]);
        assert_eq!(class_color(12), class_color(2));
    }

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let s = vec![
            ("train".to_string(), vec![(0.0, 0.5), (1.0, 0.8)]),
            ("test".to_string(), vec![(0.0, 0.4), (1.0, 0.7)]),
        ];
        let svg = line_plot_svg(&s, &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(line_plot_svg(&[], &PlotStyle::default()).is_err());
    }
}
