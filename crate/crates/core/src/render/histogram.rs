use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{svg_axes, svg_open, Bounds, PlotArea, PlotStyle, RenderError};

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
/// When every score is equal there is a single bin over a unit range around it.
pub fn histogram(scores: &[f64], bins: usize) -> Result<Histogram, RenderError> {
    if scores.is_empty() || bins == 0 {
        return Err(RenderError::EmptyInput);
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite(i));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![scores.len()],
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0; bins];
    for &v in scores {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

pub fn histogram_svg(hist: &Histogram, style: &PlotStyle) -> Result<String, RenderError> {
    if hist.counts.is_empty() {
        return Err(RenderError::EmptyInput);
    }
    let top = *hist.counts.iter().max().expect("non-empty") as f64;
    let corners = DMatrix::from_row_slice(2, 2, &[hist.edges[0], 0.0, *hist.edges.last().expect("edges"), top.max(1.0)]);
    let mut bounds = Bounds::around([&corners]).ok_or(RenderError::EmptyInput)?;
    bounds.y_min = 0.0;
    let area = PlotArea::for_style(style, false);
    let mut s = svg_open(style);
    svg_axes(&mut s, &bounds, &area, style);
    s.push_str("<g class=\"bars\">\n");
    for (i, &c) in hist.counts.iter().enumerate() {
        let (x0, y0) = bounds.to_pixel(hist.edges[i], c as f64, &area);
        let (x1, y1) = bounds.to_pixel(hist.edges[i + 1], 0.0, &area);
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#0072B2" stroke="white" data-count="{c}"/>"##,
            x1 - x0,
            y1 - y0
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}
