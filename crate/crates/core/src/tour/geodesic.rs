//! Geodesic interpolation between 2-planes and expansion of keyframe sequences.
//!
//! For frames `Fa`, `Fb` take the SVD `Faᵀ Fb = Va Σ Vbᵀ`. The columns of
//! `Ga = Fa Va` and `Gb = Fb Vb` pair up as principal directions with
//! `cos φ_i = σ_i`. Rotating each `Ga_i` towards `Gb_i` inside their common
//! 2-plane at rate `φ_i` traces the shortest path; the result is multiplied
//! by `Vaᵀ` so that the first frame equals `Fa` exactly.

use nalgebra::{DMatrix, DVector};

use super::frame::{random_frame_from, Frame};
use super::TourError;
use crate::linalg::canonical_sign;

/// Default number of interpolation steps between two keyframes.
pub const DEFAULT_STEPS_PER_SEGMENT: usize = 60;

/// One rotation plan from `from` towards `to`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    ga: DMatrix<f64>,
    gstar: DMatrix<f64>,
    va_t: DMatrix<f64>,
    /// Principal angles, in the order of the singular values (descending cosines).
    pub angles: [f64; 2],
}

impl Geodesic {
    pub fn new(from: &Frame, to: &Frame) -> Result<Self, TourError> {
        let (fa, fb) = (from.basis(), to.basis());
        if fa.nrows() != fb.nrows() {
            return Err(TourError::DimensionMismatch {
                expected: fa.nrows(),
                found: fb.nrows(),
            });
        }
        let svd = (fa.transpose() * fb).svd(true, true);
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        // order singular pairs by descending value
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut va = DMatrix::zeros(2, 2);
        let mut vb = DMatrix::zeros(2, 2);
        let mut sigma = [0.0; 2];
        for (slot, &idx) in order.iter().enumerate() {
            va.set_column(slot, &u.column(idx));
            vb.set_column(slot, &v_t.row(idx).transpose());
            sigma[slot] = svd.singular_values[idx].clamp(0.0, 1.0);
        }

        let mut ga = fa * &va;
        let gb = fb * &vb;
        let mut gb = gb;
        for i in 0..2 {
            // fix the sign of each principal pair by Ga_i's largest entry
            let mut c = ga.column(i).into_owned();
            let before = c.clone();
            canonical_sign(&mut c);
            if c != before {
                ga.column_mut(i).neg_mut();
                gb.column_mut(i).neg_mut();
                va.column_mut(i).neg_mut();
            }
        }

        let mut gstar = DMatrix::zeros(fa.nrows(), 2);
        let mut angles = [0.0; 2];
        for i in 0..2 {
            let mut w: DVector<f64> = gb.column(i) - ga.column(i) * sigma[i];
            for j in 0..2 {
                let proj = ga.column(j).dot(&w);
                w -= ga.column(j) * proj;
            }
            let s = w.norm();
            if s <= 1e-12 {
                continue;
            }
            w /= s;
            if sigma[i] <= 1e-12 {
                // a right angle has two shortest rotations; pick one deterministically
                canonical_sign(&mut w);
            }
            gstar.set_column(i, &w);
            angles[i] = s.atan2(sigma[i]);
        }
        if angles[0] > 0.0 && angles[1] > 0.0 {
            let proj = gstar.column(0).dot(&gstar.column(1));
            let c0 = gstar.column(0).into_owned();
            let mut c1 = gstar.column(1) - c0 * proj;
            c1 /= c1.norm();
            gstar.set_column(1, &c1);
        }

        Ok(Geodesic {
            ga,
            gstar,
            va_t: va.transpose(),
            angles,
        })
    }

    /// Frame at fraction `t ∈ [0, 1]` of the way.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.ga.nrows(), 2);
        for i in 0..2 {
            let (s, c) = (t * self.angles[i]).sin_cos();
            g.set_column(i, &(self.ga.column(i) * c + self.gstar.column(i) * s));
        }
        g * &self.va_t
    }

    /// Geodesic distance, `sqrt(φ₁² + φ₂²)`.
    pub fn length(&self) -> f64 {
        self.angles[0].hypot(self.angles[1])
    }
}

/// `steps + 1` frames from `from` to (the plane of) `to` at constant angular speed.
pub fn geodesic_path(from: &Frame, to: &Frame, steps: usize) -> Result<Vec<Frame>, TourError> {
    if steps == 0 {
        return Err(TourError::EmptyPath);
    }
    let geo = Geodesic::new(from, to)?;
    Ok((0..=steps)
        .map(|s| {
            let label = if s * 2 < steps { &from.label } else { &to.label };
            let basis = if s == 0 {
                from.basis().clone()
            } else {
                geo.at(s as f64 / steps as f64)
            };
            Frame::from_trusted(basis, label.clone())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFrame {
    pub frame: Frame,
    pub segment: usize,
    pub t: f64,
    /// Label of the keyframe nearest along the segment.
    pub keyframe_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TourPath {
    pub keyframes: Vec<Frame>,
    pub steps_per_segment: usize,
    pub frames: Vec<PathFrame>,
}

impl TourPath {
    /// Chains geodesic segments through `keyframes`.
    ///
    /// Segment `s` starts from the final frame of segment `s − 1`, so in-plane
    /// orientation carries over and there is no visual snap; each segment ends
    /// on the plane of its keyframe. Both endpoints of every segment are kept.
    pub fn through(keyframes: Vec<Frame>, steps_per_segment: usize) -> Result<Self, TourError> {
        let first = keyframes.first().ok_or(TourError::EmptyPath)?;
        if steps_per_segment == 0 {
            return Err(TourError::EmptyPath);
        }
        let dim = first.dim();
        if let Some(bad) = keyframes.iter().find(|f| f.dim() != dim) {
            return Err(TourError::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let mut frames = Vec::new();
        if keyframes.len() == 1 {
            frames.push(PathFrame {
                frame: first.clone(),
                segment: 0,
                t: 0.0,
                keyframe_label: first.label.clone(),
            });
        }
        let mut current = first.clone();
        for (segment, target) in keyframes.iter().enumerate().skip(1) {
            let segment = segment - 1;
            let path = geodesic_path(&current, target, steps_per_segment)?;
            for (s, f) in path.into_iter().enumerate() {
                let t = s as f64 / steps_per_segment as f64;
                frames.push(PathFrame {
                    keyframe_label: f.label.clone(),
                    frame: f,
                    segment,
                    t,
                });
            }
            let last = &frames.last().expect("segment has frames").frame;
            current = Frame::from_trusted(last.basis().clone(), target.label.clone());
        }
        Ok(TourPath {
            keyframes,
            steps_per_segment,
            frames,
        })
    }

    /// Grand-tour-like path through `count` random planes in `r` dimensions.
    pub fn random(r: usize, count: usize, steps_per_segment: usize, seed: u64) -> Result<Self, TourError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let keyframes = (0..count)
            .map(|i| {
                random_frame_from(&mut rng, r).map(|mut f| {
                    f.label = format!("random {i}");
                    f
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::through(keyframes, steps_per_segment)
    }

    pub fn dim(&self) -> usize {
        self.keyframes[0].dim()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
