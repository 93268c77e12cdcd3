use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::classvec::{class_vectors, fix_signs, Variant};
use crate::ingest::{synth_gaussian_clusters, synth_swiss_roll};
use crate::linalg::{orthonormality_error, DEFAULT_RANK_TOL};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

fn fixed_set(theta: DMatrix<f64>, global: DVector<f64>) -> ClassVectorSet {
    let k = theta.ncols();
    ClassVectorSet {
        class_means: (0..k).map(|i| &global + theta.column(i)).collect(),
        theta,
        global_mean: global,
        variant: Variant::Mean,
        sign_fixed: true,
        ambiguous: vec![],
    }
}

fn acts(values: DMatrix<f64>) -> LayerActivations {
    LayerActivations::new("layer", values).unwrap()
}

#[test]
fn orthonormal_theta_projects_directly() {
    let (q, _) = gaussian(20, 4, 1).qr().unpack();
    let x = acts(gaussian(30, 20, 2));
    let mean = DVector::from_fn(20, |i, _| i as f64 * 0.1);
    let basis = build_tour_basis(&x, &fixed_set(q.clone(), mean.clone()), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(basis.rank, 4);
    assert!((&basis.r_mat - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    let direct = subtract_row(&x.values, &mean) * &q;
    assert!((&basis.projected - direct).amax() < 1e-12);
}

#[test]
fn both_routes_agree_on_random_full_rank() {
    let theta = unit_columns(gaussian(64, 10, 3));
    let x = acts(gaussian(200, 64, 4));
    let mean = DVector::from_fn(64, |_, _| 0.5);
    let basis = build_tour_basis(&x, &fixed_set(theta.clone(), mean.clone()), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(basis.route, ProjectionRoute::TriangularSolve);
    assert!(basis.identity_residual.unwrap() <= 1e-6);
    let direct = subtract_row(&x.values, &mean) * &basis.q;
    assert!((&basis.projected - &direct).norm() <= 1e-8 * direct.norm());
    assert!(orthonormality_error(&basis.q) <= 1e-10);
    assert!((&basis.q * &basis.r_mat - &theta).norm() <= 1e-8 * theta.norm());
}

#[test]
fn simplex_theta_has_rank_nine() {
    // columns of the centering matrix on 10 coordinates sum to zero
    let mut theta = DMatrix::zeros(32, 10);
    for k in 0..10 {
        for i in 0..10 {
            theta[(i, k)] = if i == k { 0.9 } else { -0.1 };
        }
    }
    let rot = gaussian(32, 32, 5).qr().q();
    let theta = unit_columns(rot * theta);
    let x = acts(gaussian(50, 32, 6));
    let basis = build_tour_basis(&x, &fixed_set(theta.clone(), DVector::zeros(32)), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(basis.rank, 9);
    assert_eq!(basis.route, ProjectionRoute::Direct);
    assert!((&basis.q * &basis.r_mat - &theta).norm() <= 1e-8 * theta.norm());
    assert_eq!(basis.projected.shape(), (50, 9));
}

#[test]
fn unfixed_or_zero_theta_is_rejected() {
    let x = acts(gaussian(10, 5, 7));
    let mut cvs = fixed_set(unit_columns(gaussian(5, 3, 8)), DVector::zeros(5));
    cvs.sign_fixed = false;
    assert!(matches!(build_tour_basis(&x, &cvs, DEFAULT_RANK_TOL), Err(TourError::SignsNotFixed)));
    let zero = fixed_set(DMatrix::zeros(5, 3), DVector::zeros(5));
    assert!(matches!(
        build_tour_basis(&x, &zero, DEFAULT_RANK_TOL),
        Err(TourError::Linalg(LinalgError::ZeroMatrix))
    ));
}

#[test]
fn planned_frame_of_orthogonal_axes_is_unchanged() {
    let basis = TourBasis::ambient(&gaussian(5, 4, 9));
    let frames = basis.planned_frames(&[(1, 3)], None).unwrap();
    let expected = DMatrix::from_fn(4, 2, |i, c| if (c == 0 && i == 1) || (c == 1 && i == 3) { 1.0 } else { 0.0 });
    assert_eq!(frames[0].basis(), &expected);
    assert_eq!(frames[0].label, "1 vs 3");
}

#[test]
fn collinear_axes_are_reported() {
    let mut r = DMatrix::identity(3, 3);
    r.set_column(2, &DVector::from_vec(vec![2.0, 0.0, 0.0]));
    let mut basis = TourBasis::ambient(&gaussian(4, 3, 10));
    basis.r_mat = r;
    assert!(matches!(basis.planned_frames(&[(0, 2)], None), Err(TourError::CollinearAxes { j: 0, k: 2 })));
    assert!(matches!(basis.planned_frames(&[(1, 1)], None), Err(TourError::SameClass(1))));
}

fn cifar_fixture() -> (LayerActivations, ClassVectorSet, Vec<String>) {
    let g = synth_gaussian_clusters(10, 40, 24, 5.0, 3.0, 11).unwrap();
    let cvs = fix_signs(class_vectors(&g.activations, &g.labels, Variant::WithinClassPc1).unwrap());
    let names = ["plane", "car", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    (g.activations, cvs, names)
}

#[test]
fn mechanical_preset_gives_four_keyframes() {
    let (x, cvs, names) = cifar_fixture();
    let basis = build_tour_basis(&x, &cvs, DEFAULT_RANK_TOL).unwrap();
    let pairs = TourPreset::Mechanical.resolve(&names).unwrap();
    let frames = basis.planned_frames(&pairs, Some(&names)).unwrap();
    assert_eq!(frames.len(), 4);
    assert_eq!(frames[0].label, "plane vs truck");
    assert_eq!(frames[3].label, "plane vs ship");
}

#[test]
fn keyframe_coordinates_match_ambient_frame() {
    let (x, cvs, _) = cifar_fixture();
    let basis = build_tour_basis(&x, &cvs, DEFAULT_RANK_TOL).unwrap();
    let frames = basis.planned_frames(&[(2, 7)], None).unwrap();
    let path = TourPath::through(frames, 1).unwrap();
    let coords = &render_tour(&basis, &path).unwrap()[0];

    // ambient oracle: [θ_j, θ_k′] built straight from the class vectors
    let tj = cvs.theta.column(2).normalize();
    let tk = cvs.theta.column(7);
    let tk_perp = (tk - &tj * tj.dot(&tk)).normalize();
    let xc = subtract_row(&x.values, &cvs.global_mean);
    let mut expected = DMatrix::zeros(x.n(), 2);
    expected.set_column(0, &(&xc * &tj));
    expected.set_column(1, &(&xc * &tk_perp));
    assert!((coords - &expected).norm() <= 1e-6 * expected.norm());
}

#[test]
fn constant_path_renders_identical_frames() {
    let basis = TourBasis::ambient(&gaussian(15, 4, 12));
    let f = random_frame(4, 3).unwrap();
    let path = TourPath::through(vec![f.clone(), f], 5).unwrap();
    let out = render_tour(&basis, &path).unwrap();
    assert_eq!(out.len(), 6);
    for c in &out[1..] {
        assert!((c - &out[0]).amax() < 1e-12);
    }
}

#[test]
fn projection_never_stretches_distances() {
    let basis = TourBasis::ambient(&gaussian(40, 6, 13));
    let path = TourPath::random(6, 3, 8, 14).unwrap();
    let p = &basis.projected;
    for coords in render_tour(&basis, &path).unwrap() {
        for a in 0..p.nrows() {
            for b in (a + 1)..p.nrows() {
                let full = (p.row(a) - p.row(b)).norm();
                let flat = (coords.row(a) - coords.row(b)).norm();
                assert!(flat <= full * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn wrong_dimension_path_is_rejected() {
    let basis = TourBasis::ambient(&gaussian(5, 3, 15));
    let path = TourPath::random(4, 2, 3, 0).unwrap();
    assert!(matches!(render_tour(&basis, &path), Err(TourError::DimensionMismatch { expected: 3, found: 4 })));
}

fn aspect(c: &DMatrix<f64>) -> f64 {
    let span = |j: usize| c.column(j).max() - c.column(j).min();
    span(1) / span(0)
}

#[test]
fn swiss_roll_top_down_to_side_on() {
    let roll = synth_swiss_roll(2000, 0.0, 16).unwrap();
    let basis = TourBasis::ambient(&roll.activations.values);
    let top = Frame::coordinate_plane(3, 0, 2, "top-down").unwrap();
    let side = Frame::coordinate_plane(3, 0, 1, "side-on").unwrap();
    let path = TourPath::through(vec![top, side], 60).unwrap();
    let out = render_tour(&basis, &path).unwrap();

    let start = &out[0];
    for i in 0..start.nrows() {
        // top-down view: distance from the axis equals the arc parameter
        assert!((start.row(i).norm() - roll.t[i]).abs() < 1e-9);
    }
    let end = out.last().unwrap();
    for i in 0..end.nrows() {
        assert!((end[(i, 1)] - roll.h[i]).abs() < 1e-9);
    }
    assert!(aspect(start) > 1.0, "start aspect {}", aspect(start));
    assert!(aspect(end) < 1.0, "end aspect {}", aspect(end));
}
