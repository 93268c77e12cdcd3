use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::ingest::synth_gaussian_clusters;

fn acts(values: DMatrix<f64>) -> LayerActivations {
    LayerActivations::new("t", values).unwrap()
}

fn cos(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

fn manual_set(theta: DMatrix<f64>, means: Vec<DVector<f64>>, global: DVector<f64>) -> ClassVectorSet {
    ClassVectorSet {
        theta,
        class_means: means,
        global_mean: global,
        variant: Variant::WithinClassPc1,
        sign_fixed: false,
        ambiguous: vec![],
    }
}

#[test]
fn pc1_recovers_planted_axis() {
    let g = synth_gaussian_clusters(3, 400, 10, 4.0, 6.0, 11).unwrap();
    let cvs = class_vectors(&g.activations, &g.labels, Variant::WithinClassPc1).unwrap();
    for k in 0..3 {
        let c = cos(&cvs.theta_k(k), &g.axes[k]).abs();
        assert!(c >= 0.99, "class {k}: |cos| = {c}");
        assert!((cvs.theta_k(k).norm() - 1.0).abs() < 1e-10);
    }
    assert!(!cvs.sign_fixed);
}

#[test]
fn collinear_data_gives_collinear_vectors() {
    let d = DVector::from_vec(vec![0.6, -0.8, 0.0]);
    let ts = [1.0, 2.0, 4.0, -1.5, -2.0, -3.5];
    let rows: Vec<f64> = ts.iter().flat_map(|&t| (&d * t).iter().copied().collect::<Vec<_>>()).collect();
    let x = acts(DMatrix::from_row_slice(6, 3, &rows));
    let y = Labels::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    for variant in [Variant::Mean, Variant::SecondMoment, Variant::WithinClassPc1] {
        let cvs = class_vectors(&x, &y, variant).unwrap();
        for k in 0..2 {
            let c = cos(&cvs.theta_k(k), &d).abs();
            assert!(c >= 1.0 - 1e-8, "{variant}: class {k} |cos| = {c}");
        }
    }
}

#[test]
fn mean_variant_rejects_zero_offset() {
    // both classes share the global mean
    let x = acts(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -2.0]));
    let y = Labels::new(vec![0, 0, 1, 1], 2).unwrap();
    assert_eq!(
        class_vectors(&x, &y, Variant::Mean).unwrap_err(),
        ClassVecError::DegenerateClass(0)
    );
}

#[test]
fn pc1_rejects_constant_class_and_empty_class() {
    let x = acts(DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 3.0, -2.0]));
    let y = Labels::new(vec![0, 0, 1, 1], 2).unwrap();
    assert_eq!(
        class_vectors(&x, &y, Variant::WithinClassPc1).unwrap_err(),
        ClassVecError::DegenerateClass(0)
    );
    let y3 = Labels::new(vec![0, 0, 1, 1], 3).unwrap();
    assert_eq!(
        class_vectors(&x, &y3, Variant::Mean).unwrap_err(),
        ClassVecError::EmptyClass(2)
    );
    let y_single = Labels::new(vec![0, 1, 1, 1], 2).unwrap();
    assert!(matches!(
        class_vectors(&x, &y_single, Variant::SecondMoment),
        Err(ClassVecError::TooFewSamples { class: 0, have: 1, need: 2 })
    ));
}

#[test]
fn fix_signs_flips_keeps_and_flags() {
    let theta = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let means = vec![
        DVector::from_vec(vec![-0.5, 0.0]),
        DVector::from_vec(vec![0.0, 0.3]),
        DVector::from_vec(vec![0.0, 0.0]),
    ];
    let cvs = manual_set(theta, means, DVector::zeros(2));
    assert_eq!(cvs.sign_margin(0), -0.5);
    let fixed = fix_signs(cvs);
    assert!(fixed.sign_fixed);
    assert_eq!(fixed.theta_k(0), DVector::from_vec(vec![-1.0, 0.0]));
    assert_eq!(fixed.theta_k(1), DVector::from_vec(vec![0.0, 1.0]));
    assert_eq!(fixed.ambiguous, vec![2]);
    assert_eq!(fixed.theta_k(2), DVector::from_vec(vec![1.0, 0.0]));
    let again = fix_signs(fixed.clone());
    assert_eq!(again, fixed);
}

#[test]
fn pairplot_orthogonal_axes() {
    let theta = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let means = vec![DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 1.0, 0.0])];
    let cvs = fix_signs(manual_set(theta, means, DVector::zeros(3)));
    let a = [2.0, -1.0, 0.5];
    let x = acts(DMatrix::from_fn(3, 3, |i, j| if j == 0 { a[i] } else { 0.0 }));
    let p = pairplot_coords(&x, &cvs, 0, 1).unwrap();
    for i in 0..3 {
        assert_eq!((p[(i, 0)], p[(i, 1)]), (a[i], 0.0));
    }
    assert_eq!(pairplot_coords(&x, &cvs, 1, 1).unwrap_err(), ClassVecError::SameClass(1));
    let mut unfixed = cvs.clone();
    unfixed.sign_fixed = false;
    assert_eq!(pairplot_coords(&x, &unfixed, 0, 1).unwrap_err(), ClassVecError::SignsNotFixed);
}

#[test]
fn pairplot_matches_full_product_and_maps_mean_to_origin() {
    let g = synth_gaussian_clusters(4, 30, 6, 3.0, 2.0, 5).unwrap();
    let cvs = fix_signs(class_vectors(&g.activations, &g.labels, Variant::WithinClassPc1).unwrap());
    let x = &g.activations.values;
    // oracle: explicit loops for X' = (X − 1x̄ᵀ)Θ
    let (n, m) = x.shape();
    let mut full = DMatrix::zeros(n, 4);
    for i in 0..n {
        for c in 0..4 {
            let mut s = 0.0;
            for j in 0..m {
                s += (x[(i, j)] - cvs.global_mean[j]) * cvs.theta[(j, c)];
            }
            full[(i, c)] = s;
        }
    }
    let p = pairplot_coords(&g.activations, &cvs, 2, 0).unwrap();
    for i in 0..n {
        assert!((p[(i, 0)] - full[(i, 2)]).abs() <= 1e-12);
        assert!((p[(i, 1)] - full[(i, 0)]).abs() <= 1e-12);
    }
    let mean_row = acts(DMatrix::from_row_slice(1, m, cvs.global_mean.as_slice()));
    let origin = pairplot_coords(&mean_row, &cvs, 1, 3).unwrap();
    assert_eq!(origin[(0, 0)], 0.0);
    assert_eq!(origin[(0, 1)], 0.0);
}

#[test]
fn typicality_is_standardised_over_all_samples() {
    let g = synth_gaussian_clusters(3, 100, 5, 3.0, 3.0, 2).unwrap();
    let cvs = fix_signs(class_vectors(&g.activations, &g.labels, Variant::WithinClassPc1).unwrap());
    let t = typicality_scores(&g.activations, &g.labels, &cvs, 1).unwrap();
    let n = t.scores.len() as f64;
    let mean = t.scores.iter().sum::<f64>() / n;
    let var = t.scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() <= 1e-9);
    assert!((var - 1.0).abs() <= 1e-6);
    assert_eq!(t.member.iter().filter(|&&b| b).count(), 100);
    assert_eq!(t.class_scores().len(), 100);
}

#[test]
fn typicality_zero_variance() {
    let x = acts(DMatrix::from_element(4, 2, 3.0));
    let y = Labels::new(vec![0, 0, 1, 1], 2).unwrap();
    let theta = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let cvs = fix_signs(manual_set(
        theta,
        vec![DVector::from_vec(vec![3.0, 3.0]); 2],
        DVector::from_vec(vec![3.0, 3.0]),
    ));
    assert_eq!(
        typicality_scores(&x, &y, &cvs, 0).unwrap_err(),
        ClassVecError::ZeroVariance { class: 0 }
    );
}

#[test]
fn bimodal_class_has_two_kde_modes() {
    // class 0: two subclusters 6σ apart along (1,1,0,…)/√2; class 1: a blob elsewhere
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = 6;
    let axis = DVector::from_fn(m, |i, _| if i < 2 { 1.0 / 2f64.sqrt() } else { 0.0 });
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for s in 0..400 {
        let shift = if s < 200 { -3.0 } else { 3.0 };
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        rows.extend((&axis * shift + z).iter().copied());
        y.push(0);
    }
    for _ in 0..400 {
        let mut z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        z[4] += 10.0;
        rows.extend(z.iter().copied());
    }
    y.resize(800, 1);
    let x = acts(DMatrix::from_row_slice(800, m, &rows));
    let y = Labels::new(y, 2).unwrap();
    let cvs = fix_signs(class_vectors(&x, &y, Variant::WithinClassPc1).unwrap());
    let t = typicality_scores(&x, &y, &cvs, 0).unwrap();
    let modes = kde_modes(&t.class_scores()).unwrap();
    assert_eq!(modes.count(), 2, "modes at {:?}", modes.modes);
}

#[test]
fn rank_extremes_examples() {
    let y = Labels::new(vec![0, 0, 0], 2).unwrap();
    let t = TypicalityScores {
        class_id: 0,
        raw: vec![0.1, -2.0, 3.0],
        scores: vec![0.1, -2.0, 3.0],
        mean: 0.0,
        std: 1.0,
        member: vec![true; 3],
    };
    let e = rank_extremes(&t, &y, 0, 1).unwrap();
    assert_eq!(e.top, vec![2]);
    assert_eq!(e.bottom, vec![1]);
    assert!(matches!(
        rank_extremes(&t, &y, 0, 2),
        Err(ClassVecError::TooFewSamples { have: 3, need: 4, .. })
    ));

    let y = Labels::new(vec![1, 1, 1, 1, 1, 1, 1, 1], 2).unwrap();
    let mut scores = vec![0.0; 8];
    scores[4] = 2.0;
    scores[7] = 2.0;
    scores[2] = -1.0;
    let t = TypicalityScores {
        class_id: 1,
        raw: scores.clone(),
        scores,
        mean: 0.0,
        std: 1.0,
        member: vec![true; 8],
    };
    let e = rank_extremes(&t, &y, 1, 1).unwrap();
    assert_eq!(e.top, vec![4]);
    assert_eq!(e.bottom, vec![2]);
}

proptest! {
    #[test]
    fn rank_extremes_matches_full_sort(
        raw in prop::collection::vec((-5i32..5, 0usize..3), 6..60),
        count in 0usize..4,
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 * 0.5).collect();
        let labels: Vec<usize> = raw.iter().map(|(_, c)| *c).collect();
        let y = Labels::new(labels.clone(), 3).unwrap();
        let t = TypicalityScores {
            class_id: 0,
            raw: scores.clone(),
            scores: scores.clone(),
            mean: 0.0,
            std: 1.0,
            member: labels.iter().map(|&c| c == 0).collect(),
        };
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        match rank_extremes(&t, &y, 0, count) {
            Ok(e) => {
                // oracle: sort (score, index) pairs lexicographically
                let mut pairs: Vec<(f64, usize)> = members.iter().map(|&i| (scores[i], i)).collect();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let bottom: Vec<usize> = pairs.iter().take(count).map(|p| p.1).collect();
                let mut pairs_desc: Vec<(f64, usize)> = members.iter().map(|&i| (-scores[i], i)).collect();
                pairs_desc.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let top: Vec<usize> = pairs_desc.iter().take(count).map(|p| p.1).collect();
                prop_assert_eq!(e.top, top);
                prop_assert_eq!(e.bottom, bottom);
            }
            Err(ClassVecError::TooFewSamples { .. }) => prop_assert!(members.len() < 2 * count),
            Err(other) => prop_assert!(false, "unexpected error {other:?}"),
        }
    }

    #[test]
    fn positive_rescaling_preserves_fixed_signs(c in 0.01f64..100.0, seed in 0u64..20) {
        let g = synth_gaussian_clusters(3, 20, 4, 2.0, 3.0, seed).unwrap();
        let scaled = LayerActivations::new("s", &g.activations.values * c).unwrap();
        for variant in [Variant::WithinClassPc1, Variant::SecondMoment] {
            let a = fix_signs(class_vectors(&g.activations, &g.labels, variant).unwrap());
            let b = fix_signs(class_vectors(&scaled, &g.labels, variant).unwrap());
            prop_assert!((&a.theta - &b.theta).amax() < 1e-9);
            let pa = pairplot_coords(&g.activations, &a, 0, 2).unwrap();
            let pb = pairplot_coords(&scaled, &b, 0, 2).unwrap();
            prop_assert!((pa * c - pb).amax() <= 1e-8 * c.max(1.0));
        }
    }
}

#[test]
fn second_moment_aligns_with_mean_for_far_isotropic_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = 8;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (class, sign) in [(0usize, 1.0), (1, -1.0)] {
        for _ in 0..300 {
            let mut z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            z[0] += sign * 20.0;
            rows.extend(z.iter().copied());
            y.push(class);
        }
    }
    let x = acts(DMatrix::from_row_slice(600, m, &rows));
    let y = Labels::new(y, 2).unwrap();
    let mean = class_vectors(&x, &y, Variant::Mean).unwrap();
    let m2 = class_vectors(&x, &y, Variant::SecondMoment).unwrap();
    for k in 0..2 {
        assert!(cos(&mean.theta_k(k), &m2.theta_k(k)).abs() >= 0.99);
    }
}

#[test]
fn label_permutation_permutes_columns() {
    let g = synth_gaussian_clusters(4, 25, 6, 3.0, 2.5, 8).unwrap();
    let perm = [2usize, 0, 3, 1];
    let permuted = Labels::new(g.labels.as_slice().iter().map(|&c| perm[c]).collect(), 4).unwrap();
    let a = fix_signs(class_vectors(&g.activations, &g.labels, Variant::WithinClassPc1).unwrap());
    let b = fix_signs(class_vectors(&g.activations, &permuted, Variant::WithinClassPc1).unwrap());
    for (c, &p) in perm.iter().enumerate() {
        assert!((a.theta.column(c) - b.theta.column(p)).amax() < 1e-12);
    }
}

#[test]
fn held_out_projection_uses_training_mean() {
    let train = synth_gaussian_clusters(3, 40, 5, 3.0, 2.0, 21).unwrap();
    let test = synth_gaussian_clusters(3, 15, 5, 3.0, 2.0, 22).unwrap();
    let cvs = fix_signs(class_vectors(&train.activations, &train.labels, Variant::WithinClassPc1).unwrap());
    let proj = centered_projection(&test.activations, &cvs).unwrap();
    let x = &test.activations.values;
    for i in 0..x.nrows() {
        for c in 0..3 {
            let manual: f64 = (0..5).map(|j| (x[(i, j)] - cvs.global_mean[j]) * cvs.theta[(j, c)]).sum();
            assert!((proj[(i, c)] - manual).abs() <= 1e-12);
        }
    }
    let wrong = LayerActivations::new("w", DMatrix::zeros(2, 4)).unwrap();
    assert!(matches!(
        centered_projection(&wrong, &cvs),
        Err(ClassVecError::DimensionMismatch { expected: 5, found: 4 })
    ));
}
