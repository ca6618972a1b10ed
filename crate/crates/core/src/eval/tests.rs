use super::*;
use crate::plane::{MaskPlane, ProbabilityPlane};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (ProbabilityPlane, MaskPlane) {
    let prob =
        ProbabilityPlane::new(Array2::from_shape_fn((h, w), |_| rng.random::<f64>())).unwrap();
    let gt = MaskPlane::from_fn(h, w, |_, _| rng.random::<f64>() < 0.3);
    (prob, gt)
}

/// Scalar-loop oracle: P/R/F for one threshold over a whole set, counting
/// pixels one by one. Independent of the library's confusion path.
fn oracle_prf_at(probs: &[ProbabilityPlane], gts: &[MaskPlane], m: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (prob, gt) in probs.iter().zip(gts.iter()) {
        for r in 0..prob.height() {
            for c in 0..prob.width() {
                let pred = prob.get(r, c) >= m;
                let truth = gt.get(r, c) == 1;
                match (pred, truth) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
    }
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Scalar-loop oracle for the dataset sweep: best F over the grid, smaller
/// threshold winning ties.
fn oracle_dataset_sweep(
    probs: &[ProbabilityPlane],
    gts: &[MaskPlane],
    grid: &[f64],
) -> (f64, f64, f64, f64) {
    let (mut ds, mut bp, mut br, mut best_m) = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
    for &m in grid {
        let (p, r, f) = oracle_prf_at(probs, gts, m);
        if f > ds {
            ds = f;
            bp = p;
            br = r;
            best_m = m;
        }
    }
    (ds, bp, br, best_m)
}

fn oracle_image_best_f(probs: &[ProbabilityPlane], gts: &[MaskPlane], grid: &[f64]) -> f64 {
    let mut total = 0.0;
    for (prob, gt) in probs.iter().zip(gts.iter()) {
        let mut best = f64::NEG_INFINITY;
        for &m in grid {
            let probs_one = [prob.clone()];
            let gts_one = [gt.clone()];
            let (_, _, f) = oracle_prf_at(&probs_one, &gts_one, m);
            best = best.max(f);
        }
        total += best;
    }
    total / probs.len() as f64
}

#[test]
fn binarize_half_plane_low_threshold() {
    let prob = ProbabilityPlane::constant(3, 3, 0.5).unwrap();
    let mask = binarize(&prob, 0.48);
    assert_eq!(mask.crack_pixels(), 9);
}

#[test]
fn binarize_recovers_binary_input() {
    let gt = MaskPlane::from_fn(5, 4, |r, c| (r + c) % 3 == 0);
    let prob = ProbabilityPlane::new(gt.values().mapv(f64::from)).unwrap();
    for m in [0.01, 0.48, 0.99] {
        assert_eq!(&binarize(&prob, m), &gt);
    }
}

#[test]
fn confusion_all_crack_prediction() {
    let pred = MaskPlane::from_fn(2, 2, |_, _| true);
    let gt = MaskPlane::from_fn(2, 2, |r, c| r == 0 && c == 0);
    let counts = confusion(&pred, &gt).unwrap();
    assert_eq!(counts.true_pos, 1);
    assert_eq!(counts.false_pos, 3);
    assert_eq!(counts.false_neg, 0);
    assert_eq!(counts.true_neg, 0);
}

#[test]
fn confusion_perfect_and_complement() {
    let gt = MaskPlane::from_fn(4, 4, |r, _| r % 2 == 0);
    let counts = confusion(&gt, &gt).unwrap();
    assert_eq!(counts.false_pos, 0);
    assert_eq!(counts.false_neg, 0);

    let complement = MaskPlane::from_fn(4, 4, |r, _| r % 2 != 0);
    let counts = confusion(&complement, &gt).unwrap();
    assert_eq!(counts.true_pos, 0);
    assert_eq!(counts.true_neg, 0);
}

#[test]
fn confusion_rejects_shape_mismatch() {
    let a = MaskPlane::zeros(2, 2);
    let b = MaskPlane::zeros(2, 3);
    assert!(confusion(&a, &b).is_err());
}

#[test]
fn prf_hand_case() {
    let counts = ConfusionCounts {
        true_pos: 1,
        false_pos: 3,
        false_neg: 0,
        true_neg: 0,
    };
    let (p, r, f) = precision_recall_f(&counts);
    assert_eq!(p, 0.25);
    assert_eq!(r, 1.0);
    assert!((f - 0.4).abs() < 1e-15);
}

#[test]
fn prf_empty_conventions() {
    let counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 10,
    };
    assert_eq!(precision_recall_f(&counts), (1.0, 1.0, 1.0));

    let counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 2,
        false_neg: 3,
        true_neg: 5,
    };
    assert_eq!(precision_recall_f(&counts), (0.0, 0.0, 0.0));
}

#[test]
fn accuracy_miou_hand_cases() {
    let perfect = ConfusionCounts {
        true_pos: 5,
        true_neg: 11,
        false_pos: 0,
        false_neg: 0,
    };
    assert_eq!(accuracy_miou(&perfect), (1.0, 1.0));

    let counts = ConfusionCounts {
        true_pos: 1,
        false_pos: 3,
        false_neg: 0,
        true_neg: 0,
    };
    let (a, miou) = accuracy_miou(&counts);
    assert_eq!(a, 0.25);
    assert_eq!(miou, 0.125);

    let empty_crack = ConfusionCounts {
        true_pos: 0,
        true_neg: 16,
        false_pos: 0,
        false_neg: 0,
    };
    assert_eq!(accuracy_miou(&empty_crack), (1.0, 1.0));
}

#[test]
fn grid_has_99_thresholds() {
    let grid = default_grid();
    assert_eq!(grid.len(), 99);
    assert_eq!(grid[0], 0.01);
    assert_eq!(grid[98], 0.99);
}

#[test]
fn dataset_sweep_perfect_prediction_ties_to_smallest_threshold() {
    let gt = MaskPlane::from_fn(6, 6, |r, c| r == c);
    let prob = ProbabilityPlane::new(gt.values().mapv(f64::from)).unwrap();
    let result = dataset_best_f(&[prob], &[gt], &default_grid()).unwrap();
    assert_eq!(result.ds, 1.0);
    assert_eq!(result.best_threshold, 0.01);
    assert!(result.rows.iter().all(|row| row.f == 1.0));
}

#[test]
fn dataset_sweep_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (prob, gt) = random_pair(&mut rng, 4, 4);
        let probs = [prob];
        let gts = [gt];
        let grid = default_grid();
        let result = dataset_best_f(&probs, &gts, &grid).unwrap();
        let (ds, bp, br, best_m) = oracle_dataset_sweep(&probs, &gts, &grid);
        assert_eq!(result.ds, ds);
        assert_eq!(result.bp, bp);
        assert_eq!(result.br, br);
        assert_eq!(result.best_threshold, best_m);
    }
}

#[test]
fn dataset_sweep_rejects_misaligned_lists() {
    let prob = ProbabilityPlane::constant(2, 2, 0.5).unwrap();
    let gts = [MaskPlane::zeros(2, 2), MaskPlane::zeros(2, 2)];
    assert!(dataset_best_f(&[prob], &gts, &default_grid()).is_err());
}

#[test]
fn image_best_f_hand_average() {
    // Image 1: prob == gt, best F = 1. Image 2: constructed so the best
    // achievable F over the grid is 0.4 (tp=1, fp=3 at every threshold).
    let gt1 = MaskPlane::from_fn(2, 2, |r, _| r == 0);
    let prob1 = ProbabilityPlane::new(gt1.values().mapv(f64::from)).unwrap();
    let gt2 = MaskPlane::from_fn(2, 2, |r, c| r == 0 && c == 0);
    let prob2 = ProbabilityPlane::constant(2, 2, 1.0).unwrap();
    let is = image_best_f(
        &[prob1, prob2],
        &[gt1, gt2],
        &default_grid(),
    )
    .unwrap();
    assert!((is - 0.7).abs() < 1e-15);
}

#[test]
fn image_best_f_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut probs = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..5 {
        let (p, g) = random_pair(&mut rng, 5, 3);
        probs.push(p);
        gts.push(g);
    }
    let grid = default_grid();
    let is = image_best_f(&probs, &gts, &grid).unwrap();
    assert_eq!(is, oracle_image_best_f(&probs, &gts, &grid));
}

#[test]
fn evaluate_dataset_perfect_scores() {
    let gt = MaskPlane::from_fn(8, 8, |r, c| (r * c) % 5 == 0);
    let prob = ProbabilityPlane::new(gt.values().mapv(f64::from)).unwrap();
    let report = evaluate_dataset(&[prob], &[gt], None, None, 0.48).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.miou, 1.0);
    assert_eq!(report.ds, 1.0);
    assert_eq!(report.is_score, 1.0);
    assert_eq!(report.bp, 1.0);
    assert_eq!(report.br, 1.0);
    assert_eq!(report.sweep.len(), 99);
}

#[test]
fn evaluate_dataset_invariant_under_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut probs = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..4 {
        let (p, g) = random_pair(&mut rng, 6, 6);
        probs.push(p);
        gts.push(g);
    }
    let report = evaluate_dataset(&probs, &gts, None, None, 0.48).unwrap();

    let order = [2usize, 0, 3, 1];
    let probs_p: Vec<_> = order.iter().map(|&i| probs[i].clone()).collect();
    let gts_p: Vec<_> = order.iter().map(|&i| gts[i].clone()).collect();
    let permuted = evaluate_dataset(&probs_p, &gts_p, None, None, 0.48).unwrap();
    // Count-derived metrics are exactly invariant; the IS mean is a float
    // sum whose order changes, so it is invariant only up to roundoff.
    assert_eq!(report.accuracy, permuted.accuracy);
    assert_eq!(report.miou, permuted.miou);
    assert_eq!(report.ds, permuted.ds);
    assert_eq!(report.bp, permuted.bp);
    assert_eq!(report.br, permuted.br);
    assert_eq!(report.best_threshold, permuted.best_threshold);
    assert_eq!(report.sweep, permuted.sweep);
    assert!((report.is_score - permuted.is_score).abs() < 1e-12);
}

#[test]
fn guided_filter_changes_report_on_noisy_input() {
    // Salt noise that a guided filter smooths across a flat guide; the
    // refined probabilities cross the fixed threshold differently.
    let gt = MaskPlane::zeros(8, 8);
    let mut values = Array2::from_elem((8, 8), 0.4);
    values[(3, 3)] = 1.0;
    values[(5, 2)] = 1.0;
    let prob = ProbabilityPlane::new(values).unwrap();
    let guide = Array2::from_elem((8, 8), 0.5);
    let plain = evaluate_dataset(
        &[prob.clone()],
        &[gt.clone()],
        None,
        None,
        0.48,
    )
    .unwrap();
    let refined = evaluate_dataset(
        &[prob],
        &[gt],
        Some(std::slice::from_ref(&guide)),
        Some(GuidedParams { radius: 2, eps: 1e-3 }),
        0.48,
    )
    .unwrap();
    assert_ne!(plain.accuracy, refined.accuracy);
}

#[test]
fn sweep_csv_has_header_and_99_rows() {
    let gt = MaskPlane::from_fn(4, 4, |r, _| r == 0);
    let prob = ProbabilityPlane::new(gt.values().mapv(f64::from)).unwrap();
    let result = dataset_best_f(&[prob], &[gt], &default_grid()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &result.rows).unwrap();
    let body = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = body.lines().collect();
    assert_eq!(lines[0], "m,precision,recall,f");
    assert_eq!(lines.len(), 100);
}

// --- guided filter ---

/// Direct per-pixel box-mean oracle with replicate padding.
fn oracle_box_mean(input: &Array2<f64>, radius: usize) -> Array2<f64> {
    let (h, w) = input.dim();
    let r = radius as isize;
    Array2::from_shape_fn((h, w), |(row, col)| {
        let mut sum = 0.0;
        for dr in -r..=r {
            for dc in -r..=r {
                let rr = (row as isize + dr).clamp(0, h as isize - 1) as usize;
                let cc = (col as isize + dc).clamp(0, w as isize - 1) as usize;
                sum += input[(rr, cc)];
            }
        }
        sum / ((2 * radius + 1) * (2 * radius + 1)) as f64
    })
}

#[test]
fn box_mean_matches_direct_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let input = Array2::from_shape_fn((7, 9), |_| rng.random::<f64>());
    for radius in [0usize, 1, 2, 3] {
        let fast = box_mean(&input, radius);
        let slow = oracle_box_mean(&input, radius);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12, "radius {radius}: {a} vs {b}");
        }
    }
}

#[test]
fn guided_radius_zero_is_bit_exact_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prob =
        ProbabilityPlane::new(Array2::from_shape_fn((6, 5), |_| rng.random::<f64>())).unwrap();
    let guide = Array2::from_shape_fn((6, 5), |_| rng.random::<f64>());
    let out = guided_filter(&prob, &guide, 0, 1e-3).unwrap();
    assert_eq!(out.values(), prob.values());
}

#[test]
fn guided_self_guidance_zero_eps_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for radius in [1usize, 2] {
        let prob =
            ProbabilityPlane::new(Array2::from_shape_fn((8, 8), |_| rng.random::<f64>()))
                .unwrap();
        let out = guided_filter(&prob, prob.values(), radius, 0.0).unwrap();
        for (a, b) in out.values().iter().zip(prob.values().iter()) {
            assert!((a - b).abs() < 1e-6, "radius {radius}: {a} vs {b}");
        }
    }
}

#[test]
fn guided_constant_guide_equals_double_box_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prob =
        ProbabilityPlane::new(Array2::from_shape_fn((6, 6), |_| rng.random::<f64>())).unwrap();
    let guide = Array2::from_elem((6, 6), 0.25);
    let out = guided_filter(&prob, &guide, 1, 1e-3).unwrap();
    let expected = oracle_box_mean(&oracle_box_mean(prob.values(), 1), 1);
    for (a, b) in out.values().iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn guided_large_eps_tends_to_double_box_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prob =
        ProbabilityPlane::new(Array2::from_shape_fn((6, 6), |_| rng.random::<f64>())).unwrap();
    let guide = Array2::from_shape_fn((6, 6), |_| rng.random::<f64>());
    let out = guided_filter(&prob, &guide, 2, 1e12).unwrap();
    let expected = oracle_box_mean(&oracle_box_mean(prob.values(), 2), 2);
    for (a, b) in out.values().iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn guided_rejects_shape_mismatch() {
    let prob = ProbabilityPlane::constant(4, 4, 0.5).unwrap();
    let guide = Array2::<f64>::zeros((4, 5));
    assert!(guided_filter(&prob, &guide, 1, 1e-3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_counts_sum_to_pixel_count(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1 + (seed as usize % 7);
        let w = 1 + ((seed as usize / 7) % 7);
        let (prob, gt) = random_pair(&mut rng, h, w);
        let counts = confusion(&binarize(&prob, 0.5), &gt).unwrap();
        prop_assert_eq!(counts.total(), (h * w) as u64);
    }

    #[test]
    fn ds_dominates_every_grid_row(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prob, gt) = random_pair(&mut rng, 5, 5);
        let result = dataset_best_f(&[prob], &[gt], &default_grid()).unwrap();
        for row in &result.rows {
            prop_assert!(result.ds >= row.f);
        }
    }

    #[test]
    fn binarize_is_monotone_in_threshold(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prob, _) = random_pair(&mut rng, 6, 6);
        let low = binarize(&prob, 0.3);
        let high = binarize(&prob, 0.7);
        for (l, h) in low.values().iter().zip(high.values().iter()) {
            prop_assert!(h <= l);
        }
    }
}
