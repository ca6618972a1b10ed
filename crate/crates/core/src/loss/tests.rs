use super::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_prob(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ProbabilityPlane {
    ProbabilityPlane::new(Array2::from_shape_fn((h, w), |_| rng.random::<f64>())).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> MaskPlane {
    MaskPlane::from_fn(h, w, |_, _| rng.random::<f64>() < 0.4)
}

/// Scalar-loop unweighted BCE sum, clamped the same way.
fn oracle_bce_sum(prob: &ProbabilityPlane, gt: &MaskPlane) -> f64 {
    let mut total = 0.0;
    for r in 0..prob.height() {
        for c in 0..prob.width() {
            let p = prob.get(r, c).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= if gt.get(r, c) == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
    }
    total
}

#[test]
fn class_weights_symmetric_counts() {
    let masks = [
        MaskPlane::from_fn(2, 2, |r, _| r == 0),
        MaskPlane::from_fn(2, 2, |r, _| r == 1),
    ];
    let w = compute_class_weights(&masks).unwrap();
    assert_eq!(w.p, 4);
    assert_eq!(w.q, 4);
    assert_eq!(w.alpha_crack, 1.0);
    assert_eq!(w.alpha_noncrack, 1.0);
}

#[test]
fn class_weights_hand_arithmetic() {
    // p = 100, q = 900 over a 1000-pixel mask.
    let mask = MaskPlane::from_fn(10, 100, |_, c| c < 10);
    let w = compute_class_weights([&mask]).unwrap();
    assert_eq!(w.p, 100);
    assert_eq!(w.q, 900);
    assert_eq!(w.alpha_crack, 5.0);
    assert!((w.alpha_noncrack - 0.5556).abs() < 5e-5);
}

#[test]
fn class_weights_degenerate_counts_rejected() {
    let all_zero = MaskPlane::zeros(4, 4);
    assert!(compute_class_weights([&all_zero]).is_err());
    let all_one = MaskPlane::from_fn(4, 4, |_, _| true);
    assert!(compute_class_weights([&all_one]).is_err());
    assert!(compute_class_weights(std::iter::empty()).is_err());
}

#[test]
fn class_weights_cache_roundtrip() {
    let mask = MaskPlane::from_fn(10, 100, |_, c| c < 10);
    let w = compute_class_weights([&mask]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alpha.json");
    save_class_weights(&path, &w).unwrap();
    let loaded = load_class_weights(&path).unwrap();
    assert_eq!(w, loaded);
}

#[test]
fn side_loss_single_crack_pixel_half_probability() {
    let prob = ProbabilityPlane::constant(1, 1, 0.5).unwrap();
    let gt = MaskPlane::from_fn(1, 1, |_, _| true);
    let loss = side_loss(&prob, &gt, &ClassWeights::unit()).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn side_loss_perfect_prediction_is_negligible() {
    let gt = MaskPlane::from_fn(4, 4, |r, c| (r + c) % 2 == 0);
    let prob = ProbabilityPlane::new(gt.values().mapv(f64::from)).unwrap();
    let loss = side_loss(&prob, &gt, &ClassWeights::unit()).unwrap();
    assert!(loss >= 0.0);
    assert!(loss <= 2.0 * PROB_CLAMP * 16.0);
}

#[test]
fn side_loss_linear_in_crack_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prob = random_prob(&mut rng, 6, 6);
    let gt = random_mask(&mut rng, 6, 6);
    let base = ClassWeights {
        alpha_crack: 1.5,
        alpha_noncrack: 0.75,
        p: 1,
        q: 1,
    };
    let doubled = ClassWeights {
        alpha_crack: 3.0,
        ..base
    };
    let crack_only = ClassWeights {
        alpha_crack: 1.5,
        alpha_noncrack: 0.0,
        p: 1,
        q: 1,
    };
    let l1 = side_loss(&prob, &gt, &base).unwrap();
    let l2 = side_loss(&prob, &gt, &doubled).unwrap();
    let crack_term = side_loss(&prob, &gt, &crack_only).unwrap();
    assert!((l2 - l1 - crack_term).abs() < 1e-9 * l1.abs().max(1.0));
}

#[test]
fn side_loss_rejects_shape_mismatch() {
    let prob = ProbabilityPlane::constant(2, 3, 0.5).unwrap();
    let gt = MaskPlane::zeros(3, 2);
    assert!(side_loss(&prob, &gt, &ClassWeights::unit()).is_err());
}

#[test]
fn unit_weights_match_scalar_bce_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let prob = random_prob(&mut rng, 8, 8);
        let gt = random_mask(&mut rng, 8, 8);
        let loss = side_loss(&prob, &gt, &ClassWeights::unit()).unwrap();
        let oracle = oracle_bce_sum(&prob, &gt);
        assert!(
            (loss - oracle).abs() <= 1e-9 * oracle.abs(),
            "{loss} vs {oracle}"
        );
    }
}

#[test]
fn fused_loss_equals_side_loss_in_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let prob = random_prob(&mut rng, 5, 5);
    let gt = random_mask(&mut rng, 5, 5);
    let w = ClassWeights {
        alpha_crack: 2.25,
        alpha_noncrack: 0.64,
        p: 1,
        q: 1,
    };
    assert_eq!(
        side_loss(&prob, &gt, &w).unwrap(),
        fused_loss(&prob, &gt, &w).unwrap()
    );
}

#[test]
fn fused_loss_all_noncrack_half_probability() {
    let n = 6 * 7;
    let prob = ProbabilityPlane::constant(6, 7, 0.5).unwrap();
    let gt = MaskPlane::zeros(6, 7);
    let loss = fused_loss(&prob, &gt, &ClassWeights::unit()).unwrap();
    assert!((loss - n as f64 * std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn zero_noncrack_weight_ignores_noncrack_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let prob = random_prob(&mut rng, 4, 4);
    let gt = MaskPlane::from_fn(4, 4, |r, _| r == 0);
    let w = ClassWeights {
        alpha_crack: 1.0,
        alpha_noncrack: 0.0,
        p: 1,
        q: 1,
    };
    let loss = fused_loss(&prob, &gt, &w).unwrap();
    let mut crack_sum = 0.0;
    for c in 0..4 {
        crack_sum -= prob.get(0, c).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
    }
    assert!((loss - crack_sum).abs() < 1e-12);
}

#[test]
fn total_loss_zero_lambdas_is_fused_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sides: [ProbabilityPlane; 5] = std::array::from_fn(|_| random_prob(&mut rng, 4, 4));
    let fused = random_prob(&mut rng, 4, 4);
    let gt = random_mask(&mut rng, 4, 4);
    let w = ClassWeights::unit();
    let lam = LambdaWeights::new([0.0; 5]).unwrap();
    let total = total_loss(&sides, &fused, &gt, &w, &lam).unwrap();
    assert_eq!(total, fused_loss(&fused, &gt, &w).unwrap());
}

#[test]
fn total_loss_best_case_weighting() {
    // All side planes identical: total = (0.5+1.0+0.8+0.5+0.3) L + L_fuse.
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let plane = random_prob(&mut rng, 5, 5);
    let sides: [ProbabilityPlane; 5] = std::array::from_fn(|_| plane.clone());
    let fused = random_prob(&mut rng, 5, 5);
    let gt = random_mask(&mut rng, 5, 5);
    let w = ClassWeights::unit();
    let lam = lambda_case(7).unwrap();
    let total = total_loss(&sides, &fused, &gt, &w, &lam).unwrap();
    let side = side_loss(&plane, &gt, &w).unwrap();
    let fuse = fused_loss(&fused, &gt, &w).unwrap();
    assert!((total - (3.1 * side + fuse)).abs() < 1e-9 * total.abs());
}

#[test]
fn total_loss_uniform_case_is_plain_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sides: [ProbabilityPlane; 5] = std::array::from_fn(|_| random_prob(&mut rng, 4, 6));
    let fused = random_prob(&mut rng, 4, 6);
    let gt = random_mask(&mut rng, 4, 6);
    let w = ClassWeights::unit();
    let lam = lambda_case(5).unwrap();
    let total = total_loss(&sides, &fused, &gt, &w, &lam).unwrap();
    let mut expected = fused_loss(&fused, &gt, &w).unwrap();
    for side in &sides {
        expected += side_loss(side, &gt, &w).unwrap();
    }
    assert!((total - expected).abs() < 1e-9 * expected.abs());
}

#[test]
fn total_loss_linear_in_each_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let sides: [ProbabilityPlane; 5] = std::array::from_fn(|_| random_prob(&mut rng, 8, 8));
    let fused = random_prob(&mut rng, 8, 8);
    let gt = random_mask(&mut rng, 8, 8);
    let w = compute_class_weights([&gt]).unwrap();
    let base = lambda_case(7).unwrap();
    let base_total = total_loss(&sides, &fused, &gt, &w, &base).unwrap();
    for h in 0..5 {
        let mut bumped = base.0;
        bumped[h] += 1.0;
        let bumped_total =
            total_loss(&sides, &fused, &gt, &w, &LambdaWeights::new(bumped).unwrap()).unwrap();
        let side = side_loss(&sides[h], &gt, &w).unwrap();
        assert!(
            (bumped_total - base_total - side).abs() <= 1e-9 * bumped_total.abs(),
            "level {h}"
        );
    }
}

#[test]
fn lambda_cases_match_published_tuples() {
    assert_eq!(lambda_case(1).unwrap().0, [4.0, 2.0, 1.0, 0.5, 0.25]);
    assert_eq!(
        lambda_case(2).unwrap().0,
        [9.0, 3.0, 1.0, 1.0 / 3.0, 1.0 / 9.0]
    );
    assert_eq!(lambda_case(3).unwrap().0, [0.25, 0.5, 1.0, 2.0, 4.0]);
    assert_eq!(
        lambda_case(4).unwrap().0,
        [1.0 / 9.0, 1.0 / 3.0, 1.0, 3.0, 9.0]
    );
    assert_eq!(lambda_case(5).unwrap().0, [1.0; 5]);
    assert_eq!(lambda_case(6).unwrap().0, [0.3, 0.7, 1.0, 0.7, 0.3]);
    assert_eq!(lambda_case(7).unwrap().0, [0.5, 1.0, 0.8, 0.5, 0.3]);
    assert!(lambda_case(0).is_err());
    assert!(lambda_case(8).is_err());
}

#[test]
fn batch_loss_matches_public_total_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (h, w) = (6, 6);
    let batch = 3;
    let side_logits: [Array4<f64>; 5] = std::array::from_fn(|_| {
        Array4::from_shape_fn((batch, 1, h, w), |_| rng.random::<f64>() * 4.0 - 2.0)
    });
    let fused_logits =
        Array4::from_shape_fn((batch, 1, h, w), |_| rng.random::<f64>() * 4.0 - 2.0);
    let gts: Vec<MaskPlane> = (0..batch).map(|_| random_mask(&mut rng, h, w)).collect();
    let weights = ClassWeights {
        alpha_crack: 2.5,
        alpha_noncrack: 0.625,
        p: 1,
        q: 4,
    };
    let lambdas = lambda_case(7).unwrap();
    let criterion = BalancedLoss::new(weights, lambdas);
    let (batch_value, _, _) = criterion
        .batch_loss_and_grad(&side_logits, &fused_logits, &gts)
        .unwrap();

    let mut expected = 0.0;
    for b in 0..batch {
        let sides: [ProbabilityPlane; 5] = std::array::from_fn(|i| {
            ProbabilityPlane::new(Array2::from_shape_fn((h, w), |(r, c)| {
                sigmoid(side_logits[i][(b, 0, r, c)])
            }))
            .unwrap()
        });
        let fused = ProbabilityPlane::new(Array2::from_shape_fn((h, w), |(r, c)| {
            sigmoid(fused_logits[(b, 0, r, c)])
        }))
        .unwrap();
        expected += total_loss(&sides, &fused, &gts[b], &weights, &lambdas).unwrap();
    }
    expected /= batch as f64;
    assert!(
        (batch_value - expected).abs() <= 1e-12 * expected.abs(),
        "{batch_value} vs {expected}"
    );
}

#[test]
fn batch_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let (h, w) = (3, 4);
    let side_logits: [Array4<f64>; 5] = std::array::from_fn(|_| {
        Array4::from_shape_fn((2, 1, h, w), |_| rng.random::<f64>() * 2.0 - 1.0)
    });
    let fused_logits = Array4::from_shape_fn((2, 1, h, w), |_| rng.random::<f64>() * 2.0 - 1.0);
    let gts = vec![random_mask(&mut rng, h, w), random_mask(&mut rng, h, w)];
    let weights = ClassWeights {
        alpha_crack: 3.0,
        alpha_noncrack: 0.6,
        p: 1,
        q: 5,
    };
    let criterion = BalancedLoss::new(weights, lambda_case(7).unwrap());
    let (_, side_grads, fused_grad) = criterion
        .batch_loss_and_grad(&side_logits, &fused_logits, &gts)
        .unwrap();

    let eval = |sides: &[Array4<f64>; 5], fused: &Array4<f64>| -> f64 {
        criterion.batch_loss_and_grad(sides, fused, &gts).unwrap().0
    };
    let step = 1e-6;
    // Spot-check a handful of coordinates on each plane.
    for level in 0..6 {
        for &idx in &[(0, 0, 0, 0), (1, 0, 2, 3), (0, 0, 1, 2)] {
            let mut sides_p = side_logits.clone();
            let mut sides_m = side_logits.clone();
            let mut fused_p = fused_logits.clone();
            let mut fused_m = fused_logits.clone();
            let analytic = if level < 5 {
                sides_p[level][idx] += step;
                sides_m[level][idx] -= step;
                side_grads[level][idx]
            } else {
                fused_p[idx] += step;
                fused_m[idx] -= step;
                fused_grad[idx]
            };
            let numeric =
                (eval(&sides_p, &fused_p) - eval(&sides_m, &fused_m)) / (2.0 * step);
            assert!(
                (analytic - numeric).abs() <= 1e-6 * numeric.abs().max(1e-3),
                "level {level} idx {idx:?}: {analytic} vs {numeric}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverse_weight_identity_is_exact(p in 1u64..1_000_000_000_000, q in 1u64..1_000_000_000_000) {
        let w = ClassWeights {
            alpha_crack: (p + q) as f64 / (2.0 * p as f64),
            alpha_noncrack: (p + q) as f64 / (2.0 * q as f64),
            p,
            q,
        };
        let (inv_crack, inv_non) = w.inverse_weights();
        prop_assert_eq!(inv_crack + inv_non, 2.0);
    }

    #[test]
    fn loss_is_finite_for_any_probability_plane(seed in 0u64..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_mask(&mut rng, 4, 4);
        for value in [0.0, 1.0, 0.5] {
            let prob = ProbabilityPlane::constant(4, 4, value).unwrap();
            let loss = side_loss(&prob, &gt, &ClassWeights::unit()).unwrap();
            prop_assert!(loss.is_finite());
            prop_assert!(loss >= 0.0);
        }
    }
}
