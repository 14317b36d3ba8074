mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use styler_core::losses::{
    content_loss, feature_stats, ld_content_from_pyramids, ld_style_from_pyramids, mean_distance, stat_distance,
    style_loss, total_loss, weighted_total, LossParts, LossWeights, CONTENT_LAYERS, STYLE_LAYERS,
};
use styler_core::{FeaturePyramid, StylerError, Tap};
use styler_grad::{Tensor, Var};

/// A fabricated pyramid with small per-tap shapes `[n, c_i, h_i, w_i]`.
fn pyramid(n: usize, seed: u64) -> FeaturePyramid<f64> {
    let mut r = rng(seed);
    let shapes = [[3, 2, 2], [2, 2, 2], [3, 1, 4], [2, 1, 3], [3, 1, 2]];
    let taps = shapes.map(|[c, h, w]| Var::constant(random_tensor(&[n, c, h, w], -1.0, 2.0, &mut r)));
    FeaturePyramid::from_taps(taps)
}

fn value(v: &Var<f64>) -> f64 {
    v.value().item().unwrap()
}

/// Permutes spatial positions of every tap independently per sample.
fn spatially_shuffled(p: &FeaturePyramid<f64>, seed: u64) -> FeaturePyramid<f64> {
    let mut r = rng(seed);
    let taps = p.taps().clone().map(|t| {
        let s = t.shape().to_vec();
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let mut data = t.value().data().to_vec();
        for i in 0..n {
            let mut perm: Vec<usize> = (0..hw).collect();
            perm.shuffle(&mut r);
            for ch in 0..c {
                let base = (i * c + ch) * hw;
                let old = data[base..base + hw].to_vec();
                for (k, &src) in perm.iter().enumerate() {
                    data[base + k] = old[src];
                }
            }
        }
        Var::constant(Tensor::new(s, data).unwrap())
    });
    FeaturePyramid::from_taps(taps)
}

#[test]
fn feature_stats_two_point_and_constant() {
    let t = Tensor::<f64>::new([1, 2, 1, 2], vec![1.0, 3.0, 3.0, 3.0]).unwrap();
    let (mu, sigma) = feature_stats(&Var::constant(t)).unwrap();
    assert_eq!(mu.shape(), &[1, 2]);
    assert!((mu.value().data()[0] - 2.0).abs() < 1e-12);
    assert!((sigma.value().data()[0] - (1.0 + EPS_NORM).sqrt()).abs() < 1e-12);
    assert!((mu.value().data()[1] - 3.0).abs() < 1e-12);
    assert!((sigma.value().data()[1] - EPS_NORM.sqrt()).abs() < 1e-12);
}

#[test]
fn feature_stats_match_loop_oracle() {
    let t = random_tensor(&[2, 3, 2, 3], -2.0, 2.0, &mut rng(1));
    let (mu, sigma) = feature_stats(&Var::constant(t.clone())).unwrap();
    for n in 0..2 {
        let (em, es) = column_stats(&from_feature(&t, n));
        for c in 0..3 {
            assert!((mu.value().data()[n * 3 + c] - em[c]).abs() < 1e-12);
            assert!((sigma.value().data()[n * 3 + c] - es[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn single_entry_difference_contributes_its_magnitude() {
    let a = pyramid(1, 2);
    let mut taps = a.taps().clone();
    let mut t = taps[3].value().clone();
    t.data_mut()[1] += 0.75;
    taps[3] = Var::constant(t);
    let b = FeaturePyramid::from_taps(taps);
    let l = value(&content_loss(&a, &b, &[Tap::Relu4_1]).unwrap());
    assert!((l - 0.75).abs() < 1e-12);
}

#[test]
fn content_loss_matches_oracle() {
    let (a, b) = (pyramid(2, 3), pyramid(2, 4));
    let got = value(&content_loss(&a, &b, &CONTENT_LAYERS).unwrap());
    let expected: f64 =
        CONTENT_LAYERS.iter().map(|&t| oracle_mean_distance(a.get(t).value(), b.get(t).value())).sum();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn style_loss_matches_oracle() {
    let (s, cs) = (pyramid(2, 5), pyramid(2, 6));
    let got = value(&style_loss(&s, &cs, &STYLE_LAYERS).unwrap());
    let expected: f64 = STYLE_LAYERS.iter().map(|&t| oracle_stat_distance(cs.get(t).value(), s.get(t).value())).sum();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn style_loss_ignores_spatial_size() {
    let mut r = rng(7);
    let a = Var::constant(random_tensor(&[1, 3, 2, 2], -1.0, 1.0, &mut r));
    let b = Var::constant(random_tensor(&[1, 3, 4, 5], -1.0, 1.0, &mut r));
    let got = value(&stat_distance(&a, &b).unwrap());
    assert!((got - oracle_stat_distance(a.value(), b.value())).abs() < 1e-12);
    let c = Var::constant(random_tensor(&[1, 2, 2, 2], -1.0, 1.0, &mut r));
    assert!(matches!(stat_distance(&a, &c), Err(StylerError::Dimension(_))));
}

#[test]
fn content_loss_rejects_shape_mismatch() {
    let a = Var::constant(Tensor::<f64>::zeros([1, 2, 2, 2]));
    let b = Var::constant(Tensor::<f64>::zeros([1, 2, 2, 3]));
    assert!(matches!(mean_distance(&a, &b), Err(StylerError::Dimension(_))));
}

#[test]
fn coincident_inputs_give_exact_zero() {
    let p = pyramid(3, 8);
    assert_eq!(value(&content_loss(&p, &p, &CONTENT_LAYERS).unwrap()), 0.0);
    assert_eq!(value(&style_loss(&p, &p, &STYLE_LAYERS).unwrap()), 0.0);
    assert_eq!(value(&ld_content_from_pyramids(&p, &p, &CONTENT_LAYERS).unwrap()), 0.0);
    assert_eq!(value(&ld_style_from_pyramids(&p, &p).unwrap()), 0.0);
}

#[test]
fn identity_permutation_gives_zero_ld_terms() {
    let p = pyramid(3, 9);
    let same = p.select(&[0, 1, 2]).unwrap();
    assert_eq!(value(&ld_content_from_pyramids(&p, &same, &CONTENT_LAYERS).unwrap()), 0.0);
    assert_eq!(value(&ld_style_from_pyramids(&p, &same).unwrap()), 0.0);
}

#[test]
fn ld_terms_average_per_pair_losses() {
    let (a, b) = (pyramid(2, 10), pyramid(2, 11));
    let pair = |p: &FeaturePyramid<f64>, i: usize| p.select(&[i]).unwrap();
    let ldc = value(&ld_content_from_pyramids(&a, &b, &CONTENT_LAYERS).unwrap());
    let per_pair: f64 = (0..2)
        .map(|i| value(&content_loss(&pair(&a, i), &pair(&b, i), &CONTENT_LAYERS).unwrap()))
        .sum::<f64>()
        / 2.0;
    assert!((ldc - per_pair).abs() < 1e-12);
    let lds = value(&ld_style_from_pyramids(&a, &b).unwrap());
    let per_pair: f64 =
        (0..2).map(|i| value(&style_loss(&pair(&b, i), &pair(&a, i), &STYLE_LAYERS).unwrap())).sum::<f64>() / 2.0;
    assert!((lds - per_pair).abs() < 1e-12);
}

#[test]
fn ld_terms_reject_batch_mismatch() {
    let (a, b) = (pyramid(2, 12), pyramid(3, 13));
    assert!(matches!(ld_content_from_pyramids(&a, &b, &CONTENT_LAYERS), Err(StylerError::Dimension(_))));
    assert!(matches!(ld_style_from_pyramids(&a, &b), Err(StylerError::Dimension(_))));
}

#[test]
fn total_loss_weights_terms() {
    let w = LossWeights::default();
    assert_eq!(total_loss(&LossParts::default(), &w).unwrap().total, 0.0);
    let parts = LossParts { content: 2.0, style: 3.0, ..LossParts::default() };
    assert!((total_loss(&parts, &w).unwrap().total - 17.0).abs() < 1e-12);
    let parts = LossParts { content: 1.0, style: 2.0, identity: 3.0, ld_content: 4.0, ld_style: 5.0 };
    assert!((total_loss(&parts, &w).unwrap().total - (1.0 + 10.0 + 3.0 + 4.0 + 5.0)).abs() < 1e-12);
}

#[test]
fn non_finite_term_is_named() {
    let parts = LossParts { content: 1.0, style: f64::NAN, ..LossParts::default() };
    match total_loss(&parts, &LossWeights::default()) {
        Err(StylerError::Numeric { term }) => assert_eq!(term, "style"),
        other => panic!("expected numeric error, got {other:?}"),
    }
    let parts = LossParts { ld_style: f64::INFINITY, ..LossParts::default() };
    assert!(matches!(total_loss(&parts, &LossWeights::default()), Err(StylerError::Numeric { term: "ld_style" })));
}

#[test]
fn weights_are_validated() {
    assert!(LossWeights::default().validate().is_ok());
    let w = LossWeights { lambda_s: -1.0, ..LossWeights::default() };
    assert!(matches!(w.validate(), Err(StylerError::Config { field: "lambda_s", .. })));
    let w = LossWeights { lambda_cld: f64::NAN, ..LossWeights::default() };
    assert!(matches!(w.validate(), Err(StylerError::Config { field: "lambda_cld", .. })));
}

#[test]
fn weighted_total_agrees_with_total_loss() {
    let vals = [0.5, 1.25, 2.0, 0.75, 3.0];
    let vars = vals.map(|v| Var::constant(Tensor::scalar(v)));
    let w = LossWeights { lambda_c: 2.0, lambda_s: 0.5, lambda_cld: 3.0, lambda_sld: 0.25, ..LossWeights::default() };
    let parts = LossParts { content: vals[0], style: vals[1], identity: vals[2], ld_content: vals[3], ld_style: vals[4] };
    let expected = total_loss(&parts, &w).unwrap().total;
    let got = value(&weighted_total([&vars[0], &vars[1], &vars[2], &vars[3], &vars[4]], &w));
    assert!((got - expected).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn losses_are_non_negative(a in any::<u64>(), b in any::<u64>()) {
        let (pa, pb) = (pyramid(2, a), pyramid(2, b));
        prop_assert!(value(&content_loss(&pa, &pb, &CONTENT_LAYERS).unwrap()) >= 0.0);
        prop_assert!(value(&style_loss(&pa, &pb, &STYLE_LAYERS).unwrap()) >= 0.0);
        prop_assert!(value(&ld_content_from_pyramids(&pa, &pb, &CONTENT_LAYERS).unwrap()) >= 0.0);
        prop_assert!(value(&ld_style_from_pyramids(&pa, &pb).unwrap()) >= 0.0);
    }

    #[test]
    fn style_terms_ignore_spatial_permutation(a in any::<u64>(), b in any::<u64>(), s in any::<u64>()) {
        let (pa, pb) = (pyramid(2, a), pyramid(2, b));
        let shuffled = spatially_shuffled(&pb, s);
        let base = value(&style_loss(&pa, &pb, &STYLE_LAYERS).unwrap());
        let moved = value(&style_loss(&pa, &shuffled, &STYLE_LAYERS).unwrap());
        prop_assert!((base - moved).abs() < 1e-12);
        prop_assert!(value(&ld_style_from_pyramids(&pb, &shuffled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn total_is_linear_in_each_weight(
        parts in proptest::array::uniform5(0.0f64..10.0),
        weights in proptest::array::uniform6(0.0f64..10.0),
        which in 0usize..5,
        scale in 0.0f64..4.0,
    ) {
        let p = LossParts { content: parts[0], style: parts[1], identity: parts[2], ld_content: parts[3], ld_style: parts[4] };
        let w = LossWeights {
            lambda_c: weights[0], lambda_s: weights[1], lambda_id1: weights[2],
            lambda_id2: weights[3], lambda_cld: weights[4], lambda_sld: weights[5],
        };
        let with = |k: f64| {
            let mut w2 = w;
            match which {
                0 => w2.lambda_c = k,
                1 => w2.lambda_s = k,
                3 => w2.lambda_cld = k,
                _ => w2.lambda_sld = k,
            }
            total_loss(&p, &w2).unwrap().total
        };
        let (t0, t1, tk) = (with(0.0), with(1.0), with(scale));
        prop_assert!((tk - (t0 + scale * (t1 - t0))).abs() < 1e-9);
    }
}
