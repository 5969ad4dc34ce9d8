use isw_core::gradcheck::{
    central_difference, random_feature_map, random_mask, relative_error, DEFAULT_STEP,
};
use isw_core::linalg::{standardized_covariance, FeatureMap};
use isw_core::losses::{dwt_loss, irw_loss, isw_loss, iw_loss, SelectionMask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Same 3x2x3 fixture as the linalg tests; values from numpy.
const X: [f64; 18] = [
    0.3, -1.2, 0.7, 2.0, 0.1, -0.4, //
    1.1, 0.5, -0.3, 0.8, -1.5, 0.2, //
    -0.6, 0.9, 1.4, -0.2, 0.3, -1.0,
];
const IW: f64 = 0.19709902674035415;
const ISW_01_12: f64 = 0.2498650111445812;
const DWT: f64 = 0.1672530864197531;

fn fixture() -> FeatureMap {
    FeatureMap::new(3, 2, 3, X.to_vec()).unwrap()
}

#[test]
fn loss_values_match_reference() {
    let x = fixture();
    assert!((iw_loss(&x, &SelectionMask::full(3)).unwrap().value - IW).abs() < 1e-15);
    let m = SelectionMask::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
    assert!((isw_loss(&x, &m).unwrap().value - ISW_01_12).abs() < 1e-15);
    assert!((dwt_loss(&x).unwrap().value - DWT).abs() < 1e-15);
}

#[test]
fn irw_margin_is_a_hinge() {
    let x = fixture();
    let full = SelectionMask::full(3);
    let above = irw_loss(&x, &full, 0.05).unwrap();
    assert!((above.value - (IW - 0.05)).abs() < 1e-15);
    let below = irw_loss(&x, &full, 0.5).unwrap();
    assert_eq!(below.value, 0.0);
    assert!(below.gradient.as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn empty_mask_is_zero() {
    let r = isw_loss(&fixture(), &SelectionMask::empty(3)).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.gradient.as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn mask_dimension_is_checked() {
    assert!(iw_loss(&fixture(), &SelectionMask::full(4)).is_err());
}

fn seeded_map(seed: u64, c: usize, h: usize, w: usize) -> FeatureMap {
    random_feature_map(&mut ChaCha8Rng::seed_from_u64(seed), c, h, w)
}

fn map_with_mask() -> impl Strategy<Value = (FeatureMap, SelectionMask)> {
    (
        any::<u64>(),
        2usize..=6,
        3usize..=6,
        3usize..=6,
        0.2f64..1.0,
    )
        .prop_map(|(seed, c, h, w, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_feature_map(&mut rng, c, h, w);
            let mut m = random_mask(&mut rng, c, p);
            if m.is_empty() {
                m = SelectionMask::full(c);
            }
            (x, m)
        })
}

/// Far enough from every |.| kink that central differences are smooth.
fn away_from_kinks(x: &FeatureMap, m: &SelectionMask, step: f64) -> bool {
    let s = standardized_covariance(x);
    m.pairs().all(|(i, j)| s.get(i, j).abs() > 1e3 * step)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isw_gradient_matches_finite_differences((x, m) in map_with_mask()) {
        prop_assume!(away_from_kinks(&x, &m, DEFAULT_STEP));
        let (c, h, w) = x.dims();
        let analytic = isw_loss(&x, &m).unwrap().gradient;
        let numeric = central_difference(
            |v| Ok(isw_loss(&FeatureMap::new(c, h, w, v.to_vec())?, &m)?.value),
            x.as_slice(),
            DEFAULT_STEP,
        )
        .unwrap();
        prop_assert!(relative_error(analytic.as_slice(), &numeric) < 1e-6);
    }

    #[test]
    fn dwt_gradient_matches_finite_differences(seed in any::<u64>(), c in 2usize..=5) {
        let x = seeded_map(seed, c, 4, 4);
        let analytic = dwt_loss(&x).unwrap().gradient;
        let numeric = central_difference(
            |v| Ok(dwt_loss(&FeatureMap::new(c, 4, 4, v.to_vec())?)?.value),
            x.as_slice(),
            DEFAULT_STEP,
        )
        .unwrap();
        prop_assert!(relative_error(analytic.as_slice(), &numeric) < 1e-6);
    }

    #[test]
    fn invariant_to_per_channel_affine_maps(
        (x, m) in map_with_mask(),
        scales in prop::collection::vec(0.2f64..5.0, 6),
        shifts in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let mut y = x.clone();
        for ch in 0..x.channels() {
            y.channel_mut(ch).iter_mut().for_each(|v| *v = scales[ch] * *v + shifts[ch]);
        }
        let a = isw_loss(&x, &m).unwrap().value;
        let b = isw_loss(&y, &m).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn zero_margin_irw_equals_iw((x, m) in map_with_mask()) {
        let a = iw_loss(&x, &m).unwrap();
        let b = irw_loss(&x, &m, 0.0).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.gradient.as_slice(), b.gradient.as_slice());
    }

    #[test]
    fn small_step_along_negative_gradient_descends((x, m) in map_with_mask()) {
        prop_assume!(away_from_kinks(&x, &m, 1e-4));
        let r = isw_loss(&x, &m).unwrap();
        let g = r.gradient.norm();
        prop_assume!(g > 1e-8);
        let mut y = x.clone();
        y.add_scaled(-1e-4 / g, &r.gradient);
        prop_assert!(isw_loss(&y, &m).unwrap().value < r.value);
    }

    #[test]
    fn loss_is_bounded_by_one((x, m) in map_with_mask()) {
        let v = isw_loss(&x, &m).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }
}
