use std::f64::consts::PI;

use isw_core::image::RgbImage;
use isw_core::linalg::CovarianceMatrix;
use isw_core::sensitivity::{
    apply_draw, derive_mask, kmeans_1d, within_cluster_sse, ClusterConfig, JitterDraw, MaskStatus,
    SensitivityStats,
};
use proptest::prelude::*;

const IMAGE: [f64; 36] = [
    0.2, 0.8, 0.5, 0.1, 0.9, 0.3, 0.6, 0.4, 0.0, 1.0, 0.25, 0.75, //
    0.6, 0.1, 0.7, 0.3, 0.2, 0.5, 0.9, 0.8, 0.4, 0.45, 0.05, 0.95, //
    0.1, 0.4, 0.2, 0.9, 0.7, 0.6, 0.3, 0.0, 0.85, 0.15, 0.55, 0.35,
];

// numpy + colorsys + scipy.ndimage.gaussian_filter1d(mode="mirror").
const JITTERED: [f64; 36] = [
    0.6086028001960271,
    0.551668227851572,
    0.4201637386824639,
    0.3531343923747433,
    0.614150937251983,
    0.5578838462317655,
    0.43014805634448305,
    0.36074936844589484,
    0.6173746261565043,
    0.5660449309193378,
    0.44762085672014973,
    0.37776204093898247,
    0.5292497778697441,
    0.5838730064669679,
    0.672643210397446,
    0.7008430044887077,
    0.504152426807021,
    0.5656777252249041,
    0.6669594066886724,
    0.7081259465905609,
    0.4838819114055251,
    0.5493279394149275,
    0.6555913158320351,
    0.7057318665480914,
    0.45032774934905895,
    0.4656432722975074,
    0.5176039389418847,
    0.555525001549099,
    0.476926920736507,
    0.4822100396194666,
    0.5091358446956753,
    0.5298253355597173,
    0.5016258473387675,
    0.49493035106718075,
    0.49810732043414874,
    0.5042618550136545,
];

#[test]
fn jitter_matches_reference() {
    let img = RgbImage::new(3, 4, IMAGE.to_vec()).unwrap();
    let out = apply_draw(
        &img,
        &JitterDraw {
            brightness: 1.2,
            contrast: 0.8,
            saturation: 1.3,
            hue_shift: 1.0,
            blur_sigma: 1.0,
        },
    );
    for (a, b) in out.as_feature_map().as_slice().iter().zip(JITTERED) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn identity_draw_and_full_hue_turn_leave_image_unchanged() {
    let img = RgbImage::new(3, 4, IMAGE.to_vec()).unwrap();
    assert_eq!(apply_draw(&img, &JitterDraw::identity()), img);
    let turned = apply_draw(
        &img,
        &JitterDraw {
            hue_shift: 2.0 * PI,
            ..JitterDraw::identity()
        },
    );
    assert!(turned.as_feature_map().max_abs_diff(img.as_feature_map()) < 1e-12);
}

// Brute force over all 3^8 labellings with every cluster non-empty.
const KM_VALUES: [f64; 8] = [0.9, 0.1, 0.35, 2.0, 0.4, 1.9, 0.15, 3.1];
const KM_SSE: f64 = 0.4080000000000001;
const KM_LABELS: [usize; 8] = [0, 0, 0, 1, 0, 1, 0, 2];

#[test]
fn kmeans_matches_brute_force_reference() {
    let r = kmeans_1d(&KM_VALUES, 3).unwrap();
    assert_eq!(r.labels, KM_LABELS);
    assert!((r.objective(&KM_VALUES) - KM_SSE).abs() < 1e-12);
}

fn best_assignment_sse(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(within_cluster_sse(values, &labels, k));
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn matrix(dim: usize, upper: &[f64]) -> CovarianceMatrix {
    let mut v = vec![0.0; dim * dim];
    let mut idx = 0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            v[i * dim + j] = upper[idx];
            v[j * dim + i] = upper[idx];
            idx += 1;
        }
    }
    CovarianceMatrix::new(dim, v).unwrap()
}

fn covariance_pairs() -> impl Strategy<Value = (usize, Vec<(CovarianceMatrix, CovarianceMatrix)>)> {
    (2usize..=6).prop_flat_map(|d| {
        let entries = d * (d - 1) / 2;
        let pair = (
            prop::collection::vec(-1.0f64..1.0, entries),
            prop::collection::vec(-1.0f64..1.0, entries),
        )
            .prop_map(move |(a, b)| (matrix(d, &a), matrix(d, &b)));
        (Just(d), prop::collection::vec(pair, 1..12))
    })
}

fn accumulate<'a>(
    d: usize,
    pairs: impl IntoIterator<Item = &'a (CovarianceMatrix, CovarianceMatrix)>,
) -> SensitivityStats {
    let mut s = SensitivityStats::new(d);
    for (a, b) in pairs {
        s.accumulate_pair(a, b).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn kmeans_is_globally_optimal(values in prop::collection::vec(-5.0f64..5.0, 1..=8), k in 1usize..=3) {
        let r = kmeans_1d(&values, k).unwrap();
        let best = best_assignment_sse(&values, k);
        prop_assert!(r.objective(&values) <= best + 1e-9 * (1.0 + best));
        for w in r.centroids.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn variance_ignores_pair_order((d, pairs) in covariance_pairs(), rot in 0usize..12) {
        let forward = accumulate(d, &pairs);
        let r = rot % pairs.len();
        let rotated = accumulate(d, pairs[r..].iter().chain(&pairs[..r]));
        let reversed = accumulate(d, pairs.iter().rev());
        prop_assert!(forward.variance_matrix().frobenius_distance(&rotated.variance_matrix()) < 1e-12);
        prop_assert!(forward.variance_matrix().frobenius_distance(&reversed.variance_matrix()) < 1e-12);

        let split = pairs.len() / 2;
        let mut left = accumulate(d, &pairs[..split]);
        left.merge(&accumulate(d, &pairs[split..])).unwrap();
        prop_assert_eq!(left.sample_count(), pairs.len());
        prop_assert!(left.variance_matrix().frobenius_distance(&forward.variance_matrix()) < 1e-12);
    }

    #[test]
    fn raising_m_shrinks_the_mask((d, pairs) in covariance_pairs()) {
        let s = accumulate(d, &pairs);
        let loose = derive_mask(&s, &ClusterConfig { k: 3, m: 1, log_scale: true }).unwrap();
        let tight = derive_mask(&s, &ClusterConfig { k: 3, m: 2, log_scale: true }).unwrap();
        prop_assert!(tight.mask.is_subset_of(&loose.mask));
    }

    #[test]
    fn mask_is_scale_invariant((d, pairs) in covariance_pairs(), scale in 1e-3f64..1e3) {
        let s = accumulate(d, &pairs);
        let v = s.variance_matrix();
        prop_assume!(v.strict_upper().iter().all(|&x| x > 1e-6));
        let scaled = CovarianceMatrix::new(d, v.as_slice().iter().map(|x| x * scale).collect()).unwrap();
        let t = SensitivityStats::from_variance(&scaled, s.sample_count()).unwrap();
        for log_scale in [false, true] {
            let cfg = ClusterConfig { k: 3, m: 1, log_scale };
            let a = derive_mask(&s, &cfg).unwrap();
            let b = derive_mask(&t, &cfg).unwrap();
            prop_assert_eq!(a.mask, b.mask);
        }
    }
}

#[test]
fn constant_variance_is_degenerate() {
    let v = CovarianceMatrix::new(3, vec![0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]).unwrap();
    let s = SensitivityStats::from_variance(&v, 4).unwrap();
    let d = derive_mask(&s, &ClusterConfig::default()).unwrap();
    assert_eq!(d.status, MaskStatus::Degenerate { effective_k: 1 });
    assert!(d.mask.is_empty());
}
