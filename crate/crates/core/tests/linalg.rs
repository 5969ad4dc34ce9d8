use isw_core::linalg::{
    compute_covariance, compute_mean, inverse_sqrt, standardize, standardized_covariance,
    sym_eigen, whiten, CovarianceMatrix, FeatureMap, RankMode,
};
use proptest::prelude::*;

// 3 channels, 2x3 spatial. Reference values from numpy / scipy.linalg.eigh.
const X: [f64; 18] = [
    0.3, -1.2, 0.7, 2.0, 0.1, -0.4, //
    1.1, 0.5, -0.3, 0.8, -1.5, 0.2, //
    -0.6, 0.9, 1.4, -0.2, 0.3, -1.0,
];
const COV: [f64; 9] = [
    0.9691666666666667,
    0.115,
    -0.07500000000000001,
    0.115,
    0.7288888888888888,
    -0.2577777777777778,
    -0.07500000000000001,
    -0.2577777777777778,
    0.6922222222222222,
];
const INV_SQRT: [f64; 9] = [
    1.0237386030497115,
    -0.06737184225633105,
    0.03305084807812215,
    -0.0673718422563311,
    1.241643369417969,
    0.23187821015270238,
    0.03305084807812218,
    0.23187821015270238,
    1.2697689916542727,
];
const STD_COV: [f64; 9] = [
    1.0,
    0.13682578266204856,
    -0.09156705793189991,
    0.13682578266204856,
    0.9999999999999999,
    -0.3629042396271139,
    -0.09156705793189991,
    -0.3629042396271139,
    1.0,
];

fn fixture() -> FeatureMap {
    FeatureMap::new(3, 2, 3, X.to_vec()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn covariance_matches_reference() {
    let x = fixture();
    let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
    assert!(close(cov.as_slice(), &COV, 1e-14), "{:?}", cov.as_slice());
}

#[test]
fn inverse_sqrt_matches_reference() {
    let cov = CovarianceMatrix::new(3, COV.to_vec()).unwrap();
    let m = inverse_sqrt(&cov, RankMode::Strict).unwrap();
    assert!(close(m.as_slice(), &INV_SQRT, 1e-12), "{:?}", m.as_slice());
}

#[test]
fn standardized_covariance_matches_reference() {
    let s = standardized_covariance(&fixture());
    assert!(close(s.as_slice(), &STD_COV, 1e-14), "{:?}", s.as_slice());
}

#[test]
fn strict_mode_rejects_duplicate_channels() {
    let mut data = X.to_vec();
    data.copy_within(0..6, 6);
    let x = FeatureMap::new(3, 2, 3, data).unwrap();
    assert!(whiten(&x, RankMode::Strict).is_err());
    let lenient = whiten(&x, RankMode::Lenient).unwrap();
    assert!(lenient.is_finite());
}

#[test]
fn constant_channel_standardizes_to_zero() {
    let mut data = X.to_vec();
    data[6..12].fill(4.2);
    let xs = standardize(&FeatureMap::new(3, 2, 3, data).unwrap());
    assert!(xs.channel(1).iter().all(|&v| v == 0.0));
}

fn feature_map(max_c: usize) -> impl Strategy<Value = FeatureMap> {
    (1..=max_c, 1usize..=6, 1usize..=6).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(-10.0f64..10.0, c * h * w)
            .prop_map(move |d| FeatureMap::new(c, h, w, d).unwrap())
    })
}

/// Enough spatial samples that the covariance is almost surely full rank.
fn tall_feature_map() -> impl Strategy<Value = FeatureMap> {
    (1usize..=6).prop_flat_map(|c| {
        let hw = 4 * c + 4;
        prop::collection::vec(-5.0f64..5.0, c * hw)
            .prop_map(move |d| FeatureMap::new(c, 1, hw, d).unwrap())
    })
}

fn symmetric(max_dim: usize) -> impl Strategy<Value = CovarianceMatrix> {
    (1..=max_dim).prop_flat_map(|d| {
        prop::collection::vec(-3.0f64..3.0, d * d).prop_map(move |v| {
            let mut s = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    s[i * d + j] = 0.5 * (v[i * d + j] + v[j * d + i]);
                }
            }
            CovarianceMatrix::new(d, s).unwrap()
        })
    })
}

fn min_eigenvalue(m: &CovarianceMatrix) -> f64 {
    sym_eigen(m)
        .unwrap()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn covariance_is_symmetric_psd(x in feature_map(8)) {
        let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
        let c = cov.dim();
        for i in 0..c {
            for j in 0..c {
                prop_assert_eq!(cov.get(i, j), cov.get(j, i));
            }
        }
        let scale = cov.frobenius_norm().max(1.0);
        prop_assert!(min_eigenvalue(&cov) >= -1e-10 * scale);
    }

    #[test]
    fn standardized_covariance_is_a_correlation(x in feature_map(8)) {
        let s = standardized_covariance(&x);
        for i in 0..s.dim() {
            prop_assert!(s.get(i, i) <= 1.0 + 1e-12);
            for j in 0..s.dim() {
                prop_assert!(s.get(i, j).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn eigen_reconstructs(m in symmetric(10)) {
        let e = sym_eigen(&m).unwrap();
        prop_assert!(e.orthogonality_error() < 1e-10);
        let scale = m.frobenius_norm().max(1.0);
        prop_assert!(e.reconstruct().frobenius_distance(&m) < 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn whitening_gives_identity_covariance(x in tall_feature_map()) {
        let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
        prop_assume!(min_eigenvalue(&cov) > 1e-3);
        let white = whiten(&x, RankMode::Strict).unwrap();
        let wc = compute_covariance(&white, &compute_mean(&white)).unwrap();
        prop_assert!(wc.frobenius_distance(&CovarianceMatrix::identity(x.channels())) < 1e-8);
    }

    #[test]
    fn whitening_is_idempotent(x in tall_feature_map()) {
        let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
        prop_assume!(min_eigenvalue(&cov) > 1e-3);
        let once = whiten(&x, RankMode::Strict).unwrap();
        let twice = whiten(&once, RankMode::Strict).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-8);
    }
}
