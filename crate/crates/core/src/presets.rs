//! Canonical mixture pairs shipped with the repo. The 2D pair is the
//! reference target/model configuration used by the comparison experiments;
//! the 1D pairs pin the overlap regimes used by the demos and harnesses.

use nalgebra::{DMatrix, DVector};

use crate::mixture::GaussianMixture;

/// The canonical 2D target P: two well-separated anisotropic modes.
pub fn canonical_2d_target() -> GaussianMixture {
    GaussianMixture::new(vec![
        (
            0.5,
            DVector::from_column_slice(&[-2.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]),
        ),
        (
            0.5,
            DVector::from_column_slice(&[2.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.7, -0.15, -0.15, 1.1]),
        ),
    ])
    .expect("canonical target is valid")
}

/// The canonical 2D model P_hat: shifted, reweighted and reshaped modes, so
/// the exact correction field has visible structure.
pub fn canonical_2d_model() -> GaussianMixture {
    GaussianMixture::new(vec![
        (
            0.65,
            DVector::from_column_slice(&[-1.2, 0.8]),
            DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]),
        ),
        (
            0.35,
            DVector::from_column_slice(&[2.4, -0.6]),
            DMatrix::from_row_slice(2, 2, &[0.9, -0.2, -0.2, 1.1]),
        ),
    ])
    .expect("canonical model is valid")
}

pub fn canonical_2d_pair() -> (GaussianMixture, GaussianMixture) {
    (canonical_2d_target(), canonical_2d_model())
}

/// 1D pair used by the oscillatory demo: N(0,1) vs N(0.6,1).
pub fn demo_1d_pair() -> (GaussianMixture, GaussianMixture) {
    (
        GaussianMixture::standard(1),
        GaussianMixture::scalar(0.6, 1.0).expect("unit variance"),
    )
}

/// 1D strongly-overlapping pair with total variation 0.2.
pub fn overlap_1d_pair() -> (GaussianMixture, GaussianMixture) {
    (
        GaussianMixture::standard(1),
        GaussianMixture::scalar(0.506_694_206_271_599_6, 1.0).expect("unit variance"),
    )
}

/// 1D nearly-disjoint pair with total variation 0.98.
pub fn separated_1d_pair() -> (GaussianMixture, GaussianMixture) {
    (
        GaussianMixture::standard(1),
        GaussianMixture::scalar(4.652_695_748_081_682, 1.0).expect("unit variance"),
    )
}
