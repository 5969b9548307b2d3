//! Dense numeric carriers and a few element-wise helpers the AMP recursions
//! use on every line.

use nalgebra::{DMatrix, DVector};

/// Real-valued dense matrix with explicit row/column dimensions.
pub type DenseMatrix = DMatrix<f64>;
/// Real-valued dense column vector.
pub type DenseVector = DVector<f64>;

/// Element-wise square, `|A|^{.2}` in the usual AMP notation.
pub fn elementwise_square(a: &DenseMatrix) -> DenseMatrix {
    a.map(|x| x * x)
}

/// Element-wise reciprocal. Caller guarantees nonzero entries.
pub fn elementwise_recip(a: &DenseMatrix) -> DenseMatrix {
    a.map(|x| 1.0 / x)
}

/// Squared Frobenius norm.
pub fn frob_sq(a: &DenseMatrix) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Mean of each row, returned as a length-`nrows` vector.
pub fn row_means(a: &DenseMatrix) -> DenseVector {
    let l = a.ncols() as f64;
    DenseVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum() / l))
}

/// Mean of each column, returned as a length-`ncols` vector.
pub fn col_means(a: &DenseMatrix) -> DenseVector {
    let m = a.nrows() as f64;
    DenseVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.sum() / m))
}

/// True when every entry is finite.
pub fn all_finite(a: &DenseMatrix) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`, with an absolute fallback
/// when `b` is numerically zero.
pub fn rel_frob_dist(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let denom = frob_sq(b).sqrt();
    let num = frob_sq(&(a - b)).sqrt();
    if denom > 0.0 {
        num / denom
    } else {
        num
    }
}
