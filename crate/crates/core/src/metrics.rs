//! Evaluation metrics, in dB.
//!
//! Dictionary recovery is only identifiable up to a column permutation and
//! per-column (signed) scaling, so the dictionary metric minimizes the error
//! over that ambiguity class before normalizing.

use ordered_float::OrderedFloat;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix as WeightMatrix;
use thiserror::Error;

use crate::matrix::{frob_sq, DenseMatrix};

/// Exact matches are reported at this floor instead of −∞.
pub const NMSE_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reference matrix has zero norm")]
    ZeroReference,
    #[error("reference matrix has an all-zero column {0}")]
    ZeroColumn(usize),
}

fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

fn check_same_shape(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `10·log10(‖Z − ĤX̂‖² / ‖Z‖²)`.
pub fn nmse_z(
    z_true: &DenseMatrix,
    h_hat: &DenseMatrix,
    x_hat: &DenseMatrix,
) -> Result<f64, MetricsError> {
    if h_hat.ncols() != x_hat.nrows() {
        return Err(MetricsError::DimensionMismatch(format!(
            "H is {:?}, X is {:?}",
            h_hat.shape(),
            x_hat.shape()
        )));
    }
    let recon = h_hat * x_hat;
    check_same_shape(z_true, &recon)?;
    let denom = frob_sq(z_true);
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(to_db(frob_sq(&(z_true - recon)) / denom))
}

/// `10·log10(‖X̂ − X‖² / ‖X‖²)`; no ambiguity resolution.
pub fn nmse_x(x_true: &DenseMatrix, x_hat: &DenseMatrix) -> Result<f64, MetricsError> {
    check_same_shape(x_true, x_hat)?;
    let denom = frob_sq(x_true);
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(to_db(frob_sq(&(x_hat - x_true)) / denom))
}

/// Pairs each estimated column `i` with a true column `j`; the weight is the
/// squared-error reduction achieved by the least-squares scale,
/// `(ĥᵢᵀhⱼ)² / ‖ĥᵢ‖²`, so a maximum-weight assignment minimizes the total
/// residual.
fn assignment_weights(h_true: &DenseMatrix, h_hat: &DenseMatrix) -> Vec<Vec<f64>> {
    let n = h_true.ncols();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        let est = h_hat.column(i);
        let est_sq = est.dot(&est);
        for (j, row) in w[i].iter_mut().enumerate().take(n) {
            if est_sq > 0.0 {
                let inner = est.dot(&h_true.column(j));
                *row = inner * inner / est_sq;
            }
        }
    }
    w
}

fn residual_for_assignment(
    h_true: &DenseMatrix,
    h_hat: &DenseMatrix,
    assignment: &[usize],
) -> f64 {
    let mut residual = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        let est = h_hat.column(i);
        let truth = h_true.column(j);
        let est_sq = est.dot(&est);
        let truth_sq = truth.dot(&truth);
        if est_sq > 0.0 {
            let inner = est.dot(&truth);
            residual += (truth_sq - inner * inner / est_sq).max(0.0);
        } else {
            residual += truth_sq;
        }
    }
    residual
}

/// Ambiguity-resolved dictionary error
/// `min over permutation and per-column scale of ‖ĤJ − H‖² / ‖H‖²`, in dB.
/// Signed scales are allowed; sign flips are part of the ambiguity class.
pub fn nmse_h_resolved(h_true: &DenseMatrix, h_hat: &DenseMatrix) -> Result<f64, MetricsError> {
    check_same_shape(h_true, h_hat)?;
    let denom = frob_sq(h_true);
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    for j in 0..h_true.ncols() {
        if h_true.column(j).iter().all(|&v| v == 0.0) {
            return Err(MetricsError::ZeroColumn(j));
        }
    }
    let weights = assignment_weights(h_true, h_hat);
    let n = weights.len();
    let wm = WeightMatrix::from_fn(n, n, |(r, c)| OrderedFloat(weights[r][c]));
    let (_, assignment) = kuhn_munkres(&wm);
    let residual = residual_for_assignment(h_true, h_hat, &assignment);
    Ok(to_db(residual / denom))
}

/// Unresolved dictionary error `‖Ĥ − H‖² / ‖H‖²` in dB; upper-bounds the
/// resolved metric.
pub fn nmse_h_plain(h_true: &DenseMatrix, h_hat: &DenseMatrix) -> Result<f64, MetricsError> {
    nmse_x(h_true, h_hat)
}

/// Exhaustive minimum over all column permutations with per-column
/// least-squares scales. Reference oracle for small `N`.
pub fn nmse_h_brute_force(
    h_true: &DenseMatrix,
    h_hat: &DenseMatrix,
    max_n: usize,
) -> Result<f64, MetricsError> {
    check_same_shape(h_true, h_hat)?;
    let n = h_true.ncols();
    assert!(n <= max_n, "brute force limited to {max_n} columns");
    let denom = frob_sq(h_true);
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut assignment, 0, &mut |perm| {
        let r = residual_for_assignment(h_true, h_hat, perm);
        if r < best {
            best = r;
        }
    });
    Ok(to_db(best / denom))
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn nmse_z_reference_points() {
        let z = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let h = DenseMatrix::identity(2, 2);
        // Perfect reconstruction hits the floor.
        assert_eq!(nmse_z(&z, &h, &z.clone()).unwrap(), NMSE_FLOOR_DB);
        // Zero reconstruction is 0 dB.
        let zeros = DenseMatrix::zeros(2, 2);
        assert_eq!(nmse_z(&z, &h, &zeros).unwrap(), 0.0);
        // Half-scale reconstruction: ratio 1/4 ≈ −6.02 dB.
        let half = &z * 0.5;
        let db = nmse_z(&z, &h, &half).unwrap();
        assert!((db - 10.0 * 0.25f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn resolved_metric_is_invariant_to_permutation_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = 5;
            let h = random_matrix(7, n, &mut rng);
            // Random permutation and nonzero (possibly negative) scales.
            let mut perm: Vec<usize> = (0..n).collect();
            for t in 0..n {
                let j = rng.random_range(t..n);
                perm.swap(t, j);
            }
            let mut h_amb = DenseMatrix::zeros(7, n);
            for (dst, &src) in perm.iter().enumerate() {
                let scale: f64 = loop {
                    let s: f64 = StandardNormal.sample(&mut rng);
                    if s.abs() > 0.1 {
                        break s;
                    }
                };
                h_amb.set_column(dst, &(h.column(src) * scale));
            }
            let db = nmse_h_resolved(&h, &h_amb).unwrap();
            assert_eq!(db, NMSE_FLOOR_DB);
        }
    }

    #[test]
    fn resolved_never_exceeds_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let h = random_matrix(6, 4, &mut rng);
            let h_hat = random_matrix(6, 4, &mut rng);
            let resolved = nmse_h_resolved(&h, &h_hat).unwrap();
            let plain = nmse_h_plain(&h, &h_hat).unwrap();
            assert!(resolved <= plain + 1e-9);
        }
    }

    #[test]
    fn matching_equals_brute_force_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 3, 4, 5, 6] {
            for _ in 0..10 {
                let h = random_matrix(5, n, &mut rng);
                let h_hat = random_matrix(5, n, &mut rng);
                let fast = nmse_h_resolved(&h, &h_hat).unwrap();
                let brute = nmse_h_brute_force(&h, &h_hat, 6).unwrap();
                assert!(
                    (fast - brute).abs() < 1e-9,
                    "n={n}: fast {fast} vs brute {brute}"
                );
            }
        }
    }

    #[test]
    fn zero_column_is_an_error() {
        let mut h = DenseMatrix::from_element(3, 2, 1.0);
        h.set_column(1, &nalgebra::DVector::zeros(3));
        let h_hat = DenseMatrix::from_element(3, 2, 0.5);
        assert!(matches!(
            nmse_h_resolved(&h, &h_hat),
            Err(MetricsError::ZeroColumn(1))
        ));
    }

    #[test]
    fn identical_dictionary_hits_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_matrix(6, 3, &mut rng);
        assert_eq!(nmse_h_resolved(&h, &h.clone()).unwrap(), NMSE_FLOOR_DB);
    }
}
