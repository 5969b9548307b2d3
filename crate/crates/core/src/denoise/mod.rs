//! Entry-wise MMSE denoisers.
//!
//! AMP decouples estimation into independent scalar channels
//! `q = x + w`, `w ~ N(0, v)`. A denoiser maps the pseudo-observation pair
//! `(q, v)` to the posterior mean and variance of `x` under its prior. Each
//! prior family used by the factorization applications lives behind the one
//! [`DenoiserKind`] interface; hyper-parameters that are learned between
//! iterations (Gamma precisions, shared slab variance, sparsity rate) are
//! refreshed by [`DenoiserKind::refresh`] after each denoise pass.

pub mod truncnorm;

use std::ops::Range;

use thiserror::Error;

use crate::matrix::{all_finite, DenseMatrix};
use truncnorm::{log_norm_tail, lower_truncated_moments};

/// Floor applied to learned Gamma precisions; prevents division blow-ups on
/// exactly-zero entries.
pub const GAMMA_FLOOR: f64 = 1e-10;
/// Ceiling applied to learned Gamma precisions.
pub const GAMMA_CEILING: f64 = 1e12;
/// Floor for learned prior variances.
pub const VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pseudo-observation variance must be positive and finite (got {0})")]
    InvalidVariance(f64),
    #[error("non-finite pseudo-observation at entry ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyper(String),
    #[error("block ranges must partition the matrix exactly along one axis")]
    BadPartition,
    #[error("denoised block is empty")]
    EmptyBlock,
}

/// Matrix of pseudo-observation means `q` and variances `v`, one scalar
/// Gaussian channel per entry.
#[derive(Debug, Clone)]
pub struct PseudoObservationField {
    pub q: DenseMatrix,
    pub v: DenseMatrix,
}

impl PseudoObservationField {
    pub fn new(q: DenseMatrix, v: DenseMatrix) -> Result<Self, DenoiseError> {
        if q.shape() != v.shape() {
            return Err(DenoiseError::DimensionMismatch(format!(
                "q is {:?}, v is {:?}",
                q.shape(),
                v.shape()
            )));
        }
        for (idx, x) in q.iter().enumerate() {
            if !x.is_finite() {
                return Err(DenoiseError::NonFinite(idx % q.nrows(), idx / q.nrows()));
            }
        }
        for x in v.iter() {
            if !(*x > 0.0 && x.is_finite()) {
                return Err(DenoiseError::InvalidVariance(*x));
            }
        }
        Ok(Self { q, v })
    }

    pub fn nrows(&self) -> usize {
        self.q.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.q.ncols()
    }

    fn slice(&self, range: &BlockRange) -> Self {
        Self {
            q: slice_matrix(&self.q, range),
            v: slice_matrix(&self.v, range),
        }
    }
}

/// Posterior means and variances produced by a denoise pass.
#[derive(Debug, Clone)]
pub struct DenoisedField {
    pub means: DenseMatrix,
    pub variances: DenseMatrix,
}

impl DenoisedField {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            means: DenseMatrix::zeros(rows, cols),
            variances: DenseMatrix::zeros(rows, cols),
        }
    }

    fn slice(&self, range: &BlockRange) -> Self {
        Self {
            means: slice_matrix(&self.means, range),
            variances: slice_matrix(&self.variances, range),
        }
    }
}

/// Scalar hyper-parameter or one value per entry.
#[derive(Debug, Clone)]
pub enum Param {
    Scalar(f64),
    PerEntry(DenseMatrix),
}

impl Param {
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Param::Scalar(x) => *x,
            Param::PerEntry(m) => m[(i, j)],
        }
    }

    fn check_dims(&self, rows: usize, cols: usize, what: &str) -> Result<(), DenoiseError> {
        if let Param::PerEntry(m) = self {
            if m.shape() != (rows, cols) {
                return Err(DenoiseError::DimensionMismatch(format!(
                    "{what} is {:?}, field is ({rows}, {cols})",
                    m.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Row- or column-range of a block inside a composite prior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockRange {
    Rows(Range<usize>),
    Cols(Range<usize>),
}

fn slice_matrix(m: &DenseMatrix, range: &BlockRange) -> DenseMatrix {
    match range {
        BlockRange::Rows(r) => m.rows(r.start, r.len()).into_owned(),
        BlockRange::Cols(r) => m.columns(r.start, r.len()).into_owned(),
    }
}

fn write_block(dst: &mut DenseMatrix, range: &BlockRange, src: &DenseMatrix) {
    match range {
        BlockRange::Rows(r) => dst.rows_mut(r.start, r.len()).copy_from(src),
        BlockRange::Cols(r) => dst.columns_mut(r.start, r.len()).copy_from(src),
    }
}

/// One prior family applied entry-wise to a matrix block.
#[derive(Debug, Clone)]
pub enum DenoiserKind {
    /// `x ~ N(mean, variance)`. With `learn_variance` the (scalar) variance
    /// is re-estimated from the posterior second moments on refresh.
    Gaussian {
        mean: Param,
        variance: Param,
        learn_variance: bool,
    },
    /// Hierarchical Gaussian-Gamma prior `x ~ N(0, γ⁻¹)`, `γ ~ Ga(shape, rate)`;
    /// the per-entry precisions are carried as state and re-estimated on
    /// refresh. With `row_shared`, one precision per row captures a common
    /// support across columns.
    GaussianGamma {
        shape: f64,
        rate: f64,
        precision: DenseMatrix,
        row_shared: bool,
    },
    /// `x ~ N(location, scale)` restricted to `x ≥ 0`.
    NonNegativeGaussian { location: f64, scale: f64 },
    /// Entries pinned to known values wherever `mask` is true; flat prior
    /// elsewhere.
    KnownEntries {
        values: DenseMatrix,
        mask: nalgebra::DMatrix<bool>,
    },
    /// Spike-and-slab: point mass at zero with weight `1 − sparsity`, slab
    /// `N₊(location, scale)` with weight `sparsity`.
    BernoulliGaussianNonNegative {
        sparsity: f64,
        location: f64,
        scale: f64,
        learn_sparsity: bool,
    },
    /// Disjoint blocks (all row-ranges or all column-ranges) with one child
    /// prior each; the ranges must partition the matrix exactly.
    BlockComposite(Vec<(BlockRange, DenoiserKind)>),
}

impl DenoiserKind {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        DenoiserKind::Gaussian {
            mean: Param::Scalar(mean),
            variance: Param::Scalar(variance),
            learn_variance: false,
        }
    }

    pub fn gaussian_learned_variance(initial_variance: f64) -> Self {
        DenoiserKind::Gaussian {
            mean: Param::Scalar(0.0),
            variance: Param::Scalar(initial_variance),
            learn_variance: true,
        }
    }

    pub fn gaussian_gamma(
        shape: f64,
        rate: f64,
        rows: usize,
        cols: usize,
        row_shared: bool,
    ) -> Result<Self, DenoiseError> {
        if shape < 0.0 || rate < 0.0 {
            return Err(DenoiseError::InvalidHyper(format!(
                "Gamma shape/rate must be non-negative (got {shape}, {rate})"
            )));
        }
        Ok(DenoiserKind::GaussianGamma {
            shape,
            rate,
            precision: DenseMatrix::from_element(rows, cols, 1.0),
            row_shared,
        })
    }

    pub fn non_negative_gaussian(location: f64, scale: f64) -> Result<Self, DenoiseError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DenoiseError::InvalidHyper(format!(
                "truncated-Gaussian scale must be positive (got {scale})"
            )));
        }
        Ok(DenoiserKind::NonNegativeGaussian { location, scale })
    }

    pub fn known_entries(
        values: DenseMatrix,
        mask: nalgebra::DMatrix<bool>,
    ) -> Result<Self, DenoiseError> {
        if values.shape() != mask.shape() {
            return Err(DenoiseError::DimensionMismatch(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        Ok(DenoiserKind::KnownEntries { values, mask })
    }

    pub fn bernoulli_gaussian_nonneg(
        sparsity: f64,
        location: f64,
        scale: f64,
    ) -> Result<Self, DenoiseError> {
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(DenoiseError::InvalidHyper(format!(
                "sparsity rate must lie in [0, 1] (got {sparsity})"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DenoiseError::InvalidHyper(format!(
                "slab scale must be positive (got {scale})"
            )));
        }
        Ok(DenoiserKind::BernoulliGaussianNonNegative {
            sparsity,
            location,
            scale,
            learn_sparsity: false,
        })
    }

    pub fn block_composite(blocks: Vec<(BlockRange, DenoiserKind)>) -> Result<Self, DenoiseError> {
        if blocks.is_empty() {
            return Err(DenoiseError::BadPartition);
        }
        let rows = matches!(blocks[0].0, BlockRange::Rows(_));
        let mut spans: Vec<Range<usize>> = Vec::with_capacity(blocks.len());
        for (range, _) in &blocks {
            match (range, rows) {
                (BlockRange::Rows(r), true) | (BlockRange::Cols(r), false) => {
                    spans.push(r.clone())
                }
                _ => return Err(DenoiseError::BadPartition),
            }
        }
        spans.sort_by_key(|r| r.start);
        let mut expected = 0;
        for r in &spans {
            if r.start != expected || r.is_empty() {
                return Err(DenoiseError::BadPartition);
            }
            expected = r.end;
        }
        Ok(DenoiserKind::BlockComposite(blocks))
    }

    /// Checks the kind's hyper-parameter dimensions against a field shape.
    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<(), DenoiseError> {
        match self {
            DenoiserKind::Gaussian { mean, variance, .. } => {
                mean.check_dims(rows, cols, "mean")?;
                variance.check_dims(rows, cols, "variance")
            }
            DenoiserKind::GaussianGamma { precision, .. } => {
                if precision.shape() != (rows, cols) {
                    return Err(DenoiseError::DimensionMismatch(format!(
                        "precision {:?}, field ({rows}, {cols})",
                        precision.shape()
                    )));
                }
                Ok(())
            }
            DenoiserKind::NonNegativeGaussian { .. } => Ok(()),
            DenoiserKind::KnownEntries { values, .. } => {
                if values.shape() != (rows, cols) {
                    return Err(DenoiseError::DimensionMismatch(format!(
                        "known values {:?}, field ({rows}, {cols})",
                        values.shape()
                    )));
                }
                Ok(())
            }
            DenoiserKind::BernoulliGaussianNonNegative { .. } => Ok(()),
            DenoiserKind::BlockComposite(blocks) => {
                let mut covered = 0;
                for (range, child) in blocks {
                    let (r, c, len) = match range {
                        BlockRange::Rows(r) => (r.len(), cols, r.len()),
                        BlockRange::Cols(r) => (rows, r.len(), r.len()),
                    };
                    covered += len;
                    child.check_dims(r, c)?;
                }
                let axis_len = match blocks[0].0 {
                    BlockRange::Rows(_) => rows,
                    BlockRange::Cols(_) => cols,
                };
                if covered != axis_len {
                    return Err(DenoiseError::BadPartition);
                }
                Ok(())
            }
        }
    }

    /// Applies the denoiser entry-wise to a pseudo-observation field.
    pub fn denoise(&self, field: &PseudoObservationField) -> Result<DenoisedField, DenoiseError> {
        self.check_dims(field.nrows(), field.ncols())?;
        let (rows, cols) = (field.nrows(), field.ncols());
        let mut out = DenoisedField::zeros(rows, cols);
        match self {
            DenoiserKind::Gaussian { mean, variance, .. } => {
                for j in 0..cols {
                    for i in 0..rows {
                        let (m, s) = gaussian_entry(
                            field.q[(i, j)],
                            field.v[(i, j)],
                            mean.at(i, j),
                            variance.at(i, j),
                        );
                        out.means[(i, j)] = m;
                        out.variances[(i, j)] = s;
                    }
                }
            }
            DenoiserKind::GaussianGamma { precision, .. } => {
                for j in 0..cols {
                    for i in 0..rows {
                        let denom = 1.0 + precision[(i, j)] * field.v[(i, j)];
                        out.means[(i, j)] = field.q[(i, j)] / denom;
                        out.variances[(i, j)] = field.v[(i, j)] / denom;
                    }
                }
            }
            DenoiserKind::NonNegativeGaussian { location, scale } => {
                for j in 0..cols {
                    for i in 0..rows {
                        let (m, s) = truncated_gaussian_entry(
                            field.q[(i, j)],
                            field.v[(i, j)],
                            *location,
                            *scale,
                        );
                        out.means[(i, j)] = m;
                        out.variances[(i, j)] = s;
                    }
                }
            }
            DenoiserKind::KnownEntries { values, mask } => {
                for j in 0..cols {
                    for i in 0..rows {
                        if mask[(i, j)] {
                            out.means[(i, j)] = values[(i, j)];
                            out.variances[(i, j)] = 0.0;
                        } else {
                            out.means[(i, j)] = field.q[(i, j)];
                            out.variances[(i, j)] = field.v[(i, j)];
                        }
                    }
                }
            }
            DenoiserKind::BernoulliGaussianNonNegative {
                sparsity,
                location,
                scale,
                ..
            } => {
                for j in 0..cols {
                    for i in 0..rows {
                        let (m, s, _) = spike_slab_entry(
                            field.q[(i, j)],
                            field.v[(i, j)],
                            *sparsity,
                            *location,
                            *scale,
                        );
                        out.means[(i, j)] = m;
                        out.variances[(i, j)] = s;
                    }
                }
            }
            DenoiserKind::BlockComposite(blocks) => {
                for (range, child) in blocks {
                    let sub = child.denoise(&field.slice(range))?;
                    write_block(&mut out.means, range, &sub.means);
                    write_block(&mut out.variances, range, &sub.variances);
                }
            }
        }
        if !all_finite(&out.means) || !all_finite(&out.variances) {
            return Err(DenoiseError::InvalidHyper(
                "denoiser produced a non-finite output".into(),
            ));
        }
        Ok(out)
    }

    /// Re-estimates learned hyper-parameters from the latest denoise pass.
    /// This is a sequential barrier step between solver iterations.
    pub fn refresh(&mut self, field: &PseudoObservationField, denoised: &DenoisedField) {
        match self {
            DenoiserKind::Gaussian {
                variance,
                learn_variance: true,
                ..
            } => {
                let n = denoised.means.len();
                if n > 0 {
                    let second_moment: f64 = denoised
                        .means
                        .iter()
                        .zip(denoised.variances.iter())
                        .map(|(m, s)| s + m * m)
                        .sum::<f64>()
                        / n as f64;
                    *variance = Param::Scalar(second_moment.max(VARIANCE_FLOOR));
                }
            }
            DenoiserKind::GaussianGamma {
                shape,
                rate,
                precision,
                row_shared,
            } => {
                *precision = update_gamma(denoised, *shape, *rate, *row_shared);
            }
            DenoiserKind::BernoulliGaussianNonNegative {
                sparsity,
                location,
                scale,
                learn_sparsity: true,
            } => {
                let n = field.q.len();
                if n > 0 {
                    let total: f64 = field
                        .q
                        .iter()
                        .zip(field.v.iter())
                        .map(|(&q, &v)| spike_slab_entry(q, v, *sparsity, *location, *scale).2)
                        .sum();
                    *sparsity = (total / n as f64).clamp(1e-6, 1.0 - 1e-6);
                }
            }
            DenoiserKind::BlockComposite(blocks) => {
                for (range, child) in blocks {
                    child.refresh(&field.slice(range), &denoised.slice(range));
                }
            }
            _ => {}
        }
    }
}

fn gaussian_entry(q: f64, v: f64, prior_mean: f64, prior_var: f64) -> (f64, f64) {
    if prior_var.is_infinite() {
        return (q, v);
    }
    let denom = prior_var + v;
    (
        (prior_var * q + v * prior_mean) / denom,
        prior_var * v / denom,
    )
}

fn truncated_gaussian_entry(q: f64, v: f64, location: f64, scale: f64) -> (f64, f64) {
    // Product of the slab N(x; θ, φ) and the channel N(q; x, v) is a Gaussian
    // with variance s² = φv/(φ+v), truncated to x ≥ 0.
    let s2 = scale * v / (scale + v);
    let m = s2 * (location / scale + q / v);
    lower_truncated_moments(m, s2.sqrt())
}

fn norm_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// Posterior mean, variance and slab responsibility of the spike-and-slab
/// prior under the scalar Gaussian channel. Marginal likelihoods are combined
/// in the log domain so extreme sparsity rates do not overflow.
fn spike_slab_entry(q: f64, v: f64, sparsity: f64, location: f64, scale: f64) -> (f64, f64, f64) {
    if sparsity <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s2 = scale * v / (scale + v);
    let s = s2.sqrt();
    let m = s2 * (location / scale + q / v);
    let (slab_mean, slab_var) = lower_truncated_moments(m, s);
    if sparsity >= 1.0 {
        return (slab_mean, slab_var, 1.0);
    }
    let log_l1 = sparsity.ln() + norm_logpdf(q, location, scale + v) + log_norm_tail(-m / s)
        - log_norm_tail(-location / scale.sqrt());
    let log_l0 = (1.0 - sparsity).ln() + norm_logpdf(q, 0.0, v);
    let d = log_l0 - log_l1;
    let resp = if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    };
    let mean = resp * slab_mean;
    let var = resp * slab_var + resp * (1.0 - resp) * slab_mean * slab_mean;
    (mean, var, resp)
}

/// Refreshed Gamma precisions `γ̂ = (1 + 2·shape) / (2·rate + Ξ + x̂²)`,
/// clamped to `[GAMMA_FLOOR, GAMMA_CEILING]`. With `row_shared`, the per-row
/// mean of `Ξ + x̂²` replaces the entry statistic and one precision per row is
/// broadcast across the row.
pub fn update_gamma(
    denoised: &DenoisedField,
    shape: f64,
    rate: f64,
    row_shared: bool,
) -> DenseMatrix {
    let numer = 1.0 + 2.0 * shape;
    let stat = denoised.variances.zip_map(&denoised.means, |s, m| s + m * m);
    if row_shared {
        let row_stat = crate::matrix::row_means(&stat);
        DenseMatrix::from_fn(stat.nrows(), stat.ncols(), |i, _| {
            (numer / (2.0 * rate + row_stat[i])).clamp(GAMMA_FLOOR, GAMMA_CEILING)
        })
    } else {
        stat.map(|t| (numer / (2.0 * rate + t)).clamp(GAMMA_FLOOR, GAMMA_CEILING))
    }
}

/// Denoises a block under a zero-mean Gaussian prior with shared variance
/// `alpha_prev`, and re-estimates the shared variance from the posterior
/// second moments. Returns `(alpha_new, denoised block)`.
pub fn update_alpha(
    field: &PseudoObservationField,
    alpha_prev: f64,
) -> Result<(f64, DenoisedField), DenoiseError> {
    if field.q.is_empty() {
        return Err(DenoiseError::EmptyBlock);
    }
    if !(alpha_prev > 0.0) {
        return Err(DenoiseError::InvalidHyper(format!(
            "alpha must be positive (got {alpha_prev})"
        )));
    }
    let kind = DenoiserKind::gaussian(0.0, alpha_prev);
    let denoised = kind.denoise(field)?;
    let n = denoised.means.len() as f64;
    let alpha_new = (denoised
        .means
        .iter()
        .zip(denoised.variances.iter())
        .map(|(m, s)| s + m * m)
        .sum::<f64>()
        / n)
        .max(VARIANCE_FLOOR);
    Ok((alpha_new, denoised))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(q: f64, v: f64) -> PseudoObservationField {
        PseudoObservationField::new(
            DenseMatrix::from_element(1, 1, q),
            DenseMatrix::from_element(1, 1, v),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_gamma_zero_precision_is_flat() {
        let kind = DenoiserKind::GaussianGamma {
            shape: 0.0,
            rate: 0.0,
            precision: DenseMatrix::zeros(1, 1),
            row_shared: false,
        };
        let out = kind.denoise(&field(3.0, 2.0)).unwrap();
        assert_eq!(out.means[(0, 0)], 3.0);
        assert_eq!(out.variances[(0, 0)], 2.0);
    }

    #[test]
    fn gaussian_gamma_unit_precision_closed_form() {
        let kind = DenoiserKind::GaussianGamma {
            shape: 0.0,
            rate: 0.0,
            precision: DenseMatrix::from_element(1, 1, 1.0),
            row_shared: false,
        };
        let out = kind.denoise(&field(2.0, 1.0)).unwrap();
        assert!((out.means[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((out.variances[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nonneg_standard_moments() {
        // Posterior of N₊(0,1) under channel (q, v) = (0, 1) is the positive
        // half of N(0, 1/2): mean 1/√π, variance 1/2 − 1/π.
        let kind = DenoiserKind::non_negative_gaussian(0.0, 1.0).unwrap();
        let out = kind.denoise(&field(0.0, 1.0)).unwrap();
        let mean_ref = 0.5641895835477563;
        let var_ref = 0.18169011381620932;
        assert!(out.means[(0, 0)] > 0.0);
        assert!((out.means[(0, 0)] - mean_ref).abs() < 1e-12);
        assert!((out.variances[(0, 0)] - var_ref).abs() < 1e-12);
    }

    #[test]
    fn known_entries_pin_regardless_of_channel() {
        let kind = DenoiserKind::known_entries(
            DenseMatrix::from_element(1, 1, 5.0),
            nalgebra::DMatrix::from_element(1, 1, true),
        )
        .unwrap();
        for (q, v) in [(0.0, 1.0), (100.0, 1e-6), (-3.0, 1e3)] {
            let out = kind.denoise(&field(q, v)).unwrap();
            assert_eq!(out.means[(0, 0)], 5.0);
            assert_eq!(out.variances[(0, 0)], 0.0);
        }
    }

    #[test]
    fn gamma_update_examples() {
        let d = DenoisedField {
            means: DenseMatrix::from_element(1, 1, 1.0),
            variances: DenseMatrix::from_element(1, 1, 1.0),
        };
        let g = update_gamma(&d, 0.0, 0.0, false);
        assert!((g[(0, 0)] - 0.5).abs() < 1e-15);

        let zero = DenoisedField::zeros(1, 1);
        let g = update_gamma(&zero, 0.0, 0.0, false);
        assert_eq!(g[(0, 0)], GAMMA_CEILING); // 1/0 clamps at the ceiling

        let g = update_gamma(&zero, 0.5, 1.0, false);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_update_row_shared_broadcasts() {
        let d = DenoisedField {
            means: DenseMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 0.0]),
            variances: DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
        };
        let g = update_gamma(&d, 0.0, 0.0, true);
        // Row 0 statistic: mean(2, 10) = 6 → γ = 1/6; row 1: mean(2, 2) = 2.
        assert!((g[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g[(0, 0)], g[(0, 1)]);
        assert!((g[(1, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_update_examples() {
        // Flat-prior limit.
        let (_, d) = update_alpha(&field(2.0, 1.0), 1e12).unwrap();
        assert!((d.means[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((d.variances[(0, 0)] - 1.0).abs() < 1e-9);

        // Conjugate Gaussian product at alpha = 1.
        let (alpha, d) = update_alpha(&field(2.0, 1.0), 1.0).unwrap();
        assert!((d.means[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.variances[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((alpha - 1.5).abs() < 1e-15); // Ξ + x̂² = 0.5 + 1

        // Degenerate zero-energy block clamps at the floor.
        let (alpha, _) = update_alpha(&field(0.0, 1e-12), 1e-9).unwrap();
        assert!(alpha >= VARIANCE_FLOOR);
        assert!(alpha < 1e-8);
    }

    #[test]
    fn spike_slab_limits() {
        let f = field(1.0, 1.0);
        let nn = DenoiserKind::non_negative_gaussian(0.0, 1.0)
            .unwrap()
            .denoise(&f)
            .unwrap();
        let all_slab = DenoiserKind::bernoulli_gaussian_nonneg(1.0, 0.0, 1.0)
            .unwrap()
            .denoise(&f)
            .unwrap();
        assert!((all_slab.means[(0, 0)] - nn.means[(0, 0)]).abs() < 1e-12);
        assert!((all_slab.variances[(0, 0)] - nn.variances[(0, 0)]).abs() < 1e-12);

        let all_spike = DenoiserKind::bernoulli_gaussian_nonneg(0.0, 0.0, 1.0)
            .unwrap()
            .denoise(&f)
            .unwrap();
        assert_eq!(all_spike.means[(0, 0)], 0.0);
        assert_eq!(all_spike.variances[(0, 0)], 0.0);
    }

    #[test]
    fn block_composite_matches_manual_concatenation() {
        let q = DenseMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.0, 0.0]);
        let v = DenseMatrix::from_element(3, 2, 0.7);
        let f = PseudoObservationField::new(q, v).unwrap();
        let top = DenoiserKind::gaussian(0.0, 1.0);
        let bottom = DenoiserKind::non_negative_gaussian(0.0, 2.0).unwrap();
        let composite = DenoiserKind::block_composite(vec![
            (BlockRange::Rows(0..1), top.clone()),
            (BlockRange::Rows(1..3), bottom.clone()),
        ])
        .unwrap();
        let whole = composite.denoise(&f).unwrap();
        let top_out = top.denoise(&f.slice(&BlockRange::Rows(0..1))).unwrap();
        let bottom_out = bottom.denoise(&f.slice(&BlockRange::Rows(1..3))).unwrap();
        assert_eq!(whole.means.rows(0, 1), top_out.means.rows(0, 1));
        assert_eq!(whole.means.rows(1, 2), bottom_out.means.rows(0, 2));
        assert_eq!(whole.variances.rows(1, 2), bottom_out.variances.rows(0, 2));
    }

    #[test]
    fn block_composite_rejects_gaps_and_overlaps() {
        let child = || DenoiserKind::gaussian(0.0, 1.0);
        assert!(DenoiserKind::block_composite(vec![
            (BlockRange::Rows(0..1), child()),
            (BlockRange::Rows(2..3), child()),
        ])
        .is_err());
        assert!(DenoiserKind::block_composite(vec![
            (BlockRange::Rows(0..2), child()),
            (BlockRange::Rows(1..3), child()),
        ])
        .is_err());
        assert!(DenoiserKind::block_composite(vec![
            (BlockRange::Rows(0..1), child()),
            (BlockRange::Cols(1..2), child()),
        ])
        .is_err());
    }

    #[test]
    fn field_validation_rejects_bad_inputs() {
        let q = DenseMatrix::zeros(2, 2);
        let bad_v = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(PseudoObservationField::new(q.clone(), bad_v).is_err());
        let mut bad_q = q.clone();
        bad_q[(0, 1)] = f64::NAN;
        assert!(PseudoObservationField::new(bad_q, DenseMatrix::from_element(2, 2, 1.0)).is_err());
        assert!(PseudoObservationField::new(q, DenseMatrix::from_element(2, 3, 1.0)).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let kind = DenoiserKind::gaussian_gamma(0.0, 0.0, 2, 2, false).unwrap();
        let f = field(1.0, 1.0);
        assert!(matches!(
            kind.denoise(&f),
            Err(DenoiseError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn learned_variance_refresh_tracks_second_moment() {
        let mut kind = DenoiserKind::gaussian_learned_variance(1.0);
        let f = field(2.0, 1.0);
        let d = kind.denoise(&f).unwrap();
        kind.refresh(&f, &d);
        match kind {
            DenoiserKind::Gaussian {
                variance: Param::Scalar(v),
                ..
            } => assert!((v - 1.5).abs() < 1e-12),
            _ => unreachable!(),
        }
    }
}
