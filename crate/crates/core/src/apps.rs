//! Problem builders: each application is a choice of priors and block
//! structure over the two factors of `Y = H X + W`.

use thiserror::Error;

use crate::denoise::{BlockRange, DenoiseError, DenoiserKind};
use crate::engine::{FactorizationProblem, SolverOptions};
use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("observation is {got:?} but the application expects ({m}, {l})")]
    ObservationShape { got: (usize, usize), m: usize, l: usize },
    #[error("invalid application parameter: {0}")]
    InvalidParameter(String),
    #[error("inner dimension {0} exceeds the configured budget {1}")]
    SizeBudget(usize, usize),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

/// Largest inner dimension a builder will accept.
pub const INNER_DIM_BUDGET: usize = 4096;

/// Hyper-parameters shared by the sparsity-promoting priors.
#[derive(Debug, Clone, Copy)]
pub struct GammaHyper {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaHyper {
    fn default() -> Self {
        GammaHyper {
            shape: 0.0,
            rate: 0.0,
        }
    }
}

/// One of the factorization applications, with its data-model parameters.
#[derive(Debug, Clone)]
pub enum ApplicationSpec {
    /// Low-rank plus sparse decomposition: `Y = A B + E + W` rewritten as a
    /// factorization with `H = [A, I]` and `X = [B; E]`.
    Rpca {
        m: usize,
        l: usize,
        rank: usize,
        outlier_rate: f64,
    },
    /// Dictionary learning: Gaussian dictionary, sparse codes.
    Dl {
        m: usize,
        n: usize,
        l: usize,
        per_column_sparsity: usize,
    },
    /// Compressive sensing with matrix uncertainty: known mean `H̄` plus an
    /// i.i.d. Gaussian disturbance of variance `perturb_var`.
    Csmu {
        h_bar: DenseMatrix,
        l: usize,
        perturb_var: f64,
        common_support: bool,
    },
    /// Non-negative factorization of a non-negative matrix.
    Nmf {
        m: usize,
        n: usize,
        l: usize,
        location: f64,
        scale: f64,
    },
    /// Both factors sparse, signed entries.
    SparseMf {
        m: usize,
        n: usize,
        l: usize,
        sparsity: f64,
    },
    /// Both factors sparse and non-negative.
    SparseNmf {
        m: usize,
        n: usize,
        l: usize,
        sparsity: f64,
        location: f64,
        scale: f64,
    },
}

impl ApplicationSpec {
    /// Observation shape the spec expects.
    pub fn observation_shape(&self) -> (usize, usize) {
        match self {
            ApplicationSpec::Rpca { m, l, .. } => (*m, *l),
            ApplicationSpec::Dl { m, l, .. } => (*m, *l),
            ApplicationSpec::Csmu { h_bar, l, .. } => (h_bar.nrows(), *l),
            ApplicationSpec::Nmf { m, l, .. } => (*m, *l),
            ApplicationSpec::SparseMf { m, l, .. } => (*m, *l),
            ApplicationSpec::SparseNmf { m, l, .. } => (*m, *l),
        }
    }

    /// Builds the factorization problem encoding this application.
    pub fn build(
        &self,
        y: DenseMatrix,
        gamma: GammaHyper,
        options: SolverOptions,
    ) -> Result<FactorizationProblem, AppError> {
        let expected = self.observation_shape();
        if y.shape() != expected {
            return Err(AppError::ObservationShape {
                got: y.shape(),
                m: expected.0,
                l: expected.1,
            });
        }
        match self {
            ApplicationSpec::Rpca { m, l, rank, .. } => build_rpca(y, *m, *l, *rank, gamma, options),
            ApplicationSpec::Dl { m, n, l, .. } => build_dl(y, *m, *n, *l, gamma, options),
            ApplicationSpec::Csmu {
                h_bar,
                l,
                perturb_var,
                common_support,
            } => build_csmu(y, h_bar, *l, *perturb_var, *common_support, gamma, options),
            ApplicationSpec::Nmf {
                m,
                n,
                l,
                location,
                scale,
            } => build_nmf(y, *m, *n, *l, *location, *scale, options),
            ApplicationSpec::SparseMf { m, n, l, .. } => {
                build_sparse_mf(y, *m, *n, *l, gamma, options)
            }
            ApplicationSpec::SparseNmf {
                m,
                n,
                l,
                sparsity,
                location,
                scale,
            } => build_sparse_nmf(y, *m, *n, *l, *sparsity, *location, *scale, options),
        }
    }
}

/// RPCA as a factorization: `H = [A, I_M]` with the right block pinned, and
/// `X = [B; E]` with a shared learned variance on the low-rank block and
/// Gaussian-Gamma sparsity on the outlier block.
pub fn build_rpca(
    y: DenseMatrix,
    m: usize,
    l: usize,
    rank: usize,
    gamma: GammaHyper,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    if rank == 0 {
        return Err(AppError::InvalidParameter("rank must be at least 1".into()));
    }
    let inner = rank + m;
    if inner > INNER_DIM_BUDGET {
        return Err(AppError::SizeBudget(inner, INNER_DIM_BUDGET));
    }
    let h_prior = DenoiserKind::block_composite(vec![
        (BlockRange::Cols(0..rank), DenoiserKind::gaussian(0.0, 1.0)),
        (
            BlockRange::Cols(rank..inner),
            DenoiserKind::known_entries(
                DenseMatrix::identity(m, m),
                nalgebra::DMatrix::from_element(m, m, true),
            )?,
        ),
    ])?;
    let x_prior = DenoiserKind::block_composite(vec![
        (
            BlockRange::Rows(0..rank),
            DenoiserKind::gaussian_learned_variance(1.0),
        ),
        (
            BlockRange::Rows(rank..inner),
            DenoiserKind::gaussian_gamma(gamma.shape, gamma.rate, m, l, false)?,
        ),
    ])?;
    Ok(FactorizationProblem {
        y,
        inner_dim: inner,
        h_prior,
        x_prior,
        options,
    })
}

/// Dictionary learning: unit Gaussian dictionary entries, Gaussian-Gamma
/// sparse codes.
pub fn build_dl(
    y: DenseMatrix,
    _m: usize,
    n: usize,
    l: usize,
    gamma: GammaHyper,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    Ok(FactorizationProblem {
        y,
        inner_dim: n,
        h_prior: DenoiserKind::gaussian(0.0, 1.0),
        x_prior: DenoiserKind::gaussian_gamma(gamma.shape, gamma.rate, n, l, false)?,
        options,
    })
}

/// CSMU: the operator prior is `N(h̄, ν)` around the known matrix; the signal
/// keeps the Gaussian-Gamma prior, optionally with row-shared precisions when
/// the columns share a support.
pub fn build_csmu(
    y: DenseMatrix,
    h_bar: &DenseMatrix,
    l: usize,
    perturb_var: f64,
    common_support: bool,
    gamma: GammaHyper,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    if !(perturb_var >= 0.0 && perturb_var.is_finite()) {
        return Err(AppError::InvalidParameter(format!(
            "perturbation variance must be non-negative (got {perturb_var})"
        )));
    }
    let n = h_bar.ncols();
    Ok(FactorizationProblem {
        y,
        inner_dim: n,
        h_prior: DenoiserKind::Gaussian {
            mean: crate::denoise::Param::PerEntry(h_bar.clone()),
            variance: crate::denoise::Param::Scalar(perturb_var),
            learn_variance: false,
        },
        x_prior: DenoiserKind::gaussian_gamma(gamma.shape, gamma.rate, n, l, common_support)?,
        options,
    })
}

/// NMF: truncated-Gaussian priors on both factors.
pub fn build_nmf(
    y: DenseMatrix,
    _m: usize,
    n: usize,
    _l: usize,
    location: f64,
    scale: f64,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    Ok(FactorizationProblem {
        y,
        inner_dim: n,
        h_prior: DenoiserKind::non_negative_gaussian(location, scale)?,
        x_prior: DenoiserKind::non_negative_gaussian(location, scale)?,
        options,
    })
}

/// Sparse MF: Gaussian-Gamma priors on both factors.
pub fn build_sparse_mf(
    y: DenseMatrix,
    m: usize,
    n: usize,
    l: usize,
    gamma: GammaHyper,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    Ok(FactorizationProblem {
        y,
        inner_dim: n,
        h_prior: DenoiserKind::gaussian_gamma(gamma.shape, gamma.rate, m, n, false)?,
        x_prior: DenoiserKind::gaussian_gamma(gamma.shape, gamma.rate, n, l, false)?,
        options,
    })
}

/// Sparse NMF: non-negative Bernoulli-Gaussian priors on both factors.
#[allow(clippy::too_many_arguments)]
pub fn build_sparse_nmf(
    y: DenseMatrix,
    _m: usize,
    n: usize,
    _l: usize,
    sparsity: f64,
    location: f64,
    scale: f64,
    options: SolverOptions,
) -> Result<FactorizationProblem, AppError> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(AppError::InvalidParameter(format!(
            "sparsity rate must lie in (0, 1) (got {sparsity})"
        )));
    }
    Ok(FactorizationProblem {
        y,
        inner_dim: n,
        h_prior: DenoiserKind::bernoulli_gaussian_nonneg(sparsity, location, scale)?,
        x_prior: DenoiserKind::bernoulli_gaussian_nonneg(sparsity, location, scale)?,
        options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::Param;

    #[test]
    fn rpca_block_structure() {
        let spec = ApplicationSpec::Rpca {
            m: 4,
            l: 4,
            rank: 2,
            outlier_rate: 0.1,
        };
        let y = DenseMatrix::zeros(4, 4);
        let p = spec
            .build(y, GammaHyper::default(), SolverOptions::default())
            .unwrap();
        assert_eq!(p.inner_dim, 6);
        match &p.h_prior {
            DenoiserKind::BlockComposite(blocks) => {
                assert_eq!(blocks.len(), 2);
                assert_eq!(blocks[0].0, BlockRange::Cols(0..2));
                match &blocks[1].1 {
                    DenoiserKind::KnownEntries { values, mask } => {
                        assert_eq!(values, &DenseMatrix::identity(4, 4));
                        assert!(mask.iter().all(|&b| b));
                    }
                    other => panic!("expected pinned identity block, got {other:?}"),
                }
            }
            other => panic!("expected composite H prior, got {other:?}"),
        }
        match &p.x_prior {
            DenoiserKind::BlockComposite(blocks) => {
                assert!(matches!(
                    blocks[0].1,
                    DenoiserKind::Gaussian {
                        learn_variance: true,
                        ..
                    }
                ));
                assert!(matches!(blocks[1].1, DenoiserKind::GaussianGamma { .. }));
            }
            other => panic!("expected composite X prior, got {other:?}"),
        }
    }

    #[test]
    fn nmf_assigns_truncated_gaussian_to_both_factors() {
        let spec = ApplicationSpec::Nmf {
            m: 3,
            n: 2,
            l: 5,
            location: 0.0,
            scale: 1.0,
        };
        let p = spec
            .build(
                DenseMatrix::zeros(3, 5),
                GammaHyper::default(),
                SolverOptions::default(),
            )
            .unwrap();
        assert!(matches!(
            p.h_prior,
            DenoiserKind::NonNegativeGaussian { .. }
        ));
        assert!(matches!(
            p.x_prior,
            DenoiserKind::NonNegativeGaussian { .. }
        ));
    }

    #[test]
    fn sparse_mf_assigns_gamma_priors_to_both_factors() {
        let spec = ApplicationSpec::SparseMf {
            m: 3,
            n: 2,
            l: 5,
            sparsity: 0.2,
        };
        let p = spec
            .build(
                DenseMatrix::zeros(3, 5),
                GammaHyper::default(),
                SolverOptions::default(),
            )
            .unwrap();
        assert!(matches!(p.h_prior, DenoiserKind::GaussianGamma { .. }));
        assert!(matches!(p.x_prior, DenoiserKind::GaussianGamma { .. }));
    }

    #[test]
    fn csmu_prior_centers_on_the_known_matrix() {
        let h_bar = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let spec = ApplicationSpec::Csmu {
            h_bar: h_bar.clone(),
            l: 3,
            perturb_var: 0.01,
            common_support: false,
        };
        let p = spec
            .build(
                DenseMatrix::zeros(2, 3),
                GammaHyper::default(),
                SolverOptions::default(),
            )
            .unwrap();
        match &p.h_prior {
            DenoiserKind::Gaussian {
                mean: Param::PerEntry(m),
                variance: Param::Scalar(v),
                ..
            } => {
                assert_eq!(m, &h_bar);
                assert_eq!(*v, 0.01);
            }
            other => panic!("expected per-entry Gaussian prior, got {other:?}"),
        }
    }

    #[test]
    fn builders_reject_mismatched_observations() {
        let spec = ApplicationSpec::Dl {
            m: 4,
            n: 2,
            l: 5,
            per_column_sparsity: 1,
        };
        let err = spec
            .build(
                DenseMatrix::zeros(3, 5),
                GammaHyper::default(),
                SolverOptions::default(),
            )
            .unwrap_err();
        assert!(matches!(err, AppError::ObservationShape { .. }));
    }

    #[test]
    fn identical_inputs_build_identical_problems() {
        let spec = ApplicationSpec::SparseNmf {
            m: 3,
            n: 2,
            l: 4,
            sparsity: 0.3,
            location: 0.0,
            scale: 1.0,
        };
        let build = || {
            spec.build(
                DenseMatrix::from_element(3, 4, 0.5),
                GammaHyper::default(),
                SolverOptions::default(),
            )
            .unwrap()
        };
        let a = build();
        let b = build();
        assert_eq!(a.inner_dim, b.inner_dim);
        assert_eq!(format!("{:?}", a.h_prior), format!("{:?}", b.h_prior));
        assert_eq!(format!("{:?}", a.x_prior), format!("{:?}", b.x_prior));
    }
}
