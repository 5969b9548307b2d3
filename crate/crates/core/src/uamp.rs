//! Standalone UAMP solver for the linear model `y = A x + w`.
//!
//! The measurement model is first rotated by the left singular basis of `A`,
//! after which the plain AMP recursion runs on `r = Φ x + ω` with `Φ = Λ Vᵀ`.
//! Two variants are provided: v1 carries a per-entry variance vector, v2 the
//! averaged scalar variance (saving two matrix-vector products per
//! iteration). The matrix-factorization engine embeds the same recursion in
//! matrix form; this solver is the directly-testable reference for it.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::denoise::{DenoiseError, DenoiserKind, PseudoObservationField};
use crate::matrix::{DenseMatrix, DenseVector};

#[derive(Debug, Error)]
pub enum UampError {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("divergence at iteration {0}: non-positive pseudo-observation variance")]
    Divergence(usize),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

/// Which lines of the recursion use vector or averaged variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UampVariant {
    V1,
    V2,
}

/// Result of the unitary transformation of `y = A x + w`.
#[derive(Debug, Clone)]
pub struct UnitaryModel {
    /// Rotated observation `Uᵀ y`.
    pub r: DenseVector,
    /// Rotated operator `Uᵀ A = Λ Vᵀ`.
    pub phi: DenseMatrix,
    /// `Λ Λᵀ 1`, the squared singular values (zero-padded).
    pub lambda_vec: DenseVector,
}

/// Rotates the model by the left singular basis of `A`.
///
/// The basis is obtained from the eigendecomposition of `A Aᵀ` (full, so rank
/// deficiency just produces zero rows in `Φ`), with eigenvalues sorted
/// ascending for determinism.
pub fn unitary_transform(y: &DenseVector, a: &DenseMatrix) -> Result<UnitaryModel, UampError> {
    if a.iter().any(|x| !x.is_finite()) || y.iter().any(|x| !x.is_finite()) {
        return Err(UampError::NonFiniteInput);
    }
    if y.len() != a.nrows() {
        return Err(UampError::DimensionMismatch(format!(
            "y has length {}, A has {} rows",
            y.len(),
            a.nrows()
        )));
    }
    let gram = a * a.transpose();
    let eig = SymmetricEigen::new(gram);
    let m = a.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut u = DenseMatrix::zeros(m, m);
    let mut lambda_vec = DenseVector::zeros(m);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
        lambda_vec[dst] = eig.eigenvalues[src].max(0.0);
    }
    Ok(UnitaryModel {
        r: u.transpose() * y,
        phi: u.transpose() * a,
        lambda_vec,
    })
}

/// Per-entry (v1) or averaged scalar (v2) signal variance.
#[derive(Debug, Clone)]
pub enum TauX {
    Vector(DenseVector),
    Scalar(f64),
}

/// Solver state after `iteration` completed passes.
#[derive(Debug, Clone)]
pub struct UampState {
    pub x: DenseVector,
    pub tau_x: TauX,
    pub s: DenseVector,
    pub iteration: usize,
}

impl UampState {
    pub fn init(n: usize, m: usize, variant: UampVariant) -> Self {
        UampState {
            x: DenseVector::zeros(n),
            tau_x: match variant {
                UampVariant::V1 => TauX::Vector(DenseVector::from_element(n, 1.0)),
                UampVariant::V2 => TauX::Scalar(1.0),
            },
            s: DenseVector::zeros(m),
            iteration: 0,
        }
    }
}

/// One full pass of the recursion. `beta` is the (known) noise precision;
/// `f64::INFINITY` models the noiseless channel.
pub fn uamp_iterate(
    state: &UampState,
    model: &UnitaryModel,
    beta: f64,
    denoiser: &mut DenoiserKind,
) -> Result<UampState, UampError> {
    let n = model.phi.ncols();
    let phi_sq = model.phi.map(|x| x * x);

    let tau_p: DenseVector = match &state.tau_x {
        TauX::Vector(t) => &phi_sq * t,
        TauX::Scalar(t) => &model.lambda_vec * *t,
    };
    let p = &model.phi * &state.x - tau_p.component_mul(&state.s);
    let inv_beta = if beta.is_infinite() { 0.0 } else { 1.0 / beta };
    let tau_s = tau_p.map(|t| 1.0 / (t + inv_beta));
    let s = tau_s.component_mul(&(&model.r - p));

    let (q, tau_q_field): (DenseVector, DenseVector) = match &state.tau_x {
        TauX::Vector(_) => {
            let inv_tau_q = phi_sq.transpose() * &tau_s;
            let tau_q = inv_tau_q.map(|x| 1.0 / x);
            if tau_q.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(UampError::Divergence(state.iteration));
            }
            let q = &state.x + tau_q.component_mul(&(model.phi.transpose() * &s));
            (q, tau_q)
        }
        TauX::Scalar(_) => {
            let tau_q = n as f64 / model.lambda_vec.dot(&tau_s);
            if !(tau_q > 0.0 && tau_q.is_finite()) {
                return Err(UampError::Divergence(state.iteration));
            }
            let q = &state.x + (model.phi.transpose() * &s) * tau_q;
            (q, DenseVector::from_element(n, tau_q))
        }
    };

    let field = PseudoObservationField::new(
        DenseMatrix::from_column_slice(n, 1, q.as_slice()),
        DenseMatrix::from_column_slice(n, 1, tau_q_field.as_slice()),
    )?;
    let denoised = denoiser.denoise(&field)?;
    denoiser.refresh(&field, &denoised);

    let x = DenseVector::from_column_slice(denoised.means.as_slice());
    let tau_x = match state.tau_x {
        TauX::Vector(_) => TauX::Vector(DenseVector::from_column_slice(
            denoised.variances.as_slice(),
        )),
        TauX::Scalar(_) => TauX::Scalar(denoised.variances.iter().sum::<f64>() / n as f64),
    };
    Ok(UampState {
        x,
        tau_x,
        s,
        iteration: state.iteration + 1,
    })
}

#[derive(Debug, Clone)]
pub struct UampOptions {
    pub variant: UampVariant,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for UampOptions {
    fn default() -> Self {
        UampOptions {
            variant: UampVariant::V2,
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UampResult {
    pub x_hat: DenseVector,
    pub posterior_var: DenseVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the solver to convergence (relative estimate change below `tol`) or
/// the iteration cap. Divergence is reported, not patched.
pub fn uamp_solve(
    y: &DenseVector,
    a: &DenseMatrix,
    beta: f64,
    denoiser: &mut DenoiserKind,
    options: &UampOptions,
) -> Result<UampResult, UampError> {
    let model = unitary_transform(y, a)?;
    let mut state = UampState::init(a.ncols(), a.nrows(), options.variant);
    let mut converged = false;
    for _ in 0..options.max_iters {
        let next = uamp_iterate(&state, &model, beta, denoiser)?;
        let prev_norm = state.x.norm();
        let change = (&next.x - &state.x).norm();
        state = next;
        if prev_norm > 0.0 && change / prev_norm < options.tol {
            converged = true;
            break;
        }
    }
    let posterior_var = match &state.tau_x {
        TauX::Vector(t) => t.clone(),
        TauX::Scalar(t) => DenseVector::from_element(state.x.len(), *t),
    };
    Ok(UampResult {
        iterations: state.iteration,
        x_hat: state.x,
        posterior_var,
        converged,
    })
}
