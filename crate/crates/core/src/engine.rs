//! The alternating matrix-factorization iteration for `Y = H X + W`.
//!
//! Each sweep rebuilds a whitened pseudo-observation model for one factor
//! from the current belief about the other (an eigendecomposition of an
//! `N×N` Gram matrix — no explicit inverse or matrix square root is ever
//! formed), runs one matrix-form AMP pass against that model, projects the
//! per-entry posterior variances back onto a matrix-normal belief, and
//! finally refreshes the noise precision estimate.
//!
//! The factor beliefs are matrix normal with diagonal covariance factors:
//! `q(X)` has per-row variances and identity column covariance, `q(H)` the
//! mirror image. The H update is the X update applied to the transposed
//! problem, and is implemented that way.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::denoise::{DenoiseError, DenoiserKind, PseudoObservationField};
use crate::matrix::{all_finite, frob_sq, row_means, DenseMatrix, DenseVector};

/// Eigenvalues below `max(eig) · EIG_FLOOR_REL` are clamped up to it before
/// the whitening scalings are formed. Rank-deficient factor estimates make
/// this mandatory, not optional.
pub const EIG_FLOOR_REL: f64 = 1e-12;
/// Relative floor on the expected-residual term of the noise update.
pub const NOISE_C_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("observation contains non-finite entries")]
    NonFiniteObservation,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate factor estimate: every eigenvalue of the Gram matrix vanished")]
    DegenerateFactor,
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("solver state became non-finite (divergence)")]
    Diverged,
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

/// Matrix-normal belief with diagonal row and column covariance factors.
#[derive(Debug, Clone)]
pub struct MatrixNormalBelief {
    pub mean: DenseMatrix,
    /// Diagonal of the row covariance.
    pub row_cov: DenseVector,
    /// Diagonal of the column covariance.
    pub col_cov: DenseVector,
}

impl MatrixNormalBelief {
    pub fn new(mean: DenseMatrix, row_cov: DenseVector, col_cov: DenseVector) -> Self {
        debug_assert_eq!(mean.nrows(), row_cov.len());
        debug_assert_eq!(mean.ncols(), col_cov.len());
        Self {
            mean,
            row_cov,
            col_cov,
        }
    }

    /// The belief of the transposed variable.
    pub fn transposed(&self) -> Self {
        Self {
            mean: self.mean.transpose(),
            row_cov: self.col_cov.clone(),
            col_cov: self.row_cov.clone(),
        }
    }
}

/// Whitened pseudo-observation model `R = Φ F + Ω`, stored through the
/// eigendecomposition `W̄ = C diag(d) Cᵀ` of the Gram matrix it came from.
#[derive(Debug, Clone)]
pub struct WhitenedModel {
    /// Orthonormal eigenbasis `C`.
    pub basis: DenseMatrix,
    /// Eigenvalues `d`, ascending, clamped at the relative floor.
    pub eigenvalues: DenseVector,
    /// Transformed pseudo-observation matrix `R`.
    pub pseudo_obs: DenseMatrix,
}

impl WhitenedModel {
    /// The whitening transform `diag(d)^{-1/2} Cᵀ`; satisfies
    /// `TᵀT = W̄⁻¹` (up to eigenvalue clamping).
    pub fn whitening_transform(&self) -> DenseMatrix {
        self.scaled_basis_t(-0.5)
    }

    /// The measurement operator `Φ = diag(d)^{1/2} Cᵀ` of the transformed
    /// model; satisfies `ΦᵀR = GᵀY` where `G` is the conditioning factor.
    pub fn measurement_operator(&self) -> DenseMatrix {
        self.scaled_basis_t(0.5)
    }

    fn scaled_basis_t(&self, power: f64) -> DenseMatrix {
        let mut out = self.basis.transpose();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.eigenvalues[i].powf(power);
        }
        out
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues and the relative
/// floor applied.
fn clamped_eig(w: DenseMatrix) -> Result<(DenseMatrix, DenseVector), EngineError> {
    if !all_finite(&w) {
        return Err(EngineError::Diverged);
    }
    let n = w.nrows();
    let eig = SymmetricEigen::new(w);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let max = eig.eigenvalues[order[n - 1]];
    if !(max > 0.0) {
        return Err(EngineError::DegenerateFactor);
    }
    let floor = max * EIG_FLOOR_REL;
    let mut basis = DenseMatrix::zeros(n, n);
    let mut vals = DenseVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
        vals[dst] = eig.eigenvalues[src].max(floor);
    }
    Ok((basis, vals))
}

/// Whitened model for the right factor `X` given the belief about `H`:
/// `W̄ = ĤᵀĤ + Tr(U_H)·V_H`, `R = diag(d)^{-1/2} Cᵀ Ĥᵀ Y`.
pub fn build_whitened_x_model(
    q_h: &MatrixNormalBelief,
    y: &DenseMatrix,
) -> Result<WhitenedModel, EngineError> {
    if q_h.mean.nrows() != y.nrows() {
        return Err(EngineError::DimensionMismatch(format!(
            "conditioning factor has {} rows, observation has {}",
            q_h.mean.nrows(),
            y.nrows()
        )));
    }
    let g = &q_h.mean;
    let trace_row = q_h.row_cov.sum();
    let mut w = g.transpose() * g;
    for i in 0..w.nrows() {
        w[(i, i)] += trace_row * q_h.col_cov[i];
    }
    let (basis, eigenvalues) = clamped_eig(w)?;
    let mut pseudo_obs = basis.transpose() * (g.transpose() * y);
    for (i, mut row) in pseudo_obs.row_iter_mut().enumerate() {
        row /= eigenvalues[i].sqrt();
    }
    Ok(WhitenedModel {
        basis,
        eigenvalues,
        pseudo_obs,
    })
}

/// Whitened model for the left factor `H` given the belief about `X`. This is
/// exactly the X-side construction on the transposed problem:
/// `W̄ = X̂X̂ᵀ + Tr(V_X)·U_X`, `R = diag(d)^{-1/2} Cᵀ X̂ Yᵀ`, addressing `Hᵀ`.
pub fn build_whitened_h_model(
    q_x: &MatrixNormalBelief,
    y: &DenseMatrix,
) -> Result<WhitenedModel, EngineError> {
    build_whitened_x_model(&q_x.transposed(), &y.transpose())
}

/// AMP-side state of one factor, in the orientation of its whitened model
/// (`N×L` for `X`, `N×M` for `Hᵀ`).
#[derive(Debug, Clone)]
pub struct FactorState {
    /// Posterior mean estimate.
    pub est: DenseMatrix,
    /// Per-entry posterior variances.
    pub xi: DenseMatrix,
    /// Residual dual matrix `S`.
    pub s: DenseMatrix,
}

impl FactorState {
    pub fn init(rows: usize, cols: usize) -> Self {
        FactorState {
            est: DenseMatrix::zeros(rows, cols),
            xi: DenseMatrix::from_element(rows, cols, 1.0),
            s: DenseMatrix::zeros(rows, cols),
        }
    }

    fn init_with_mean(est: DenseMatrix) -> Self {
        let (r, c) = est.shape();
        FactorState {
            est,
            xi: DenseMatrix::from_element(r, c, 1.0),
            s: DenseMatrix::zeros(r, c),
        }
    }
}

/// Whether the denoiser's prior is laid out in the state's orientation or in
/// its transpose (the H prior addresses `H`, while the engine carries `Hᵀ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiseOrientation {
    Natural,
    Transposed,
}

/// One matrix-form AMP pass against a whitened model: variance propagation,
/// Onsager-corrected residual, pseudo-observations, then the entry-wise
/// denoiser and its hyper-parameter refresh.
pub fn update_factor(
    model: &WhitenedModel,
    state: &FactorState,
    lambda_hat: f64,
    denoiser: &mut DenoiserKind,
    orientation: DenoiseOrientation,
) -> Result<FactorState, EngineError> {
    let phi = model.measurement_operator();
    let phi_sq = phi.map(|x| x * x);
    let inv_lambda = if lambda_hat.is_infinite() {
        0.0
    } else {
        1.0 / lambda_hat
    };

    let v_p = &phi_sq * &state.xi;
    let p = &phi * &state.est - v_p.component_mul(&state.s);
    let v_s = v_p.map(|x| 1.0 / (x + inv_lambda));
    let s_new = v_s.component_mul(&(&model.pseudo_obs - p));
    let v_q = (phi_sq.transpose() * &v_s).map(|x| 1.0 / x);
    let q = &state.est + v_q.component_mul(&(phi.transpose() * &s_new));

    if !all_finite(&q) || v_q.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(EngineError::Diverged);
    }

    let field = match orientation {
        DenoiseOrientation::Natural => PseudoObservationField::new(q, v_q)?,
        DenoiseOrientation::Transposed => {
            PseudoObservationField::new(q.transpose(), v_q.transpose())?
        }
    };
    let denoised = denoiser.denoise(&field)?;
    denoiser.refresh(&field, &denoised);

    let (est, xi) = match orientation {
        DenoiseOrientation::Natural => (denoised.means, denoised.variances),
        DenoiseOrientation::Transposed => {
            (denoised.means.transpose(), denoised.variances.transpose())
        }
    };
    Ok(FactorState { est, xi, s: s_new })
}

/// Expected-residual normalizer of the noise-precision update:
/// `C = ‖Y − ĤX̂‖²_F + M·Tr(X̂X̂ᵀ V_H) + L·Tr(U_X ĤᵀĤ) + M·L·Tr(U_X V_H)`.
pub fn expected_residual(
    y: &DenseMatrix,
    h_hat: &DenseMatrix,
    x_hat: &DenseMatrix,
    u_x: &DenseVector,
    v_h: &DenseVector,
) -> f64 {
    let m = y.nrows() as f64;
    let l = y.ncols() as f64;
    let fit = frob_sq(&(y - h_hat * x_hat));
    let x_rows: f64 = (0..x_hat.nrows())
        .map(|n| v_h[n] * x_hat.row(n).iter().map(|x| x * x).sum::<f64>())
        .sum();
    let h_cols: f64 = (0..h_hat.ncols())
        .map(|n| u_x[n] * h_hat.column(n).iter().map(|x| x * x).sum::<f64>())
        .sum();
    let cross: f64 = u_x.iter().zip(v_h.iter()).map(|(a, b)| a * b).sum();
    fit + m * x_rows + l * h_cols + m * l * cross
}

/// Refreshed noise precision `λ̂ = ML / C`, with `C` floored at
/// `NOISE_C_FLOOR_REL · ‖Y‖²_F` to keep a degenerate perfect fit finite.
pub fn update_lambda(
    y: &DenseMatrix,
    h_hat: &DenseMatrix,
    x_hat: &DenseMatrix,
    u_x: &DenseVector,
    v_h: &DenseVector,
) -> f64 {
    let c = expected_residual(y, h_hat, x_hat, u_x, v_h);
    let floor = (NOISE_C_FLOOR_REL * frob_sq(y)).max(f64::MIN_POSITIVE);
    (y.nrows() * y.ncols()) as f64 / c.max(floor)
}

/// How the noise precision is handled during the solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePrecision {
    /// Re-estimated every iteration from the expected residual.
    Learned,
    /// Held fixed at the given precision.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence threshold on the normalized change of both factors.
    pub tol: f64,
    pub max_iters: usize,
    /// Additional attempts from perturbed initializations.
    pub restarts: usize,
    /// Relative residual under which a converged attempt is accepted without
    /// spending the remaining restart budget.
    pub restart_stop_residual: f64,
    pub lambda_init: f64,
    pub noise: NoisePrecision,
    /// Seed for the restart perturbations.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iters: 500,
            restarts: 3,
            restart_stop_residual: 1e-4,
            lambda_init: 1.0,
            noise: NoisePrecision::Learned,
            seed: 0,
        }
    }
}

/// A factorization task: observation, inner dimension, the two entry-wise
/// priors, and solver options (including the noise-precision handling).
#[derive(Debug, Clone)]
pub struct FactorizationProblem {
    pub y: DenseMatrix,
    pub inner_dim: usize,
    pub h_prior: DenoiserKind,
    pub x_prior: DenoiserKind,
    pub options: SolverOptions,
}

/// Per-iteration diagnostics recorded in the solve trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub lambda_hat: f64,
    /// `‖Y − ĤX̂‖²_F / ‖Y‖²_F`.
    pub rel_residual: f64,
    /// Normalized change of the factor estimates.
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub h_hat: DenseMatrix,
    pub x_hat: DenseMatrix,
    pub xi_h: DenseMatrix,
    pub xi_x: DenseMatrix,
    /// Diagonal of the row covariance of `q(X)` (row means of `xi_x`).
    pub u_x: DenseVector,
    /// Diagonal of the column covariance of `q(H)` (column means of `xi_h`).
    pub v_h: DenseVector,
    pub lambda_hat: f64,
    pub trace: Vec<IterationStats>,
    pub iterations: usize,
    pub converged: bool,
    /// Attempts actually run (1 = no restart used).
    pub attempts: usize,
    /// Final `‖Y − ĤX̂‖²_F`.
    pub residual: f64,
    pub rel_residual: f64,
}

fn rel_change(new: &DenseMatrix, old: &DenseMatrix) -> f64 {
    let denom = frob_sq(old).sqrt();
    let num = frob_sq(&(new - old)).sqrt();
    if denom > 0.0 {
        num / denom
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

struct Attempt {
    result: SolveResult,
}

fn run_attempt(problem: &FactorizationProblem, attempt: usize) -> Result<Attempt, EngineError> {
    let y = &problem.y;
    let (m, l) = y.shape();
    let n = problem.inner_dim;
    let opts = &problem.options;
    let y_norm_sq = frob_sq(y);

    let h_init = if attempt == 0 {
        DenseMatrix::from_element(m, n, 1.0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(
            opts.seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        DenseMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    };

    let mut x_prior = problem.x_prior.clone();
    let mut h_prior = problem.h_prior.clone();
    let mut x_state = FactorState::init(n, l);
    // The H side runs on the transposed problem, so its state holds Hᵀ.
    let mut h_state = FactorState::init_with_mean(h_init.transpose());
    let mut v_h = DenseVector::from_element(n, 1.0);
    let mut u_x = DenseVector::from_element(n, 1.0);
    let mut lambda_hat = match opts.noise {
        NoisePrecision::Learned => opts.lambda_init,
        NoisePrecision::Fixed(beta) => beta,
    };

    let mut trace: Vec<IterationStats> = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let row_ones = DenseVector::from_element(m, 1.0);
    let col_ones = DenseVector::from_element(l, 1.0);

    for _ in 0..opts.max_iters {
        let prev_x = x_state.est.clone();
        let prev_h = h_state.est.clone();

        let step = (|| -> Result<(FactorState, FactorState, DenseVector, DenseVector), EngineError> {
            let q_h = MatrixNormalBelief::new(
                h_state.est.transpose(),
                row_ones.clone(),
                v_h.clone(),
            );
            let x_model = build_whitened_x_model(&q_h, y)?;
            let new_x = update_factor(
                &x_model,
                &x_state,
                lambda_hat,
                &mut x_prior,
                DenoiseOrientation::Natural,
            )?;
            let new_u_x = row_means(&new_x.xi);

            let q_x = MatrixNormalBelief::new(new_x.est.clone(), new_u_x.clone(), col_ones.clone());
            let h_model = build_whitened_h_model(&q_x, y)?;
            let new_h = update_factor(
                &h_model,
                &h_state,
                lambda_hat,
                &mut h_prior,
                DenoiseOrientation::Transposed,
            )?;
            let new_v_h = row_means(&new_h.xi);
            Ok((new_x, new_h, new_u_x, new_v_h))
        })();

        match step {
            Ok((new_x, new_h, new_u_x, new_v_h)) => {
                x_state = new_x;
                h_state = new_h;
                u_x = new_u_x;
                v_h = new_v_h;
            }
            Err(EngineError::Diverged) | Err(EngineError::DegenerateFactor) => {
                // State still holds the last completed iteration; report it.
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }

        let h_hat = h_state.est.transpose();
        if let NoisePrecision::Learned = opts.noise {
            lambda_hat = update_lambda(y, &h_hat, &x_state.est, &u_x, &v_h);
        }

        let residual = frob_sq(&(y - &h_hat * &x_state.est));
        let rel_residual = if y_norm_sq > 0.0 {
            residual / y_norm_sq
        } else {
            residual
        };
        let delta = rel_change(&x_state.est, &prev_x).max(rel_change(&h_state.est, &prev_h));
        trace.push(IterationStats {
            lambda_hat,
            rel_residual,
            delta,
        });
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let h_hat = h_state.est.transpose();
    let residual = frob_sq(&(y - &h_hat * &x_state.est));
    let rel_residual = if y_norm_sq > 0.0 {
        residual / y_norm_sq
    } else {
        residual
    };
    Ok(Attempt {
        result: SolveResult {
            h_hat,
            x_hat: x_state.est,
            xi_h: h_state.xi.transpose(),
            xi_x: x_state.xi,
            u_x,
            v_h,
            lambda_hat,
            iterations: trace.len(),
            trace,
            converged: converged && !diverged,
            attempts: attempt + 1,
            residual,
            rel_residual,
        },
    })
}

/// Runs the full factorization with up to `restarts` perturbed re-runs,
/// returning the attempt with the smallest final residual. Divergence inside
/// an attempt consumes restart budget instead of failing the solve.
pub fn solve(problem: &FactorizationProblem) -> Result<SolveResult, EngineError> {
    let y = &problem.y;
    if !all_finite(y) {
        return Err(EngineError::NonFiniteObservation);
    }
    let (m, l) = y.shape();
    let n = problem.inner_dim;
    problem.h_prior.check_dims(m, n)?;
    problem.x_prior.check_dims(n, l)?;
    if let NoisePrecision::Fixed(beta) = problem.options.noise {
        if !(beta > 0.0) {
            return Err(EngineError::InvalidOptions(format!(
                "fixed noise precision must be positive (got {beta})"
            )));
        }
    }

    let max_attempts = problem.options.restarts + 1;
    let mut best: Option<SolveResult> = None;
    let mut attempts_run = 0;
    for attempt in 0..max_attempts {
        let candidate = run_attempt(problem, attempt)?.result;
        attempts_run = attempt + 1;
        let accept_now = candidate.converged
            && candidate.rel_residual <= problem.options.restart_stop_residual;
        let better = match &best {
            None => true,
            Some(b) => candidate.residual < b.residual,
        };
        if better {
            best = Some(candidate);
        }
        if accept_now {
            break;
        }
    }
    let mut result = best.expect("at least one attempt runs");
    result.attempts = attempts_run;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn belief_h(mean: DenseMatrix, col_var: f64) -> MatrixNormalBelief {
        let (m, n) = mean.shape();
        MatrixNormalBelief::new(
            mean,
            DenseVector::from_element(m, 1.0),
            DenseVector::from_element(n, col_var),
        )
    }

    #[test]
    fn identity_conditioning_factor_keeps_rotated_data() {
        // Ĥ = I, V_H = 0: the whitening is a signed permutation and the
        // rotation-invariant identity Φᵀ R = Ĥᵀ Y holds exactly.
        let y = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 4.0, -1.0]);
        let q_h = belief_h(DenseMatrix::identity(3, 3), 0.0);
        let model = build_whitened_x_model(&q_h, &y).unwrap();
        let recon = model.measurement_operator().transpose() * &model.pseudo_obs;
        assert!((&recon - &y).norm() < 1e-12);
        for d in model.eigenvalues.iter() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn whitening_transform_reconstructs_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = DenseMatrix::from_fn(4, 3, |_, _| StandardNormal.sample(&mut rng));
        let v: DenseVector = DenseVector::from_fn(3, |_, _| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x.abs() + 0.1
        });
        let y = DenseMatrix::from_fn(4, 5, |_, _| StandardNormal.sample(&mut rng));
        let q_h = MatrixNormalBelief::new(h.clone(), DenseVector::from_element(4, 1.0), v.clone());
        let model = build_whitened_x_model(&q_h, &y).unwrap();

        let mut w = h.transpose() * &h;
        for i in 0..3 {
            w[(i, i)] += 4.0 * v[i];
        }
        let w_inv = w.clone().try_inverse().unwrap();
        let t = model.whitening_transform();
        let recon = t.transpose() * &t;
        assert!((&recon - &w_inv).norm() / w_inv.norm() < 1e-10);

        let phi = model.measurement_operator();
        let gram = phi.transpose() * &phi;
        assert!((&gram - &w).norm() / w.norm() < 1e-10);
    }

    #[test]
    fn h_model_equals_x_model_of_transposed_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x_hat = DenseMatrix::from_fn(3, 6, |_, _| StandardNormal.sample(&mut rng));
        let u_x = DenseVector::from_fn(3, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * g + 0.05
        });
        let y = DenseMatrix::from_fn(4, 6, |_, _| StandardNormal.sample(&mut rng));
        let q_x = MatrixNormalBelief::new(x_hat.clone(), u_x.clone(), DenseVector::from_element(6, 1.0));

        let via_h = build_whitened_h_model(&q_x, &y).unwrap();
        let via_x = build_whitened_x_model(&q_x.transposed(), &y.transpose()).unwrap();
        assert_eq!(via_h.eigenvalues, via_x.eigenvalues);
        assert_eq!(via_h.pseudo_obs, via_x.pseudo_obs);
        assert_eq!(via_h.basis, via_x.basis);

        // And the rotation-invariant identity on the H side: Φᵀ R = X̂ Yᵀ.
        let recon = via_h.measurement_operator().transpose() * &via_h.pseudo_obs;
        let target = &x_hat * y.transpose();
        assert!((&recon - &target).norm() / target.norm() < 1e-12);
    }

    #[test]
    fn flat_prior_identity_model_returns_pseudo_observation() {
        let r = DenseMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let model = WhitenedModel {
            basis: DenseMatrix::identity(2, 2),
            eigenvalues: DenseVector::from_element(2, 1.0),
            pseudo_obs: r.clone(),
        };
        let state = FactorState::init(2, 3);
        let mut flat = DenoiserKind::gaussian(0.0, f64::INFINITY);
        let out = update_factor(
            &model,
            &state,
            f64::INFINITY,
            &mut flat,
            DenoiseOrientation::Natural,
        )
        .unwrap();
        assert!((&out.est - &r).norm() < 1e-12);
        // Constant Ξ flows through the variance bookkeeping unchanged here.
        assert!(out.xi.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lambda_update_trivial_cases() {
        let y = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let zero_h = DenseMatrix::zeros(2, 2);
        let zero_x = DenseMatrix::zeros(2, 2);
        let zeros = DenseVector::zeros(2);
        // All moments vanish except the data term: λ̂ = ML/‖Y‖².
        let lam = update_lambda(&y, &zero_h, &zero_x, &zeros, &zeros);
        assert!((lam - 4.0 / 2.0).abs() < 1e-12);

        // Degenerate perfect fit clamps at the floor.
        let h = DenseMatrix::identity(2, 2);
        let lam = update_lambda(&y, &h, &y.clone(), &zeros, &zeros);
        let expected = 4.0 / (NOISE_C_FLOOR_REL * 2.0);
        assert!((lam / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_rank_one_is_exactly_factorable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = DenseMatrix::from_fn(8, 1, |_, _| StandardNormal.sample(&mut rng));
        let x = DenseMatrix::from_fn(1, 8, |_, _| StandardNormal.sample(&mut rng));
        let y = &h * &x;
        let problem = FactorizationProblem {
            y: y.clone(),
            inner_dim: 1,
            h_prior: DenoiserKind::gaussian(0.0, f64::INFINITY),
            x_prior: DenoiserKind::gaussian(0.0, f64::INFINITY),
            options: SolverOptions {
                restarts: 2,
                ..SolverOptions::default()
            },
        };
        let result = solve(&problem).unwrap();
        assert!(result.residual <= 1e-10 * frob_sq(&y));
    }

    #[test]
    fn known_h_single_column_matches_conjugate_regression() {
        // H known and pinned, X Gaussian, λ fixed: the fixed point is the
        // textbook Bayesian linear regression posterior.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = DenseMatrix::from_fn(4, 1, |_, _| StandardNormal.sample(&mut rng));
        let x_true = DenseMatrix::from_fn(1, 5, |_, _| StandardNormal.sample(&mut rng));
        let beta: f64 = 400.0; // noise variance 0.0025
        let noise =
            DenseMatrix::from_fn(4, 5, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g / beta.sqrt()
            });
        let y = &h * &x_true + noise;
        let sigma_x = 2.0;
        let problem = FactorizationProblem {
            y: y.clone(),
            inner_dim: 1,
            h_prior: DenoiserKind::known_entries(
                h.clone(),
                nalgebra::DMatrix::from_element(4, 1, true),
            )
            .unwrap(),
            x_prior: DenoiserKind::gaussian(0.0, sigma_x),
            options: SolverOptions {
                noise: NoisePrecision::Fixed(beta),
                restarts: 0,
                ..SolverOptions::default()
            },
        };
        let result = solve(&problem).unwrap();
        assert!(result.converged);
        let hth = h.dot(&h);
        for l in 0..5 {
            let hty = h.dot(&y.column(l).into_owned());
            let post_var = 1.0 / (beta * hth + 1.0 / sigma_x);
            let post_mean = post_var * beta * hty;
            assert!((result.x_hat[(0, l)] - post_mean).abs() < 1e-6);
        }
    }

    #[test]
    fn known_entries_block_stays_pinned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 4;
        let h_known = DenseMatrix::identity(m, m);
        let x_true = DenseMatrix::from_fn(m, 6, |_, _| StandardNormal.sample(&mut rng));
        let y = &h_known * &x_true;
        let problem = FactorizationProblem {
            y,
            inner_dim: m,
            h_prior: DenoiserKind::known_entries(
                h_known.clone(),
                nalgebra::DMatrix::from_element(m, m, true),
            )
            .unwrap(),
            x_prior: DenoiserKind::gaussian(0.0, 1.0),
            options: SolverOptions {
                max_iters: 20,
                restarts: 0,
                ..SolverOptions::default()
            },
        };
        let result = solve(&problem).unwrap();
        assert!((&result.h_hat - &h_known).norm() < 1e-12);
        assert!(result.xi_h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_is_bit_identical_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = DenseMatrix::from_fn(6, 2, |_, _| StandardNormal.sample(&mut rng));
        let x = DenseMatrix::from_fn(2, 7, |_, _| StandardNormal.sample(&mut rng));
        let y = &h * &x;
        let problem = FactorizationProblem {
            y,
            inner_dim: 2,
            h_prior: DenoiserKind::gaussian(0.0, 1.0),
            x_prior: DenoiserKind::gaussian(0.0, 1.0),
            options: SolverOptions {
                max_iters: 40,
                seed: 1234,
                ..SolverOptions::default()
            },
        };
        let a = solve(&problem).unwrap();
        let b = solve(&problem).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (s, t) in a.trace.iter().zip(b.trace.iter()) {
            assert_eq!(s.lambda_hat.to_bits(), t.lambda_hat.to_bits());
            assert_eq!(s.rel_residual.to_bits(), t.rel_residual.to_bits());
            assert_eq!(s.delta.to_bits(), t.delta.to_bits());
        }
        assert_eq!(a.h_hat, b.h_hat);
        assert_eq!(a.x_hat, b.x_hat);
    }

    #[test]
    fn projection_rule_row_and_column_means() {
        // After an X update the belief row covariance must equal the row
        // means of Ξ_X exactly; mirrored for V_H and Ξ_H columns.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = DenseMatrix::from_fn(5, 2, |_, _| StandardNormal.sample(&mut rng));
        let x = DenseMatrix::from_fn(2, 6, |_, _| StandardNormal.sample(&mut rng));
        let y = &h * &x;
        let problem = FactorizationProblem {
            y,
            inner_dim: 2,
            h_prior: DenoiserKind::gaussian(0.0, 1.0),
            x_prior: DenoiserKind::gaussian(0.0, 1.0),
            options: SolverOptions {
                max_iters: 3,
                restarts: 0,
                ..SolverOptions::default()
            },
        };
        let result = solve(&problem).unwrap();
        assert_eq!(result.u_x, row_means(&result.xi_x));
        assert_eq!(result.v_h, crate::matrix::col_means(&result.xi_h));
    }
}
