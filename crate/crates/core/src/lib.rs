//! Bayesian matrix factorization `Y = H X + W` solved by variational
//! inference with an embedded unitary-AMP recursion.
//!
//! The crate is organized around a small number of pieces:
//!
//! * [`denoise`] — entry-wise MMSE denoisers (the prior families), all
//!   behind one [`denoise::DenoiserKind`] interface,
//! * [`uamp`] — the standalone vector solver for `y = A x + w`,
//! * [`engine`] — the alternating matrix-factorization iteration built on
//!   whitened pseudo-models and the denoisers,
//! * [`apps`] — problem builders for RPCA, dictionary learning, compressive
//!   sensing with matrix uncertainty, NMF and sparse (N)MF,
//! * [`datagen`] / [`metrics`] — seeded synthetic data and NMSE metrics,
//! * [`harness`] — config-driven batch experiments writing `results.csv`,
//! * [`oracle`] — independent reference computations (quadrature,
//!   Kronecker-product expansions, Monte Carlo) used by the test suites and
//!   the `oracle` CLI subcommand.

pub mod apps;
pub mod datagen;
pub mod denoise;
pub mod engine;
pub mod harness;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod uamp;

pub use matrix::{DenseMatrix, DenseVector};
