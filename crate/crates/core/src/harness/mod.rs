//! Config-driven batch experiments: generate data, build the application
//! problem, solve, and write `results.csv`, a `config.echo` copy, and one
//! plot per metric.
//!
//! Trials at distinct (point, trial) pairs run concurrently; the CSV is
//! assembled by a single writer in (point, trial) order so identical configs
//! produce identical files. `UAMPMF_THREADS` caps the worker pool (0 = auto).

pub mod config;
pub mod plot;

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::apps::{AppError, ApplicationSpec, GammaHyper};
use crate::datagen::{self, DataGenError, SparsityMode};
use crate::denoise::DenoiserKind;
use crate::engine::{self, EngineError, NoisePrecision, SolverOptions};
use crate::matrix::DenseMatrix;
use crate::metrics::{self, MetricsError};
use crate::uamp::{self, UampError, UampOptions};
use config::{AppKind, ExperimentConfig, SweepAxis, TimingMode};

pub use config::{parse_config, ConfigError};

/// CSV header of `results.csv`; fixed schema.
pub const RESULTS_HEADER: &str = "application,axis1,axis2,seed,metric,value_db,iters,wall_s,converged";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    DataGen(#[from] DataGenError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Uamp(#[from] UampError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub application: String,
    pub axis1: String,
    pub axis2: String,
    pub seed: u64,
    pub metric: String,
    pub value_db: f64,
    pub iters: usize,
    pub wall_s: f64,
    pub converged: bool,
}

impl ResultRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{:.6},{}",
            self.application,
            self.axis1,
            self.axis2,
            self.seed,
            self.metric,
            self.value_db,
            self.iters,
            self.wall_s,
            self.converged
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the per-trial seed recorded in the `seed` column.
pub fn instance_seed(base: u64, point: usize, trial: usize) -> u64 {
    splitmix64(base ^ splitmix64(((point as u64) << 32) | trial as u64))
}

/// The kind of metric an application reports.
fn metric_name(app: AppKind) -> &'static str {
    match app {
        AppKind::Rpca | AppKind::Nmf | AppKind::SparseNmf => "NMSE_Z",
        AppKind::Dl | AppKind::SparseMf => "NMSE_H",
        AppKind::Csmu | AppKind::Uamp => "NMSE_X",
    }
}

/// Point-resolved copy of the config (sweep coordinates substituted in).
fn apply_axis(cfg: &mut ExperimentConfig, axis: SweepAxis, value: f64) -> Result<(), HarnessError> {
    match axis {
        SweepAxis::SnrDb => cfg.snr_db = value,
        SweepAxis::Rho => cfg.rho = value,
        SweepAxis::Sparsity => cfg.sparsity = value,
        SweepAxis::N | SweepAxis::L => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(HarnessError::Config(ConfigError::Invalid(format!(
                    "sweep over {} requires positive integers (got {value})",
                    axis.name()
                ))));
            }
            if axis == SweepAxis::N {
                cfg.n = value as usize;
            } else {
                cfg.l = value as usize;
            }
        }
    }
    Ok(())
}

struct TrialOutcome {
    value_db: f64,
    iters: usize,
    converged: bool,
}

fn solver_options(cfg: &ExperimentConfig, seed: u64) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        max_iters: cfg.solver.max_iters,
        restarts: cfg.solver.restarts,
        restart_stop_residual: cfg.solver.restart_stop_residual,
        lambda_init: 1.0,
        noise: NoisePrecision::Learned,
        seed,
    }
}

fn gamma_hyper(cfg: &ExperimentConfig) -> GammaHyper {
    GammaHyper {
        shape: cfg.solver.epsilon,
        rate: cfg.solver.eta,
    }
}

fn gen_factor(
    m: usize,
    n: usize,
    rho: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<DenseMatrix, DataGenError> {
    datagen::gen_correlated(m, n, rho, rng)
}

fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut rng = datagen::rng_from_seed(seed);
    let opts = solver_options(cfg, seed);
    let gamma = gamma_hyper(cfg);
    match cfg.application {
        AppKind::Rpca => {
            let a = gen_factor(cfg.m, cfg.n, cfg.rho, &mut rng)?;
            let b = gen_factor(cfg.n, cfg.l, cfg.rho, &mut rng)?;
            let z = &a * &b;
            let e = datagen::gen_outliers(
                cfg.m,
                cfg.l,
                cfg.sparsity,
                cfg.outlier_lo,
                cfg.outlier_hi,
                &mut rng,
            )?;
            let (y, _) = datagen::add_noise(&(&z + &e), cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::Rpca {
                m: cfg.m,
                l: cfg.l,
                rank: cfg.n,
                outlier_rate: cfg.sparsity,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            // The low-rank component estimate is the product of the leading
            // blocks of the two factors.
            let z_hat_h = result.h_hat.columns(0, cfg.n).into_owned();
            let z_hat_x = result.x_hat.rows(0, cfg.n).into_owned();
            Ok(TrialOutcome {
                value_db: metrics::nmse_z(&z, &z_hat_h, &z_hat_x)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::Dl => {
            let h = gen_factor(cfg.m, cfg.n, cfg.rho, &mut rng)?;
            let x = datagen::gen_sparse(
                cfg.n,
                cfg.l,
                SparsityMode::PerColumnCount(cfg.per_column_nonzeros),
                &mut rng,
            )?;
            let z = &h * &x;
            let (y, _) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::Dl {
                m: cfg.m,
                n: cfg.n,
                l: cfg.l,
                per_column_sparsity: cfg.per_column_nonzeros,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            Ok(TrialOutcome {
                value_db: metrics::nmse_h_resolved(&h, &result.h_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::Csmu => {
            let h_bar = gen_factor(cfg.m, cfg.n, cfg.rho, &mut rng)?;
            let h = if cfg.nu > 0.0 {
                let perturb = gen_factor(cfg.m, cfg.n, cfg.rho, &mut rng)?;
                &h_bar + perturb * cfg.nu.sqrt()
            } else {
                h_bar.clone()
            };
            let x = datagen::gen_sparse(
                cfg.n,
                cfg.l,
                SparsityMode::PerColumnCount(cfg.per_column_nonzeros),
                &mut rng,
            )?;
            let z = &h * &x;
            let (y, _) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::Csmu {
                h_bar,
                l: cfg.l,
                perturb_var: cfg.nu,
                common_support: cfg.common_support,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            Ok(TrialOutcome {
                value_db: metrics::nmse_x(&x, &result.x_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::Nmf => {
            let h = datagen::gen_half_normal(cfg.m, cfg.n, &mut rng);
            let x = datagen::gen_half_normal(cfg.n, cfg.l, &mut rng);
            let z = &h * &x;
            let (y, _) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::Nmf {
                m: cfg.m,
                n: cfg.n,
                l: cfg.l,
                location: cfg.theta,
                scale: cfg.phi,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            Ok(TrialOutcome {
                value_db: metrics::nmse_z(&z, &result.h_hat, &result.x_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::SparseMf => {
            // Columns of the reference dictionary must be nonzero for the
            // ambiguity-resolved metric to be defined.
            let h = datagen::gen_sparse_nonempty_columns(cfg.m, cfg.n, cfg.sparsity, &mut rng)?;
            let x = datagen::gen_sparse(cfg.n, cfg.l, SparsityMode::Rate(cfg.sparsity), &mut rng)?;
            let z = &h * &x;
            let (y, _) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::SparseMf {
                m: cfg.m,
                n: cfg.n,
                l: cfg.l,
                sparsity: cfg.sparsity,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            Ok(TrialOutcome {
                value_db: metrics::nmse_h_resolved(&h, &result.h_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::SparseNmf => {
            let h = datagen::gen_sparse_half_normal(cfg.m, cfg.n, cfg.sparsity, &mut rng)?;
            let x = datagen::gen_sparse_half_normal(cfg.n, cfg.l, cfg.sparsity, &mut rng)?;
            let z = &h * &x;
            let (y, _) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let spec = ApplicationSpec::SparseNmf {
                m: cfg.m,
                n: cfg.n,
                l: cfg.l,
                sparsity: cfg.sparsity,
                location: cfg.theta,
                scale: cfg.phi,
            };
            let problem = spec.build(y, gamma, opts)?;
            let result = engine::solve(&problem)?;
            Ok(TrialOutcome {
                value_db: metrics::nmse_z(&z, &result.h_hat, &result.x_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
        AppKind::Uamp => {
            let a = gen_factor(cfg.m, cfg.n, cfg.rho, &mut rng)?;
            let x = datagen::gen_sparse(
                cfg.n,
                1,
                SparsityMode::PerColumnCount(cfg.per_column_nonzeros),
                &mut rng,
            )?;
            let z = &a * &x;
            let (y, sigma2) = datagen::add_noise(&z, cfg.snr_db, &mut rng)?;
            let beta = if sigma2 > 0.0 {
                1.0 / sigma2
            } else {
                f64::INFINITY
            };
            let mut denoiser = DenoiserKind::gaussian_gamma(
                cfg.solver.epsilon,
                cfg.solver.eta,
                cfg.n,
                1,
                false,
            )
            .map_err(AppError::from)?;
            let y_vec = nalgebra::DVector::from_column_slice(y.as_slice());
            let options = UampOptions {
                variant: cfg.uamp_variant,
                max_iters: cfg.solver.max_iters,
                tol: 1e-8,
            };
            let result = uamp::uamp_solve(&y_vec, &a, beta, &mut denoiser, &options)?;
            let x_hat = DenseMatrix::from_column_slice(cfg.n, 1, result.x_hat.as_slice());
            Ok(TrialOutcome {
                value_db: metrics::nmse_x(&x, &x_hat)?,
                iters: result.iterations,
                converged: result.converged,
            })
        }
    }
}

fn axis_value_string(v: f64) -> String {
    format!("{v}")
}

/// Runs the whole experiment and writes `results.csv`, `config.echo`, and one
/// plot file per metric into the output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    raw_config: &str,
) -> Result<Vec<ResultRow>, HarnessError> {
    // Enumerate sweep points (cartesian product, at most two axes).
    let points: Vec<Vec<(SweepAxis, f64)>> = match cfg.sweep.len() {
        0 => vec![vec![]],
        1 => cfg.sweep[0].1.iter().map(|&v| vec![(cfg.sweep[0].0, v)]).collect(),
        _ => {
            let mut out = Vec::new();
            for &v1 in &cfg.sweep[0].1 {
                for &v2 in &cfg.sweep[1].1 {
                    out.push(vec![(cfg.sweep[0].0, v1), (cfg.sweep[1].0, v2)]);
                }
            }
            out
        }
    };

    struct Job {
        point: usize,
        trial: usize,
        cfg: ExperimentConfig,
        seed: u64,
        axis1: String,
        axis2: String,
    }
    let mut jobs = Vec::new();
    for (pi, coords) in points.iter().enumerate() {
        let mut point_cfg = cfg.clone();
        for &(axis, value) in coords {
            apply_axis(&mut point_cfg, axis, value)?;
        }
        let axis1 = coords.first().map(|c| axis_value_string(c.1)).unwrap_or_default();
        let axis2 = coords.get(1).map(|c| axis_value_string(c.1)).unwrap_or_default();
        for trial in 0..cfg.trials {
            jobs.push(Job {
                point: pi,
                trial,
                cfg: point_cfg.clone(),
                seed: instance_seed(cfg.seed, pi, trial),
                axis1: axis1.clone(),
                axis2: axis2.clone(),
            });
        }
    }

    let threads = std::env::var("UAMPMF_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let metric = metric_name(cfg.application);
    let mut results: Vec<(usize, usize, Result<ResultRow, HarnessError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let started = Instant::now();
                let outcome = run_trial(&job.cfg, job.seed);
                let wall = match cfg.timing {
                    TimingMode::Measured => started.elapsed().as_secs_f64(),
                    TimingMode::None => 0.0,
                };
                let row = outcome.map(|o| ResultRow {
                    application: cfg.application.name().to_string(),
                    axis1: job.axis1.clone(),
                    axis2: job.axis2.clone(),
                    seed: job.seed,
                    metric: metric.to_string(),
                    value_db: o.value_db,
                    iters: o.iters,
                    wall_s: wall,
                    converged: o.converged,
                });
                (job.point, job.trial, row)
            })
            .collect()
    });
    results.sort_by_key(|(p, t, _)| (*p, *t));

    let mut rows = Vec::with_capacity(results.len());
    for (_, _, row) in results {
        rows.push(row?);
    }

    fs::create_dir_all(&cfg.out_dir)?;
    write_results_csv(&cfg.out_dir.join("results.csv"), &rows)?;
    fs::write(cfg.out_dir.join("config.echo"), raw_config)?;
    write_plots(cfg, &points, &rows, metric)?;
    Ok(rows)
}

fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{RESULTS_HEADER}")?;
    for row in rows {
        writeln!(f, "{}", row.to_csv())?;
    }
    Ok(())
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn write_plots(
    cfg: &ExperimentConfig,
    points: &[Vec<(SweepAxis, f64)>],
    rows: &[ResultRow],
    metric: &str,
) -> Result<(), HarnessError> {
    let plot_path = cfg.out_dir.join(format!("plot_{metric}.svg"));
    match cfg.sweep.len() {
        0 | 1 => {
            let axis_label = cfg
                .sweep
                .first()
                .map(|(a, _)| a.name())
                .unwrap_or("point");
            let mut medians = Vec::new();
            let mut scatter = Vec::new();
            for (pi, coords) in points.iter().enumerate() {
                let x = coords.first().map(|c| c.1).unwrap_or(pi as f64);
                let mut vals: Vec<f64> = rows
                    .iter()
                    .skip(pi * cfg.trials)
                    .take(cfg.trials)
                    .map(|r| r.value_db)
                    .collect();
                for &v in &vals {
                    scatter.push((x, v));
                }
                medians.push((x, median(&mut vals)));
            }
            plot::write_line_plot(
                &plot_path,
                &format!("{} {metric} (median over {} trials)", cfg.application.name(), cfg.trials),
                axis_label,
                &medians,
                &scatter,
            )?;
        }
        _ => {
            let xs = &cfg.sweep[1].1;
            let ys = &cfg.sweep[0].1;
            let mut values = Vec::with_capacity(points.len());
            for pi in 0..points.len() {
                let mut vals: Vec<f64> = rows
                    .iter()
                    .skip(pi * cfg.trials)
                    .take(cfg.trials)
                    .map(|r| r.value_db)
                    .collect();
                values.push(median(&mut vals));
            }
            plot::write_heat_grid(
                &plot_path,
                &format!("{} {metric} (median over {} trials)", cfg.application.name(), cfg.trials),
                cfg.sweep[1].0.name(),
                cfg.sweep[0].0.name(),
                xs,
                ys,
                &values,
            )?;
        }
    }
    Ok(())
}
