//! INI-style experiment configuration.
//!
//! Flat `key = value` pairs under `[section]` headers; `#` and `;` start
//! comments. Unknown sections or keys are rejected with their line number so
//! typos surface immediately.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::uamp::UampVariant;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key} (line {line}): {message}")]
    BadValue {
        section: String,
        key: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which application the experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppKind {
    Rpca,
    Dl,
    Csmu,
    Nmf,
    SparseMf,
    SparseNmf,
    Uamp,
}

impl AppKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rpca" => AppKind::Rpca,
            "dl" => AppKind::Dl,
            "csmu" => AppKind::Csmu,
            "nmf" => AppKind::Nmf,
            "sparse_mf" => AppKind::SparseMf,
            "sparse_nmf" => AppKind::SparseNmf,
            "uamp" => AppKind::Uamp,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AppKind::Rpca => "rpca",
            AppKind::Dl => "dl",
            AppKind::Csmu => "csmu",
            AppKind::Nmf => "nmf",
            AppKind::SparseMf => "sparse_mf",
            AppKind::SparseNmf => "sparse_nmf",
            AppKind::Uamp => "uamp",
        }
    }
}

/// Quantities an experiment may sweep over (at most two).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SnrDb,
    Rho,
    N,
    L,
    Sparsity,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "snr_db" => SweepAxis::SnrDb,
            "rho" => SweepAxis::Rho,
            "n" => SweepAxis::N,
            "l" => SweepAxis::L,
            "sparsity" => SweepAxis::Sparsity,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Rho => "rho",
            SweepAxis::N => "n",
            SweepAxis::L => "l",
            SweepAxis::Sparsity => "sparsity",
        }
    }
}

/// Whether the wall-time column records measured seconds or zeros.
/// Measured times make `results.csv` non-reproducible byte for byte; `none`
/// exists for workflows that need bit-identical artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingMode {
    Measured,
    None,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub restart_stop_residual: f64,
    /// Gamma-prior shape hyper-parameter.
    pub epsilon: f64,
    /// Gamma-prior rate hyper-parameter.
    pub eta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_iters: 500,
            restarts: 3,
            restart_stop_residual: 1e-4,
            epsilon: 0.0,
            eta: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub application: AppKind,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub timing: TimingMode,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub rho: f64,
    /// Sparsity or outlier rate, interpreted per application.
    pub sparsity: f64,
    pub per_column_nonzeros: usize,
    pub outlier_lo: f64,
    pub outlier_hi: f64,
    pub snr_db: f64,
    /// CSMU perturbation variance.
    pub nu: f64,
    /// Truncated-Gaussian prior location / scale (NMF variants).
    pub theta: f64,
    pub phi: f64,
    pub common_support: bool,
    pub uamp_variant: UampVariant,
    pub sweep: Vec<(SweepAxis, Vec<f64>)>,
    pub solver: SolverConfig,
}

struct RawConfig {
    // (section, key) -> (value, line)
    entries: BTreeMap<(String, String), (String, usize)>,
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find(['#', ';']) {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Line {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Line {
            line: line_no,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Line {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if entries
            .insert(
                (section.clone(), key.clone()),
                (value.trim().to_string(), line_no),
            )
            .is_some()
        {
            return Err(ConfigError::Line {
                line: line_no,
                message: format!("duplicate key `{key}` in section [{section}]"),
            });
        }
    }
    Ok(RawConfig { entries })
}

impl RawConfig {
    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn parse_with<T>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((value, line)) => parse(&value).ok_or_else(|| ConfigError::BadValue {
                section: section.into(),
                key: key.into(),
                line,
                message: format!("cannot parse {value:?}"),
            }),
        }
    }

    fn require(&mut self, section: &str, key: &str) -> Result<(String, usize), ConfigError> {
        self.take(section, key).ok_or(ConfigError::MissingKey {
            section: section.into(),
            key: key.into(),
        })
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok().filter(|v: &f64| !v.is_nan()),
    }
}

fn parse_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    let values: Option<Vec<f64>> = s.split(',').map(|t| parse_f64(t.trim())).collect();
    values.filter(|v| !v.is_empty())
}

/// Parses a full experiment configuration, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = parse_raw(text)?;

    let (app_str, app_line) = raw.require("experiment", "application")?;
    let application = AppKind::parse(&app_str).ok_or_else(|| ConfigError::BadValue {
        section: "experiment".into(),
        key: "application".into(),
        line: app_line,
        message: format!("unknown application {app_str:?}"),
    })?;

    let trials = raw.parse_with("experiment", "trials", 1, parse_usize)?;
    let seed = raw.parse_with("experiment", "seed", 0u64, |s| s.parse().ok())?;
    let out_dir = raw.parse_with("experiment", "out_dir", PathBuf::from("results"), |s| {
        Some(PathBuf::from(s))
    })?;
    let timing = raw.parse_with("experiment", "timing", TimingMode::Measured, |s| match s {
        "measured" => Some(TimingMode::Measured),
        "none" => Some(TimingMode::None),
        _ => None,
    })?;

    let m = raw.parse_with("dims", "m", 16, parse_usize)?;
    let n = raw.parse_with("dims", "n", 4, parse_usize)?;
    let l = raw.parse_with("dims", "l", 16, parse_usize)?;

    let rho = raw.parse_with("data", "rho", 0.0, parse_f64)?;
    let sparsity = raw.parse_with("data", "sparsity", 0.1, parse_f64)?;
    let per_column_nonzeros = raw.parse_with("data", "per_column_nonzeros", 0, parse_usize)?;
    let outlier_lo = raw.parse_with("data", "outlier_lo", -10.0, parse_f64)?;
    let outlier_hi = raw.parse_with("data", "outlier_hi", 10.0, parse_f64)?;
    let snr_db = raw.parse_with("data", "snr_db", 60.0, parse_f64)?;
    let nu = raw.parse_with("data", "nu", 0.01, parse_f64)?;
    let theta = raw.parse_with("data", "theta", 0.0, parse_f64)?;
    let phi = raw.parse_with("data", "phi", 1.0, parse_f64)?;
    let common_support = raw.parse_with("data", "common_support", false, parse_bool)?;
    let uamp_variant = raw.parse_with("data", "variant", UampVariant::V2, |s| match s {
        "v1" => Some(UampVariant::V1),
        "v2" => Some(UampVariant::V2),
        _ => None,
    })?;

    let mut sweep = Vec::new();
    for (axis_key, values_key) in [("axis1", "values1"), ("axis2", "values2")] {
        let axis = raw.take("sweep", axis_key);
        let values = raw.take("sweep", values_key);
        match (axis, values) {
            (None, None) => {}
            (Some((axis_str, line)), Some((values_str, values_line))) => {
                let axis = SweepAxis::parse(&axis_str).ok_or_else(|| ConfigError::BadValue {
                    section: "sweep".into(),
                    key: axis_key.into(),
                    line,
                    message: format!("unknown sweep axis {axis_str:?}"),
                })?;
                let values =
                    parse_f64_list(&values_str).ok_or_else(|| ConfigError::BadValue {
                        section: "sweep".into(),
                        key: values_key.into(),
                        line: values_line,
                        message: "expected a comma-separated list of numbers".into(),
                    })?;
                sweep.push((axis, values));
            }
            (Some((_, line)), None) => {
                return Err(ConfigError::Line {
                    line,
                    message: format!("{axis_key} given without {values_key}"),
                })
            }
            (None, Some((_, line))) => {
                return Err(ConfigError::Line {
                    line,
                    message: format!("{values_key} given without {axis_key}"),
                })
            }
        }
    }
    if sweep.len() == 2 && sweep[0].0 == sweep[1].0 {
        return Err(ConfigError::Invalid(
            "the two sweep axes must differ".into(),
        ));
    }

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        tol: raw.parse_with("solver", "tol", defaults.tol, parse_f64)?,
        max_iters: raw.parse_with("solver", "max_iters", defaults.max_iters, parse_usize)?,
        restarts: raw.parse_with("solver", "restarts", defaults.restarts, parse_usize)?,
        restart_stop_residual: raw.parse_with(
            "solver",
            "restart_stop_residual",
            defaults.restart_stop_residual,
            parse_f64,
        )?,
        epsilon: raw.parse_with("solver", "epsilon", defaults.epsilon, parse_f64)?,
        eta: raw.parse_with("solver", "eta", defaults.eta, parse_f64)?,
    };

    if let Some(((section, key), (_, line))) = raw.entries.into_iter().next() {
        return Err(ConfigError::BadValue {
            section,
            key,
            line,
            message: "unknown key".into(),
        });
    }

    let cfg = ExperimentConfig {
        application,
        trials,
        seed,
        out_dir,
        timing,
        m,
        n,
        l,
        rho,
        sparsity,
        per_column_nonzeros,
        outlier_lo,
        outlier_hi,
        snr_db,
        nu,
        theta,
        phi,
        common_support,
        uamp_variant,
        sweep,
        solver,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    if cfg.trials == 0 {
        return Err(ConfigError::Invalid("trials must be at least 1".into()));
    }
    if cfg.m == 0 || cfg.n == 0 || cfg.l == 0 {
        return Err(ConfigError::Invalid("dimensions must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rho) {
        return Err(ConfigError::Invalid(format!(
            "rho must lie in [0, 1] (got {})",
            cfg.rho
        )));
    }
    if !(0.0..=1.0).contains(&cfg.sparsity) {
        return Err(ConfigError::Invalid(format!(
            "sparsity must lie in [0, 1] (got {})",
            cfg.sparsity
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\napplication = nmf\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.application, AppKind::Nmf);
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.solver.max_iters, 500);
        assert!(cfg.sweep.is_empty());
    }

    #[test]
    fn full_config_round_trip() {
        let text = "\
[experiment]
application = rpca
trials = 3
seed = 7
out_dir = out/rpca
timing = none

[dims]
m = 8
n = 2
l = 8

[data]
rho = 0.1          ; factor correlation
sparsity = 0.2
snr_db = inf

[sweep]
axis1 = snr_db
values1 = 40, 50, 60

[solver]
max_iters = 100
restarts = 1
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.timing, TimingMode::None);
        assert!(cfg.snr_db.is_infinite());
        assert_eq!(cfg.sweep.len(), 1);
        assert_eq!(cfg.sweep[0].1, vec![40.0, 50.0, 60.0]);
        assert_eq!(cfg.solver.max_iters, 100);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[experiment]\napplication = dl\nbogus = 1\n";
        match parse_config(text) {
            Err(ConfigError::BadValue { key, line, .. }) => {
                assert_eq!(key, "bogus");
                assert_eq!(line, 3);
            }
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_field_and_line() {
        let text = "[experiment]\napplication = dl\n\n[data]\nrho = fast\n";
        match parse_config(text) {
            Err(ConfigError::BadValue { section, key, line, .. }) => {
                assert_eq!(section, "data");
                assert_eq!(key, "rho");
                assert_eq!(line, 5);
            }
            other => panic!("expected bad-value error, got {other:?}"),
        }
    }

    #[test]
    fn missing_application_is_required() {
        assert!(matches!(
            parse_config("[experiment]\ntrials = 2\n"),
            Err(ConfigError::MissingKey { .. })
        ));
    }

    #[test]
    fn duplicate_sweep_axes_rejected() {
        let text = "\
[experiment]
application = dl
[sweep]
axis1 = n
values1 = 2,3
axis2 = n
values2 = 4,5
";
        assert!(parse_config(text).is_err());
    }
}
