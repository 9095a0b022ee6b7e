//! Experiment configuration: JSON with row-major nested arrays for matrices.
//!
//! See `config.schema.json` at the crate root for the documented schema.

use std::path::PathBuf;

use gbridge::bridge::BridgeProblem;
use gbridge::oracle::GridSpec;
use gbridge::{DMatrix, DVector, GaussianDist, KernelParams, SpdMatrix};
use serde::{Deserialize, Serialize};

/// A configuration problem, reported with the offending field path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bridge,
    Sinkhorn,
    Rates,
    Regularize,
    Oracle,
    Montecarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub eta: GaussianSpec,
    pub mu: GaussianSpec,
    pub theta: KernelSpec,
}

fn default_ipf_iterations() -> usize {
    100_000
}

fn default_ipf_tolerance() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default = "default_ipf_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_ipf_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// Optional here; the subcommand selects the mode and must agree with it.
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Sinkhorn steps (`sinkhorn`).
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Regularization parameters (`rates`, `regularize`).
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    /// Grid for the IPF oracle (`oracle`).
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Samples per repetition (`montecarlo`).
    #[serde(default)]
    pub samples: Option<usize>,
    /// Independent repetitions, seeded `seed, seed + 1, ...` (`montecarlo`).
    #[serde(default)]
    pub repetitions: Option<usize>,
    /// Standard-error band for the Monte Carlo check.
    #[serde(default)]
    pub bands: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        err(&path, e.into_inner().to_string())
    })
}

/// Parameters checked for one mode.
#[derive(Debug, Clone)]
pub enum ModeParams {
    Bridge,
    Sinkhorn {
        iterations: usize,
    },
    Rates {
        t_grid: Vec<f64>,
    },
    Regularize {
        t_grid: Vec<f64>,
    },
    Oracle {
        grid: GridSpec,
        max_iterations: usize,
        tolerance: f64,
    },
    Montecarlo {
        samples: usize,
        repetitions: usize,
        bands: f64,
    },
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub mode: Mode,
    pub problem: BridgeProblem,
    pub params: ModeParams,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(
        &self,
        mode: Mode,
        seed_override: Option<u64>,
    ) -> Result<Experiment, ConfigError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(err(
                    "mode",
                    format!("config says {m:?} but the subcommand is {mode:?}"),
                ));
            }
        }
        let problem = self.problem.build()?;
        let params = match mode {
            Mode::Bridge => ModeParams::Bridge,
            Mode::Sinkhorn => {
                let iterations = self
                    .iterations
                    .ok_or_else(|| err("iterations", "required for sinkhorn"))?;
                if iterations == 0 {
                    return Err(err("iterations", "must be at least 1"));
                }
                ModeParams::Sinkhorn { iterations }
            }
            Mode::Rates => ModeParams::Rates {
                t_grid: self.t_grid()?,
            },
            Mode::Regularize => ModeParams::Regularize {
                t_grid: self.t_grid()?,
            },
            Mode::Oracle => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| err("grid", "required for oracle"))?;
                if problem.dim() != 1 {
                    return Err(err(
                        "problem",
                        format!(
                            "the grid oracle needs a 1-D problem, got d = {}",
                            problem.dim()
                        ),
                    ));
                }
                let grid =
                    GridSpec::new(g.lo, g.hi, g.points).map_err(|e| err("grid", e.to_string()))?;
                if g.tolerance.is_nan() || g.tolerance <= 0.0 {
                    return Err(err("grid.tolerance", "must be positive"));
                }
                ModeParams::Oracle {
                    grid,
                    max_iterations: g.max_iterations,
                    tolerance: g.tolerance,
                }
            }
            Mode::Montecarlo => {
                let samples = self
                    .samples
                    .ok_or_else(|| err("samples", "required for montecarlo"))?;
                if samples < 100 {
                    return Err(err("samples", "must be at least 100"));
                }
                let repetitions = self.repetitions.unwrap_or(1);
                if repetitions == 0 {
                    return Err(err("repetitions", "must be at least 1"));
                }
                let bands = self.bands.unwrap_or(4.0);
                if bands.is_nan() || bands <= 0.0 {
                    return Err(err("bands", "must be positive"));
                }
                ModeParams::Montecarlo {
                    samples,
                    repetitions,
                    bands,
                }
            }
        };
        Ok(Experiment {
            mode,
            problem,
            params,
            seed: seed_override.or(self.seed).unwrap_or(0),
        })
    }

    fn t_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let t = self
            .t_grid
            .clone()
            .ok_or_else(|| err("t_grid", "required for rates and regularize"))?;
        if t.is_empty() {
            return Err(err("t_grid", "must not be empty"));
        }
        if let Some(k) = t.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(err(
                &format!("t_grid[{k}]"),
                format!("must be positive and finite, got {}", t[k]),
            ));
        }
        Ok(t)
    }
}

fn vector(path: &str, x: &[f64]) -> Result<DVector<f64>, ConfigError> {
    if x.is_empty() {
        return Err(err(path, "empty vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(err(path, "non-finite entry"));
    }
    Ok(DVector::from_column_slice(x))
}

fn matrix(path: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != d {
        return Err(err(
            path,
            format!("expected {d} rows, found {}", rows.len()),
        ));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(err(
                &format!("{path}[{i}]"),
                format!("expected {d} entries, found {}", r.len()),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(err(&format!("{path}[{i}]"), "non-finite entry"));
        }
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn dump(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter()
                    .map(|x| format!("{x:e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn spd(path: &str, rows: &[Vec<f64>], d: usize) -> Result<SpdMatrix, ConfigError> {
    let m = matrix(path, rows, d)?;
    SpdMatrix::new(m.clone()).map_err(|e| err(path, format!("{e}; matrix = {}", dump(&m))))
}

impl ProblemSpec {
    pub fn build(&self) -> Result<BridgeProblem, ConfigError> {
        let m = vector("problem.eta.mean", &self.eta.mean)?;
        let d = m.len();
        let gaussian = |name: &str, g: &GaussianSpec| -> Result<GaussianDist, ConfigError> {
            let mean = vector(&format!("problem.{name}.mean"), &g.mean)?;
            if mean.len() != d {
                return Err(err(
                    &format!("problem.{name}.mean"),
                    format!("expected length {d}, found {}", mean.len()),
                ));
            }
            let cov = spd(&format!("problem.{name}.cov"), &g.cov, d)?;
            GaussianDist::new(mean, cov).map_err(|e| err(&format!("problem.{name}"), e.to_string()))
        };
        let eta = gaussian("eta", &self.eta)?;
        let mu = gaussian("mu", &self.mu)?;
        let alpha = vector("problem.theta.alpha", &self.theta.alpha)?;
        if alpha.len() != d {
            return Err(err(
                "problem.theta.alpha",
                format!("expected length {d}, found {}", alpha.len()),
            ));
        }
        let beta = matrix("problem.theta.beta", &self.theta.beta, d)?;
        let tau = spd("problem.theta.tau", &self.theta.tau, d)?;
        let theta = KernelParams::new(alpha, beta.clone(), tau).map_err(|e| {
            err(
                "problem.theta.beta",
                format!("{e}; matrix = {}", dump(&beta)),
            )
        })?;
        BridgeProblem::new(eta, mu, theta).map_err(|e| err("problem", e.to_string()))
    }
}
