//! Experiment configuration: one JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use ofbmlab::corr::{ModelFamily, ModelSpec};
use ofbmlab::hermite::builtin_table;
use ofbmlab::stats::hash_hex;
use ofbmlab::{
    CorrelationModel, HermiteCoefficientTable, LinearOperator, NonlinearFunctional, QuadConfig, SimConfig, SpectralSpec,
};

/// Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Gamma")]
    pub gamma: Vec<f64>,
    pub family: ModelFamily,
    /// Explicit lags for the `table` family.
    pub lags: Option<Vec<Vec<f64>>>,
    /// Builtin functional name or path to a coefficient table.
    pub g: String,
    /// Sample size of single-`N` commands.
    pub n: usize,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub times: Option<Vec<f64>>,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(rename = "A1")]
    pub a1: Option<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Option<Vec<f64>>,
    pub n_freq: usize,
    pub x_max: f64,
    pub alpha: f64,
    /// Power in Condition H; defaults to the Hermite rank of `g`.
    pub m: Option<u32>,
    pub check_grid: Vec<usize>,
    pub permutations: usize,
    pub energy_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            dim: 2,
            d: vec![0.6, 0.0, 0.0, 0.8],
            gamma: vec![1.0, 0.0, 0.0, 1.0],
            family: ModelFamily::Ofgn,
            lags: None,
            g: "identity-plus-tail".into(),
            n: 1024,
            n_list: vec![256, 1024, 4096],
            replicates: 2000,
            times: None,
            seed: 20_261_015,
            out_dir: PathBuf::from("out"),
            a1: None,
            a2: None,
            n_freq: sim.n_freq,
            x_max: sim.x_max,
            alpha: 2.0,
            m: None,
            check_grid: vec![16, 64, 256, 1024, 4096],
            permutations: 200,
            energy_samples: 1000,
        }
    }
}

/// Malformed or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl From<ofbmlab::Error> for ConfigError {
    fn from(e: ofbmlab::Error) -> Self {
        ConfigError(e.to_string())
    }
}

type CfgResult<T> = std::result::Result<T, ConfigError>;

/// Which range the spectral bounds of `D` must lie in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Partial-sum approximations: open interval `(1/2, 1)`.
    Approximation,
    /// OFBM simulation alone: open interval `(0, 1)`.
    Ofbm,
    /// Coefficient tables only; `D` is not used.
    FunctionalOnly,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CfgResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON with the output directory cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        hash_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    fn matrix(&self, name: &str, values: &[f64]) -> CfgResult<DMatrix<f64>> {
        if values.len() != self.dim * self.dim {
            return Err(ConfigError(format!(
                "{name} needs {} row-major entries, got {}",
                self.dim * self.dim,
                values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.dim, self.dim, values))
    }

    pub fn exponent(&self) -> CfgResult<LinearOperator> {
        Ok(LinearOperator::new(self.matrix("D", &self.d)?)?)
    }

    pub fn validate(&self, target: Target) -> CfgResult<()> {
        if self.dim == 0 {
            return Err(ConfigError("dim must be positive".into()));
        }
        if self.replicates < 2 {
            return Err(ConfigError("replicates must be at least 2".into()));
        }
        if self.n == 0 || self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(ConfigError("sample sizes must be positive and n_list non-empty".into()));
        }
        if self.permutations < ofbmlab::stats::DEFAULT_PERMUTATIONS {
            return Err(ConfigError(format!(
                "permutations must be at least {}",
                ofbmlab::stats::DEFAULT_PERMUTATIONS
            )));
        }
        if !(self.alpha >= 1.0) {
            return Err(ConfigError("alpha must be at least 1".into()));
        }
        if let Some(times) = &self.times {
            if times.is_empty() || times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(ConfigError(
                    "times must be a non-empty list of non-negative values".into(),
                ));
            }
            if target == Target::Approximation && times.iter().any(|t| *t > 1.0) {
                return Err(ConfigError("partial-sum times must lie in [0, 1]".into()));
            }
        }
        self.functional_table()?;
        let (lo, hi) = match target {
            Target::FunctionalOnly => return Ok(()),
            Target::Approximation => (0.5, 1.0),
            Target::Ofbm => (0.0, 1.0),
        };
        let b = self.exponent()?.spectral_bounds();
        if !(b.lambda_min > lo && b.lambda_max < hi) {
            return Err(ConfigError(format!(
                "spectral bounds of D are [{}, {}], need the open interval ({lo}, {hi})",
                b.lambda_min, b.lambda_max
            )));
        }
        if target == Target::Approximation {
            self.model()?;
        }
        self.spectral_spec()?;
        Ok(())
    }

    pub fn model(&self) -> CfgResult<CorrelationModel> {
        let spec = ModelSpec {
            dim: self.dim,
            d: self.d.clone(),
            gamma: self.gamma.clone(),
            family: self.family,
            lags: self.lags.clone(),
        };
        Ok(spec.build()?)
    }

    pub fn functional_table(&self) -> CfgResult<HermiteCoefficientTable> {
        match builtin_table(&self.g, self.dim) {
            Ok(t) => Ok(t),
            Err(_) if Path::new(&self.g).is_file() => {
                let t = HermiteCoefficientTable::load(Path::new(&self.g))?;
                if t.dim() != self.dim {
                    return Err(ConfigError(format!(
                        "table {} has dimension {}, config has {}",
                        self.g,
                        t.dim(),
                        self.dim
                    )));
                }
                Ok(t)
            }
            Err(e) => Err(ConfigError(format!(
                "g = '{}' is neither a builtin nor a readable table ({e})",
                self.g
            ))),
        }
    }

    pub fn functional(&self) -> CfgResult<NonlinearFunctional> {
        Ok(NonlinearFunctional::Table(self.functional_table()?))
    }

    /// `A1` defaults to the identity and `A2` to zero.
    pub fn spectral_spec(&self) -> CfgResult<SpectralSpec> {
        let a1 = match &self.a1 {
            Some(v) => self.matrix("A1", v)?,
            None => DMatrix::identity(self.dim, self.dim),
        };
        let a2 = match &self.a2 {
            Some(v) => self.matrix("A2", v)?,
            None => DMatrix::zeros(self.dim, self.dim),
        };
        Ok(SpectralSpec::new(a1, a2, self.exponent()?)?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_freq: self.n_freq,
            x_max: self.x_max,
            ..SimConfig::default()
        }
    }

    pub fn quad_config(&self) -> QuadConfig {
        QuadConfig {
            x_max: self.x_max,
            ..QuadConfig::default()
        }
    }
}
