//! Run configuration as read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("output directory {path} is not writable: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Splitting,
    Rates,
    Bicontact,
    Liouville,
    Reeb,
    Torsion,
    NegativeRegion,
    #[serde(rename = "sweep-T")]
    SweepT,
    WeakFilling,
}

impl Analysis {
    pub const ALL: [Analysis; 9] = [
        Analysis::Splitting,
        Analysis::Rates,
        Analysis::Bicontact,
        Analysis::Liouville,
        Analysis::Reeb,
        Analysis::Torsion,
        Analysis::NegativeRegion,
        Analysis::SweepT,
        Analysis::WeakFilling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Splitting => "splitting",
            Analysis::Rates => "rates",
            Analysis::Bicontact => "bicontact",
            Analysis::Liouville => "liouville",
            Analysis::Reeb => "reeb",
            Analysis::Torsion => "torsion",
            Analysis::NegativeRegion => "negative-region",
            Analysis::SweepT => "sweep-T",
            Analysis::WeakFilling => "weak-filling",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Geodesic,
    Cat {
        #[serde(default = "default_matrix")]
        matrix: [[i64; 2]; 2],
        #[serde(default)]
        skew: f64,
    },
    T3 {
        n: u32,
        m: u32,
        eps: f64,
        eps_prime: f64,
    },
    /// A model document on disk, relative to the config file.
    Document { path: PathBuf },
}

fn default_matrix() -> [[i64; 2]; 2] {
    [[2, 1], [1, 1]]
}

/// `"auto"` or a fixed splitting horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Fixed(f64),
    Named(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Named(AutoTag::Auto)
    }
}

impl Horizon {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Horizon::Fixed(t) => Some(t),
            Horizon::Named(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub horizon: Horizon,
    /// Sign tolerance; the model default when absent.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Amplitude of a seeded trigonometric perturbation of the flow.
    #[serde(default)]
    pub perturbation: f64,
    /// Spurious component mixed into the initial duals of the synthesis.
    #[serde(default)]
    pub dual_perturbation: f64,
    /// Use the model's analytic splitting and rates when it has them.
    #[serde(default)]
    pub ground_truth: bool,
    /// Fixed synthesis time; searched when absent.
    #[serde(default)]
    pub synthesis_t: Option<f64>,
    #[serde(default = "default_sweep")]
    #[serde(rename = "sweep_T")]
    pub sweep_t: Vec<f64>,
    /// Run the sweep on flows not classified Anosov.
    #[serde(default)]
    pub force_sweep: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_resolution() -> usize {
    16
}

fn default_sweep() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0, 8.0]
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c = Self::from_json(&s)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.resolution < 4 {
            return bad(format!("resolution {} below 4", self.resolution));
        }
        if let Some(t) = self.horizon.fixed() {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("horizon {t} must be positive"));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad(format!("tol {t} must be positive"));
            }
        }
        if !(0.0..0.1).contains(&self.perturbation) {
            return bad(format!("perturbation {} must lie in [0, 0.1)", self.perturbation));
        }
        if let Some(t) = self.sweep_t.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return bad(format!("sweep time {t} must be nonnegative"));
        }
        Ok(())
    }

    pub fn document_path(&self) -> Option<PathBuf> {
        match &self.model {
            ModelSpec::Document { path } if path.is_relative() => Some(self.base_dir.join(path)),
            ModelSpec::Document { path } => Some(path.clone()),
            _ => None,
        }
    }
}

/// Create `dir` if needed and confirm a file can be written in it.
pub fn ensure_writable(dir: &Path) -> Result<(), ConfigError> {
    let fail = |source| ConfigError::Output {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_json(r#"{"model": {"kind": "geodesic"}}"#).unwrap();
        assert_eq!(c.resolution, 16);
        assert_eq!(c.horizon, Horizon::Named(AutoTag::Auto));
        assert!(c.analyses.is_empty());
    }

    #[test]
    fn analysis_names_round_trip() {
        for a in Analysis::ALL {
            let s = serde_json::to_string(&a).unwrap();
            assert_eq!(s, format!("\"{}\"", a.name()));
        }
    }

    #[test]
    fn unknown_analysis_is_rejected() {
        let e = RunConfig::from_json(r#"{"model": {"kind": "geodesic"}, "analyses": ["splitting", "lyapunov"]}"#);
        assert!(matches!(e, Err(ConfigError::Parse(_))));
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(RunConfig::from_json(r#"{"model": {"kind": "geodesic"}, "resolutoin": 8}"#).is_err());
    }

    #[test]
    fn horizon_is_auto_or_positive() {
        let c = RunConfig::from_json(r#"{"model": {"kind": "geodesic"}, "horizon": 8}"#).unwrap();
        assert_eq!(c.horizon.fixed(), Some(8.0));
        assert!(RunConfig::from_json(r#"{"model": {"kind": "geodesic"}, "horizon": "never"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"kind": "geodesic"}, "horizon": -1}"#).is_err());
    }

    #[test]
    fn cat_matrix_defaults_to_two_one_one_one() {
        let c = RunConfig::from_json(r#"{"model": {"kind": "cat"}}"#).unwrap();
        match c.model {
            ModelSpec::Cat { matrix, skew } => {
                assert_eq!(matrix, [[2, 1], [1, 1]]);
                assert_eq!(skew, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
