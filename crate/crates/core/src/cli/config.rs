//! Experiment configuration.
//!
//! A TOML file with top-level keys and one level of tables:
//!
//! ```toml
//! seed = 7
//! sigma = 1.0
//! n_grid = [256, 1024, 4096]
//! replications = 50
//! estimator = "cutoff"
//!
//! [design]
//! kind = "basis-expansion"
//! alpha = 2.0
//!
//! [theta]
//! beta = 4.0
//! radius = 1.0
//! mode = "boundary"
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{CoefficientLaw, DesignKind, DesignSpec};
use crate::error::Error;
use crate::estimators::{Rho, SupportCap, ThetaClass};
use crate::function_space::{GridFunction, DEFAULT_GRID_SIZE};
use crate::risk::{EstimatorKind, ModelKind, StudySpec, ThetaChoice};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::one")]
    pub sigma: f64,
    #[serde(default = "defaults::n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    #[serde(default = "defaults::model")]
    pub model: ModelKind,
    #[serde(default = "defaults::estimator")]
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default)]
    pub support_cap: SupportCap,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub theta: ThetaConfig,
    #[serde(default)]
    pub equivalence: EquivalenceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "defaults::kind")]
    pub kind: DesignKind,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default = "defaults::law")]
    pub law: LawName,
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    /// Constant diffusion of the integrated Gaussian process.
    #[serde(default = "defaults::one")]
    pub sigma_x: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaConfig {
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::one")]
    pub radius: f64,
    #[serde(default = "defaults::mode")]
    pub mode: ThetaChoice,
    /// Random members in the worst-case set.
    #[serde(default = "defaults::random_count")]
    pub random_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceConfig {
    #[serde(default = "defaults::equivalence_n")]
    pub n: usize,
    #[serde(default = "defaults::draws")]
    pub draws: usize,
    #[serde(default = "defaults::level")]
    pub level: f64,
}

mod defaults {
    use super::*;

    pub fn seed() -> u64 {
        1
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn n_grid() -> Vec<usize> {
        vec![256, 1024, 4096]
    }
    pub fn replications() -> usize {
        50
    }
    pub fn model() -> ModelKind {
        ModelKind::Flr
    }
    pub fn estimator() -> EstimatorKind {
        EstimatorKind::Cutoff
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn kind() -> DesignKind {
        DesignKind::BasisExpansion
    }
    pub fn alpha() -> f64 {
        2.0
    }
    pub fn law() -> LawName {
        LawName::Uniform
    }
    pub fn grid_size() -> usize {
        DEFAULT_GRID_SIZE
    }
    pub fn beta() -> f64 {
        4.0
    }
    pub fn mode() -> ThetaChoice {
        ThetaChoice::Boundary
    }
    pub fn random_count() -> usize {
        8
    }
    pub fn equivalence_n() -> usize {
        25
    }
    pub fn draws() -> usize {
        2000
    }
    pub fn level() -> f64 {
        0.05
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl Default for ThetaConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

/// A configuration error, tied to a key when one is at fault.
#[derive(Debug)]
pub struct ConfigError {
    pub table: Option<&'static str>,
    pub key: Option<&'static str>,
    pub message: String,
}

impl ConfigError {
    fn at(table: Option<&'static str>, key: &'static str, message: impl Into<String>) -> Self {
        Self {
            table,
            key: Some(key),
            message: message.into(),
        }
    }

    fn wrap(table: Option<&'static str>, key: &'static str, e: Error) -> Self {
        let message = match e {
            Error::InvalidArgument(m) | Error::Spec(m) | Error::Config(m) => m,
            other => other.to_string(),
        };
        Self::at(table, key, message)
    }

    /// `path:line: table.key: message`, falling back to the file alone when
    /// the key is absent from the source (a default is at fault).
    pub fn render(&self, path: &Path, source: &str) -> String {
        let name = match (self.table, self.key) {
            (Some(t), Some(k)) => format!("{t}.{k}: "),
            (None, Some(k)) => format!("{k}: "),
            _ => String::new(),
        };
        match self.key.and_then(|k| find_line(source, self.table, k)) {
            Some(line) => format!("{}:{line}: {name}{}", path.display(), self.message),
            None => format!("{}: {name}{}", path.display(), self.message),
        }
    }
}

/// 1-based line of `key = …` inside `[table]` (or at top level).
pub fn find_line(source: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = Some(name.trim().to_string());
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        if lhs.trim() == key && current.as_deref() == table {
            return Some(i + 1);
        }
    }
    None
}

pub fn render_parse_error(path: &Path, (line, message): &(Option<usize>, String)) -> String {
    match line {
        Some(l) => format!("{}:{l}: {message}", path.display()),
        None => format!("{}: {message}", path.display()),
    }
}

/// What a subcommand needs validated beyond the shared checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Simulate,
    Transform,
    Estimate,
    Risk,
    Equivalence,
    Report,
}

impl ExperimentConfig {
    /// Parses `source`; errors are rendered as `path:line: message` by the caller
    /// through [`render_parse_error`].
    pub fn parse(source: &str) -> std::result::Result<Self, (Option<usize>, String)> {
        toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            (line, e.message().trim().to_string())
        })
    }

    /// SHA-256 of the effective configuration, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn design_spec(&self) -> std::result::Result<DesignSpec, ConfigError> {
        let d = &self.design;
        let law = match d.law {
            LawName::Uniform => CoefficientLaw::default(),
            LawName::Triangular => CoefficientLaw::Triangular {
                half_width: 6f64.sqrt(),
            },
        };
        let mut spec = match d.kind {
            DesignKind::BasisExpansion => DesignSpec::basis_expansion(d.alpha),
            DesignKind::IntegratedGaussian => DesignSpec::integrated_gaussian(),
        };
        spec.coefficient_law = law;
        spec.grid_size = d.grid_size;
        spec.truncation = d.truncation;
        if d.kind == DesignKind::IntegratedGaussian {
            if !(d.sigma_x > 0.0) || !d.sigma_x.is_finite() {
                return Err(ConfigError::at(
                    Some("design"),
                    "sigma_x",
                    format!("must be positive, got {}", d.sigma_x),
                ));
            }
            if d.sigma_x != 1.0 {
                let f = GridFunction::constant(d.grid_size.max(2), d.sigma_x)
                    .map_err(|e| ConfigError::wrap(Some("design"), "grid_size", e))?;
                spec = spec.with_diffusion(f);
            }
        }
        spec.validate().map_err(|e| {
            let key = match &e {
                Error::Resolution { .. } => "grid_size",
                _ if d.kind == DesignKind::BasisExpansion => "alpha",
                _ => "kind",
            };
            ConfigError::wrap(Some("design"), key, e)
        })?;
        Ok(spec)
    }

    pub fn study_spec(&self) -> std::result::Result<StudySpec, ConfigError> {
        let design = self.design_spec()?;
        let class = ThetaClass::new(self.theta.beta, self.theta.radius).map_err(|e| {
            let key = if self.theta.beta > 0.0 { "radius" } else { "beta" };
            ConfigError::wrap(Some("theta"), key, e)
        })?;
        let mut spec = StudySpec::new(self.model, design, class, self.sigma);
        spec.theta = self.theta.mode;
        spec.rho = self.rho;
        spec.support_cap = self.support_cap;
        spec.random_thetas = self.theta.random_count;
        Ok(spec)
    }

    /// Checks every precondition the subcommand will meet before it runs.
    pub fn validate(&self, needs: Needs) -> std::result::Result<StudySpec, ConfigError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(ConfigError::at(None, "sigma", format!("must be positive, got {}", self.sigma)));
        }
        let spec = self.study_spec()?;
        if needs == Needs::Report {
            return Ok(spec);
        }
        let alpha = spec.alpha();
        if let Some(r) = self.rho {
            Rho::new(r, alpha).map_err(|e| ConfigError::wrap(None, "rho", e))?;
        }
        if self.n_grid.is_empty() {
            return Err(ConfigError::at(None, "n_grid", "needs at least one sample size"));
        }
        let min_n = match (needs, self.estimator) {
            (Needs::Equivalence, _) => 4,
            (Needs::Estimate | Needs::Risk, EstimatorKind::PinskerDataDriven) => 8,
            _ => 2,
        };
        if let Some(n) = self.n_grid.iter().find(|n| **n < min_n) {
            return Err(ConfigError::at(None, "n_grid", format!("sample sizes must be at least {min_n}, got {n}")));
        }
        let mut sorted = self.n_grid.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != self.n_grid {
            return Err(ConfigError::at(None, "n_grid", "sample sizes must be strictly increasing"));
        }
        if matches!(needs, Needs::Risk | Needs::Equivalence) && self.replications < 2 {
            return Err(ConfigError::at(
                None,
                "replications",
                format!("needs at least 2 replications, got {}", self.replications),
            ));
        }
        let flr_only = matches!(needs, Needs::Transform | Needs::Equivalence)
            || (matches!(needs, Needs::Estimate | Needs::Risk) && self.estimator == EstimatorKind::PinskerDataDriven);
        if flr_only && self.model == ModelKind::Sequence {
            return Err(ConfigError::at(None, "model", "this command needs the regression model \"flr\""));
        }
        if needs == Needs::Equivalence {
            let e = &self.equivalence;
            if e.n < 1 {
                return Err(ConfigError::at(Some("equivalence"), "n", "must be positive"));
            }
            if e.draws < 1 {
                return Err(ConfigError::at(Some("equivalence"), "draws", "must be positive"));
            }
            if !(e.level > 0.0 && e.level < 1.0) {
                return Err(ConfigError::at(Some("equivalence"), "level", format!("must lie in (0, 1), got {}", e.level)));
            }
        }
        let pinsker = matches!(self.estimator, EstimatorKind::PinskerOracle | EstimatorKind::PinskerDataDriven);
        if matches!(needs, Needs::Estimate | Needs::Risk) {
            let check = if pinsker && self.model == ModelKind::Flr {
                spec.class.check_plug_in_regime(alpha)
            } else {
                spec.class.check_rate_regime(alpha)
            };
            check.map_err(|e| ConfigError::wrap(Some("theta"), "beta", e))?;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_source_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.n_grid, vec![256, 1024, 4096]);
        assert_eq!(c.equivalence.draws, 2000);
        assert!(c.validate(Needs::Equivalence).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let src = "seed = 3\n\n[design]\nalpha = 2.0\nbogus = 1\n";
        let err = render_parse_error(Path::new("c.toml"), &ExperimentConfig::parse(src).unwrap_err());
        assert!(err.starts_with("c.toml:5:"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn validation_errors_point_at_the_key() {
        let src = "seed = 3\nreplications = 1\n";
        let c = ExperimentConfig::parse(src).unwrap();
        let err = c.validate(Needs::Risk).unwrap_err();
        assert_eq!(err.render(Path::new("c.toml"), src), "c.toml:2: replications: needs at least 2 replications, got 1");
        let src = "[theta]\nbeta = 1.0\n";
        let c = ExperimentConfig::parse(src).unwrap();
        let err = c.validate(Needs::Risk).unwrap_err();
        assert!(err.render(Path::new("c.toml"), src).starts_with("c.toml:2: theta.beta:"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::parse("output_dir = \"a\"").unwrap();
        let b = ExperimentConfig::parse("output_dir = \"b\"").unwrap();
        let c = ExperimentConfig::parse("seed = 9").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn find_line_respects_tables() {
        let src = "alpha = 1\n[design]\nalpha = 2\n";
        assert_eq!(find_line(src, None, "alpha"), Some(1));
        assert_eq!(find_line(src, Some("design"), "alpha"), Some(3));
        assert_eq!(find_line(src, Some("theta"), "alpha"), None);
    }
}
