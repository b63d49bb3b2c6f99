//! Run configuration: parsing, defaults and validation.
//!
//! A configuration is a TOML document. Unknown keys are rejected anywhere in
//! it. Parsing fills every default the chosen experiment uses, so the
//! resolved [`RunConfig`] is self-describing and parses back to itself.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;
use zeno_rotor::classical::MIN_FIT_POINTS;
use zeno_rotor::kickedmap::{quantum_resonance, Hamiltonian, MAX_BASIS_HALF_WIDTH, MAX_STEPS};
use zeno_rotor::measurement::MeasurementProtocol;

pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_OMEGA: f64 = 1.0;
pub const DEFAULT_KERNEL_TOL: f64 = 1e-12;
pub const DEFAULT_TRAJECTORIES: usize = 100;
pub const DEFAULT_ZENO_TRAJECTORIES: usize = 100_000;
pub const DEFAULT_PARTICLES: usize = 100_000;
pub const DEFAULT_OUTPUT_DIRECTORY: &str = "output";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("missing required field `{field}` for experiment {experiment}")]
    Missing {
        field: &'static str,
        experiment: Experiment,
    },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TwolevelZeno,
    Kicked,
    Classical,
    Compare,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::TwolevelZeno => "twolevel-zeno",
            Experiment::Kicked => "kicked",
            Experiment::Classical => "classical",
            Experiment::Compare => "compare",
        })
    }
}

impl Experiment {
    fn is_quantum_kicked(self) -> bool {
        matches!(self, Experiment::Kicked | Experiment::Compare)
    }

    fn is_classical(self) -> bool {
        matches!(self, Experiment::Classical | Experiment::Compare)
    }
}

/// Momentum basis half-width, chosen automatically or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    #[default]
    Auto,
    HalfWidth(usize),
}

impl Serialize for Basis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Basis::Auto => serializer.serialize_str("auto"),
            Basis::HalfWidth(m) => serializer.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Basis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BasisVisitor;

        impl Visitor<'_> for BasisVisitor {
            type Value = Basis;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"auto\" or a positive half-width")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Basis, E> {
                if v == "auto" {
                    Ok(Basis::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Basis, E> {
                Ok(Basis::HalfWidth(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Basis, E> {
                u64::try_from(v)
                    .map(|v| Basis::HalfWidth(v as usize))
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            }
        }

        deserializer.deserialize_any(BasisVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<Hamiltonian>,
    /// Rabi frequency of the two-level experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Total two-level evolution time, split into `n` measured steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    /// Measurement counts of the two-level experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Basis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spill_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT_DIRECTORY)
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// A complete run description.
///
/// Fields an experiment does not use stay unset; every field it does use is
/// filled by [`parse_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub protocol: MeasurementProtocol,
    #[serde(default)]
    pub ensemble: Ensemble,
    #[serde(default)]
    pub output: Output,
}

/// A validated configuration together with the warnings raised while
/// resolving it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Parses, defaults and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let raw: RunConfig = toml::from_str(text)?;
    resolve(raw)
}

/// Fills the defaults `cfg.experiment` needs and validates the result.
pub fn resolve(mut cfg: RunConfig) -> Result<ResolvedConfig, ConfigError> {
    let experiment = cfg.experiment;
    let missing = |field| ConfigError::Missing { field, experiment };
    let mut warnings = Vec::new();

    if let Some(threads) = cfg.threads {
        if threads == 0 {
            return Err(invalid("threads", "must be at least 1"));
        }
    }

    match experiment {
        Experiment::TwolevelZeno => {
            let omega = *cfg.physics.omega.get_or_insert(DEFAULT_OMEGA);
            positive("omega", omega)?;
            let total = *cfg.physics.total_time.get_or_insert(PI / omega);
            positive("total_time", total)?;
            let n_values = cfg
                .physics
                .n_values
                .as_ref()
                .ok_or_else(|| missing("n_values"))?;
            if n_values.is_empty() || n_values.contains(&0) {
                return Err(invalid(
                    "n_values",
                    "must be a nonempty list of positive counts",
                ));
            }
            if n_values.iter().any(|&n| n > MAX_STEPS as u64) {
                return Err(invalid(
                    "n_values",
                    format!("counts are limited to {MAX_STEPS}"),
                ));
            }
            let trajectories = *cfg
                .ensemble
                .trajectories
                .get_or_insert(DEFAULT_ZENO_TRAJECTORIES);
            if trajectories == 0 {
                return Err(invalid("trajectories", "must be at least 1"));
            }
        }
        Experiment::Kicked | Experiment::Classical | Experiment::Compare => {
            let k = cfg.physics.k.ok_or_else(|| missing("k"))?;
            if !k.is_finite() || k < 0.0 {
                return Err(invalid(
                    "k",
                    format!("must be finite and nonnegative, got {k}"),
                ));
            }
            let tau = *cfg.physics.tau.get_or_insert(DEFAULT_TAU);
            positive("tau", tau)?;
            let steps = cfg.steps.ok_or_else(|| missing("steps"))?;
            if steps == 0 || steps > MAX_STEPS {
                return Err(invalid("steps", format!("must lie in 1..={MAX_STEPS}")));
            }
            let h0 = cfg.physics.h0.get_or_insert(Hamiltonian::Rotor);
            if let Hamiltonian::Tabulated { values, .. } = h0 {
                if values.is_empty() {
                    return Err(invalid("h0", "tabulated values must not be empty"));
                }
            }
            if let Some((p, q)) = quantum_resonance(h0, tau) {
                warnings.push(format!(
                    "tau = {tau} is a quantum resonance (4π·{p}/{q}); the rotor will not localize"
                ));
            }
        }
    }

    if experiment.is_quantum_kicked() {
        let basis = *cfg.numerics.basis.get_or_insert(Basis::Auto);
        if let Basis::HalfWidth(m) = basis {
            if m == 0 || m > MAX_BASIS_HALF_WIDTH {
                return Err(invalid(
                    "basis",
                    format!("half-width must lie in 1..={MAX_BASIS_HALF_WIDTH}"),
                ));
            }
        }
        let tol = *cfg.numerics.kernel_tol.get_or_insert(DEFAULT_KERNEL_TOL);
        if !(1e-14..1.0).contains(&tol) {
            return Err(invalid(
                "kernel_tol",
                format!("must lie in [1e-14, 1), got {tol}"),
            ));
        }
        let spill = *cfg
            .numerics
            .spill_threshold
            .get_or_insert(zeno_rotor::kickedmap::DEFAULT_SPILL_THRESHOLD);
        if !(spill > 0.0 && spill <= 1.0) {
            return Err(invalid(
                "spill_threshold",
                format!("must lie in (0, 1], got {spill}"),
            ));
        }
        let trajectories = *cfg
            .ensemble
            .trajectories
            .get_or_insert(DEFAULT_TRAJECTORIES);
        if trajectories == 0 {
            return Err(invalid("trajectories", "must be at least 1"));
        }
        cfg.protocol = cfg
            .protocol
            .clone()
            .validated()
            .map_err(|e| invalid("protocol", e.to_string()))?;
    }

    if experiment.is_classical() {
        let particles = *cfg.ensemble.particles.get_or_insert(DEFAULT_PARTICLES);
        if particles < 2 {
            return Err(invalid("particles", "must be at least 2"));
        }
        if cfg.steps.unwrap_or(0) < MIN_FIT_POINTS {
            return Err(invalid(
                "steps",
                format!("a diffusion fit needs at least {MIN_FIT_POINTS} kicks"),
            ));
        }
    }

    if cfg.output.formats.is_empty() {
        return Err(invalid("formats", "at least one of csv, json is required"));
    }

    Ok(ResolvedConfig {
        config: cfg,
        warnings,
    })
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be finite and positive, got {value}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_kicked_config_gets_defaults() {
        let cfg =
            parse_config("experiment = \"kicked\"\nseed = 1\nsteps = 10\n[physics]\nk = 5.0\n")
                .unwrap()
                .config;
        assert_eq!(cfg.physics.tau, Some(DEFAULT_TAU));
        assert_eq!(cfg.physics.h0, Some(Hamiltonian::Rotor));
        assert_eq!(cfg.numerics.basis, Some(Basis::Auto));
        assert_eq!(cfg.numerics.kernel_tol, Some(DEFAULT_KERNEL_TOL));
        assert_eq!(cfg.ensemble.trajectories, Some(DEFAULT_TRAJECTORIES));
        assert_eq!(cfg.ensemble.particles, None);
        assert_eq!(cfg.protocol, MeasurementProtocol::none());
        assert_eq!(cfg.output, Output::default());
    }

    #[test]
    fn basis_accepts_auto_or_integer() {
        let parse = |v: &str| {
            parse_config(&format!(
                "experiment = \"kicked\"\nseed = 1\nsteps = 3\n[physics]\nk = 1.0\n[numerics]\nbasis = {v}\n"
            ))
        };
        assert_eq!(
            parse("\"auto\"").unwrap().config.numerics.basis,
            Some(Basis::Auto)
        );
        assert_eq!(
            parse("40").unwrap().config.numerics.basis,
            Some(Basis::HalfWidth(40))
        );
        assert!(parse("\"wide\"").is_err());
        assert!(parse("-3").is_err());
        assert!(parse("0").is_err());
    }

    #[test]
    fn resonant_tau_warns() {
        let resolved = parse_config(&format!(
            "experiment = \"kicked\"\nseed = 1\nsteps = 3\n[physics]\nk = 1.0\ntau = {}\n",
            4.0 * PI
        ))
        .unwrap();
        assert_eq!(resolved.warnings.len(), 1);
        assert!(resolved.warnings[0].contains("resonance"));
    }

    #[test]
    fn zeno_config_defaults_time_to_half_period() {
        let cfg = parse_config(
            "experiment = \"twolevel-zeno\"\nseed = 4\n[physics]\nomega = 2.0\nn_values = [1, 2]\n",
        )
        .unwrap()
        .config;
        assert_eq!(cfg.physics.total_time, Some(PI / 2.0));
        assert_eq!(cfg.ensemble.trajectories, Some(DEFAULT_ZENO_TRAJECTORIES));
        assert_eq!(cfg.numerics, Numerics::default());
    }
}
