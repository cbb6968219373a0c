//! Experiment files: flat keys grouped in TOML sections.
//!
//! ```toml
//! preset = "test1"          # optional starting point
//! [run]
//! tau = 5e-4
//! [mesh]
//! working = 24
//! [[load]]
//! id = "g1"
//! traction = "(x, y)"
//! ```
//!
//! Keys left out keep the value of the preset (or of the defaults).

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cavphase_core::inversion::{EpsilonSchedule, StopNorm};
use cavphase_core::mesh::Side;
use cavphase_core::synth::{NoiseScaling, NoiseSpec};

use crate::experiment::{parse_shape, shape_to_string, Experiment, LoadSpec};
use crate::presets::{disk_target, preset, PRESET_NAMES};

#[derive(Debug)]
pub enum ConfigError {
    Toml(toml::de::Error),
    UnknownPreset(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Toml(e) => write!(f, "{e}"),
            ConfigError::UnknownPreset(name) => {
                write!(f, "unknown preset '{name}'; available: {}", PRESET_NAMES.join(", "))
            }
            ConfigError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_period: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_vertices: Option<usize>,
    /// Iteration of the ε switch; 0 disables it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_switch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_divisor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backtracking: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_norm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pdas_max_iter: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub working: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub id: String,
    pub traction: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<Vec<LoadEntry>>,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

pub fn load_preset(name: &str) -> Result<Experiment, ConfigError> {
    preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

/// Experiment used when neither a preset nor loads are given.
fn defaults() -> Experiment {
    let mut e = preset("test1").expect("built in");
    e.name = "custom".into();
    e.target = disk_target();
    e
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(ConfigError::Toml)
    }

    pub fn into_experiment(self) -> Result<Experiment, ConfigError> {
        let mut e = match &self.preset {
            Some(p) => load_preset(p)?,
            None => defaults(),
        };
        if let Some(n) = self.name {
            e.name = n;
        }
        let r = self.run;
        let c = &mut e.run;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = r.$f { c.$f = v; } )* };
        }
        set!(tol, alpha_tilde, tau, epsilon, delta, mu, lambda, refine_period, refine_fraction, max_vertices);
        set!(d_band, max_iterations, backtracking);
        if let Some(s) = r.stop_norm {
            c.stop_norm = StopNorm::from_name(&s).ok_or_else(|| invalid(format!("unknown stop_norm '{s}'")))?;
        }
        if let Some(k) = r.pdas_max_iter {
            c.pdas.max_iter = k;
        }
        match (r.epsilon_switch, r.epsilon_divisor) {
            (Some(0), _) => c.epsilon_schedule = None,
            (Some(k), d) => {
                let mut s = EpsilonSchedule::new(k);
                if let Some(d) = d {
                    s.divisor = d;
                }
                c.epsilon_schedule = Some(s);
            }
            (None, Some(d)) => match c.epsilon_schedule.as_mut() {
                Some(s) => s.divisor = d,
                None => return Err(invalid("epsilon_divisor given without epsilon_switch")),
            },
            (None, None) => {}
        }
        if let Some(w) = self.mesh.working {
            e.working = w;
        }
        if let Some(g) = self.mesh.generator {
            e.generator = g;
        }
        if let Some(sides) = self.mesh.dirichlet {
            e.dirichlet = sides
                .iter()
                .map(|s| Side::from_name(s).ok_or_else(|| invalid(format!("unknown side '{s}'"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(level) = self.noise.level {
            e.noise.level = level;
        }
        if let Some(seed) = self.noise.seed {
            e.noise.seed = seed;
        }
        if let Some(s) = self.noise.scaling {
            e.noise.scaling =
                NoiseScaling::from_name(&s).ok_or_else(|| invalid(format!("unknown noise scaling '{s}'")))?;
        }
        e.run.noise_seed = e.noise.seed;
        if let Some(shape) = self.target.and_then(|t| t.shape) {
            e.target = parse_shape(&shape).map_err(|err| invalid(err.to_string()))?;
        }
        if let Some(loads) = self.load {
            e.loads = loads
                .iter()
                .map(|l| {
                    LoadSpec::parse(&l.id, &l.traction)
                        .map_err(|err| invalid(format!("load '{}': {err}", l.id)))
                })
                .collect::<Result<_, _>>()?;
        }
        validate(&e)?;
        Ok(e)
    }

    /// Fully populated file describing `e`.
    pub fn from_experiment(e: &Experiment) -> Self {
        let c = &e.run;
        ConfigFile {
            preset: None,
            name: Some(e.name.clone()),
            run: RunSection {
                tol: Some(c.tol),
                alpha_tilde: Some(c.alpha_tilde),
                tau: Some(c.tau),
                epsilon: Some(c.epsilon),
                delta: Some(c.delta),
                mu: Some(c.mu),
                lambda: Some(c.lambda),
                refine_period: Some(c.refine_period),
                refine_fraction: Some(c.refine_fraction),
                max_vertices: Some(c.max_vertices),
                epsilon_switch: Some(c.epsilon_schedule.map_or(0, |s| s.at_iteration)),
                epsilon_divisor: c.epsilon_schedule.map(|s| s.divisor),
                d_band: Some(c.d_band),
                max_iterations: Some(c.max_iterations),
                backtracking: Some(c.backtracking),
                stop_norm: Some(c.stop_norm.name().to_string()),
                pdas_max_iter: Some(c.pdas.max_iter),
            },
            mesh: MeshSection {
                working: Some(e.working),
                generator: Some(e.generator),
                dirichlet: Some(e.dirichlet.iter().map(|s| s.name().to_string()).collect()),
            },
            noise: NoiseSection {
                level: Some(e.noise.level),
                seed: Some(e.noise.seed),
                scaling: Some(e.noise.scaling.name().to_string()),
            },
            target: Some(TargetSection {
                shape: Some(shape_to_string(&e.target)),
            }),
            load: Some(
                e.loads
                    .iter()
                    .map(|l| LoadEntry {
                        id: l.id.clone(),
                        traction: l.expr.text.clone(),
                    })
                    .collect(),
            ),
        }
    }
}

fn validate(e: &Experiment) -> Result<(), ConfigError> {
    e.run.validate().map_err(|err| invalid(err.to_string()))?;
    e.noise.validate().map_err(|err| invalid(err.to_string()))?;
    if e.loads.is_empty() {
        return Err(invalid("at least one load is required"));
    }
    if e.working < 2 {
        return Err(invalid("mesh.working must be at least 2"));
    }
    if e.generator <= e.working {
        return Err(invalid("mesh.generator must be finer than mesh.working"));
    }
    if !e.target.inside_square(e.run.d_band) {
        return Err(invalid("target must stay clear of the frozen boundary band"));
    }
    let mut ids: Vec<&str> = e.loads.iter().map(|l| l.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != e.loads.len() {
        return Err(invalid("load ids must be distinct"));
    }
    Ok(())
}

pub fn parse_experiment(text: &str) -> Result<Experiment, ConfigError> {
    ConfigFile::parse(text)?.into_experiment()
}

/// Canonical text of `e`; reading it back gives the same experiment.
pub fn experiment_to_string(e: &Experiment) -> String {
    toml::to_string(&ConfigFile::from_experiment(e)).expect("config serializes")
}

/// Short content hash of the canonical text.
pub fn config_hash(e: &Experiment) -> String {
    let digest = Sha256::digest(experiment_to_string(e).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Applies command-line overrides of the noise settings.
pub fn override_noise(e: &mut Experiment, level: Option<f64>, seed: Option<u64>) -> Result<(), ConfigError> {
    let spec = NoiseSpec {
        level: level.unwrap_or(e.noise.level),
        seed: seed.unwrap_or(e.noise.seed),
        scaling: e.noise.scaling,
    };
    spec.validate().map_err(|err| invalid(err.to_string()))?;
    e.noise = spec;
    e.run.noise_seed = spec.seed;
    Ok(())
}
