//! Experiment configuration: JSON files, named presets and their hash.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::policy::{Architecture, Mlp, PolicyError};
use crate::sim::SystemModel;
use crate::stl::{Requirement, RequirementSet, StlError};
use crate::systems::baselines::{PidGains, SmcGains};
use crate::systems::{
    cartpole, platoon, AnySystem, CartPole, CartPoleParams, Platoon, PlatoonMode, StateSampler, SystemError,
    VehicleParams,
};
use crate::train::{rng_for, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Cartpole {
        #[serde(default)]
        params: CartPoleParams,
    },
    PlatoonBasic {
        #[serde(default)]
        params: VehicleParams,
    },
    PlatoonEnergy {
        #[serde(default)]
        params: VehicleParams,
    },
    /// `cars`-car platoon in basic mode.
    PlatoonChain {
        cars: usize,
        #[serde(default)]
        params: VehicleParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub pid: PidGains,
    pub smc: SmcGains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestConfig {
    pub n: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            horizon: 200,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Evaluation window `h` in states.
    pub window: usize,
    /// Weight of the first built-in requirement; the second gets `1 - alpha`.
    pub alpha: f64,
    /// Replaces the built-in requirements when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirements: Option<Vec<Requirement>>,
    /// Replaces the built-in initial-state sampler when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<StateSampler>,
    pub attacker: Architecture,
    pub defender: Architecture,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub test: TestConfig,
    /// Root seed for initialization, sampling and training noise.
    #[serde(default)]
    pub seed: u64,
}

pub const PRESETS: [&str; 3] = ["cartpole_table1", "platoon_table2", "platoon_basic"];

/// Cart-pole training setup: 500 outer iterations of 1 attacker and 2
/// defender updates, `H = 40`, `h = 10`, `alpha = 0.4`.
pub fn cartpole_table1() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig::Cartpole {
            params: CartPoleParams::default(),
        },
        train: TrainConfig::default(),
        window: 10,
        alpha: 0.4,
        requirements: None,
        sampler: None,
        attacker: Architecture::new(vec![10]),
        defender: Architecture::new(vec![10, 10]),
        baselines: BaselineConfig::default(),
        test: TestConfig::default(),
        seed: 0,
    }
}

/// Two-car platoon with energy requirements: 1000 outer iterations,
/// `alpha = 0.98`.
pub fn platoon_table2() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig::PlatoonEnergy {
            params: VehicleParams::default(),
        },
        train: TrainConfig {
            iterations: 1000,
            ..TrainConfig::default()
        },
        alpha: 0.98,
        ..cartpole_table1()
    }
}

/// Two-car platoon with acceleration inputs and only the distance requirement.
pub fn platoon_basic() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig::PlatoonBasic {
            params: VehicleParams::default(),
        },
        ..platoon_table2()
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    match name {
        "cartpole_table1" => Ok(cartpole_table1()),
        "platoon_table2" => Ok(platoon_table2()),
        "platoon_basic" => Ok(platoon_basic()),
        other => Err(ConfigError::UnknownPreset(other.into())),
    }
}

/// Recursively overlays `patch` on `base`; objects merge, anything else
/// replaces.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => deep_merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

impl ExperimentConfig {
    /// Parses a config document. A top-level `"preset"` key starts from
    /// that preset and overlays the remaining keys on it.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut doc: Value = serde_json::from_str(text)?;
        let base = match doc.as_object_mut().and_then(|o| o.remove("preset")) {
            Some(Value::String(name)) => Some(name),
            Some(other) => return Err(ConfigError::Invalid(format!("preset must be a string, got {other}"))),
            None => None,
        };
        let cfg: Self = match base {
            Some(name) => {
                let mut merged = serde_json::to_value(preset(&name)?)?;
                // a system switch replaces the whole block instead of merging
                // parameters of different systems
                if let (Some(new), Some(old)) = (doc.get("system"), merged.get("system")) {
                    if new.get("kind").is_some() && new.get("kind") != old.get("kind") {
                        merged["system"] = Value::Null;
                    }
                }
                deep_merge(&mut merged, doc);
                serde_json::from_value(merged)?
            }
            None => serde_json::from_value(doc)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sys = self.build_system()?;
        let reqs = self.requirements_for(&sys)?;
        self.train.validate(reqs.window)?;
        self.sampler_for(&sys).validate(sys.state_dim())?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::Invalid(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if self.test.horizon + 1 < reqs.window {
            return Err(ConfigError::Invalid("test horizon is shorter than the window".into()));
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<AnySystem, ConfigError> {
        Ok(match &self.system {
            SystemConfig::Cartpole { params } => AnySystem::CartPole(CartPole::new(params.clone())?),
            SystemConfig::PlatoonBasic { params } => {
                AnySystem::Platoon(Platoon::two_car(params.clone(), PlatoonMode::Basic)?)
            }
            SystemConfig::PlatoonEnergy { params } => {
                AnySystem::Platoon(Platoon::two_car(params.clone(), PlatoonMode::Energy)?)
            }
            SystemConfig::PlatoonChain { cars, params } => {
                AnySystem::Platoon(Platoon::new(params.clone(), PlatoonMode::Basic, *cars)?)
            }
        })
    }

    pub fn requirements_for(&self, sys: &AnySystem) -> Result<RequirementSet, ConfigError> {
        let set = match (&self.requirements, sys) {
            (Some(reqs), _) => RequirementSet::new(reqs.clone(), self.window)?,
            (None, AnySystem::CartPole(m)) => cartpole::requirements(&m.params, self.window, self.alpha)?,
            (None, AnySystem::Platoon(m)) => platoon::requirements(m, self.window, self.alpha)?,
        };
        let dim = sys.monitored_names().len();
        for r in &set.requirements {
            r.formula.validate(dim)?;
        }
        Ok(set)
    }

    pub fn sampler_for(&self, sys: &AnySystem) -> StateSampler {
        match (&self.sampler, sys) {
            (Some(s), _) => s.clone(),
            (None, AnySystem::CartPole(_)) => CartPoleParams::default_sampler(),
            (None, AnySystem::Platoon(m)) => m.default_sampler(),
        }
    }

    /// Freshly initialized `(attacker, defender)` for this config's seed.
    pub fn init_networks(&self, sys: &AnySystem) -> Result<(Mlp, Mlp), ConfigError> {
        let mut rng = rng_for(self.seed, "init");
        let a_in = sys.env_obs(&vec![0.0; sys.state_dim()]).len() + sys.noise_dim();
        let d_in = sys.agent_obs(&vec![0.0; sys.state_dim()], 0).len();
        let attacker = Mlp::init(
            &mut rng,
            self.attacker.sizes(a_in, sys.env_space().dim()),
            sys.env_space().bounds(),
            self.attacker.negative_slope,
        )?;
        let defender = Mlp::init(
            &mut rng,
            self.defender.sizes(d_in, sys.agent_space().dim()),
            sys.agent_space().bounds(),
            self.defender.negative_slope,
        )?;
        Ok((attacker, defender))
    }

    /// Digest of everything that determines trained weights: the test and
    /// baseline sections are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("test");
            o.remove("baselines");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}
