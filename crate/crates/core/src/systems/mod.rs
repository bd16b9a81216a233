//! Case studies: cart-pole and car platooning, plus classical baselines.

pub mod baselines;
pub mod cartpole;
pub mod efficiency;
pub mod platoon;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::sim::{ActionSpace, SimError, SystemModel};

pub use cartpole::{CartPole, CartPoleParams};
pub use platoon::{Platoon, PlatoonMode, VehicleParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("{0}: lower bound must be below upper bound")]
    Unordered(&'static str),
    #[error("a platoon needs at least 2 cars, got {0}")]
    TooFewCars(usize),
    #[error("sampler has {got} ranges for a {expected}-dimensional state")]
    SamplerDimension { expected: usize, got: usize },
    #[error("sampler offset ({0}, {1}) is out of range")]
    SamplerOffset(usize, usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Time stepping for second-order states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Velocities first, positions from the updated velocities.
    #[default]
    SemiImplicit,
    /// Positions from the velocities at the start of the step.
    Explicit,
}

/// Per-component uniform initial states. After sampling, each `(dst, src)`
/// offset adds component `src` to component `dst`, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSampler {
    pub ranges: Vec<(f64, f64)>,
    #[serde(default)]
    pub offsets: Vec<(usize, usize)>,
}

impl StateSampler {
    pub fn validate(&self, dim: usize) -> Result<(), SystemError> {
        if self.ranges.len() != dim {
            return Err(SystemError::SamplerDimension {
                expected: dim,
                got: self.ranges.len(),
            });
        }
        for &(lo, hi) in &self.ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SystemError::Unordered("sampler range"));
            }
        }
        for &(dst, src) in &self.offsets {
            if dst >= dim || src >= dim {
                return Err(SystemError::SamplerOffset(dst, src));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, SystemError> {
        self.validate(self.ranges.len())?;
        let mut s: Vec<f64> = self
            .ranges
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..hi) })
            .collect();
        for &(dst, src) in &self.offsets {
            s[dst] += s[src];
        }
        Ok(s)
    }
}

/// Any of the shipped systems behind one concrete type.
#[derive(Debug, Clone)]
pub enum AnySystem {
    CartPole(CartPole),
    Platoon(Platoon),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            AnySystem::CartPole($m) => $body,
            AnySystem::Platoon($m) => $body,
        }
    };
}

impl SystemModel for AnySystem {
    fn state_names(&self) -> Vec<String> {
        delegate!(self, m => m.state_names())
    }
    fn dt(&self) -> f64 {
        delegate!(self, m => m.dt())
    }
    fn agent_slots(&self) -> usize {
        delegate!(self, m => m.agent_slots())
    }
    fn agent_obs<S: Scalar>(&self, s: &[S], slot: usize) -> Vec<S> {
        delegate!(self, m => m.agent_obs(s, slot))
    }
    fn env_obs<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        delegate!(self, m => m.env_obs(s))
    }
    fn agent_space(&self) -> &ActionSpace {
        delegate!(self, m => m.agent_space())
    }
    fn env_space(&self) -> &ActionSpace {
        delegate!(self, m => m.env_space())
    }
    fn agent_action_names(&self) -> Vec<String> {
        delegate!(self, m => m.agent_action_names())
    }
    fn env_action_names(&self) -> Vec<String> {
        delegate!(self, m => m.env_action_names())
    }
    fn noise_dim(&self) -> usize {
        delegate!(self, m => m.noise_dim())
    }
    fn psi<S: Scalar>(&self, s: &[S], ua: &[S], ue: &[S], t: f64) -> Vec<S> {
        delegate!(self, m => m.psi(s, ua, ue, t))
    }
    fn project<S: Scalar>(&self, s: Vec<S>) -> Vec<S> {
        delegate!(self, m => m.project(s))
    }
    fn monitored<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        delegate!(self, m => m.monitored(s))
    }
    fn monitored_names(&self) -> Vec<String> {
        delegate!(self, m => m.monitored_names())
    }
    fn monitored_window<S: Scalar>(&self, states: &[Vec<S>]) -> Vec<Vec<S>> {
        delegate!(self, m => m.monitored_window(states))
    }
    fn window_local(&self) -> bool {
        delegate!(self, m => m.window_local())
    }
    fn constraint_violations(&self, s: &[f64]) -> Vec<String> {
        delegate!(self, m => m.constraint_violations(s))
    }
}
