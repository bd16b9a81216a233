//! Agent/environment discrete-time evolution.
//!
//! A [`SystemModel`] provides the increment function `psi` and the
//! observation maps; [`rollout`] composes it with a defender (agent) and an
//! attacker (environment) for a fixed number of steps. Observations are
//! always taken from the state reached after the previous step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Scalar, Tape, Var};
use crate::policy::{Mlp, PolicyError};
use crate::stl::{StlError, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state component {component} ({name}) became non-finite at step {step}")]
    NonFinite {
        step: usize,
        component: usize,
        name: String,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("action bound {lo} > {hi}")]
    BadBounds { lo: f64, hi: f64 },
    #[error("noise sequence has {have} rows, {need} needed")]
    NoiseTooShort { have: usize, need: usize },
    #[error("rollout needs at least one step")]
    NoSteps,
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Stl(#[from] StlError),
}

/// Box-shaped action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionSpace {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self, SimError> {
        for &(lo, hi) in bounds {
            if !(lo <= hi) {
                return Err(SimError::BadBounds { lo, hi });
            }
        }
        Ok(Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo.iter().copied().zip(self.hi.iter().copied()).collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim() && u.iter().enumerate().all(|(i, &x)| self.lo[i] <= x && x <= self.hi[i])
    }
}

/// Componentwise `min(max(u, lo), hi)`.
pub fn clamp_action<S: Scalar>(u: &[S], space: &ActionSpace) -> Result<Vec<S>, SimError> {
    if u.len() != space.dim() {
        return Err(SimError::Dimension {
            expected: space.dim(),
            got: u.len(),
        });
    }
    Ok(u
        .iter()
        .enumerate()
        .map(|(i, &x)| x.clamp_to(space.lo[i], space.hi[i]))
        .collect())
}

/// Dynamics contract shared by every case study.
///
/// Methods are generic over [`Scalar`] so the same code runs on plain
/// floats and on a tape.
pub trait SystemModel: Sync {
    fn state_names(&self) -> Vec<String>;

    fn state_dim(&self) -> usize {
        self.state_names().len()
    }

    fn dt(&self) -> f64;

    /// Number of agent copies driven by the defender (followers in a chain).
    fn agent_slots(&self) -> usize {
        1
    }

    /// Observation of one agent slot.
    fn agent_obs<S: Scalar>(&self, s: &[S], slot: usize) -> Vec<S>;

    fn env_obs<S: Scalar>(&self, s: &[S]) -> Vec<S>;

    /// Action space of a single agent slot.
    fn agent_space(&self) -> &ActionSpace;

    fn env_space(&self) -> &ActionSpace;

    fn agent_action_names(&self) -> Vec<String>;

    fn env_action_names(&self) -> Vec<String>;

    fn noise_dim(&self) -> usize;

    /// State increment; `ua` holds the actions of all slots back to back.
    fn psi<S: Scalar>(&self, s: &[S], ua: &[S], ue: &[S], t: f64) -> Vec<S>;

    /// Projection applied after `s + psi` (e.g. physical speed limits).
    fn project<S: Scalar>(&self, s: Vec<S>) -> Vec<S> {
        s
    }

    /// Signals referenced by requirement atoms.
    fn monitored<S: Scalar>(&self, s: &[S]) -> Vec<S>;

    fn monitored_names(&self) -> Vec<String>;

    /// Monitored signals of an evaluation window. Models with window-local
    /// quantities (e.g. an energy budget) override this.
    fn monitored_window<S: Scalar>(&self, states: &[Vec<S>]) -> Vec<Vec<S>> {
        states.iter().map(|s| self.monitored(s)).collect()
    }

    /// True when [`SystemModel::monitored_window`] depends on where the
    /// window starts, so windows cannot be cut from one monitored trace.
    fn window_local(&self) -> bool {
        false
    }

    /// Names of soft state constraints violated by `s` (recorded, not fatal).
    fn constraint_violations(&self, _s: &[f64]) -> Vec<String> {
        Vec::new()
    }
}

/// `s' = project(s + psi(s, u_a, u_e, t))`, rejecting non-finite results.
pub fn step<M: SystemModel, S: Scalar>(
    m: &M,
    s: &[S],
    ua: &[S],
    ue: &[S],
    t: f64,
) -> Result<Vec<S>, SimError> {
    step_at(m, s, ua, ue, t, 0)
}

fn step_at<M: SystemModel, S: Scalar>(
    m: &M,
    s: &[S],
    ua: &[S],
    ue: &[S],
    t: f64,
    index: usize,
) -> Result<Vec<S>, SimError> {
    if s.len() != m.state_dim() {
        return Err(SimError::Dimension {
            expected: m.state_dim(),
            got: s.len(),
        });
    }
    let inc = m.psi(s, ua, ue, t);
    let next: Vec<S> = s.iter().zip(&inc).map(|(&x, &d)| x + d).collect();
    let next = m.project(next);
    if let Some(component) = next.iter().position(|x| !x.value().is_finite()) {
        return Err(SimError::NonFinite {
            step: index,
            component,
            name: m.state_names()[component].clone(),
        });
    }
    Ok(next)
}

/// Agent-side controller: a defender network or a classical baseline.
pub trait Controller {
    fn reset(&mut self) {}
    fn control(&mut self, slot: usize, obs: &[f64]) -> Vec<f64>;
}

/// Environment-side policy: an attacker network or a replayed sequence.
pub trait Adversary {
    fn reset(&mut self) {}
    fn attack(&mut self, step: usize, obs: &[f64], noise: &[f64]) -> Vec<f64>;
}

impl Controller for Mlp {
    fn control(&mut self, _slot: usize, obs: &[f64]) -> Vec<f64> {
        self.defender_forward(&self.params, obs)
            .expect("defender input width checked by rollout")
    }
}

impl Adversary for Mlp {
    fn attack(&mut self, _step: usize, obs: &[f64], noise: &[f64]) -> Vec<f64> {
        self.attacker_forward(&self.params, obs, noise)
            .expect("attacker input width checked by rollout")
    }
}

/// Replays a recorded environment action sequence, ignoring the state.
/// Past the end of the recording the last action is held.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub actions: Vec<Vec<f64>>,
}

impl Adversary for Replay {
    fn attack(&mut self, step: usize, _obs: &[f64], _noise: &[f64]) -> Vec<f64> {
        let i = step.min(self.actions.len().saturating_sub(1));
        self.actions[i].clone()
    }
}

/// Standard-normal noise, one row per step.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, steps: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// Full states `s_0 ..= s_H`.
    pub states: Vec<Vec<f64>>,
    /// Monitored signals of every state.
    pub trajectory: Trajectory,
    pub actions_a: Vec<Vec<f64>>,
    pub actions_e: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub t0: f64,
    /// `(step, constraint)` pairs for soft-constraint exits.
    pub flags: Vec<(usize, String)>,
}

impl RolloutRecord {
    pub fn steps(&self) -> usize {
        self.actions_a.len()
    }
}

fn check_dims<M: SystemModel>(
    m: &M,
    s0: &[f64],
    steps: usize,
    noise: &[Vec<f64>],
) -> Result<(), SimError> {
    if steps == 0 {
        return Err(SimError::NoSteps);
    }
    if s0.len() != m.state_dim() {
        return Err(SimError::Dimension {
            expected: m.state_dim(),
            got: s0.len(),
        });
    }
    if noise.len() < steps {
        return Err(SimError::NoiseTooShort {
            have: noise.len(),
            need: steps,
        });
    }
    if let Some(bad) = noise[..steps].iter().find(|z| z.len() != m.noise_dim()) {
        return Err(SimError::Dimension {
            expected: m.noise_dim(),
            got: bad.len(),
        });
    }
    Ok(())
}

/// Simulates `steps` transitions from `s0`.
pub fn rollout<M: SystemModel>(
    m: &M,
    s0: &[f64],
    defender: &mut dyn Controller,
    attacker: &mut dyn Adversary,
    steps: usize,
    noise: &[Vec<f64>],
) -> Result<RolloutRecord, SimError> {
    check_dims(m, s0, steps, noise)?;
    defender.reset();
    attacker.reset();
    let dt = m.dt();
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions_a = Vec::with_capacity(steps);
    let mut actions_e = Vec::with_capacity(steps);
    let mut flags = Vec::new();
    let mut s = s0.to_vec();
    for v in m.constraint_violations(&s) {
        flags.push((0, v));
    }
    for (j, z) in noise.iter().enumerate().take(steps) {
        let ue = attacker.attack(j, &m.env_obs(&s), z);
        let ue = clamp_action(&ue, m.env_space())?;
        let mut ua = Vec::with_capacity(m.agent_slots() * m.agent_space().dim());
        for slot in 0..m.agent_slots() {
            let u = defender.control(slot, &m.agent_obs(&s, slot));
            ua.extend(clamp_action(&u, m.agent_space())?);
        }
        let next = step_at(m, &s, &ua, &ue, j as f64 * dt, j)?;
        for v in m.constraint_violations(&next) {
            flags.push((j + 1, v));
        }
        states.push(std::mem::replace(&mut s, next));
        actions_a.push(ua);
        actions_e.push(ue);
    }
    states.push(s);
    Ok(RolloutRecord {
        trajectory: Trajectory::new(m.monitored_window(&states), dt)?,
        states,
        actions_a,
        actions_e,
        noise: noise[..steps].to_vec(),
        t0: 0.0,
        flags,
    })
}

/// Taped rollout: every state component is a node reachable from both
/// parameter vectors.
#[derive(Debug)]
pub struct DiffRollout<'t> {
    pub states: Vec<Vec<Var<'t>>>,
    pub actions_a: Vec<Vec<Var<'t>>>,
    pub actions_e: Vec<Vec<Var<'t>>>,
}

impl DiffRollout<'_> {
    pub fn state_values(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| s.iter().map(|v| v.value()).collect())
            .collect()
    }
}

/// Network pair with parameters already placed on a tape.
pub struct TapedPolicies<'a, 't> {
    pub defender: &'a Mlp,
    pub defender_params: &'a [Var<'t>],
    pub attacker: &'a Mlp,
    pub attacker_params: &'a [Var<'t>],
}

/// [`rollout`] recorded on `tape` with network defender and attacker.
///
/// Forward values equal those of [`rollout`] under the same noise.
pub fn rollout_diff<'t, M: SystemModel>(
    m: &M,
    s0: &[f64],
    policies: &TapedPolicies<'_, 't>,
    steps: usize,
    noise: &[Vec<f64>],
    tape: &'t Tape,
) -> Result<DiffRollout<'t>, SimError> {
    check_dims(m, s0, steps, noise)?;
    let dt = m.dt();
    let mut s = tape.lift_all(s0)?;
    let mut out = DiffRollout {
        states: Vec::with_capacity(steps + 1),
        actions_a: Vec::with_capacity(steps),
        actions_e: Vec::with_capacity(steps),
    };
    for (j, z) in noise.iter().enumerate().take(steps) {
        let z = tape.lift_all(z)?;
        let ue = policies
            .attacker
            .attacker_forward(policies.attacker_params, &m.env_obs(&s), &z)?;
        let ue = clamp_action(&ue, m.env_space())?;
        let mut ua = Vec::with_capacity(m.agent_slots() * m.agent_space().dim());
        for slot in 0..m.agent_slots() {
            let u = policies
                .defender
                .defender_forward(policies.defender_params, &m.agent_obs(&s, slot))?;
            ua.extend(clamp_action(&u, m.agent_space())?);
        }
        let next = step_at(m, &s, &ua, &ue, j as f64 * dt, j)?;
        out.states.push(std::mem::replace(&mut s, next));
        out.actions_a.push(ua);
        out.actions_e.push(ue);
    }
    out.states.push(s);
    Ok(out)
}
