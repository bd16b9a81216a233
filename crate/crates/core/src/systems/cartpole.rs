//! Cart-pole with adversarial friction and a moving target.
//!
//! State `(x, x_dot, theta, theta_dot, x_hat)`. The defender pushes the cart
//! with force `f`; the attacker picks the friction coefficient `mu` and the
//! target velocity `eps_dot`.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::sim::{ActionSpace, SystemModel};
use crate::stl::{Atom, Formula, Requirement, RequirementSet, StlError};

use super::{Integrator, StateSampler, SystemError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half pole length.
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub force: (f64, f64),
    pub friction: (f64, f64),
    pub target_rate: (f64, f64),
    /// Lower distance bound; `None` drops the `d >= d_min` conjunct.
    pub d_min: Option<f64>,
    pub d_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub x_limit: (f64, f64),
    pub x_dot_limit: (f64, f64),
    pub theta_limit: (f64, f64),
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.05,
            integrator: Integrator::SemiImplicit,
            force: (-30.0, 30.0),
            friction: (0.0, 1.0),
            target_rate: (-5.0, 5.0),
            d_min: None,
            d_max: 1.5,
            theta_min: -0.785,
            theta_max: 0.785,
            x_limit: (-30.0, 30.0),
            x_dot_limit: (-10.0, 10.0),
            theta_limit: (-1.5, 1.5),
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        for (name, v) in [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_length", self.pole_length),
            ("gravity", self.gravity),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SystemError::NonPositive(name));
            }
        }
        for (name, (lo, hi)) in [
            ("force", self.force),
            ("friction", self.friction),
            ("target_rate", self.target_rate),
            ("x_limit", self.x_limit),
            ("x_dot_limit", self.x_dot_limit),
            ("theta_limit", self.theta_limit),
            ("theta bounds", (self.theta_min, self.theta_max)),
            ("distance bounds", (self.d_min.unwrap_or(0.0), self.d_max)),
        ] {
            if !(lo < hi) {
                return Err(SystemError::Unordered(name));
            }
        }
        Ok(())
    }

    /// Initial-state ranges: `x, x_dot, theta_dot ~ U(-1, 1)`,
    /// `theta ~ U(-0.1, 0.1)`, target starts on the cart.
    pub fn default_sampler() -> StateSampler {
        StateSampler {
            ranges: vec![(-1.0, 1.0), (-1.0, 1.0), (-0.1, 0.1), (-1.0, 1.0), (0.0, 0.0)],
            offsets: vec![(4, 0)],
        }
    }
}

pub const STATE_NAMES: [&str; 5] = ["x", "x_dot", "theta", "theta_dot", "x_hat"];

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    agent: ActionSpace,
    env: ActionSpace,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Result<Self, SystemError> {
        params.validate()?;
        Ok(Self {
            agent: ActionSpace::new(&[params.force])?,
            env: ActionSpace::new(&[params.friction, params.target_rate])?,
            params,
        })
    }

    /// Cart and pole accelerations.
    pub fn accelerations<S: Scalar>(&self, s: &[S], force: S, mu: S) -> (S, S) {
        let p = &self.params;
        let (x_dot, theta, theta_dot) = (s[1], s[2], s[3]);
        let (sin, cos) = (theta.sin(), theta.cos());
        let num = force - mu * x_dot + sin * (theta_dot * theta_dot) * (p.pole_mass * p.pole_length)
            - cos * sin * (p.pole_mass * p.gravity);
        let den = sin * sin * p.pole_mass + p.cart_mass;
        let x_acc = num / den;
        let theta_acc = (sin * p.gravity - cos * x_acc) / p.pole_length;
        (x_acc, theta_acc)
    }

    /// Kinetic plus potential energy of cart and pole (pole as a point mass
    /// at distance `l`, upright is the potential maximum).
    pub fn energy(&self, s: &[f64]) -> f64 {
        let p = &self.params;
        let (v, th, w) = (s[1], s[2], s[3]);
        0.5 * (p.cart_mass + p.pole_mass) * v * v
            + p.pole_mass * p.pole_length * v * w * th.cos()
            + 0.5 * p.pole_mass * p.pole_length * p.pole_length * w * w
            + p.pole_mass * p.gravity * p.pole_length * th.cos()
    }
}

impl SystemModel for CartPole {
    fn state_names(&self) -> Vec<String> {
        STATE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn agent_obs<S: Scalar>(&self, s: &[S], _slot: usize) -> Vec<S> {
        s.to_vec()
    }

    fn env_obs<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        s.to_vec()
    }

    fn agent_space(&self) -> &ActionSpace {
        &self.agent
    }

    fn env_space(&self) -> &ActionSpace {
        &self.env
    }

    fn agent_action_names(&self) -> Vec<String> {
        vec!["force".into()]
    }

    fn env_action_names(&self) -> Vec<String> {
        vec!["friction".into(), "target_rate".into()]
    }

    fn noise_dim(&self) -> usize {
        3
    }

    fn psi<S: Scalar>(&self, s: &[S], ua: &[S], ue: &[S], _t: f64) -> Vec<S> {
        let dt = self.params.dt;
        let (x_acc, theta_acc) = self.accelerations(s, ua[0], ue[0]);
        let dv = x_acc * dt;
        let dw = theta_acc * dt;
        match self.params.integrator {
            Integrator::SemiImplicit => vec![(s[1] + dv) * dt, dv, (s[3] + dw) * dt, dw, ue[1] * dt],
            Integrator::Explicit => vec![s[1] * dt, dv, s[3] * dt, dw, ue[1] * dt],
        }
    }

    fn monitored<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        vec![(s[0] - s[4]).abs(), s[2]]
    }

    fn monitored_names(&self) -> Vec<String> {
        vec!["d".into(), "theta".into()]
    }

    fn constraint_violations(&self, s: &[f64]) -> Vec<String> {
        let p = &self.params;
        let mut out = Vec::new();
        for (i, (lo, hi)) in [(0, p.x_limit), (1, p.x_dot_limit), (2, p.theta_limit)] {
            if s[i] < lo || s[i] > hi {
                out.push(STATE_NAMES[i].to_string());
            }
        }
        out
    }
}

/// `phi_d = G[0, h-1](d <= d_max [and d >= d_min])` and
/// `phi_theta = G[0, h-1](theta_min <= theta <= theta_max)`, weighted
/// `alpha` and `1 - alpha`.
pub fn requirements(params: &CartPoleParams, h: usize, alpha: f64) -> Result<RequirementSet, StlError> {
    if h == 0 {
        return Err(StlError::DepthExceedsWindow { depth: 0, window: 0 });
    }
    let d_body = match params.d_min {
        Some(lo) => Formula::in_box(0, lo, params.d_max),
        None => Formula::atom(Atom::le(0, params.d_max)),
    };
    let theta_body = Formula::in_box(1, params.theta_min, params.theta_max);
    RequirementSet::new(
        vec![
            Requirement {
                name: "phi_d".into(),
                formula: Formula::globally(0, h - 1, d_body),
                weight: alpha,
            },
            Requirement {
                name: "phi_theta".into(),
                formula: Formula::globally(0, h - 1, theta_body),
                weight: 1.0 - alpha,
            },
        ],
        h,
    )
}
