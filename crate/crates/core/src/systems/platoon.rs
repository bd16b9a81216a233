//! Longitudinal car platoon: an attacker-driven leader followed by one or
//! more cars sharing the defender policy.
//!
//! State layout: `(x, v)` per car from the leader backwards, then (energy
//! mode only) the cumulative electrical energy drawn by each follower, in J.
//! Monitored energy is reported in kJ.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::sim::{ActionSpace, SystemModel};
use crate::stl::{Atom, Formula, Requirement, RequirementSet, StlError};

use super::efficiency::{motor_power, EfficiencyMap};
use super::{Integrator, StateSampler, SystemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatoonMode {
    /// Policies output accelerations directly.
    Basic,
    /// Policies output motor and brake torques; followers' energy is tracked.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub wheel_radius: f64,
    pub gear_ratio: f64,
    /// Rolling loss per unit speed, multiplies `m * g * v`.
    pub rolling_resistance: f64,
    pub air_density: f64,
    pub drag_coefficient: f64,
    pub frontal_area: f64,
    /// Basic-mode friction coefficient.
    pub friction: f64,
    pub gravity: f64,
    /// Brake torque range at the wheel, `T_b` in `[-max_brake_torque, 0]`.
    pub max_brake_torque: f64,
    pub efficiency: EfficiencyMap,
    pub acceleration: (f64, f64),
    pub velocity: (f64, f64),
    pub dt: f64,
    pub integrator: Integrator,
    pub d_min: f64,
    pub d_max: f64,
    /// Energy budget per evaluation window, kJ.
    pub e_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 150.0,
            wheel_radius: 0.33,
            gear_ratio: 1.0,
            rolling_resistance: 5e-4,
            air_density: 1.225,
            drag_coefficient: 0.3,
            frontal_area: 1.5,
            friction: 0.01,
            gravity: 9.81,
            max_brake_torque: 250.0,
            efficiency: EfficiencyMap::default(),
            acceleration: (-5.0, 5.0),
            velocity: (0.0, 37.0),
            dt: 0.05,
            integrator: Integrator::SemiImplicit,
            d_min: 1.0,
            d_max: 10.0,
            e_max: 30.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        for (name, v) in [
            ("mass", self.mass),
            ("wheel_radius", self.wheel_radius),
            ("gear_ratio", self.gear_ratio),
            ("rolling_resistance", self.rolling_resistance),
            ("air_density", self.air_density),
            ("drag_coefficient", self.drag_coefficient),
            ("frontal_area", self.frontal_area),
            ("friction", self.friction),
            ("gravity", self.gravity),
            ("max_brake_torque", self.max_brake_torque),
            ("dt", self.dt),
            ("e_max", self.e_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SystemError::NonPositive(name));
            }
        }
        for (name, (lo, hi)) in [
            ("acceleration", self.acceleration),
            ("velocity", self.velocity),
            ("distance bounds", (self.d_min, self.d_max)),
        ] {
            if !(lo < hi) {
                return Err(SystemError::Unordered(name));
            }
        }
        self.efficiency.validate()
    }

    /// Motor speed for a vehicle speed.
    pub fn motor_speed<S: Scalar>(&self, v: S) -> S {
        v * (self.gear_ratio / self.wheel_radius)
    }

    /// `m x'' = T_w / R_e - C_r m g v - rho C_a S v^2 / 2` with
    /// `T_w = T_m r_g + T_b`; motor torque is cut above the speed cap.
    pub fn energy_acceleration<S: Scalar>(&self, v: S, motor: S, brake: S) -> S {
        let motor = self.effective_torque(v, motor);
        let wheel = motor * self.gear_ratio + brake;
        let drag = v * v * (0.5 * self.air_density * self.drag_coefficient * self.frontal_area);
        (wheel / self.wheel_radius - v * (self.rolling_resistance * self.mass * self.gravity) - drag) / self.mass
    }

    fn effective_torque<S: Scalar>(&self, v: S, motor: S) -> S {
        if self.motor_speed(v).value() > self.efficiency.max_speed {
            motor * 0.0
        } else {
            motor
        }
    }

    /// Electrical power drawn at speed `v` with motor torque `motor`.
    pub fn power<S: Scalar>(&self, v: S, motor: S) -> S {
        let motor = self.effective_torque(v, motor);
        motor_power(&self.efficiency, motor, self.motor_speed(v))
    }
}

#[derive(Debug, Clone)]
pub struct Platoon {
    pub params: VehicleParams,
    pub mode: PlatoonMode,
    cars: usize,
    agent: ActionSpace,
    env: ActionSpace,
}

impl Platoon {
    pub fn new(params: VehicleParams, mode: PlatoonMode, cars: usize) -> Result<Self, SystemError> {
        if cars < 2 {
            return Err(SystemError::TooFewCars(cars));
        }
        params.validate()?;
        let space = match mode {
            PlatoonMode::Basic => ActionSpace::new(&[params.acceleration])?,
            PlatoonMode::Energy => {
                let t = params.efficiency.max_torque;
                ActionSpace::new(&[(-t, t), (-params.max_brake_torque, 0.0)])?
            }
        };
        Ok(Self {
            params,
            mode,
            cars,
            agent: space.clone(),
            env: space,
        })
    }

    pub fn two_car(params: VehicleParams, mode: PlatoonMode) -> Result<Self, SystemError> {
        Self::new(params, mode, 2)
    }

    pub fn cars(&self) -> usize {
        self.cars
    }

    fn car_label(&self, i: usize) -> String {
        match (i, self.cars) {
            (0, _) => "l".into(),
            (_, 2) => "f".into(),
            _ => format!("f{i}"),
        }
    }

    /// Uniform initial states: gaps `U(2, 6)` m, speeds `U(15, 20)` m/s,
    /// last follower at the origin, no energy used.
    pub fn default_sampler(&self) -> StateSampler {
        let mut ranges = Vec::new();
        for i in 0..self.cars {
            ranges.push(if i + 1 == self.cars { (0.0, 0.0) } else { (2.0, 6.0) });
            ranges.push((15.0, 20.0));
        }
        if self.mode == PlatoonMode::Energy {
            ranges.extend(std::iter::repeat_n((0.0, 0.0), self.cars - 1));
        }
        let offsets = (0..self.cars - 1).rev().map(|i| (2 * i, 2 * i + 2)).collect();
        StateSampler { ranges, offsets }
    }

    fn pair_obs<S: Scalar>(&self, s: &[S], front: usize) -> Vec<S> {
        let (a, b) = (2 * front, 2 * front + 2);
        vec![s[a + 1], s[b + 1], s[a] - s[b]]
    }

    fn controls(&self) -> usize {
        self.agent.dim()
    }
}

impl SystemModel for Platoon {
    fn state_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.cars {
            let c = self.car_label(i);
            names.push(format!("x_{c}"));
            names.push(format!("v_{c}"));
        }
        if self.mode == PlatoonMode::Energy {
            for i in 1..self.cars {
                names.push(format!("energy_{}", self.car_label(i)));
            }
        }
        names
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn agent_slots(&self) -> usize {
        self.cars - 1
    }

    fn agent_obs<S: Scalar>(&self, s: &[S], slot: usize) -> Vec<S> {
        self.pair_obs(s, slot)
    }

    fn env_obs<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        self.pair_obs(s, 0)
    }

    fn agent_space(&self) -> &ActionSpace {
        &self.agent
    }

    fn env_space(&self) -> &ActionSpace {
        &self.env
    }

    fn agent_action_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..self.cars {
            let c = self.car_label(i);
            match self.mode {
                PlatoonMode::Basic => names.push(format!("a_{c}")),
                PlatoonMode::Energy => {
                    names.push(format!("motor_{c}"));
                    names.push(format!("brake_{c}"));
                }
            }
        }
        names
    }

    fn env_action_names(&self) -> Vec<String> {
        match self.mode {
            PlatoonMode::Basic => vec!["a_l".into()],
            PlatoonMode::Energy => vec!["motor_l".into(), "brake_l".into()],
        }
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn psi<S: Scalar>(&self, s: &[S], ua: &[S], ue: &[S], _t: f64) -> Vec<S> {
        let p = &self.params;
        let k = self.controls();
        let mut inc = Vec::with_capacity(s.len());
        let mut energy = Vec::new();
        for i in 0..self.cars {
            let u = if i == 0 { ue } else { &ua[(i - 1) * k..i * k] };
            let v = s[2 * i + 1];
            let acc = match self.mode {
                PlatoonMode::Basic => u[0] - p.friction * p.gravity,
                PlatoonMode::Energy => {
                    if i > 0 {
                        energy.push(p.power(v, u[0]) * p.dt);
                    }
                    p.energy_acceleration(v, u[0], u[1])
                        .clamp_to(p.acceleration.0, p.acceleration.1)
                }
            };
            let v_next = (v + acc * p.dt).clamp_to(p.velocity.0, p.velocity.1);
            inc.push(match p.integrator {
                Integrator::SemiImplicit => v_next * p.dt,
                Integrator::Explicit => v * p.dt,
            });
            inc.push(v_next - v);
        }
        inc.extend(energy);
        inc
    }

    fn project<S: Scalar>(&self, mut s: Vec<S>) -> Vec<S> {
        let (lo, hi) = self.params.velocity;
        for i in 0..self.cars {
            s[2 * i + 1] = s[2 * i + 1].clamp_to(lo, hi);
        }
        s
    }

    fn monitored<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        let mut out: Vec<S> = (0..self.cars - 1).map(|i| s[2 * i] - s[2 * i + 2]).collect();
        if self.mode == PlatoonMode::Energy {
            out.extend(s[2 * self.cars..].iter().map(|&e| e * 1e-3));
        }
        out
    }

    fn monitored_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..self.cars)
            .map(|i| match self.cars {
                2 => "d".to_string(),
                _ => format!("d_{i}"),
            })
            .collect();
        if self.mode == PlatoonMode::Energy {
            for i in 1..self.cars {
                names.push(format!("e_{}", self.car_label(i)));
            }
        }
        names
    }

    /// Energy is counted from the start of the window and never drops
    /// below zero through regeneration.
    fn monitored_window<S: Scalar>(&self, states: &[Vec<S>]) -> Vec<Vec<S>> {
        let mut out: Vec<Vec<S>> = states.iter().map(|s| self.monitored(s)).collect();
        if self.mode == PlatoonMode::Basic || states.is_empty() {
            return out;
        }
        let gaps = self.cars - 1;
        let base = 2 * self.cars;
        for f in 0..gaps {
            let mut e = states[0][base + f].constant_like(0.0);
            out[0][gaps + f] = e;
            for k in 1..states.len() {
                let spent = states[k][base + f] - states[k - 1][base + f];
                e = (e + spent).max2(e.constant_like(0.0));
                out[k][gaps + f] = e * 1e-3;
            }
        }
        out
    }

    fn window_local(&self) -> bool {
        self.mode == PlatoonMode::Energy
    }

    fn constraint_violations(&self, s: &[f64]) -> Vec<String> {
        if self.mode == PlatoonMode::Basic {
            return Vec::new();
        }
        (0..self.cars)
            .filter(|&i| self.params.motor_speed(s[2 * i + 1]) > self.params.efficiency.max_speed)
            .map(|i| format!("motor_speed_{}", self.car_label(i)))
            .collect()
    }
}

/// `phi_d = G[0, h-1](d_min <= d <= d_max)` over every gap and, in energy
/// mode, `phi_e = G[0, h-1](e <= e_max)` over every follower, weighted
/// `alpha` and `1 - alpha`.
pub fn requirements(model: &Platoon, h: usize, alpha: f64) -> Result<RequirementSet, StlError> {
    if h == 0 {
        return Err(StlError::DepthExceedsWindow { depth: 0, window: 0 });
    }
    let p = &model.params;
    let gaps = model.cars - 1;
    let conj = |parts: Vec<Formula>| parts.into_iter().reduce(Formula::and).expect("at least one gap");
    let d_body = conj((0..gaps).map(|i| Formula::in_box(i, p.d_min, p.d_max)).collect());
    let mut reqs = vec![Requirement {
        name: "phi_d".into(),
        formula: Formula::globally(0, h - 1, d_body),
        weight: match model.mode {
            PlatoonMode::Basic => 1.0,
            PlatoonMode::Energy => alpha,
        },
    }];
    if model.mode == PlatoonMode::Energy {
        let e_body = conj((0..gaps).map(|i| Formula::atom(Atom::le(gaps + i, p.e_max))).collect());
        reqs.push(Requirement {
            name: "phi_e".into(),
            formula: Formula::globally(0, h - 1, e_body),
            weight: 1.0 - alpha,
        });
    }
    RequirementSet::new(reqs, h)
}
