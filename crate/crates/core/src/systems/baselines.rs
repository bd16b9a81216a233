//! Classical controllers used as comparison arms.

use serde::{Deserialize, Serialize};

use crate::sim::Controller;

use super::platoon::{PlatoonMode, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub target_distance: f64,
}

impl Default for PidGains {
    /// Overdamped distance tracking (`kd^2 > 4 kp`) without integral action;
    /// any integral gain makes overshoot unavoidable on a double integrator.
    fn default() -> Self {
        Self {
            kp: 0.5,
            ki: 0.0,
            kd: 2.0,
            target_distance: 5.5,
        }
    }
}

/// Distance-tracking follower: acceleration from the gap error, its rate
/// `v_l - v_f` and its integral. Integration pauses while the output is
/// saturated in the direction of the error.
///
/// In energy mode the acceleration is turned into wheel torque, served by
/// the motor first (regenerating when braking) and topped up by the brake.
#[derive(Debug, Clone)]
pub struct Pid {
    pub gains: PidGains,
    pub vehicle: VehicleParams,
    pub mode: PlatoonMode,
    integrals: Vec<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, vehicle: VehicleParams, mode: PlatoonMode) -> Self {
        Self {
            gains,
            vehicle,
            mode,
            integrals: Vec::new(),
        }
    }

    /// Commanded acceleration for observation `(v_l, v_f, d)`.
    pub fn acceleration(&mut self, slot: usize, obs: &[f64]) -> f64 {
        if self.integrals.len() <= slot {
            self.integrals.resize(slot + 1, 0.0);
        }
        let g = &self.gains;
        let (lo, hi) = self.vehicle.acceleration;
        let error = obs[2] - g.target_distance;
        let rate = obs[0] - obs[1];
        let integral = self.integrals[slot] + error * self.vehicle.dt;
        let raw = g.kp * error + g.ki * integral + g.kd * rate;
        let out = raw.clamp(lo, hi);
        let winding = (raw > hi && error > 0.0) || (raw < lo && error < 0.0);
        if !winding {
            self.integrals[slot] = integral;
        }
        out
    }

    /// Motor and brake torque producing `acc` at speed `v`.
    pub fn torques(&self, v: f64, acc: f64) -> (f64, f64) {
        let p = &self.vehicle;
        let drag = 0.5 * p.air_density * p.drag_coefficient * p.frontal_area * v * v;
        let wheel = p.wheel_radius * (p.mass * acc + p.rolling_resistance * p.mass * p.gravity * v + drag);
        let t_max = p.efficiency.max_torque;
        let motor = (wheel / p.gear_ratio).clamp(-t_max, t_max);
        let brake = (wheel - motor * p.gear_ratio).clamp(-p.max_brake_torque, 0.0);
        (motor, brake)
    }
}

impl Controller for Pid {
    fn reset(&mut self) {
        self.integrals.clear();
    }

    fn control(&mut self, slot: usize, obs: &[f64]) -> Vec<f64> {
        let acc = self.acceleration(slot, obs);
        match self.mode {
            PlatoonMode::Basic => vec![acc],
            PlatoonMode::Energy => {
                let (motor, brake) = self.torques(obs[1], acc);
                vec![motor, brake]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcGains {
    /// Surface slope in `sigma = theta_dot + lambda * theta`.
    pub lambda: f64,
    /// Switching gain, N.
    pub gain: f64,
    /// Boundary-layer width.
    pub boundary: f64,
}

impl Default for SmcGains {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            gain: 10.0,
            boundary: 1.0,
        }
    }
}

/// Sliding-mode angle stabilizer `f = K * sat(sigma / phi)`.
///
/// A positive force tips the pole back towards upright for positive
/// angles, hence the sign. The cart position and target are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Smc {
    pub gains: SmcGains,
}

impl Smc {
    pub fn force(&self, theta: f64, theta_dot: f64) -> f64 {
        let g = &self.gains;
        let sigma = theta_dot + g.lambda * theta;
        g.gain * (sigma / g.boundary).clamp(-1.0, 1.0)
    }
}

impl Controller for Smc {
    fn control(&mut self, _slot: usize, obs: &[f64]) -> Vec<f64> {
        vec![self.force(obs[2], obs[3])]
    }
}
