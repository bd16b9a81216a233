//! Smooth surrogate of an electric powertrain efficiency map.
//!
//! With normalized torque `u = |T| / T_max` and speed `w = omega / omega_max`,
//! `eta = edge + (peak - edge) * (1 - a^2) * (1 - b^2)` where `a` and `b` are
//! the distances from the sweet spot scaled so every map edge sits at 1.
//! The surface is symmetric in the sign of the torque.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;

/// 1140 rpm in rad/s.
pub const DEFAULT_MAX_SPEED: f64 = 1140.0 * std::f64::consts::PI / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyMap {
    /// Maximum motor torque, N*m.
    pub max_torque: f64,
    /// Maximum motor speed, rad/s.
    pub max_speed: f64,
    pub peak: f64,
    pub edge: f64,
    /// Sweet spot as a fraction of `max_torque`.
    pub peak_torque: f64,
    /// Sweet spot as a fraction of `max_speed`.
    pub peak_speed: f64,
}

impl Default for EfficiencyMap {
    fn default() -> Self {
        Self {
            max_torque: 180.0,
            max_speed: DEFAULT_MAX_SPEED,
            peak: 0.92,
            edge: 0.55,
            peak_torque: 0.6,
            peak_speed: 0.5,
        }
    }
}

impl EfficiencyMap {
    pub fn validate(&self) -> Result<(), super::SystemError> {
        use super::SystemError;
        if !(self.max_torque > 0.0) || !(self.max_speed > 0.0) {
            return Err(SystemError::NonPositive("efficiency map limits"));
        }
        if !(0.0 < self.edge && self.edge <= self.peak && self.peak <= 1.0) {
            return Err(SystemError::Unordered("efficiency edge/peak"));
        }
        if !(0.0 < self.peak_torque && self.peak_torque < 1.0 && 0.0 < self.peak_speed && self.peak_speed < 1.0) {
            return Err(SystemError::Unordered("efficiency sweet spot"));
        }
        Ok(())
    }

    /// Efficiency at `(torque, speed)`; inputs outside the map are clamped
    /// onto its boundary.
    pub fn eta<S: Scalar>(&self, torque: S, speed: S) -> S {
        let u = (torque.abs() / self.max_torque).clamp_to(0.0, 1.0);
        let w = (speed / self.max_speed).clamp_to(0.0, 1.0);
        let a = scaled_offset(u, self.peak_torque);
        let b = scaled_offset(w, self.peak_speed);
        let one = a.constant_like(1.0);
        (one - a * a) * (one - b * b) * (self.peak - self.edge) + self.edge
    }

    /// Plain-float efficiency that reports out-of-range inputs.
    pub fn eta_checked(&self, torque: f64, speed: f64) -> f64 {
        if torque.abs() > self.max_torque || !(0.0..=self.max_speed).contains(&speed) {
            log::warn!("efficiency map queried outside its range at T={torque}, omega={speed}");
        }
        self.eta(torque, speed)
    }
}

fn scaled_offset<S: Scalar>(x: S, centre: f64) -> S {
    let span = if x.value() < centre { centre } else { 1.0 - centre };
    (x - centre) / span
}

/// Electrical power `T * omega * eta^(-sign T)`: the motor draws more than
/// it delivers and recovers less than it absorbs.
pub fn motor_power<S: Scalar>(map: &EfficiencyMap, torque: S, speed: S) -> S {
    let eta = map.eta(torque, speed);
    let mech = torque * speed;
    let t = torque.value();
    if t > 0.0 {
        mech / eta
    } else if t < 0.0 {
        mech * eta
    } else {
        mech
    }
}

/// `P = T * omega * eta^(-sign T)` with an explicit efficiency.
pub fn power_with_eta(torque: f64, speed: f64, eta: f64) -> f64 {
    torque * speed * eta.powf(-torque.signum() * (torque != 0.0) as u8 as f64)
}
