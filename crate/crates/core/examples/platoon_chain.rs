//! A four-car chain where every follower runs the same PID gap keeper
//! behind a leader that brakes hard, then recovers.

use stlgame::config;
use stlgame::sim::{rollout, Adversary, SystemModel};
use stlgame::systems::baselines::Pid;
use stlgame::systems::{Platoon, PlatoonMode, VehicleParams};

struct Leader;

impl Adversary for Leader {
    fn attack(&mut self, step: usize, _obs: &[f64], _noise: &[f64]) -> Vec<f64> {
        vec![if (20..40).contains(&step) { -4.0 } else { 0.5 }]
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cars = 4;
    let m = Platoon::new(VehicleParams::default(), PlatoonMode::Basic, cars)?;
    let gains = config::platoon_basic().baselines.pid;
    let mut follower = Pid::new(gains, m.params.clone(), PlatoonMode::Basic);
    // positions and speeds, leader first, 6 m apart at 15 m/s
    let s0: Vec<f64> = (0..cars).flat_map(|i| [18.0 - 6.0 * i as f64, 15.0]).collect();
    let horizon = 120;
    let noise = vec![vec![0.0; m.noise_dim()]; horizon];
    let rec = rollout(&m, &s0, &mut follower, &mut Leader, horizon, &noise)?;

    println!("{:>5} {:>8} {:>8} {:>8} {:>8}", "step", "v_lead", "gap1", "gap2", "gap3");
    for (j, s) in rec.states.iter().enumerate().step_by(10) {
        let gaps = m.monitored(s);
        println!("{j:>5} {:>8.2} {:>8.2} {:>8.2} {:>8.2}", s[1], gaps[0], gaps[1], gaps[2]);
    }
    let closest = rec.states.iter().flat_map(|s| m.monitored(s)).fold(f64::INFINITY, f64::min);
    println!("closest gap {closest:.2} m");
    Ok(())
}
