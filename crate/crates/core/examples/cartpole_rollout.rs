//! Cart-pole rollout with a sliding-mode controller against a fixed
//! environment policy, monitored against both requirements.

use stlgame::config;
use stlgame::sim::{rollout, sample_noise, Adversary, SystemModel};
use stlgame::stl::robustness;
use stlgame::systems::baselines::Smc;
use stlgame::train::rng_for;

/// Constant friction and a slowly drifting reference.
struct Drift;

impl Adversary for Drift {
    fn attack(&mut self, _step: usize, _obs: &[f64], _noise: &[f64]) -> Vec<f64> {
        vec![0.3, 0.4]
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = config::cartpole_table1();
    let sys = cfg.build_system()?;
    let reqs = cfg.requirements_for(&sys)?;
    let horizon = 100;
    let mut rng = rng_for(7, "example");
    let noise = sample_noise(&mut rng, horizon, sys.noise_dim());
    let s0 = [0.1, 0.0, 0.05, 0.0, 0.0];
    let mut smc = Smc {
        gains: cfg.baselines.smc.clone(),
    };
    let rec = rollout(&sys, &s0, &mut smc, &mut Drift, horizon, &noise)?;

    println!("{:>5} {:>8} {:>8} {:>8} {:>8}", "step", "x", "theta", "x_hat", "force");
    for j in (0..horizon).step_by(10) {
        let s = &rec.states[j];
        println!("{j:>5} {:>8.3} {:>8.3} {:>8.3} {:>8.2}", s[0], s[2], s[4], rec.actions_a[j][0]);
    }
    for r in &reqs.requirements {
        let rho = robustness(&r.formula, &rec.trajectory, 0)?;
        println!("{}: robustness {rho:+.3} over the first window", r.name);
    }
    Ok(())
}
