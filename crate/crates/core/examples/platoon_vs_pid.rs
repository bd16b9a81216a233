//! Trains a platoon follower under the energy requirement and pairs it
//! with the PID baseline on identical test inputs.

use stlgame::config;
use stlgame::systems::baselines::Pid;
use stlgame::systems::AnySystem;
use stlgame::train::{compare, train, Opponent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = config::platoon_table2();
    cfg.seed = 1;
    let sys = cfg.build_system()?;
    let reqs = cfg.requirements_for(&sys)?;
    let sampler = cfg.sampler_for(&sys);
    let (attacker, defender) = cfg.init_networks(&sys)?;
    let out = train(&sys, &cfg.train, &reqs, &sampler, attacker, defender, cfg.seed)?;

    let AnySystem::Platoon(p) = &sys else {
        unreachable!("platoon preset")
    };
    let (vehicle, mode) = (p.params.clone(), p.mode);
    let gains = cfg.baselines.pid.clone();
    let report = compare(
        &sys,
        &out.defender,
        || Box::new(Pid::new(gains.clone(), vehicle.clone(), mode)),
        Opponent::Attacker(&out.attacker),
        &sampler,
        200,
        cfg.test.horizon,
        &reqs,
        cfg.test.seed,
    )?;
    for (k, name) in report.requirements.iter().enumerate() {
        println!(
            "{name}: defender {:.1}% vs PID {:.1}% satisfied",
            100.0 * report.defender_fraction[k],
            100.0 * report.baseline_fraction[k]
        );
    }
    let better = report.rows.iter().filter(|r| r.difference.first().is_some_and(|d| *d > 0.0)).count();
    println!("defender more robust on {better} of {} inputs", report.rows.len());
    Ok(())
}
