//! Short adversarial training run on the cart-pole, then a test-set
//! evaluation of the defender against the trained attacker.

use stlgame::config;
use stlgame::train::{evaluate_testset, train, Opponent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = config::cartpole_table1();
    cfg.train.iterations = 100;
    let sys = cfg.build_system()?;
    let reqs = cfg.requirements_for(&sys)?;
    let sampler = cfg.sampler_for(&sys);
    let (attacker, defender) = cfg.init_networks(&sys)?;

    let out = train(&sys, &cfg.train, &reqs, &sampler, attacker, defender, cfg.seed)?;
    for row in out.history.iter().step_by(60) {
        println!(
            "iteration {:>3} {:<8} J {:>9.3} |g| {:.3}",
            row.iteration, row.phase, row.objective, row.grad_norm
        );
    }

    let report = evaluate_testset(
        &sys,
        &out.defender,
        Opponent::Attacker(&out.attacker),
        &sampler,
        100,
        cfg.test.horizon,
        &reqs,
        cfg.test.seed,
    )?;
    let s = &report.summary;
    for (k, name) in s.requirements.iter().enumerate() {
        println!(
            "{name}: {:.0}% satisfied, mean robustness {:+.3}",
            100.0 * s.fraction_positive[k],
            s.mean_robustness[k]
        );
    }
    Ok(())
}
