use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stlgame::config;
use stlgame::policy::Mlp;
use stlgame::sim::{sample_noise, SystemModel};
use stlgame::stl::combined_robustness_generic;
use stlgame::systems::baselines::Pid;
use stlgame::systems::{AnySystem, StateSampler};
use stlgame::train::{
    compare, evaluate_testset, objective_grad, objective_plain, windowed_objective, Opponent,
};

struct Setup {
    sys: AnySystem,
    reqs: stlgame::stl::RequirementSet,
    attacker: Mlp,
    defender: Mlp,
    s0: Vec<f64>,
    noise: Vec<Vec<f64>>,
}

fn setup(preset: &str, seed: u64, horizon: usize) -> Setup {
    let mut cfg = config::preset(preset).unwrap();
    cfg.seed = seed;
    let sys = cfg.build_system().unwrap();
    let reqs = cfg.requirements_for(&sys).unwrap();
    let (attacker, defender) = cfg.init_networks(&sys).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = cfg.sampler_for(&sys).sample(&mut rng).unwrap();
    let noise = sample_noise(&mut rng, horizon, sys.noise_dim());
    Setup {
        sys,
        reqs,
        attacker,
        defender,
        s0,
        noise,
    }
}

fn j(s: &Setup, attacker: &Mlp, defender: &Mlp, horizon: usize) -> f64 {
    objective_plain(&s.sys, &s.s0, defender, attacker, horizon, &s.reqs, &s.noise).unwrap()
}

fn moved(net: &Mlp, dir: &[f64], eta: f64) -> Mlp {
    let mut n = net.clone();
    for (p, g) in n.params.iter_mut().zip(dir) {
        *p += eta * g;
    }
    n
}

/// Both players read the same gradient of `J`: following it raises `J`
/// (defender), following its negation lowers it (attacker), at first order
/// `eta * |grad|^2`.
#[test]
fn zero_sum_first_order_directions() {
    let horizon = 40;
    for (preset, seed) in [("cartpole_table1", 1), ("platoon_table2", 2), ("platoon_basic", 3)] {
        let s = setup(preset, seed, horizon);
        let g = objective_grad(&s.sys, &s.s0, &s.defender, &s.attacker, horizon, &s.reqs, &s.noise).unwrap();
        let j0 = j(&s, &s.attacker, &s.defender, horizon);
        assert_eq!(g.value, j0);
        for (grad, is_attacker) in [(&g.defender, false), (&g.attacker, true)] {
            let norm2: f64 = grad.iter().map(|x| x * x).sum();
            if norm2 == 0.0 {
                continue;
            }
            // predicted change of about 1e-7 relative to J, far above rounding
            let eta = 1e-7 * (1.0 + j0.abs()) / norm2;
            let step = |sign: f64| {
                if is_attacker {
                    j(&s, &moved(&s.attacker, grad, sign * eta), &s.defender, horizon)
                } else {
                    j(&s, &s.attacker, &moved(&s.defender, grad, sign * eta), horizon)
                }
            };
            let up = step(1.0) - j0;
            let down = step(-1.0) - j0;
            let predicted = eta * norm2;
            assert!(up > 0.0 && down < 0.0, "{preset}: up {up}, down {down}");
            let central = 0.5 * (up - down);
            assert!(((central - predicted) / predicted).abs() < 1e-2, "{preset}: {central} vs {predicted}");
        }
    }
}

#[test]
fn saturated_attacker_gets_zero_gradient() {
    let horizon = 20;
    let mut s = setup("cartpole_table1", 4, horizon);
    let out = s.attacker.output_dim();
    let n = s.attacker.params.len();
    for p in &mut s.attacker.params[..n - out] {
        *p = 0.0;
    }
    for b in &mut s.attacker.params[n - out..] {
        *b = 1e3;
    }
    let g = objective_grad(&s.sys, &s.s0, &s.defender, &s.attacker, horizon, &s.reqs, &s.noise).unwrap();
    assert!(g.attacker.iter().all(|&x| x == 0.0), "{:?}", g.attacker);
    assert!(g.defender.iter().any(|&x| x != 0.0));
}

#[test]
fn single_window_objective_is_combined_robustness() {
    let s = setup("platoon_table2", 5, 10);
    let h = s.reqs.window;
    let rec = stlgame::sim::rollout(
        &s.sys,
        &s.s0,
        &mut s.defender.clone(),
        &mut s.attacker.clone(),
        h,
        &s.noise,
    )
    .unwrap();
    let single = combined_robustness_generic(&s.reqs, &s.sys.monitored_window(&rec.states[..h]), 0).unwrap();
    assert_eq!(j(&s, &s.attacker, &s.defender, h), single);
}

#[test]
fn constant_trajectory_sums_equal_windows() {
    let s = setup("cartpole_table1", 6, 40);
    let states = vec![vec![0.2, 0.0, 0.1, 0.0, 0.0]; 40];
    let h = s.reqs.window;
    let per = combined_robustness_generic(&s.reqs, &s.sys.monitored_window(&states[..h]), 0).unwrap();
    let total = windowed_objective(&s.sys, &states, 40, &s.reqs).unwrap();
    assert!((total - per * (40 - h + 1) as f64).abs() < 1e-12);
}

#[test]
fn replayed_rest_keeps_cartpole_upright() {
    let cfg = config::cartpole_table1();
    let sys = cfg.build_system().unwrap();
    let reqs = cfg.requirements_for(&sys).unwrap();
    let (_, d) = cfg.init_networks(&sys).unwrap();
    let defender = Mlp::zeros(d.sizes.clone(), d.bounds.clone(), d.negative_slope).unwrap();
    let sampler = StateSampler {
        ranges: vec![(0.0, 0.0); 5],
        offsets: Vec::new(),
    };
    let recorded = vec![vec![0.0, 0.0]; 200];
    let report = evaluate_testset(&sys, &defender, Opponent::Fixed(&recorded), &sampler, 3, 200, &reqs, 9).unwrap();
    for row in &report.rows {
        assert_eq!(row.robustness[1], 0.785);
        assert!(row.satisfied.iter().all(|&b| b));
    }
    assert_eq!(report.summary.fraction_positive, vec![1.0, 1.0]);
}

#[test]
fn compare_against_itself_has_zero_differences() {
    let cfg = config::platoon_basic();
    let sys = cfg.build_system().unwrap();
    let reqs = cfg.requirements_for(&sys).unwrap();
    let (a, d) = cfg.init_networks(&sys).unwrap();
    let twin = d.clone();
    let report = compare(
        &sys,
        &d,
        || Box::new(twin.clone()),
        Opponent::Attacker(&a),
        &cfg.sampler_for(&sys),
        25,
        60,
        &reqs,
        3,
    )
    .unwrap();
    assert_eq!(report.rows.len(), 25);
    for row in &report.rows {
        assert!(row.difference.iter().all(|&x| x == 0.0));
    }
    assert_eq!(report.defender_fraction, report.baseline_fraction);
}

#[test]
fn pid_and_defender_see_identical_inputs() {
    let cfg = config::platoon_table2();
    let sys = cfg.build_system().unwrap();
    let reqs = cfg.requirements_for(&sys).unwrap();
    let (a, d) = cfg.init_networks(&sys).unwrap();
    let AnySystem::Platoon(p) = &sys else { unreachable!() };
    let (vehicle, mode) = (p.params.clone(), p.mode);
    let sampler = cfg.sampler_for(&sys);
    let report = compare(
        &sys,
        &d,
        || Box::new(Pid::new(cfg.baselines.pid.clone(), vehicle.clone(), mode)),
        Opponent::Attacker(&a),
        &sampler,
        10,
        50,
        &reqs,
        21,
    )
    .unwrap();
    let tested = evaluate_testset(&sys, &d, Opponent::Attacker(&a), &sampler, 10, 50, &reqs, 21).unwrap();
    for (c, t) in report.rows.iter().zip(&tested.rows) {
        assert_eq!(c.input_hash, t.input_hash);
        assert_eq!(c.defender, t.robustness);
    }
}
