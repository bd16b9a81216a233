//! Min-max training of attacker and defender, and adversarial testing.
//!
//! The objective of one rollout is the sum of the combined requirement
//! robustness over every window of `h` consecutive states among the first
//! `H`. The attacker descends it, the defender ascends it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, Var};
use crate::policy::Mlp;
use crate::sim::{
    rollout, rollout_diff, sample_noise, Adversary, Controller, Replay, RolloutRecord, SimError, SystemModel,
    TapedPolicies,
};
use crate::stl::{combined_robustness_generic, global_robustness, robustness_generic, RequirementSet, StlError};
use crate::systems::{StateSampler, SystemError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient at iteration {iteration} ({phase})")]
    NonFiniteGradient { iteration: usize, phase: Phase },
    #[error("rollout diverged {retries} times in a row at iteration {iteration}: {last}")]
    Diverged {
        iteration: usize,
        retries: usize,
        last: SimError,
    },
    #[error("horizon {horizon} is shorter than the window {window}")]
    HorizonTooShort { horizon: usize, window: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Attacker,
    Defender,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Attacker => "attacker",
            Phase::Defender => "defender",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Rollout length `H` in steps.
    pub horizon: usize,
    pub iterations: usize,
    pub attacker_steps: usize,
    pub defender_steps: usize,
    pub attacker_lr: f64,
    pub defender_lr: f64,
    pub adam: AdamParams,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Consecutive divergent rollouts tolerated before aborting.
    pub max_retries: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            iterations: 500,
            attacker_steps: 1,
            defender_steps: 2,
            attacker_lr: 1e-3,
            defender_lr: 1e-3,
            adam: AdamParams::default(),
            grad_clip: Some(10.0),
            max_retries: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, window: usize) -> Result<(), TrainError> {
        if self.horizon < window {
            return Err(TrainError::HorizonTooShort {
                horizon: self.horizon,
                window,
            });
        }
        for (name, lr) in [("attacker_lr", self.attacker_lr), ("defender_lr", self.defender_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be a non-negative number")));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(TrainError::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Sub-seed for a named consumer of the root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn rng_for(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

/// Adam with bias correction, minimizing.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, params: AdamParams) -> Self {
        Self {
            lr,
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        let AdamParams { beta1, beta2, eps } = self.params;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` to norm `cap` when it is longer.
pub fn clip(g: &mut [f64], cap: f64) {
    let n = l2_norm(g);
    if n > cap {
        let k = cap / n;
        g.iter_mut().for_each(|x| *x *= k);
    }
}

/// Sum of combined robustness over all `h`-state windows of the first
/// `horizon` states.
pub fn windowed_objective<M: SystemModel, S: Scalar>(
    m: &M,
    states: &[Vec<S>],
    horizon: usize,
    reqs: &RequirementSet,
) -> Result<S, TrainError> {
    let h = reqs.window;
    if horizon < h || states.len() < horizon {
        return Err(TrainError::HorizonTooShort { horizon, window: h });
    }
    let states = &states[..horizon];
    let shared = if m.window_local() {
        None
    } else {
        Some(m.monitored_window(states))
    };
    let mut total: Option<S> = None;
    for t in 0..=horizon - h {
        let r = match &shared {
            Some(mon) => combined_robustness_generic(reqs, &mon[t..t + h], 0)?,
            None => combined_robustness_generic(reqs, &m.monitored_window(&states[t..t + h]), 0)?,
        };
        total = Some(match total {
            None => r,
            Some(acc) => acc + r,
        });
    }
    Ok(total.expect("at least one window"))
}

/// Taped objective of one rollout.
pub fn objective<'t, M: SystemModel>(
    m: &M,
    s0: &[f64],
    policies: &TapedPolicies<'_, 't>,
    horizon: usize,
    reqs: &RequirementSet,
    noise: &[Vec<f64>],
    tape: &'t Tape,
) -> Result<Var<'t>, TrainError> {
    let r = rollout_diff(m, s0, policies, horizon, noise, tape)?;
    windowed_objective(m, &r.states, horizon, reqs)
}

/// Objective recomputed without a tape.
pub fn objective_plain<M: SystemModel>(
    m: &M,
    s0: &[f64],
    defender: &Mlp,
    attacker: &Mlp,
    horizon: usize,
    reqs: &RequirementSet,
    noise: &[Vec<f64>],
) -> Result<f64, TrainError> {
    let rec = rollout(m, s0, &mut defender.clone(), &mut attacker.clone(), horizon, noise)?;
    windowed_objective(m, &rec.states, horizon, reqs)
}

/// Objective value and gradients with respect to both parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrad {
    pub value: f64,
    pub attacker: Vec<f64>,
    pub defender: Vec<f64>,
}

pub fn objective_grad<M: SystemModel>(
    m: &M,
    s0: &[f64],
    defender: &Mlp,
    attacker: &Mlp,
    horizon: usize,
    reqs: &RequirementSet,
    noise: &[Vec<f64>],
) -> Result<ObjectiveGrad, TrainError> {
    let tape = Tape::with_capacity(64 * 1024);
    let dp = tape.lift_all(&defender.params).map_err(SimError::from)?;
    let ap = tape.lift_all(&attacker.params).map_err(SimError::from)?;
    let pol = TapedPolicies {
        defender,
        defender_params: &dp,
        attacker,
        attacker_params: &ap,
    };
    let j = objective(m, s0, &pol, horizon, reqs, noise, &tape)?;
    let g = tape.backward(j);
    Ok(ObjectiveGrad {
        value: j.value(),
        attacker: g.wrt_all(&ap),
        defender: g.wrt_all(&dp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub phase: Phase,
    pub objective: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub attacker: Mlp,
    pub defender: Mlp,
    pub history: Vec<HistoryRow>,
    /// Divergent rollouts skipped during training.
    pub skipped: usize,
}

/// Alternating training. Each outer iteration samples one initial state,
/// then runs the attacker updates followed by the defender updates, each
/// on a fresh noise draw.
pub fn train<M: SystemModel>(
    m: &M,
    cfg: &TrainConfig,
    reqs: &RequirementSet,
    sampler: &StateSampler,
    mut attacker: Mlp,
    mut defender: Mlp,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate(reqs.window)?;
    reqs.validate()?;
    sampler.validate(m.state_dim())?;
    let mut sample_rng = rng_for(seed, "sample");
    let mut noise_rng = rng_for(seed, "noise");
    let mut opt_a = Adam::new(attacker.param_count(), cfg.attacker_lr, cfg.adam.clone());
    let mut opt_d = Adam::new(defender.param_count(), cfg.defender_lr, cfg.adam.clone());
    let mut history = Vec::with_capacity(cfg.iterations * (cfg.attacker_steps + cfg.defender_steps));
    let mut skipped = 0;
    let phases: Vec<Phase> = std::iter::repeat_n(Phase::Attacker, cfg.attacker_steps)
        .chain(std::iter::repeat_n(Phase::Defender, cfg.defender_steps))
        .collect();
    for iteration in 0..cfg.iterations {
        let mut s0 = sampler.sample(&mut sample_rng)?;
        for &phase in &phases {
            let mut retries = 0;
            let grad = loop {
                let noise = sample_noise(&mut noise_rng, cfg.horizon, m.noise_dim());
                match objective_grad(m, &s0, &defender, &attacker, cfg.horizon, reqs, &noise) {
                    Ok(g) => break g,
                    Err(TrainError::Sim(e @ SimError::NonFinite { .. })) => {
                        skipped += 1;
                        retries += 1;
                        log::warn!("iteration {iteration}: {e}; resampling");
                        if retries > cfg.max_retries {
                            return Err(TrainError::Diverged {
                                iteration,
                                retries,
                                last: e,
                            });
                        }
                        s0 = sampler.sample(&mut sample_rng)?;
                    }
                    Err(e) => return Err(e),
                }
            };
            let (mut g, net, opt) = match phase {
                Phase::Attacker => (grad.attacker, &mut attacker, &mut opt_a),
                // ascent is descent on -J
                Phase::Defender => (grad.defender.iter().map(|x| -x).collect(), &mut defender, &mut opt_d),
            };
            let grad_norm = l2_norm(&g);
            if !grad_norm.is_finite() || !grad.value.is_finite() {
                return Err(TrainError::NonFiniteGradient { iteration, phase });
            }
            if let Some(cap) = cfg.grad_clip {
                clip(&mut g, cap);
            }
            opt.step(&mut net.params, &g);
            history.push(HistoryRow {
                iteration,
                phase,
                objective: grad.value,
                grad_norm,
            });
        }
        if iteration % 50 == 0 {
            if let Some(last) = history.last() {
                log::info!("iteration {iteration}: J = {:.4}", last.objective);
            }
        }
    }
    Ok(TrainOutcome {
        attacker,
        defender,
        history,
        skipped,
    })
}

/// Robustness of "requirement holds at every window" over a whole rollout.
pub fn global_requirement_robustness<M: SystemModel>(
    m: &M,
    states: &[Vec<f64>],
    reqs: &RequirementSet,
) -> Result<Vec<f64>, TrainError> {
    if !m.window_local() {
        let mon = m.monitored_window(states);
        return reqs
            .requirements
            .iter()
            .map(|r| Ok(global_robustness(&r.formula, &mon)?))
            .collect();
    }
    let h = reqs.window;
    if states.len() < h {
        return Err(TrainError::HorizonTooShort {
            horizon: states.len(),
            window: h,
        });
    }
    let mut out = vec![f64::INFINITY; reqs.len()];
    for t in 0..=states.len() - h {
        let mon = m.monitored_window(&states[t..t + h]);
        for (i, r) in reqs.requirements.iter().enumerate() {
            out[i] = out[i].min(robustness_generic(&r.formula, &mon, 0)?);
        }
    }
    Ok(out)
}

/// Where the environment actions come from during testing.
#[derive(Debug, Clone, Copy)]
pub enum Opponent<'a> {
    Attacker(&'a Mlp),
    /// Replays a recorded action sequence regardless of the state.
    Fixed(&'a [Vec<f64>]),
}

impl Opponent<'_> {
    fn instantiate(&self) -> Box<dyn Adversary + '_> {
        match *self {
            Opponent::Attacker(a) => Box::new(a.clone()),
            Opponent::Fixed(actions) => Box::new(Replay {
                actions: actions.to_vec(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub index: usize,
    pub initial_state: Vec<f64>,
    /// Global robustness per requirement; empty when the rollout failed.
    pub robustness: Vec<f64>,
    pub satisfied: Vec<bool>,
    pub error: Option<String>,
    /// Digest of the initial state and noise used, for pairing checks.
    pub input_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub requirements: Vec<String>,
    pub n: usize,
    pub failed: usize,
    pub fraction_positive: Vec<f64>,
    pub min_robustness: Vec<f64>,
    pub mean_robustness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub rows: Vec<TestRow>,
    pub summary: TestSummary,
}

/// Inputs of test trajectory `index`, independent of every other index.
pub fn test_inputs(
    sampler: &StateSampler,
    seed: u64,
    index: usize,
    steps: usize,
    noise_dim: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SystemError> {
    let mut rng = rng_for(seed, &format!("test/{index}"));
    let s0 = sampler.sample(&mut rng)?;
    let noise = sample_noise(&mut rng, steps, noise_dim);
    Ok((s0, noise))
}

pub fn input_hash(s0: &[f64], noise: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for x in s0.iter().chain(noise.iter().flatten()) {
        h.update(x.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// One test rollout and its global robustness per requirement.
pub fn test<M: SystemModel>(
    m: &M,
    defender: &mut dyn Controller,
    opponent: &mut dyn Adversary,
    s0: &[f64],
    noise: &[Vec<f64>],
    horizon: usize,
    reqs: &RequirementSet,
) -> Result<(RolloutRecord, Vec<f64>), TrainError> {
    let rec = rollout(m, s0, defender, opponent, horizon, noise)?;
    let rho = global_requirement_robustness(m, &rec.states, reqs)?;
    Ok((rec, rho))
}

fn row_from(
    index: usize,
    s0: Vec<f64>,
    hash: String,
    result: Result<Vec<f64>, TrainError>,
) -> TestRow {
    match result {
        Ok(rho) => TestRow {
            index,
            initial_state: s0,
            satisfied: rho.iter().map(|&r| r > 0.0).collect(),
            robustness: rho,
            error: None,
            input_hash: hash,
        },
        Err(e) => TestRow {
            index,
            initial_state: s0,
            robustness: Vec::new(),
            satisfied: Vec::new(),
            error: Some(e.to_string()),
            input_hash: hash,
        },
    }
}

pub fn summarize(rows: &[TestRow], reqs: &RequirementSet) -> TestSummary {
    let k = reqs.len();
    let n = rows.len();
    let mut positive = vec![0usize; k];
    let mut min = vec![f64::INFINITY; k];
    let mut sum = vec![0.0; k];
    let mut ok = 0usize;
    for row in rows.iter().filter(|r| r.error.is_none()) {
        ok += 1;
        for i in 0..k {
            positive[i] += row.satisfied[i] as usize;
            min[i] = min[i].min(row.robustness[i]);
            sum[i] += row.robustness[i];
        }
    }
    TestSummary {
        requirements: reqs.names(),
        n,
        failed: n - ok,
        fraction_positive: positive.iter().map(|&p| if n == 0 { 0.0 } else { p as f64 / n as f64 }).collect(),
        min_robustness: if ok == 0 { vec![f64::NAN; k] } else { min },
        mean_robustness: sum.iter().map(|&s| if ok == 0 { f64::NAN } else { s / ok as f64 }).collect(),
    }
}

/// `n` independent test rollouts, evaluated in parallel and reported in
/// index order. Failed rollouts are recorded, not fatal, and count as
/// unsatisfied.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_testset<M: SystemModel>(
    m: &M,
    defender: &Mlp,
    opponent: Opponent<'_>,
    sampler: &StateSampler,
    n: usize,
    horizon: usize,
    reqs: &RequirementSet,
    seed: u64,
) -> Result<TestReport, TrainError> {
    reqs.validate()?;
    sampler.validate(m.state_dim())?;
    let rows: Vec<TestRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (s0, noise) = test_inputs(sampler, seed, i, horizon, m.noise_dim())?;
            let hash = input_hash(&s0, &noise);
            let mut d = defender.clone();
            let mut a = opponent.instantiate();
            let result = test(m, &mut d, a.as_mut(), &s0, &noise, horizon, reqs).map(|(_, rho)| rho);
            Ok(row_from(i, s0, hash, result))
        })
        .collect::<Result<_, TrainError>>()?;
    let summary = summarize(&rows, reqs);
    Ok(TestReport { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub index: usize,
    pub input_hash: String,
    pub defender: Vec<f64>,
    pub baseline: Vec<f64>,
    /// `defender - baseline` per requirement.
    pub difference: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub requirements: Vec<String>,
    pub rows: Vec<CompareRow>,
    pub defender_fraction: Vec<f64>,
    pub baseline_fraction: Vec<f64>,
}

/// Defender and baseline on identical initial states and noise against
/// the same opponent.
#[allow(clippy::too_many_arguments)]
pub fn compare<M, F>(
    m: &M,
    defender: &Mlp,
    baseline: F,
    opponent: Opponent<'_>,
    sampler: &StateSampler,
    n: usize,
    horizon: usize,
    reqs: &RequirementSet,
    seed: u64,
) -> Result<CompareReport, TrainError>
where
    M: SystemModel,
    F: Fn() -> Box<dyn Controller + Send> + Sync,
{
    reqs.validate()?;
    sampler.validate(m.state_dim())?;
    let k = reqs.len();
    let rows: Vec<CompareRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (s0, noise) = test_inputs(sampler, seed, i, horizon, m.noise_dim())?;
            let hash = input_hash(&s0, &noise);
            let mut d = defender.clone();
            let ours = test(m, &mut d, opponent.instantiate().as_mut(), &s0, &noise, horizon, reqs);
            let mut b = baseline();
            let theirs = test(m, b.as_mut(), opponent.instantiate().as_mut(), &s0, &noise, horizon, reqs);
            Ok(match (ours, theirs) {
                (Ok((_, a)), Ok((_, b))) => CompareRow {
                    index: i,
                    input_hash: hash,
                    difference: a.iter().zip(&b).map(|(x, y)| x - y).collect(),
                    defender: a,
                    baseline: b,
                    error: None,
                },
                (a, b) => CompareRow {
                    index: i,
                    input_hash: hash,
                    defender: a.as_ref().map(|r| r.1.clone()).unwrap_or_default(),
                    baseline: b.as_ref().map(|r| r.1.clone()).unwrap_or_default(),
                    difference: Vec::new(),
                    error: Some(
                        [a.err(), b.err()]
                            .into_iter()
                            .flatten()
                            .map(|e| e.to_string())
                            .collect::<Vec<_>>()
                            .join("; "),
                    ),
                },
            })
        })
        .collect::<Result<_, TrainError>>()?;
    let fraction = |pick: fn(&CompareRow) -> &Vec<f64>| -> Vec<f64> {
        (0..k)
            .map(|j| {
                let pos = rows
                    .iter()
                    .filter(|r| pick(r).get(j).is_some_and(|&x| x > 0.0))
                    .count();
                if n == 0 {
                    0.0
                } else {
                    pos as f64 / n as f64
                }
            })
            .collect()
    };
    Ok(CompareReport {
        requirements: reqs.names(),
        defender_fraction: fraction(|r| &r.defender),
        baseline_fraction: fraction(|r| &r.baseline),
        rows,
    })
}
