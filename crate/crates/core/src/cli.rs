//! Command-line verbs: `train`, `test`, `rollout`, `compare`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric abort.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::persist::{self, PersistError, Role, WeightFile};
use crate::policy::Mlp;
use crate::sim::{sample_noise, SimError, SystemModel};
use crate::systems::baselines::{Pid, Smc};
use crate::systems::AnySystem;
use crate::train::{self, rng_for, Opponent, TrainError};

#[derive(Debug, Parser)]
#[command(name = "stlgame", version, about = "Adversarial controller training against STL requirements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train attacker and defender networks.
    Train(TrainArgs),
    /// Evaluate a defender on a sampled test set.
    Test(TestArgs),
    /// Simulate one trajectory and write it as CSV.
    Rollout(RolloutArgs),
    /// Pair a defender with a classical baseline on identical inputs.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config: cartpole_table1, platoon_table2 or platoon_basic.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Root seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Record the creation time in the weight files.
    #[arg(long)]
    pub stamp: bool,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long)]
    pub defender: PathBuf,
    #[arg(long)]
    pub attacker: Option<PathBuf>,
    /// Root seed the weights were trained with; overrides the config.
    #[arg(long)]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Adversarial,
    FixedEnv,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub nets: NetArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum, default_value = "adversarial")]
    pub mode: Mode,
    /// Recorded environment actions for fixed-env mode (CSV).
    #[arg(long)]
    pub env_actions: Option<PathBuf>,
    /// Test-set seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub nets: NetArgs,
    /// Initial state as comma-separated numbers.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "sample")]
    pub s0: Option<String>,
    /// Draw the initial state from the configured sampler.
    #[arg(long)]
    pub sample: bool,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Pid,
    Smc,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub nets: NetArgs,
    #[arg(long, value_enum)]
    pub baseline: Baseline,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Train(TrainError::NonFiniteGradient { .. } | TrainError::Diverged { .. }) => 3,
            CliError::Train(TrainError::Sim(SimError::NonFinite { .. })) => 3,
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Rollout(a) => cmd_rollout(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    match (&args.config, &args.preset) {
        (Some(path), _) => Ok(ExperimentConfig::load(path)?),
        (None, Some(name)) => {
            let cfg = crate::config::preset(name)?;
            cfg.validate()?;
            Ok(cfg)
        }
        (None, None) => Err(CliError::Usage("one of --config or --preset is required".into())),
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| {
        CliError::Persist(PersistError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let sys = cfg.build_system()?;
    let reqs = cfg.requirements_for(&sys)?;
    let sampler = cfg.sampler_for(&sys);
    let (attacker, defender) = cfg.init_networks(&sys)?;
    let hash = cfg.hash();
    let out = train::train(&sys, &cfg.train, &reqs, &sampler, attacker, defender, cfg.seed)?;
    if out.skipped > 0 {
        log::warn!("{} divergent rollouts were skipped", out.skipped);
    }
    create_dir(&args.out)?;
    let stamp = args.stamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    persist::write_json(
        &args.out.join("attacker.json"),
        &WeightFile::new(Role::Attacker, &out.attacker, &hash, stamp),
    )?;
    persist::write_json(
        &args.out.join("defender.json"),
        &WeightFile::new(Role::Defender, &out.defender, &hash, stamp),
    )?;
    persist::write_text(&args.out.join("history.csv"), &persist::history_csv(&out.history))?;
    persist::write_text(&args.out.join("config.resolved.json"), &(cfg.to_json_pretty() + "\n"))?;
    Ok(())
}

struct Loaded {
    cfg: ExperimentConfig,
    sys: AnySystem,
    defender: Mlp,
    attacker: Option<Mlp>,
}

fn load_nets(config: &ConfigArgs, nets: &NetArgs) -> Result<Loaded, CliError> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = nets.train_seed {
        cfg.seed = seed;
    }
    let sys = cfg.build_system()?;
    let (a0, d0) = cfg.init_networks(&sys)?;
    let hash = cfg.hash();
    let defender = WeightFile::load_checked(&nets.defender, Role::Defender, &hash, &d0)?;
    let attacker = match &nets.attacker {
        Some(p) => Some(WeightFile::load_checked(p, Role::Attacker, &hash, &a0)?),
        None => None,
    };
    Ok(Loaded {
        cfg,
        sys,
        defender,
        attacker,
    })
}

pub fn cmd_test(args: &TestArgs) -> Result<(), CliError> {
    let Loaded {
        cfg,
        sys,
        defender,
        attacker,
    } = load_nets(&args.config, &args.nets)?;
    let reqs = cfg.requirements_for(&sys)?;
    let sampler = cfg.sampler_for(&sys);
    let n = args.n.unwrap_or(cfg.test.n);
    let horizon = args.horizon.unwrap_or(cfg.test.horizon);
    let seed = args.seed.unwrap_or(cfg.test.seed);
    if n == 0 || horizon == 0 {
        return Err(CliError::Usage("--n and --horizon must be positive".into()));
    }
    let recorded;
    let opponent = match args.mode {
        Mode::Adversarial => Opponent::Attacker(
            attacker
                .as_ref()
                .ok_or_else(|| CliError::Usage("adversarial mode needs --attacker".into()))?,
        ),
        Mode::FixedEnv => {
            let path = args
                .env_actions
                .as_ref()
                .ok_or_else(|| CliError::Usage("fixed-env mode needs --env-actions".into()))?;
            recorded = persist::read_actions(path, sys.env_space().dim())?;
            Opponent::Fixed(&recorded)
        }
    };
    let report = train::evaluate_testset(&sys, &defender, opponent, &sampler, n, horizon, &reqs, seed)?;
    create_dir(&args.out)?;
    persist::write_text(&args.out.join("report.csv"), &persist::report_csv(&report, &sys.state_names()))?;
    persist::write_json(&args.out.join("summary.json"), &report.summary)?;
    if report.summary.failed == report.summary.n {
        return Err(CliError::Numeric("every test trajectory failed".into()));
    }
    Ok(())
}

pub fn cmd_rollout(args: &RolloutArgs) -> Result<(), CliError> {
    let Loaded {
        cfg,
        sys,
        defender,
        attacker,
    } = load_nets(&args.config, &args.nets)?;
    let attacker = attacker.ok_or_else(|| CliError::Usage("rollout needs --attacker".into()))?;
    let reqs = cfg.requirements_for(&sys)?;
    let horizon = args.horizon.unwrap_or(cfg.test.horizon);
    if horizon == 0 {
        return Err(CliError::Usage("--horizon must be positive".into()));
    }
    let seed = args.seed.unwrap_or(cfg.test.seed);
    let mut rng = rng_for(seed, "rollout");
    let s0 = match (&args.s0, args.sample) {
        (Some(text), false) => parse_state(text, sys.state_dim())?,
        (None, true) => cfg.sampler_for(&sys).sample(&mut rng).map_err(ConfigError::from)?,
        _ => return Err(CliError::Usage("give exactly one of --s0 or --sample".into())),
    };
    let noise = sample_noise(&mut rng, horizon, sys.noise_dim());
    let rec = crate::sim::rollout(&sys, &s0, &mut defender.clone(), &mut attacker.clone(), horizon, &noise)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut flagged: std::collections::BTreeMap<&str, (usize, usize)> = Default::default();
    for (step, flag) in &rec.flags {
        flagged.entry(flag).or_insert((*step, 0)).1 += 1;
    }
    for (flag, (first, count)) in flagged {
        log::warn!("state constraint {flag} violated on {count} steps, first at step {first}");
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    persist::write_text(&args.out, &persist::rollout_csv(&sys, &rec, &reqs))?;
    Ok(())
}

fn parse_state(text: &str, dim: usize) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::Usage(format!("bad --s0: {e}")))?;
    if values.len() != dim {
        return Err(CliError::Usage(format!("--s0 needs {dim} values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("--s0 values must be finite".into()));
    }
    Ok(values)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let Loaded {
        cfg,
        sys,
        defender,
        attacker,
    } = load_nets(&args.config, &args.nets)?;
    let attacker = attacker.ok_or_else(|| CliError::Usage("compare needs --attacker".into()))?;
    let reqs = cfg.requirements_for(&sys)?;
    let sampler = cfg.sampler_for(&sys);
    let n = args.n.unwrap_or(cfg.test.n);
    let horizon = args.horizon.unwrap_or(cfg.test.horizon);
    let seed = args.seed.unwrap_or(cfg.test.seed);
    if n == 0 || horizon == 0 {
        return Err(CliError::Usage("--n and --horizon must be positive".into()));
    }
    let pid = cfg.baselines.pid.clone();
    let smc = cfg.baselines.smc.clone();
    let report = match (&sys, args.baseline) {
        (AnySystem::Platoon(p), Baseline::Pid) => {
            let (vehicle, mode) = (p.params.clone(), p.mode);
            train::compare(
                &sys,
                &defender,
                || Box::new(Pid::new(pid.clone(), vehicle.clone(), mode)),
                Opponent::Attacker(&attacker),
                &sampler,
                n,
                horizon,
                &reqs,
                seed,
            )?
        }
        (AnySystem::CartPole(_), Baseline::Smc) => train::compare(
            &sys,
            &defender,
            || Box::new(Smc { gains: smc.clone() }),
            Opponent::Attacker(&attacker),
            &sampler,
            n,
            horizon,
            &reqs,
            seed,
        )?,
        (_, b) => {
            return Err(CliError::Usage(format!(
                "baseline {b:?} does not apply to this system (pid: platoon, smc: cart-pole)"
            )))
        }
    };
    create_dir(&args.out)?;
    persist::write_text(&args.out.join("compare.csv"), &persist::compare_csv(&report))?;
    persist::write_json(
        &args.out.join("compare_summary.json"),
        &serde_json::json!({
            "requirements": report.requirements,
            "n": report.rows.len(),
            "defender_fraction_positive": report.defender_fraction,
            "baseline_fraction_positive": report.baseline_fraction,
        }),
    )?;
    Ok(())
}
