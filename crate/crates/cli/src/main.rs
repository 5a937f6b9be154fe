use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apiary::config::{ConfigError, RunConfig};
use apiary::control::RlController;
use apiary::dynamics::{DynamicsError, RigidState};
use apiary::env::{EnvError, EpisodeGoal, Scenario};
use apiary::eval::evaluate;
use apiary::learn::{env_hash, load_checkpoint, train, Checkpoint, LearnError};
use apiary::mission::{
    compare_metrics, episode_log, parse_sequence, run_maneuver, run_sequence, write_error_table, ControlMode,
    FaultPlan, Maneuver, MissionError, Pilot, SettleTolerance,
};

#[derive(Parser)]
#[command(name = "apiary", version, about = "Free-flyer wrench policy training, evaluation and flight replay")]
struct Cli {
    /// Worker threads for rollouts and evaluation (0 = all cores).
    #[arg(long, global = true, env = "APIARY_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the deterministic policy on a seed bank.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        /// iss6dof or granite3dof.
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        episodes: usize,
        /// Seed bank; defaults to the held-out bank of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Pin the mass scale of every episode.
        #[arg(long)]
        mass_scale: Option<f64>,
        /// Directory for per-episode trajectory logs.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Directory for summary.csv and the config snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fly one maneuver under the baseline and under the policy.
    Compare {
        #[command(flatten)]
        policy: PolicyArgs,
        /// One sequence-file line, e.g. "undock" or "translate y 0.3".
        #[arg(long)]
        maneuver: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly a maneuver sequence with the safety monitor and optional faults.
    Replay {
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long, required_unless_present = "baseline")]
        ckpt: Option<PathBuf>,
        /// Run configuration; defaults to the one embedded in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// TOML file of [[fault]] entries.
        #[arg(long)]
        faults: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Fly the PD baseline instead of the policy.
        #[arg(long)]
        baseline: bool,
    },
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Run configuration; defaults to the one embedded in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Exit status 1 for usage, config and I/O problems, 2 for numerical failure.
#[derive(Debug)]
enum Failure {
    Input(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn numeric_dynamics(e: &DynamicsError) -> bool {
    matches!(e, DynamicsError::NonFiniteWrench | DynamicsError::BlowUp)
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        let numeric = match &e {
            EnvError::Dynamics(d) | EnvError::InEnv { source: d, .. } => numeric_dynamics(d),
            EnvError::Config(_) => false,
        };
        if numeric {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Env(e) => e.into(),
            LearnError::NonFinite { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<MissionError> for Failure {
    fn from(e: MissionError) -> Self {
        match &e {
            MissionError::NonFinite { .. } => Failure::Numeric(e.to_string()),
            MissionError::Dynamics { source, .. } if numeric_dynamics(source) => Failure::Numeric(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Numeric(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let workers = cli.workers;
    match cli.command {
        Command::Train { config, out, seed } => cmd_train(&config, &out, seed, workers),
        Command::Eval { policy, scenario, episodes, seed, mass_scale, logs, out } => {
            cmd_eval(&policy, scenario, episodes, seed, mass_scale, logs.as_deref(), out.as_deref(), workers)
        }
        Command::Compare { policy, maneuver, out } => cmd_compare(&policy, &maneuver, &out),
        Command::Replay { sequence, ckpt, config, faults, out, baseline } => {
            cmd_replay(&sequence, ckpt.as_deref(), config.as_deref(), faults.as_deref(), &out, baseline)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_snapshot(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    fs::write(dir.join("config.toml"), cfg.to_toml())
        .map_err(|e| Failure::Input(format!("cannot write config snapshot in {}: {e}", dir.display())))
}

fn load_ckpt(path: &Path) -> Result<Checkpoint, Failure> {
    load_checkpoint(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// The explicit config if given, else the one the checkpoint was trained with.
fn resolve_config(ckpt: &Checkpoint, ckpt_path: &Path, config: Option<&Path>) -> Result<RunConfig, Failure> {
    match config {
        Some(p) => Ok(RunConfig::load(p)?),
        None if ckpt.config_text.is_empty() => Ok(RunConfig::default()),
        None => Ok(RunConfig::from_toml(&ckpt.config_text, ckpt_path)?),
    }
}

fn warn_on_env_mismatch(ckpt: &Checkpoint, cfg: &RunConfig) {
    let now = env_hash(&cfg.task());
    if now != ckpt.env_hash {
        eprintln!(
            "warning: environment differs from the one the policy was trained in (hash {:016x}, trained {:016x})",
            now, ckpt.env_hash
        );
    }
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, workers: usize) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    create_dir(out)?;
    write_snapshot(out, &cfg)?;
    let result = train(&cfg.train_setup(workers, Some(out.to_path_buf())))?;
    println!(
        "trained {} updates, {} env steps; best checkpoint at {} steps",
        result.updates, result.env_steps, result.best.env_steps
    );
    println!(
        "held-out success {:.3} over {} episodes (bank {})",
        result.heldout.success_rate, result.heldout.episodes, cfg.logging.heldout_bank
    );
    println!("wrote {}", out.join("policy.apry").display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    policy: &PolicyArgs,
    scenario: Scenario,
    episodes: usize,
    seed: Option<u64>,
    mass_scale: Option<f64>,
    logs: Option<&Path>,
    out: Option<&Path>,
    workers: usize,
) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(Failure::Input("--episodes must be positive".into()));
    }
    let ckpt = load_ckpt(&policy.ckpt)?;
    let mut cfg = resolve_config(&ckpt, &policy.ckpt, policy.config.as_deref())?;
    cfg.env.scenario = scenario;
    if let Some(m) = mass_scale {
        cfg.env.mass_range = [m, m];
    }
    cfg.validate()?;
    warn_on_env_mismatch(&ckpt, &cfg);
    let bank = seed.unwrap_or(cfg.logging.heldout_bank);
    let env = cfg.task();
    let pool = apiary::worker_pool(workers);
    let ctrl = RlController { policy: &ckpt.policy, limits: env.limits };
    let (summary, records) = evaluate(&ctrl, &env, bank, episodes, &pool, logs.is_some())?;

    for dir in [out, logs].into_iter().flatten() {
        create_dir(dir)?;
        write_snapshot(dir, &cfg)?;
    }
    if let Some(dir) = logs {
        for (i, rec) in records.iter().enumerate() {
            episode_log(rec, ControlMode::RlPolicy).write_csv(create(&dir.join(format!("episode_{i:04}.csv")))?)?;
        }
    }
    if let Some(dir) = out {
        summary.write_csv(create(&dir.join("summary.csv"))?)?;
    }
    let stdout = io::stdout();
    summary.write_csv(stdout.lock())?;
    Ok(())
}

fn cmd_compare(policy: &PolicyArgs, spec: &str, out: &Path) -> Result<(), Failure> {
    let maneuver = Maneuver::parse(spec).map_err(|e| Failure::Input(format!("--maneuver: {e}")))?;
    let ckpt = load_ckpt(&policy.ckpt)?;
    let cfg = resolve_config(&ckpt, &policy.ckpt, policy.config.as_deref())?;
    warn_on_env_mismatch(&ckpt, &cfg);
    let mcfg = cfg.mission_config();
    mcfg.validate()?;

    let start = RigidState::default();
    let dock = EpisodeGoal::from_state(&start);
    let none = FaultPlan::default();
    let base = run_maneuver(&start, &dock, &maneuver, 1, Pilot::Baseline, &mcfg, &none, 0)?;
    let rl = run_maneuver(&start, &dock, &maneuver, 1, Pilot::Rl(&ckpt.policy), &mcfg, &none, 0)?;
    let report = compare_metrics(&rl.log, &base.log, &SettleTolerance::default())
        .map_err(|e| Failure::Input(e.to_string()))?;

    create_dir(out)?;
    write_snapshot(out, &cfg)?;
    base.log.write_csv(create(&out.join("baseline.csv"))?)?;
    rl.log.write_csv(create(&out.join("rl.csv"))?)?;
    report.write_csv(create(&out.join("report.csv"))?)?;
    write_error_table(&base.log, &rl.log, create(&out.join("errors.csv"))?)?;

    println!("maneuver: {}", maneuver.label);
    println!("baseline: {}  final pos err {:.4} m", base.record.outcome.name(), base.record.final_pos_err);
    println!("rl:       {}  final pos err {:.4} m", rl.record.outcome.name(), rl.record.final_pos_err);
    if report.baseline_more_accurate() {
        println!("note: baseline ends the maneuver with less position error");
    }
    Ok(())
}

fn cmd_replay(
    sequence: &Path,
    ckpt_path: Option<&Path>,
    config: Option<&Path>,
    faults: Option<&Path>,
    out: &Path,
    baseline: bool,
) -> Result<(), Failure> {
    let text = fs::read_to_string(sequence).map_err(|e| Failure::Input(format!("{}: {e}", sequence.display())))?;
    let seq = parse_sequence(&text).map_err(|e| Failure::Input(format!("{}: {e}", sequence.display())))?;
    let plan = match faults {
        Some(p) => {
            let t = fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            FaultPlan::from_toml(&t).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?
        }
        None => FaultPlan::default(),
    };
    let ckpt = ckpt_path.map(load_ckpt).transpose()?;
    let cfg = match (&ckpt, ckpt_path) {
        (Some(c), Some(p)) => resolve_config(c, p, config)?,
        _ => config.map(RunConfig::load).transpose()?.unwrap_or_default(),
    };
    let pilot = match (&ckpt, baseline) {
        (Some(c), false) => {
            warn_on_env_mismatch(c, &cfg);
            Pilot::Rl(&c.policy)
        }
        _ => Pilot::Baseline,
    };
    let mcfg = cfg.mission_config();
    let run = run_sequence(&RigidState::default(), &seq, pilot, &mcfg, &plan)?;

    create_dir(out)?;
    write_snapshot(out, &cfg)?;
    run.write_outcomes(create(&out.join("outcomes.csv"))?, mcfg.env.config.dt)?;
    run.log.write_csv(create(&out.join("trajectory.csv"))?)?;

    let mut so = io::stdout().lock();
    for r in &run.records {
        writeln!(so, "{:>2}. {:<34} {}", r.index, r.maneuver.label, r.outcome.name())?;
    }
    writeln!(so, "{}/{} maneuvers succeeded", run.successes(), run.records.len())?;
    Ok(())
}
