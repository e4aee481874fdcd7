//! Command-line front end: `toy`, `train`, `ablate` and `eval`.
//!
//! Exit status is 0 on success, 1 for usage and configuration errors and 2
//! when a run fails. Every command writes only below its `--out` directory,
//! and always writes a `manifest.toml` there that reproduces the run when
//! passed back through `--config`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agent::PolicyNet;
use crate::checkpoint;
use crate::env::{make_env, ToyModelMode};
use crate::error::{ConfigError, TrainError};
use crate::metrics::{write_csv_file, MetricsRow};
use crate::tabular::{run_toy, ToyConfig};
use crate::trainer::{
    env_seeds, evaluate_policy, run_async, run_training, AsyncOptions, Profile, RunArtifacts,
    RunManifest, ToySettings, TrainConfig,
};
use crate::value_expansion::Weighting;

/// Strategies of the default ablation, in output order.
pub const ABLATION_STRATEGIES: [&str; 8] = [
    "td",
    "mve",
    "ensemble_mve",
    "mean",
    "tdl25",
    "tdl75",
    "steve",
    "cov_steve",
];

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(
    name = "steve",
    version,
    about = "Value-expansion experiments: tabular toy, training, ablations, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabular chain: TD, MVE and STEVE under oracle and noisy models.
    Toy(ToyArgs),
    /// One training run.
    Train(TrainFlags),
    /// The eight-strategy ablation, or one strategy over several horizons.
    Ablate(AblateArgs),
    /// Greedy evaluation of a saved policy.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    /// Manifest of an earlier toy run to repeat.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Comma-separated subset of strategies (default td,mve,steve).
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<String>,
    /// Updates per run.
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Flat TOML config file, preset name (`desk_pointmass_steve`), or a run manifest.
    #[arg(long)]
    pub config: Option<String>,
    /// Defaults underneath the config file; presets carry their own profile.
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Total environment frames.
    #[arg(long)]
    pub frames: Option<u64>,
    /// Asynchronous actors and learners.
    #[arg(long = "async")]
    pub asynchronous: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Run the configured strategy once per horizon instead of the strategy set.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Policy checkpoint, or a run directory holding `checkpoints/final/policy.json`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config naming the environment; defaults to the run directory's manifest.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Also write `metrics.csv` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] TrainError),
}

impl From<crate::error::CheckpointError> for CliError {
    fn from(e: crate::error::CheckpointError) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Run(TrainError::Config(_)) => 1,
            CliError::Run(_) => 2,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Toy(args) => cmd_toy(args),
        Command::Train(flags) => cmd_train(flags),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            horizon: 5,
            strategies: vec!["td".into(), "mve".into(), "steve".into()],
            noise: 0.1,
            ensemble_size: 8,
            max_updates: 20_000,
            log_every: 100,
        }
    }
}

fn toy_weighting(name: &str) -> Result<Weighting, CliError> {
    match Weighting::parse(name, f64::NAN) {
        Some(Weighting::TdLambda(l)) if l.is_nan() => Err(CliError::Usage(
            "toy runs take tdl25 or tdl75 rather than tdlambda".into(),
        )),
        Some(w) => Ok(w),
        None => Err(ConfigError::UnknownStrategy(name.to_string()).into()),
    }
}

fn cmd_toy(args: &ToyArgs) -> Result<(), CliError> {
    let (mut settings, mut seed) = match &args.config {
        Some(path) => {
            let manifest = read_manifest(path)?;
            let toy = manifest.toy.ok_or_else(|| {
                CliError::Usage(format!("{} holds no toy settings", path.display()))
            })?;
            (toy, manifest.seed)
        }
        None => (ToySettings::default(), 0),
    };
    if let Some(s) = args.seed {
        seed = s;
    }
    if let Some(h) = args.horizon {
        settings.horizon = h;
    }
    if !args.strategy.is_empty() {
        settings.strategies = args.strategy.clone();
    }
    if let Some(n) = args.frames {
        settings.max_updates = n;
    }
    let kinds = settings
        .strategies
        .iter()
        .map(|s| toy_weighting(s))
        .collect::<Result<Vec<_>, _>>()?;
    if !(0.0..=1.0).contains(&settings.noise) {
        return Err(invalid("noise", "must lie in [0, 1]"));
    }
    if settings.ensemble_size == 0 {
        return Err(invalid("ensemble_size", "must be positive"));
    }
    if settings.log_every == 0 {
        return Err(invalid("log_every", "must be positive"));
    }

    create_out(&args.out)?;
    let mut manifest = RunManifest::new("toy", seed);
    manifest.toy = Some(settings.clone());
    let modes = [
        ("oracle", ToyModelMode::Oracle),
        (
            "noisy",
            ToyModelMode::Noisy {
                noise: settings.noise,
            },
        ),
    ];
    for (name, kind) in settings.strategies.iter().zip(kinds) {
        for (label, mode) in modes {
            let horizon = if kind == Weighting::Td {
                0
            } else {
                settings.horizon
            };
            let mut config = ToyConfig::new(kind, mode, horizon, seed);
            config.ensemble_size = settings.ensemble_size;
            config.max_updates = settings.max_updates;
            config.log_every = settings.log_every;
            let run = run_toy(&config);
            let file = format!("{name}_{label}.csv");
            write_csv_file(&run.rows, &args.out.join(&file))?;
            let hit = run
                .updates_to_unit_error
                .map_or("never".into(), |u| u.to_string());
            println!(
                "{name:<12} {label:<6} final error {:.4}, error < 1 after {hit} updates",
                run.final_error
            );
            manifest.artifacts.push(file);
        }
    }
    manifest.finish();
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    Ok(())
}

fn invalid(field: &'static str, reason: &str) -> CliError {
    ConfigError::InvalidField {
        field,
        reason: reason.into(),
    }
    .into()
}

struct Resolved {
    config: TrainConfig,
    asynchronous: bool,
    horizons: Vec<usize>,
}

fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(RunManifest::from_toml(&text)?)
}

/// Config file keys laid over the defaults of the chosen profile.
fn config_from_table(
    file: toml::Table,
    profile: Option<Profile>,
) -> Result<TrainConfig, ConfigError> {
    let from_file = match file.get("profile") {
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| ConfigError::Parse("`profile` must be a string".into()))?
                .parse::<Profile>()?,
        ),
        None => None,
    };
    let profile = profile.or(from_file).unwrap_or(Profile::Desk);
    let base = TrainConfig::for_profile(profile);
    let mut table: toml::Table =
        toml::from_str(&base.to_toml()).expect("config round-trips through toml");
    table.extend(file);
    table.insert(
        "profile".into(),
        toml::Value::String(profile_name(profile).into()),
    );
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
}

fn profile_name(profile: Profile) -> &'static str {
    match profile {
        Profile::Desk => "desk",
        Profile::Paper => "paper",
    }
}

fn looks_like_path(name: &str) -> bool {
    name.contains('/') || name.contains('\\') || name.ends_with(".toml")
}

fn load_config(config: Option<&str>, profile: Option<Profile>) -> Result<Resolved, CliError> {
    let mut resolved = Resolved {
        config: TrainConfig::for_profile(profile.unwrap_or(Profile::Desk)),
        asynchronous: false,
        horizons: Vec::new(),
    };
    let Some(name) = config else {
        return Ok(resolved);
    };
    let path = Path::new(name);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {name}: {e}")))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if table.contains_key("command") {
            let manifest = RunManifest::from_toml(&text)?;
            resolved.config = manifest
                .config
                .ok_or_else(|| CliError::Usage(format!("{name} holds no training config")))?;
            resolved.asynchronous = manifest.asynchronous;
            resolved.horizons = manifest.horizons;
        } else {
            resolved.config = config_from_table(table, profile)?;
        }
    } else if looks_like_path(name) {
        return Err(CliError::Usage(format!("config file '{name}' not found")));
    } else {
        resolved.config = TrainConfig::preset(name).map_err(|e| {
            CliError::Usage(format!(
                "'{name}' is neither a config file nor a preset: {e}"
            ))
        })?;
    }
    Ok(resolved)
}

fn resolve(flags: &TrainFlags) -> Result<Resolved, CliError> {
    let mut r = load_config(flags.config.as_deref(), flags.profile)?;
    let c = &mut r.config;
    if let Some(s) = flags.seed {
        c.seed = s;
    }
    if let Some(s) = &flags.strategy {
        c.strategy = s.clone();
    }
    if let Some(h) = flags.horizon {
        c.horizon = h;
    }
    if let Some(l) = flags.lambda {
        c.lambda = l;
    }
    if let Some(f) = flags.frames {
        c.total_frames = f;
    }
    r.asynchronous |= flags.asynchronous;
    c.validate()?;
    Ok(r)
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Run(TrainError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn train_one(
    config: &TrainConfig,
    asynchronous: bool,
    dir: &Path,
) -> Result<RunArtifacts, CliError> {
    create_out(dir)?;
    let run = if asynchronous {
        run_async(config, AsyncOptions::from_config(config), Some(dir)).map_err(TrainError::from)
    } else {
        run_training(config, Some(dir))
    };
    Ok(run?)
}

/// Files below `dir`, relative to it and sorted, excluding the manifest.
fn list_artifacts(dir: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, found: &mut Vec<String>) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, found);
            } else if let Ok(rel) = path.strip_prefix(root) {
                found.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut found = Vec::new();
    walk(dir, dir, &mut found);
    found.retain(|f| f != MANIFEST_FILE);
    found.sort();
    found
}

fn summary(label: &str, run: &RunArtifacts) -> String {
    let score = run
        .rows
        .last()
        .and_then(|r| r.score)
        .map_or("-".into(), |s| format!("{s:.2}"));
    format!(
        "{label}: {} frames, {} policy updates, final score {score}",
        run.frames, run.policy_updates
    )
}

fn finish_manifest(mut manifest: RunManifest, out: &Path) -> Result<(), CliError> {
    manifest.artifacts = list_artifacts(out);
    manifest.finish();
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(())
}

fn cmd_train(flags: &TrainFlags) -> Result<(), CliError> {
    let r = resolve(flags)?;
    create_out(&flags.out)?;
    let mut manifest = RunManifest::new("train", r.config.seed);
    manifest.asynchronous = r.asynchronous;
    manifest.config = Some(r.config.clone());
    manifest.write(&flags.out.join(MANIFEST_FILE))?;
    let result = train_one(&r.config, r.asynchronous, &flags.out);
    finish_manifest(manifest, &flags.out)?;
    println!("{}", summary(&r.config.strategy, &result?));
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let r = resolve(&args.flags)?;
    let horizons = if args.horizons.is_empty() {
        r.horizons.clone()
    } else {
        args.horizons.clone()
    };
    let runs: Vec<(String, TrainConfig)> = if horizons.is_empty() {
        ABLATION_STRATEGIES
            .iter()
            .map(|s| {
                let mut c = r.config.clone();
                c.strategy = s.to_string();
                (s.to_string(), c)
            })
            .collect()
    } else {
        horizons
            .iter()
            .map(|&h| {
                let mut c = r.config.clone();
                c.horizon = h;
                (format!("{}_h{h}", c.strategy), c)
            })
            .collect()
    };
    for (_, c) in &runs {
        c.validate()?;
    }
    let out = &args.flags.out;
    create_out(out)?;
    let mut manifest = RunManifest::new("ablate", r.config.seed);
    manifest.asynchronous = r.asynchronous;
    manifest.horizons = horizons;
    manifest.config = Some(r.config.clone());
    manifest.write(&out.join(MANIFEST_FILE))?;
    let mut result = Ok(());
    for (label, config) in &runs {
        match train_one(config, r.asynchronous, &out.join(label)) {
            Ok(run) => println!("{}", summary(label, &run)),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    finish_manifest(manifest, out)?;
    result
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (policy_path, run_dir) = if args.checkpoint.is_dir() {
        let path = args
            .checkpoint
            .join("checkpoints")
            .join("final")
            .join("policy.json");
        (path, Some(args.checkpoint.as_path()))
    } else {
        (args.checkpoint.clone(), None)
    };
    let config_name = match (&args.config, run_dir) {
        (Some(c), _) => Some(c.clone()),
        (None, Some(dir)) if dir.join(MANIFEST_FILE).is_file() => {
            Some(dir.join(MANIFEST_FILE).to_string_lossy().into_owned())
        }
        _ => None,
    };
    let mut config = load_config(config_name.as_deref(), None)?.config;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.episodes {
        config.eval_episodes = n;
    }
    config.validate()?;
    let policy: PolicyNet = checkpoint::load(&policy_path)?;
    let (_, eval_seed) = env_seeds(config.seed);
    let mut env = make_env(&config.env, eval_seed).map_err(TrainError::from)?;
    if policy.net.in_dim() != env.state_dim() || policy.net.out_dim() != env.action_dim() {
        return Err(TrainError::DimensionMismatch {
            env_state: env.state_dim(),
            env_action: env.action_dim(),
            agent_state: policy.net.in_dim(),
            agent_action: policy.net.out_dim(),
        }
        .into());
    }
    let score = evaluate_policy(&policy, env.as_mut(), config.eval_episodes)?;
    println!("score {score:.4} over {} episodes", config.eval_episodes);
    if let Some(out) = &args.out {
        create_out(out)?;
        let row = MetricsRow {
            score: Some(score),
            ..Default::default()
        };
        write_csv_file(&[row], &out.join("metrics.csv"))?;
        let mut manifest = RunManifest::new("eval", config.seed);
        manifest.config = Some(config);
        finish_manifest(manifest, out)?;
    }
    Ok(())
}
