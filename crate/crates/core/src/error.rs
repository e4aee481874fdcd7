use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(
        "layer chain broken at layer {layer}: previous output {prev_out}, layer input {next_in}"
    )]
    BrokenChain {
        layer: usize,
        prev_out: usize,
        next_in: usize,
    },
    #[error("rejected update: {count} non-finite gradient entries (first at layer {first_layer})")]
    NonFiniteGradient { count: usize, first_layer: usize },
    #[error("non-finite parameter entries in layer {layer}")]
    NonFiniteParameter { layer: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("state index {index} out of range 0..={max}")]
    StateOutOfRange { index: usize, max: usize },
    #[error("action has dimension {found}, expected {expected}")]
    ActionDimension { expected: usize, found: usize },
    #[error("unknown environment '{0}' (expected 'chain' or 'pointmass')")]
    UnknownEnvironment(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite model loss ({0})")]
    NonFiniteLoss(f64),
    #[error("replay buffer holds {available} transitions, need at least {required}")]
    InsufficientData { available: usize, required: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error("unknown profile '{0}' (expected 'desk' or 'paper')")]
    UnknownProfile(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint kind '{found}' where '{expected}' was expected")]
    WrongKind { expected: String, found: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("environment dimensions ({env_state}, {env_action}) do not match agent ({agent_state}, {agent_action})")]
    DimensionMismatch {
        env_state: usize,
        env_action: usize,
        agent_state: usize,
        agent_action: usize,
    },
    #[error("non-finite {what} at update {update}; training halted")]
    Diverged { what: &'static str, update: u64 },
    #[error("worker '{worker}' failed: {message}")]
    WorkerFailed { worker: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
