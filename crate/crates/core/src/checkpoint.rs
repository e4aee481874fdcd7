//! Versioned JSON checkpoints for policies, critic ensembles and world models.
//!
//! Every file is one JSON object:
//!
//! ```text
//! { "format": "steve-checkpoint", "version": 1, "kind": "policy" | "critics" | "world_model",
//!   "networks": <payload> }
//! ```
//!
//! A network is `{"layers": [{"weight": <array2>, "bias": <array1>, "activation": "relu"}, ...]}`
//! with `weight` shaped `out x in` in ndarray's serde layout
//! (`{"v": 1, "dim": [rows, cols], "data": [...]}`, row-major). Payloads:
//! `policy` is `{"net": network}`; `critics` is a list of `{"net": network}`;
//! `world_model` is `{"dynamics": [{"transition", "termination"}], "rewards": [{"net"}]}`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{Critic, PolicyNet};
use crate::error::{CheckpointError, NumericsError};
use crate::world_model::ModelSnapshot;

pub const CHECKPOINT_FORMAT: &str = "steve-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub trait Checkpoint: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Structural and finiteness checks run after loading.
    fn validate(&self) -> Result<(), NumericsError>;
}

impl Checkpoint for PolicyNet {
    const KIND: &'static str = "policy";

    fn validate(&self) -> Result<(), NumericsError> {
        self.net.validate()
    }
}

impl Checkpoint for Vec<Critic> {
    const KIND: &'static str = "critics";

    fn validate(&self) -> Result<(), NumericsError> {
        self.iter().try_for_each(|c| c.net.validate())
    }
}

impl Checkpoint for ModelSnapshot {
    const KIND: &'static str = "world_model";

    fn validate(&self) -> Result<(), NumericsError> {
        for d in &self.dynamics {
            d.transition.validate()?;
            d.termination.validate()?;
        }
        self.rewards.iter().try_for_each(|r| r.net.validate())
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    networks: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

#[derive(Deserialize)]
struct Envelope<T> {
    networks: T,
}

pub fn to_json<T: Checkpoint>(value: &T) -> String {
    serde_json::to_string(&EnvelopeRef {
        format: CHECKPOINT_FORMAT,
        version: CHECKPOINT_VERSION,
        kind: T::KIND,
        networks: value,
    })
    .expect("checkpoint payload serializes")
}

pub fn from_json<T: Checkpoint>(text: &str) -> Result<T, CheckpointError> {
    let header: Header =
        serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(format!(
            "unknown format '{}'",
            header.format
        )));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    if header.kind != T::KIND {
        return Err(CheckpointError::WrongKind {
            expected: T::KIND.to_string(),
            found: header.kind,
        });
    }
    let envelope: Envelope<T> =
        serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    envelope.networks.validate()?;
    Ok(envelope.networks)
}

pub fn save<T: Checkpoint>(value: &T, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, to_json(value)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load<T: Checkpoint>(path: &Path) -> Result<T, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}
