//! Metrics rows and their CSV encoding.
//!
//! Header: `step,frames,score,value_error,critic_loss,model_loss,model_usage,wall_clock_s`.
//! Fields that do not apply to a run are left empty.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TrainError;

pub const CSV_HEADER: &str =
    "step,frames,score,value_error,critic_loss,model_loss,model_usage,wall_clock_s";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub frames: u64,
    pub score: Option<f64>,
    pub value_error: Option<f64>,
    pub critic_loss: Option<f64>,
    pub model_loss: Option<f64>,
    pub model_usage: Option<f64>,
    pub wall_clock_s: Option<f64>,
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[MetricsRow], path: &Path) -> Result<(), TrainError> {
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        other => io(std::io::Error::other(format!("{other:?}"))),
    })
}

pub fn read_csv_file(path: &Path) -> Result<Vec<MetricsRow>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect()
}
