//! Model-quality diagnostics and run artifacts.
//!
//! MMSE is `(1/M) Σ_i (1/N) Σ_j ‖s'_j - ŝ'_ij‖²` and VME is
//! `(1/M) Σ_i (1/N) Σ_j (V(s'_j) - V(ŝ'_ij))²`, with `ŝ'_ij` sampled once
//! from member `i`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::replay::{Batch, ReplayBuffer};
use crate::rng::RngStream;
use crate::sac::SacAgent;
use crate::world_model::DynamicsModel;

pub const CSV_HEADER: &str = "env_step,eval_return,mmse,vme,model_loss,wall_time";

/// State-value estimate used by VME.
pub trait ValueFunction {
    fn values(&self, states: ArrayView2<f64>) -> Result<Array1<f64>>;
}

impl ValueFunction for SacAgent {
    /// `min(Q1, Q2)` at the deterministic action.
    fn values(&self, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.state_value(states)
    }
}

fn check_batch(batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptySource("model-error batch is empty".into()));
    }
    Ok(())
}

/// Per-member mean squared next-state error on a fixed batch.
pub fn mmse_per_member(model: &dyn DynamicsModel, batch: &Batch, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_batch(batch)?;
    let n = batch.len() as f64;
    (0..model.num_members())
        .map(|i| {
            let (pred, _) = model.sample_member(i, batch.states.view(), batch.actions.view(), rng)?;
            Ok((&pred - &batch.next_states).mapv(|e| e * e).sum() / n)
        })
        .collect()
}

pub fn mmse_on_batch(model: &dyn DynamicsModel, batch: &Batch, rng: &mut RngStream) -> Result<f64> {
    let per = mmse_per_member(model, batch, rng)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// MMSE on `batch_size` transitions drawn uniformly from `buffer`.
pub fn mmse(model: &dyn DynamicsModel, buffer: &ReplayBuffer, batch_size: usize, rng: &mut RngStream) -> Result<f64> {
    let batch = buffer.sample(batch_size, rng)?;
    mmse_on_batch(model, &batch, rng)
}

pub fn vme_on_batch(
    model: &dyn DynamicsModel,
    value: &dyn ValueFunction,
    batch: &Batch,
    rng: &mut RngStream,
) -> Result<f64> {
    check_batch(batch)?;
    let real = value.values(batch.next_states.view())?;
    let n = batch.len() as f64;
    let m = model.num_members();
    let mut total = 0.0;
    for i in 0..m {
        let (pred, _) = model.sample_member(i, batch.states.view(), batch.actions.view(), rng)?;
        let v = value.values(pred.view())?;
        total += (&real - &v).mapv(|e| e * e).sum() / n;
    }
    Ok(total / m as f64)
}

pub fn vme(
    model: &dyn DynamicsModel,
    value: &dyn ValueFunction,
    buffer: &ReplayBuffer,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let batch = buffer.sample(batch_size, rng)?;
    vme_on_batch(model, value, &batch, rng)
}

/// MMSE on a buffer file saved by a separate run.
pub fn reserved_buffer_mmse(
    model: &dyn DynamicsModel,
    reserved_path: &Path,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let buffer = load_reserved(reserved_path)?;
    mmse(model, &buffer, batch_size, rng)
}

/// Loads a reserved buffer; a missing file is a configuration error.
pub fn load_reserved(path: &Path) -> Result<ReplayBuffer> {
    if !path.is_file() {
        return Err(Error::config(format!("reserved buffer {} does not exist", path.display())));
    }
    let buffer = ReplayBuffer::load(path)?;
    if buffer.is_empty() {
        return Err(Error::EmptySource(format!("reserved buffer {} is empty", path.display())));
    }
    Ok(buffer)
}

/// One checkpoint row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub env_step: u64,
    pub eval_return: f64,
    pub mmse: f64,
    pub vme: f64,
    /// Mean final loss over members at the latest training; NaN before any.
    pub model_loss: f64,
    #[serde(skip)]
    pub member_losses: Vec<f64>,
    pub wall_time: f64,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl MetricRecord {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.env_step,
            fmt_f64(self.eval_return),
            fmt_f64(self.mmse),
            fmt_f64(self.vme),
            fmt_f64(self.model_loss),
            fmt_f64(self.wall_time)
        )
    }
}

/// Appends checkpoint rows to a CSV file, flushing after each row.
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file,
            last_step: None,
        })
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<()> {
        if self.last_step.is_some_and(|s| record.env_step <= s) {
            return Err(Error::Usage(format!(
                "metric step {} does not increase past {:?}",
                record.env_step, self.last_step
            )));
        }
        // One write per row so an interrupted run never leaves a torn line.
        let line = format!("{}\n", record.csv_row());
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))?;
        self.last_step = Some(record.env_step);
        Ok(())
    }
}

pub fn write_metrics(records: &[MetricRecord], path: impl Into<PathBuf>) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

/// Parses a metrics CSV written by [`MetricsWriter`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |m: String| Error::Parse { offset, message: m };
        if i == 0 {
            if line != CSV_HEADER {
                return Err(err(format!("unexpected header {line:?}")));
            }
        } else {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            out.push(MetricRecord {
                env_step: f[0].parse().map_err(|e| err(format!("{:?}: {e}", f[0])))?,
                eval_return: num(f[1])?,
                mmse: num(f[2])?,
                vme: num(f[3])?,
                model_loss: num(f[4])?,
                member_losses: Vec::new(),
                wall_time: num(f[5])?,
            });
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// JSON-lines event log shared by the training loop and the reset module.
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, file })
    }

    pub fn append<T: Serialize>(&mut self, event: &T) -> Result<()> {
        let mut line = serde_json::to_string(event).map_err(|e| Error::Usage(format!("event encoding: {e}")))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads every event of a JSON-lines log.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<serde_json::Value>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0;
    let mut out = Vec::new();
    for line in text.lines() {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?);
        }
        offset += line.len() + 1;
    }
    Ok(out)
}
