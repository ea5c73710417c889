use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderActivation, ModelKind, ModelParams, ParameterSet, VgaeParams};
use crate::numerics::DenseMatrix;
use crate::training::{
    ExperimentOutcome, HistoryRecord, MetricsReport, SeedOutcome, TrainConfig, TrainedModel,
    TrainedParams, SCHEMA_VERSION,
};

fn check_version(value: &serde_json::Value) -> Result<()> {
    match value.get("schema_version") {
        None => Ok(()),
        Some(v) => match v.as_u64() {
            Some(found) if found == u64::from(SCHEMA_VERSION) => Ok(()),
            Some(found) => Err(Error::SchemaVersion {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            }),
            None => Err(Error::Format(format!(
                "schema_version {v} is not an integer"
            ))),
        },
    }
}

/// Reads JSON, rejecting any `schema_version` other than the current one.
/// A missing version is read as current.
fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    check_version(&value)?;
    Ok(serde_json::from_value(value)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a training configuration; absent keys take their defaults.
pub fn read_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let cfg: TrainConfig = read_versioned(path.as_ref())?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    write_json(config, path.as_ref())
}

/// Everything needed to audit and replay an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub dataset: String,
    pub config: TrainConfig,
    pub seeds: Vec<SeedOutcome>,
    /// Aggregate over the successful seeds.
    pub report: Option<MetricsReport>,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn new(
        dataset: impl Into<String>,
        config: TrainConfig,
        outcome: ExperimentOutcome,
        wall_seconds: f64,
    ) -> Self {
        ExperimentResult {
            schema_version: SCHEMA_VERSION,
            dataset: dataset.into(),
            config,
            seeds: outcome.seeds,
            report: outcome.report,
            wall_seconds,
        }
    }
}

pub fn write_result(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    write_json(result, path.as_ref())
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    read_versioned(path.as_ref())
}

/// Writes one JSON object per line.
pub fn write_history(history: &[HistoryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in history {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

/// Trained parameters with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: ModelKind,
    pub activation: EncoderActivation,
    pub config: TrainConfig,
    pub blocks: Vec<NamedBlock>,
}

fn named<P: ParameterSet>(p: &P) -> Vec<NamedBlock> {
    P::NAMES
        .iter()
        .zip(p.blocks())
        .map(|(name, b)| NamedBlock {
            name: name.to_string(),
            rows: b.rows(),
            cols: b.cols(),
            values: b.as_slice().to_vec(),
        })
        .collect()
}

fn unnamed<P: ParameterSet>(blocks: Vec<NamedBlock>) -> Result<P> {
    if blocks.len() != P::NAMES.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} blocks, expected {}",
            blocks.len(),
            P::NAMES.len()
        )));
    }
    let mats = blocks
        .into_iter()
        .zip(P::NAMES)
        .map(|(b, want)| {
            if b.name != *want {
                return Err(Error::Format(format!(
                    "checkpoint block {:?} where {want:?} expected",
                    b.name
                )));
            }
            DenseMatrix::from_vec(b.rows, b.cols, b.values)
        })
        .collect::<Result<Vec<_>>>()?;
    P::from_blocks(mats)
}

pub fn save_checkpoint(
    model: &TrainedModel,
    config: &TrainConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (kind, blocks) = match &model.params {
        TrainedParams::Npgnn(p) => (ModelKind::Npgnn, named(p)),
        TrainedParams::Vgae(p) => (ModelKind::Vgae, named(p)),
    };
    let ck = Checkpoint {
        schema_version: SCHEMA_VERSION,
        model: kind,
        activation: model.activation,
        config: config.clone(),
        blocks,
    };
    write_json(&ck, path.as_ref())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TrainedModel, TrainConfig)> {
    let ck: Checkpoint = read_versioned(path.as_ref())?;
    let params = match ck.model {
        ModelKind::Npgnn => TrainedParams::Npgnn(unnamed::<ModelParams>(ck.blocks)?),
        ModelKind::Vgae => TrainedParams::Vgae(unnamed::<VgaeParams>(ck.blocks)?),
    };
    Ok((
        TrainedModel {
            params,
            activation: ck.activation,
        },
        ck.config,
    ))
}
