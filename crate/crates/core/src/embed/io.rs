//! Model checkpoints (JSON) and descriptor caches (CSV).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::{Descriptor, DescriptorError, DescriptorKind};
use super::model::{EmbeddingModel, ModelError};
use super::triplet::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("checkpoint JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint shapes do not match its layers")]
    ShapeList,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("descriptor CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("descriptor CSV row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("descriptor CSV row {row}: {source}")]
    Descriptor {
        row: usize,
        #[source]
        source: DescriptorError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub v: u32,
    pub kind: DescriptorKind,
    /// `[outputs, inputs]` of every layer.
    pub shapes: Vec<[usize; 2]>,
    pub model: EmbeddingModel,
    pub config: TrainConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(kind: DescriptorKind, model: EmbeddingModel, config: TrainConfig) -> Self {
        Self {
            v: CHECKPOINT_VERSION,
            kind,
            shapes: model.layers.iter().map(|l| [l.outputs, l.inputs]).collect(),
            seed: config.seed,
            model,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.v != CHECKPOINT_VERSION {
            return Err(IoError::Version(c.v));
        }
        let shapes: Vec<[usize; 2]> = c.model.layers.iter().map(|l| [l.outputs, l.inputs]).collect();
        if shapes != c.shapes {
            return Err(IoError::ShapeList);
        }
        c.model.validate()?;
        Ok(c)
    }
}

/// One CSV row per descriptor: `sequence_id, kind, v0, v1, ...`.
pub fn write_descriptor_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a Descriptor)>) -> Result<String, IoError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for (id, d) in rows {
        let mut rec = vec![id.to_string(), d.kind.as_str().to_string()];
        rec.extend(d.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Row {
        row: 0,
        msg: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn read_descriptor_csv(text: &str) -> Result<Vec<(String, Descriptor)>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| IoError::Row { row, msg };
        if rec.len() < 2 {
            return Err(bad("missing columns".into()));
        }
        let kind = DescriptorKind::parse(&rec[1]).ok_or_else(|| bad(format!("unknown kind {:?}", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad value {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let d = Descriptor::new(kind, values).map_err(|source| IoError::Descriptor { row, source })?;
        out.push((rec[0].to_string(), d));
    }
    Ok(out)
}
