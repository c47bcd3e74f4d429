use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeadKind, ModelConfig, TowerKind};
use crate::train::fit::{EpochRecord, Evaluation};

pub const CURVE_HEADER: &str = "epoch,train_loss,val_loss,seconds";

/// Per-epoch loss table. With `timing` off the seconds column is left empty
/// so that reruns compare byte for byte.
pub fn write_loss_curve<W: Write>(mut w: W, epochs: &[EpochRecord], timing: bool) -> Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for e in epochs {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let secs = if timing {
            format!("{:.3}", e.seconds)
        } else {
            String::new()
        };
        writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, val, secs)?;
    }
    Ok(())
}

pub fn read_loss_curve(src: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = src.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                message: format!("expected header `{CURVE_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format {
            line: k + 2,
            message: m.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad number"))
            }
        };
        out.push(EpochRecord {
            epoch: cols[0].parse().map_err(|_| bad("bad epoch"))?,
            train_loss: cols[1].parse().map_err(|_| bad("bad train_loss"))?,
            val_loss: opt(cols[2])?,
            seconds: opt(cols[3])?.unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// `X hr Y min Z s`
pub fn format_duration(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!(
        "{} hr {} min {} s",
        total / 3600,
        (total / 60) % 60,
        total % 60
    )
}

pub fn model_label(config: &ModelConfig) -> String {
    let base = match config.tower.kind {
        TowerKind::Cnn => "DC",
        TowerKind::Gru => "GRU",
        TowerKind::Lstm => "LSTM",
    };
    match (config.tower.kind, config.head) {
        (_, HeadKind::Fm) => format!("{base}-FM"),
        (TowerKind::Cnn, HeadKind::Dp) => format!("{base}-DP"),
        (_, HeadKind::Dp) => base.to_string(),
    }
}

pub fn regularization_label(config: &ModelConfig) -> String {
    let t = &config.tower;
    let mut parts = Vec::new();
    if t.dropout_rate > 0.0 {
        parts.push(format!("dropout {}", t.dropout_rate));
    }
    if t.recurrent_dropout > 0.0 && t.kind != TowerKind::Cnn {
        parts.push(format!("recurrent dropout {}", t.recurrent_dropout));
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(", ")
    }
}

/// One results-table row: model, embedding, regularization, time, MSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub embedding: String,
    pub regularization: String,
    pub training_time: String,
    pub mse: Option<f64>,
}

impl TableRow {
    pub const HEADER: &'static str =
        "Model | Embedding | Regularization | Training Time | MSE Loss";

    pub fn new(config: &ModelConfig, seconds: f64, mse: Option<f64>) -> Self {
        TableRow {
            model: model_label(config),
            embedding: format!("{}d", config.tower.embedding_dim),
            regularization: regularization_label(config),
            training_time: format_duration(seconds),
            mse,
        }
    }
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mse = self.mse.map_or("-".to_string(), |v| format!("{v:.4}"));
        write!(
            f,
            "{} | {} | {} | {} | {}",
            self.model, self.embedding, self.regularization, self.training_time, mse
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// The effective run configuration, sufficient to reproduce the run.
    pub config: serde_json::Value,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub initial_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub steps: u64,
    pub train_seconds: f64,
    pub test: Option<Evaluation>,
    pub global_mean_mse: Option<f64>,
    pub row: TableRow,
}
