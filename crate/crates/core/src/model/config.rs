use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{conv_output_len, Activation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TowerKind {
    Cnn,
    Lstm,
    Gru,
}

impl fmt::Display for TowerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TowerKind::Cnn => "CNN",
            TowerKind::Lstm => "LSTM",
            TowerKind::Gru => "GRU",
        })
    }
}

impl FromStr for TowerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(TowerKind::Cnn),
            "lstm" => Ok(TowerKind::Lstm),
            "gru" => Ok(TowerKind::Gru),
            other => Err(format!("unknown tower kind `{other}` (cnn|lstm|gru)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// β0 + Σ w_i z_i + x_u·x_i
    Dp,
    /// β0 + Σ w_i z_i + Σ_{i<j} ⟨v_i, v_j⟩ z_i z_j
    Fm,
}

impl FromStr for HeadKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(HeadKind::Dp),
            "fm" => Ok(HeadKind::Fm),
            other => Err(format!("unknown head `{other}` (dp|fm)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// One conv layer, max-pool, flatten, dense 32, no dropout.
    BaselineReplica,
    /// Hidden 64 units, dense 64, dropout 0.10, any tower kind.
    #[default]
    Comparison,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline-replica" | "baseline_replica" => Ok(Preset::BaselineReplica),
            "comparison" => Ok(Preset::Comparison),
            other => Err(format!(
                "unknown preset `{other}` (baseline-replica|comparison)"
            )),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::BaselineReplica => "baseline-replica",
            Preset::Comparison => "comparison",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub kind: TowerKind,
    pub embedding_dim: usize,
    /// Recurrent state width (lstm/gru).
    pub hidden_units: usize,
    /// Convolution filter count (cnn).
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub recurrent_dropout: f64,
}

impl TowerConfig {
    pub fn hidden_activation(&self) -> Activation {
        match self.kind {
            TowerKind::Cnn => Activation::Relu,
            TowerKind::Lstm | TowerKind::Gru => Activation::Tanh,
        }
    }

    /// Width of the encoder output fed to the dense layer.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            TowerKind::Cnn => self.conv_channels,
            TowerKind::Lstm | TowerKind::Gru => self.hidden_units,
        }
    }

    fn problems(&self, doc_len: usize, out: &mut Vec<String>) {
        let counts = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_units", self.hidden_units),
            ("conv_channels", self.conv_channels),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("dense_units", self.dense_units),
        ];
        for (name, v) in counts {
            if v == 0 {
                out.push(format!("{name} must be ≥ 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            out.push(format!("dropout {} outside [0,1)", self.dropout_rate));
        }
        if !(0.0..1.0).contains(&self.recurrent_dropout) {
            out.push(format!(
                "recurrent_dropout {} outside [0,1)",
                self.recurrent_dropout
            ));
        }
        if self.kind == TowerKind::Cnn
            && self.kernel_size > 0
            && self.stride > 0
            && conv_output_len(doc_len, self.kernel_size, self.stride).is_none()
        {
            out.push(format!(
                "doc_len {doc_len} shorter than conv kernel {}",
                self.kernel_size
            ));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub tower: TowerConfig,
    pub head: HeadKind,
    /// Latent rank of the factorization-machine head.
    pub fm_rank: usize,
    /// Drop the first-order Σ w_i z_i term from the DP head.
    pub pure_dot: bool,
    /// Document length T in tokens.
    pub doc_len: usize,
    pub init_seed: u64,
}

pub const DEFAULT_DOC_LEN: usize = 300;
pub const DEFAULT_FM_RANK: usize = 8;

impl Preset {
    pub fn tower(self, kind: TowerKind, embedding_dim: usize) -> TowerConfig {
        match self {
            Preset::BaselineReplica => TowerConfig {
                kind,
                embedding_dim,
                hidden_units: 64,
                conv_channels: 64,
                kernel_size: 8,
                stride: 6,
                dense_units: 32,
                dropout_rate: 0.0,
                recurrent_dropout: 0.0,
            },
            Preset::Comparison => TowerConfig {
                kind,
                embedding_dim,
                hidden_units: 64,
                conv_channels: 64,
                kernel_size: 8,
                stride: 6,
                dense_units: 64,
                dropout_rate: 0.10,
                recurrent_dropout: 0.0,
            },
        }
    }

    pub fn model(self, kind: TowerKind, embedding_dim: usize, head: HeadKind) -> ModelConfig {
        ModelConfig {
            preset: self,
            tower: self.tower(kind, embedding_dim),
            head,
            fm_rank: DEFAULT_FM_RANK,
            pure_dot: false,
            doc_len: DEFAULT_DOC_LEN,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.doc_len == 0 {
            out.push("doc_len must be ≥ 1".into());
        }
        self.tower.problems(self.doc_len, &mut out);
        if self.head == HeadKind::Fm && self.fm_rank == 0 {
            out.push("fm_rank must be ≥ 1".into());
        }
        if self.preset == Preset::BaselineReplica && self.tower.kind != TowerKind::Cnn {
            out.push("baseline-replica preset is defined for the cnn tower only".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p.join("; ")))
        }
    }
}
