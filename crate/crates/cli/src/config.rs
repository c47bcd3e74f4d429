use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use deepconn_core::ingest::SplitMode;
use deepconn_core::model::{HeadKind, ModelConfig, Preset, TowerKind, DEFAULT_DOC_LEN};
use deepconn_core::train::{ColdStartPolicy, DocumentSource, FitConfig, OptimizerConfig};
use deepconn_core::{Error, OovPolicy};
use serde::{Deserialize, Serialize};

/// Every knob, all optional so a config file and the command line can be
/// layered. Keys in the config file use the flag names.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// Review file, one JSON object per line
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Whitespace-separated embedding file (token then values)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding width: 50 or 100
    #[arg(long)]
    pub dim: Option<usize>,
    /// Document length T in tokens
    #[arg(long)]
    pub doc_len: Option<usize>,
    /// Out-of-vocabulary handling: zero | hash:<buckets>
    #[arg(long)]
    pub oov: Option<String>,
    /// cnn | lstm | gru
    #[arg(long)]
    pub tower: Option<String>,
    /// dp | fm
    #[arg(long)]
    pub head: Option<String>,
    /// comparison | baseline-replica
    #[arg(long)]
    pub preset: Option<String>,
    /// Convolution filter count
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Recurrent state width
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub dense_units: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub recurrent_dropout: Option<f64>,
    /// Factorization-machine rank
    #[arg(long)]
    pub fm_rank: Option<usize>,
    /// Drop the first-order term of the dot-product head
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub pure_dot: Option<bool>,
    /// adam | rmsprop
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start the global bias at the training mean (mean) or at 0 (zero)
    #[arg(long)]
    pub init_bias: Option<String>,
    /// by-review | by-user-holdout
    #[arg(long)]
    pub split_mode: Option<String>,
    /// Held-out test share of the dataset
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Validation share of the non-test part
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Which reviews build documents: train-only | all-reviews
    #[arg(long)]
    pub documents: Option<String>,
    /// global-mean | empty-document
    #[arg(long)]
    pub cold_start: Option<String>,
    /// Clamp predictions to [1,5] at evaluation
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clamp: Option<bool>,
    /// Abort on the first malformed line instead of skipping it
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Fill the seconds column of the loss curve (on | off)
    #[arg(long)]
    pub curve_timing: Option<String>,
    /// CF neighborhood size (default: all rated items)
    #[arg(long)]
    pub k: Option<usize>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunArgs {
    /// Fields set in `top` win.
    pub fn overlay(mut self, top: &RunArgs) -> RunArgs {
        overlay_fields!(self, top; data, embeddings, dim, doc_len, oov, tower, head, preset,
            filters, kernel_size, stride, hidden_units, dense_units, dropout, recurrent_dropout,
            fm_rank, pure_dot, optimizer, lr, batch_size, epochs, seed, init_bias, split_mode,
            test_fraction, validation_fraction, documents, cold_start, clamp, strict,
            curve_timing, k);
        self
    }

    pub fn from_file(path: &Path) -> anyhow::Result<RunArgs> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
            .with_context(|| format!("reading config {}", path.display()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

/// The resolved, validated configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub oov: OovPolicy,
    pub model: ModelConfig,
    pub fit: FitConfig,
    pub split: SplitConfig,
    pub documents: DocumentSource,
    pub cold_start: ColdStartPolicy,
    pub clamp: bool,
    pub strict: bool,
    pub curve_timing: bool,
    pub k: Option<usize>,
}

fn parse_field<T: std::str::FromStr<Err = String>>(
    v: &Option<String>,
    default: T,
    problems: &mut Vec<String>,
) -> T {
    match v {
        None => default,
        Some(s) => s.parse().unwrap_or_else(|e| {
            problems.push(e);
            default
        }),
    }
}

fn parse_oov(s: &str) -> Result<OovPolicy, String> {
    match s {
        "zero" => Ok(OovPolicy::Zero),
        _ => match s.strip_prefix("hash:").map(str::parse::<u32>) {
            Some(Ok(b)) if b > 0 => Ok(OovPolicy::HashBucket { buckets: b }),
            _ => Err(format!("unknown oov policy `{s}` (zero|hash:<buckets>)")),
        },
    }
}

impl RunArgs {
    /// Resolve against defaults, reporting every invalid field at once.
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let mut p = Vec::new();
        let tower: TowerKind = parse_field(&self.tower, TowerKind::Cnn, &mut p);
        let head: HeadKind = parse_field(&self.head, HeadKind::Dp, &mut p);
        let preset: Preset = parse_field(&self.preset, Preset::Comparison, &mut p);
        let dim = self.dim.unwrap_or(50);
        if dim == 0 {
            p.push("dim must be ≥ 1".into());
        }
        let seed = self.seed.unwrap_or(0);

        let mut model = preset.model(tower, dim, head);
        model.init_seed = seed;
        model.doc_len = self.doc_len.unwrap_or(DEFAULT_DOC_LEN);
        let t = &mut model.tower;
        if let Some(v) = self.filters {
            t.conv_channels = v;
        }
        if let Some(v) = self.kernel_size {
            t.kernel_size = v;
        }
        if let Some(v) = self.stride {
            t.stride = v;
        }
        if let Some(v) = self.hidden_units {
            t.hidden_units = v;
        }
        if let Some(v) = self.dense_units {
            t.dense_units = v;
        }
        if let Some(v) = self.dropout {
            t.dropout_rate = v;
        }
        if let Some(v) = self.recurrent_dropout {
            t.recurrent_dropout = v;
        }
        if let Some(v) = self.fm_rank {
            model.fm_rank = v;
        }
        model.pure_dot = self.pure_dot.unwrap_or(false);
        if model.pure_dot && head != HeadKind::Dp {
            p.push("pure-dot applies to the dp head only".into());
        }
        p.extend(model.problems());

        let lr = self.lr.unwrap_or(0.001);
        let optimizer = match self.optimizer.as_deref().unwrap_or("adam") {
            "adam" => OptimizerConfig::adam(lr),
            "rmsprop" => OptimizerConfig::rmsprop(lr),
            other => {
                p.push(format!("unknown optimizer `{other}` (adam|rmsprop)"));
                OptimizerConfig::adam(lr)
            }
        };
        let init_bias_to_mean = match self.init_bias.as_deref().unwrap_or("mean") {
            "mean" => true,
            "zero" => false,
            other => {
                p.push(format!("unknown init-bias `{other}` (mean|zero)"));
                true
            }
        };
        let cold_start: ColdStartPolicy =
            parse_field(&self.cold_start, ColdStartPolicy::GlobalMean, &mut p);
        let fit = FitConfig {
            epochs: self.epochs.unwrap_or(10),
            batch_size: self.batch_size.unwrap_or(32),
            seed,
            optimizer,
            init_bias_to_mean,
            cold_start,
        };
        p.extend(fit.problems());

        let split = SplitConfig {
            mode: parse_field(&self.split_mode, SplitMode::ByReview, &mut p),
            test_fraction: self.test_fraction.unwrap_or(0.1),
            validation_fraction: self.validation_fraction.unwrap_or(0.1),
            seed,
        };
        for (name, v) in [
            ("test-fraction", split.test_fraction),
            ("validation-fraction", split.validation_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                p.push(format!("{name} {v} outside [0,1)"));
            }
        }
        let oov = match &self.oov {
            None => OovPolicy::Zero,
            Some(s) => parse_oov(s).unwrap_or_else(|e| {
                p.push(e);
                OovPolicy::Zero
            }),
        };
        let curve_timing = match self.curve_timing.as_deref().unwrap_or("off") {
            "on" => true,
            "off" => false,
            other => {
                p.push(format!("unknown curve-timing `{other}` (on|off)"));
                false
            }
        };
        if self.k == Some(0) {
            p.push("k must be ≥ 1".into());
        }
        let config = RunConfig {
            data: self.data.clone(),
            embeddings: self.embeddings.clone(),
            oov,
            model,
            fit,
            split,
            documents: parse_field(&self.documents, DocumentSource::TrainOnly, &mut p),
            cold_start,
            clamp: self.clamp.unwrap_or(false),
            strict: self.strict.unwrap_or(false),
            curve_timing,
            k: self.k,
        };
        if p.is_empty() {
            Ok(config)
        } else {
            Err(Error::InvalidConfig(p.join("; ")))
        }
    }
}

impl RunConfig {
    pub fn data_path(&self) -> Result<&Path, Error> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--data is required".into()))
    }

    pub fn embeddings_path(&self) -> Result<&Path, Error> {
        self.embeddings
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--embeddings is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = RunArgs::default().resolve().unwrap();
        assert_eq!(c.model.tower.kind, TowerKind::Cnn);
        assert_eq!(c.model.tower.dense_units, 64);
        assert_eq!(c.fit.batch_size, 32);
        assert_eq!(c.fit.epochs, 10);
        assert!(!c.curve_timing);
    }

    #[test]
    fn every_problem_is_reported() {
        let args = RunArgs {
            tower: Some("transformer".into()),
            dropout: Some(1.5),
            optimizer: Some("sgd".into()),
            test_fraction: Some(2.0),
            ..RunArgs::default()
        };
        let Err(Error::InvalidConfig(msg)) = args.resolve() else {
            panic!("expected config error")
        };
        for needle in ["transformer", "dropout", "sgd", "test-fraction"] {
            assert!(msg.contains(needle), "{msg}");
        }
    }

    #[test]
    fn overlay_prefers_top() {
        let base = RunArgs {
            epochs: Some(3),
            seed: Some(1),
            ..RunArgs::default()
        };
        let top = RunArgs {
            seed: Some(9),
            ..RunArgs::default()
        };
        let merged = base.overlay(&top);
        assert_eq!((merged.epochs, merged.seed), (Some(3), Some(9)));
    }

    #[test]
    fn toml_uses_flag_names() {
        let args: RunArgs =
            toml::from_str("tower = \"gru\"\nbatch-size = 8\npure-dot = true\n").unwrap();
        assert_eq!(args.tower.as_deref(), Some("gru"));
        assert_eq!(args.batch_size, Some(8));
        assert!(toml::from_str::<RunArgs>("unknown = 1").is_err());
    }

    #[test]
    fn oov_parsing() {
        assert_eq!(
            parse_oov("hash:16"),
            Ok(OovPolicy::HashBucket { buckets: 16 })
        );
        assert!(parse_oov("hash:0").is_err());
    }
}
