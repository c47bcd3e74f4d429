use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    dropout, dropout_backward, maxpool_backward, maxpool_over_time, Activation, Conv1d,
    Conv1dCache, Dense, DenseCache, DropoutMask, HasParams, Mode, Parameter, PoolCache, Recurrent,
    RecurrentCache, Tensor,
};
use crate::model::config::{TowerConfig, TowerKind};

/// One entry of a tower's layer stack, used for structural checks and
/// printed summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    MaxPool,
    Flatten,
    Recurrent {
        kind: TowerKind,
        units: usize,
        activation: Activation,
        recurrent_dropout: f64,
    },
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Conv(Conv1d),
    Recurrent(Recurrent),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tower {
    config: TowerConfig,
    pub encoder: Encoder,
    pub dense: Dense,
}

#[derive(Clone, Debug)]
enum EncoderCache {
    Conv(Conv1dCache, PoolCache),
    Recurrent(RecurrentCache),
}

#[derive(Clone, Debug)]
pub struct TowerCache {
    encoder: EncoderCache,
    mask: DropoutMask,
    dense: DenseCache,
}

impl Tower {
    /// Parameter names are prefixed with `name` (e.g. `user.conv.kernels`).
    pub fn new<R: Rng + ?Sized>(name: &str, config: &TowerConfig, rng: &mut R) -> Self {
        let d = config.embedding_dim;
        let encoder = match config.kind {
            TowerKind::Cnn => Encoder::Conv(Conv1d::new(
                &format!("{name}.conv"),
                config.conv_channels,
                config.kernel_size,
                d,
                config.stride,
                rng,
            )),
            TowerKind::Gru => Encoder::Recurrent(Recurrent::gru(
                &format!("{name}.gru"),
                d,
                config.hidden_units,
                config.recurrent_dropout,
                rng,
            )),
            TowerKind::Lstm => Encoder::Recurrent(Recurrent::lstm(
                &format!("{name}.lstm"),
                d,
                config.hidden_units,
                config.recurrent_dropout,
                rng,
            )),
        };
        let dense = Dense::new(
            &format!("{name}.dense"),
            config.encoded_width(),
            config.dense_units,
            Activation::Relu,
            rng,
        );
        Tower {
            config: config.clone(),
            encoder,
            dense,
        }
    }

    pub fn config(&self) -> &TowerConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.dense.n_out()
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let c = &self.config;
        let mut out = match &self.encoder {
            Encoder::Conv(conv) => vec![
                LayerSpec::Conv1d {
                    channels: conv.channels(),
                    kernel: conv.kernel_size(),
                    stride: conv.stride,
                    activation: conv.activation,
                },
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
            ],
            Encoder::Recurrent(r) => vec![LayerSpec::Recurrent {
                kind: c.kind,
                units: r.hidden_dim(),
                activation: Activation::Tanh,
                recurrent_dropout: r.recurrent_dropout,
            }],
        };
        if c.dropout_rate > 0.0 {
            out.push(LayerSpec::Dropout {
                rate: c.dropout_rate,
            });
        }
        out.push(LayerSpec::Dense {
            units: self.dense.n_out(),
            activation: self.dense.activation,
        });
        out
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, TowerCache)> {
        let (_, d) = x.dims2()?;
        if d != self.config.embedding_dim {
            return Err(Error::shape(format!(
                "tower expects embedding width {}, got {d}",
                self.config.embedding_dim
            )));
        }
        let (encoded, enc_cache) = match &self.encoder {
            Encoder::Conv(conv) => {
                let (maps, conv_cache) = conv.forward(x)?;
                let (pooled, pool_cache) = maxpool_over_time(&maps)?;
                (pooled, EncoderCache::Conv(conv_cache, pool_cache))
            }
            Encoder::Recurrent(r) => {
                let (h, cache) = r.forward(x, mode)?;
                (h, EncoderCache::Recurrent(cache))
            }
        };
        let (dropped, mask) = dropout(&encoded, self.config.dropout_rate, mode)?;
        let (out, dense) = self.dense.forward(&dropped)?;
        Ok((
            out,
            TowerCache {
                encoder: enc_cache,
                mask,
                dense,
            },
        ))
    }

    /// Accumulate parameter gradients. Embeddings are frozen, so no input
    /// gradient is returned.
    pub fn backward(&mut self, cache: &TowerCache, grad_out: &Tensor) -> Result<()> {
        let g = self.dense.backward(&cache.dense, grad_out)?;
        let g = dropout_backward(&cache.mask, &g)?;
        match (&mut self.encoder, &cache.encoder) {
            (Encoder::Conv(conv), EncoderCache::Conv(conv_cache, pool_cache)) => {
                let g_maps = maxpool_backward(pool_cache, &g)?;
                conv.backward_params(conv_cache, &g_maps)
            }
            (Encoder::Recurrent(r), EncoderCache::Recurrent(rc)) => r.backward(rc, &g).map(|_| ()),
            _ => Err(Error::Internal("tower cache does not match encoder".into())),
        }
    }
}

impl HasParams for Tower {
    fn params(&self) -> Vec<&Parameter> {
        let mut p = match &self.encoder {
            Encoder::Conv(c) => c.params(),
            Encoder::Recurrent(r) => r.params(),
        };
        p.extend(self.dense.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = match &mut self.encoder {
            Encoder::Conv(c) => c.params_mut(),
            Encoder::Recurrent(r) => r.params_mut(),
        };
        p.extend(self.dense.params_mut());
        p
    }
}
