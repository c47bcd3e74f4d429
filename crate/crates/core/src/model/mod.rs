//! The twin-tower rating model.
//!
//! A user document and an item document are embedded, encoded by two
//! independent towers into latent vectors `x_u` and `x_i`, and coupled by a
//! dot-product or factorization-machine head into a rating estimate.

mod config;
mod head;
mod tower;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    HeadKind, ModelConfig, Preset, TowerConfig, TowerKind, DEFAULT_DOC_LEN, DEFAULT_FM_RANK,
};
pub use head::{DpHead, FmHead, Head};
pub use tower::{Encoder, LayerSpec, Tower, TowerCache};

use crate::error::{Error, Result};
use crate::kernel::{HasParams, Mode, Parameter, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DeepConn {
    config: ModelConfig,
    pub user_tower: Tower,
    pub item_tower: Tower,
    pub head: Head,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    user: TowerCache,
    item: TowerCache,
    x_u: Vec<f64>,
    x_i: Vec<f64>,
}

impl ForwardCache {
    pub fn user_latent(&self) -> &[f64] {
        &self.x_u
    }

    pub fn item_latent(&self) -> &[f64] {
        &self.x_i
    }
}

impl DeepConn {
    /// Validates the config and initializes parameters from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let user_tower = Tower::new("user", &config.tower, &mut rng);
        let item_tower = Tower::new("item", &config.tower, &mut rng);
        let latent = config.tower.dense_units;
        let head = match config.head {
            HeadKind::Dp => Head::Dp(DpHead::new(latent, config.pure_dot)),
            HeadKind::Fm => Head::Fm(FmHead::new(2 * latent, config.fm_rank, &mut rng)),
        };
        Ok(DeepConn {
            config,
            user_tower,
            item_tower,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_global_bias(&mut self, value: f64) {
        self.head.bias_mut().value.data_mut()[0] = value;
    }

    pub fn global_bias(&self) -> f64 {
        self.head.params()[0].value.data()[0]
    }

    pub fn forward(
        &self,
        user_doc: &Tensor,
        item_doc: &Tensor,
        mode: &mut Mode<'_>,
    ) -> Result<(f64, ForwardCache)> {
        let (x_u, user) = self.user_tower.forward(user_doc, mode)?;
        let (x_i, item) = self.item_tower.forward(item_doc, mode)?;
        let x_u = x_u.into_data();
        let x_i = x_i.into_data();
        let y = self.head.predict(&x_u, &x_i)?;
        if !y.is_finite() {
            return Err(Error::NumericFault(format!("non-finite prediction {y}")));
        }
        Ok((
            y,
            ForwardCache {
                user,
                item,
                x_u,
                x_i,
            },
        ))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, user_doc: &Tensor, item_doc: &Tensor) -> Result<f64> {
        Ok(self.forward(user_doc, item_doc, &mut Mode::Eval)?.0)
    }

    /// Accumulate gradients of a loss whose derivative with respect to the
    /// prediction is `grad`.
    pub fn backward(&mut self, cache: &ForwardCache, grad: f64) -> Result<()> {
        let (g_u, g_i) = self.head.backward(&cache.x_u, &cache.x_i, grad)?;
        self.user_tower
            .backward(&cache.user, &Tensor::vector(g_u))?;
        self.item_tower.backward(&cache.item, &Tensor::vector(g_i))
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        self.user_tower.layers()
    }
}

impl HasParams for DeepConn {
    fn params(&self) -> Vec<&Parameter> {
        let mut p = self.user_tower.params();
        p.extend(self.item_tower.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.user_tower.params_mut();
        p.extend(self.item_tower.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Mean squared error.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "mse over {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("mse over zero pairs".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn mini(kind: TowerKind, head: HeadKind) -> ModelConfig {
        let mut c = Preset::Comparison.model(kind, 8, head);
        c.doc_len = 12;
        c.tower.hidden_units = 4;
        c.tower.conv_channels = 4;
        c.tower.kernel_size = 3;
        c.tower.stride = 2;
        c.tower.dense_units = 4;
        c.fm_rank = 2;
        c.init_seed = 11;
        c
    }

    fn doc(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            &[12, 8],
            (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 2.5);
        assert!(matches!(mse(&[], &[]), Err(Error::InvalidInput(_))));
        assert!(matches!(mse(&[1.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn constant_mean_predictor_gives_variance() {
        let t = [1.0, 2.0, 4.0, 5.0, 5.0];
        let mean = t.iter().sum::<f64>() / 5.0;
        let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
        assert!((mse(&[mean; 5], &t).unwrap() - var).abs() < 1e-12);
    }

    #[test]
    fn untrained_model_is_total_and_towers_are_distinct() {
        for kind in [TowerKind::Cnn, TowerKind::Lstm, TowerKind::Gru] {
            for head in [HeadKind::Dp, HeadKind::Fm] {
                let m = DeepConn::new(mini(kind, head)).unwrap();
                let (u, i) = (doc(1), doc(2));
                let a = m.predict(&u, &i).unwrap();
                let b = m.predict(&i, &u).unwrap();
                assert!(a.is_finite());
                assert_ne!(m.user_tower, m.item_tower);
                assert_eq!(a, m.predict(&u, &i).unwrap());
                let _ = b;
            }
        }
    }

    #[test]
    fn swapping_documents_changes_output() {
        let m = DeepConn::new(mini(TowerKind::Cnn, HeadKind::Fm)).unwrap();
        let (u, i) = (doc(1), doc(2));
        assert_ne!(m.predict(&u, &i).unwrap(), m.predict(&i, &u).unwrap());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = DeepConn::new(mini(TowerKind::Gru, HeadKind::Fm)).unwrap();
        let b = DeepConn::new(mini(TowerKind::Gru, HeadKind::Fm)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let mut c = mini(TowerKind::Cnn, HeadKind::Dp);
        c.tower.dense_units = 0;
        c.tower.dropout_rate = 1.0;
        let Err(Error::InvalidConfig(msg)) = DeepConn::new(c) else {
            panic!("expected config error")
        };
        assert!(msg.contains("dense_units") && msg.contains("dropout"));
    }

    #[test]
    fn baseline_replica_stack() {
        let c = Preset::BaselineReplica.model(TowerKind::Cnn, 50, HeadKind::Dp);
        let m = DeepConn::new(c).unwrap();
        assert_eq!(
            m.layers(),
            vec![
                LayerSpec::Conv1d {
                    channels: 64,
                    kernel: 8,
                    stride: 6,
                    activation: crate::kernel::Activation::Relu
                },
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 32,
                    activation: crate::kernel::Activation::Relu
                },
            ]
        );
    }

    #[test]
    fn param_names_are_unique() {
        let m = DeepConn::new(mini(TowerKind::Lstm, HeadKind::Fm)).unwrap();
        let names: std::collections::BTreeSet<_> = m.params().iter().map(|p| &p.name).collect();
        assert_eq!(names.len(), m.params().len());
    }

    proptest! {
        #[test]
        fn mse_nonnegative(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let v = mse(&p, &t).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v == 0.0, p == t);
        }
    }
}
