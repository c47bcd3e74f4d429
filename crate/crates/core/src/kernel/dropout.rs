use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Forward-pass mode. Training carries the RNG that draws dropout masks.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Per-entry multipliers: 0 for dropped entries, 1/(1−p) for kept ones.
/// `None` means the layer acted as the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(pub Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn sample(rate: f64, len: usize, rng: &mut dyn RngCore) -> Result<Self> {
        check_rate(rate)?;
        if rate == 0.0 {
            return Ok(DropoutMask(None));
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        Ok(DropoutMask(Some(
            (0..len)
                .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                .collect(),
        )))
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match &self.0 {
            None => Ok(x.clone()),
            Some(m) => {
                if m.len() != x.len() {
                    return Err(Error::shape(format!(
                        "dropout mask has {} entries, input {}",
                        m.len(),
                        x.len()
                    )));
                }
                let data = x.data().iter().zip(m).map(|(a, b)| a * b).collect();
                Tensor::new(x.shape(), data)
            }
        }
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "dropout rate {rate} outside [0,1)"
        )));
    }
    Ok(())
}

/// Inverted dropout. Eval mode is the identity.
pub fn dropout(x: &Tensor, rate: f64, mode: &mut Mode<'_>) -> Result<(Tensor, DropoutMask)> {
    check_rate(rate)?;
    let mask = match mode {
        Mode::Eval => DropoutMask::identity(),
        Mode::Train(rng) => DropoutMask::sample(rate, x.len(), &mut **rng)?,
    };
    Ok((mask.apply(x)?, mask))
}

pub fn dropout_backward(mask: &DropoutMask, grad_out: &Tensor) -> Result<Tensor> {
    mask.apply(grad_out)
}
