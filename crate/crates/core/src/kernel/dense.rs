use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::init::glorot_uniform;
use crate::kernel::{matvec_acc, outer_acc, vecmat_acc, Activation, HasParams, Parameter, Tensor};

/// Fully connected layer: `activation(x·W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        n_in: usize,
        n_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Dense {
            weight: glorot_uniform(&format!("{name}.weight"), &[n_in, n_out], n_in, n_out, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[n_out]),
            activation,
        }
    }

    /// Build from explicit values. `weight` is `[n_in × n_out]`.
    pub fn from_parts(weight: Parameter, bias: Parameter, activation: Activation) -> Result<Self> {
        let (_, n_out) = weight.value.dims2()?;
        bias.value.expect_shape(&[n_out], "dense bias")?;
        Ok(Dense {
            weight,
            bias,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        if x.len() != self.n_in() {
            return Err(Error::shape(format!(
                "dense `{}`: input has {} values, layer expects {}",
                self.weight.name,
                x.len(),
                self.n_in()
            )));
        }
        let mut out = self.bias.value.data().to_vec();
        vecmat_acc(x.data(), self.weight.value.data(), &mut out);
        for v in &mut out {
            *v = self.activation.apply(*v);
        }
        let y = Tensor::vector(out);
        y.check_finite(&self.weight.name)?;
        Ok((
            y.clone(),
            DenseCache {
                input: x.data().to_vec(),
                output: y.into_data(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &DenseCache, grad_out: &Tensor) -> Result<Tensor> {
        grad_out.expect_shape(&[self.n_out()], "dense grad")?;
        let g_pre: Vec<f64> = grad_out
            .data()
            .iter()
            .zip(&cache.output)
            .map(|(g, y)| g * self.activation.derivative_from_output(*y))
            .collect();
        outer_acc(&cache.input, &g_pre, self.weight.grad.data_mut());
        for (b, g) in self.bias.grad.data_mut().iter_mut().zip(&g_pre) {
            *b += g;
        }
        let mut gx = vec![0.0; self.n_in()];
        matvec_acc(self.weight.value.data(), &g_pre, &mut gx);
        Ok(Tensor::vector(gx))
    }
}

impl HasParams for Dense {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}
