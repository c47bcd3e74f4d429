use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::init::glorot_uniform;
use crate::kernel::{dot, Activation, HasParams, Parameter, Tensor};

/// Output length of a valid (unpadded) 1-D convolution.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || len < kernel {
        return None;
    }
    Some((len - kernel) / stride + 1)
}

/// Temporal convolution over a `[T × d]` sequence with `C` filters of
/// width `K` spanning the full feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    /// `[C × K × d]`
    pub kernels: Parameter,
    /// `[C]`
    pub bias: Parameter,
    pub stride: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct Conv1dCache {
    input: Tensor,
    /// `[L × C]`, post-activation
    output: Vec<f64>,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        channels: usize,
        kernel: usize,
        features: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * features;
        Conv1d {
            kernels: glorot_uniform(
                &format!("{name}.kernels"),
                &[channels, kernel, features],
                fan_in,
                channels,
                rng,
            ),
            bias: Parameter::zeros(format!("{name}.bias"), &[channels]),
            stride,
            activation: Activation::Relu,
        }
    }

    pub fn from_parts(kernels: Parameter, bias: Parameter, stride: usize) -> Result<Self> {
        if kernels.shape().len() != 3 {
            return Err(Error::shape("conv kernels must be [C × K × d]"));
        }
        bias.value
            .expect_shape(&[kernels.shape()[0]], "conv bias")?;
        if stride == 0 {
            return Err(Error::InvalidConfig("conv stride must be ≥ 1".into()));
        }
        Ok(Conv1d {
            kernels,
            bias,
            stride,
            activation: Activation::Relu,
        })
    }

    pub fn channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        conv_output_len(len, self.kernel_size(), self.stride)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let (t, d) = x.dims2()?;
        if d != self.features() {
            return Err(Error::shape(format!(
                "conv `{}`: input feature width {d}, kernels expect {}",
                self.kernels.name,
                self.features()
            )));
        }
        let l = self.output_len(t).ok_or_else(|| {
            Error::shape(format!(
                "conv `{}`: sequence length {t} shorter than kernel {}",
                self.kernels.name,
                self.kernel_size()
            ))
        })?;
        let c = self.channels();
        let span = self.kernel_size() * d;
        let kern = self.kernels.value.data();
        let bias = self.bias.value.data();
        let mut out = vec![0.0; l * c];
        for pos in 0..l {
            let start = pos * self.stride * d;
            let window = &x.data()[start..start + span];
            for ch in 0..c {
                let pre = dot(window, &kern[ch * span..(ch + 1) * span]) + bias[ch];
                out[pos * c + ch] = self.activation.apply(pre);
            }
        }
        let y = Tensor::new(&[l, c], out)?;
        y.check_finite(&self.kernels.name)?;
        Ok((
            y.clone(),
            Conv1dCache {
                input: x.clone(),
                output: y.into_data(),
            },
        ))
    }

    fn backward_inner(
        &mut self,
        cache: &Conv1dCache,
        grad_out: &Tensor,
        mut grad_in: Option<&mut [f64]>,
    ) -> Result<()> {
        let (t, d) = cache.input.dims2()?;
        let c = self.channels();
        let l = self.output_len(t).expect("validated in forward");
        grad_out.expect_shape(&[l, c], "conv grad")?;
        let span = self.kernel_size() * d;
        let x = cache.input.data();
        for pos in 0..l {
            let start = pos * self.stride * d;
            for ch in 0..c {
                let idx = pos * c + ch;
                let g = grad_out.data()[idx]
                    * self.activation.derivative_from_output(cache.output[idx]);
                if g == 0.0 {
                    continue;
                }
                self.bias.grad.data_mut()[ch] += g;
                let gk = &mut self.kernels.grad.data_mut()[ch * span..(ch + 1) * span];
                for (gkv, xv) in gk.iter_mut().zip(&x[start..start + span]) {
                    *gkv += g * xv;
                }
                if let Some(gx) = grad_in.as_deref_mut() {
                    let k = &self.kernels.value.data()[ch * span..(ch + 1) * span];
                    for (gxv, kv) in gx[start..start + span].iter_mut().zip(k) {
                        *gxv += g * kv;
                    }
                }
            }
        }
        Ok(())
    }

    /// Accumulates kernel/bias gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<Tensor> {
        let mut gx = Tensor::zeros(cache.input.shape());
        self.backward_inner(cache, grad_out, Some(gx.data_mut()))?;
        Ok(gx)
    }

    /// Like [`backward`](Self::backward) but skips the input gradient, for
    /// inputs that are frozen embeddings.
    pub fn backward_params(&mut self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<()> {
        self.backward_inner(cache, grad_out, None)
    }
}

impl HasParams for Conv1d {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.kernels, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.kernels, &mut self.bias]
    }
}
