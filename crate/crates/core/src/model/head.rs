use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::init::glorot_uniform;
use crate::kernel::{dot, HasParams, Parameter};

/// Dot-product coupling: `β0 + Σ w_i z_i + x_u·x_i` with `z = [x_u; x_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpHead {
    pub bias: Parameter,
    pub linear: Parameter,
    /// When set, the linear term is held at zero and never trained.
    pub pure_dot: bool,
}

impl DpHead {
    pub fn new(latent: usize, pure_dot: bool) -> Self {
        DpHead {
            bias: Parameter::zeros("head.bias", &[1]),
            linear: Parameter::zeros("head.linear", &[2 * latent]),
            pure_dot,
        }
    }

    pub fn latent(&self) -> usize {
        self.linear.len() / 2
    }

    fn check(&self, x_u: &[f64], x_i: &[f64]) -> Result<()> {
        if x_u.len() != self.latent() || x_i.len() != self.latent() {
            return Err(Error::shape(format!(
                "dp head expects two vectors of {}, got {} and {}",
                self.latent(),
                x_u.len(),
                x_i.len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x_u: &[f64], x_i: &[f64]) -> Result<f64> {
        self.check(x_u, x_i)?;
        let mut y = self.bias.value.data()[0] + dot(x_u, x_i);
        if !self.pure_dot {
            let (w_u, w_i) = self.linear.value.data().split_at(self.latent());
            y += dot(w_u, x_u) + dot(w_i, x_i);
        }
        Ok(y)
    }

    /// Accumulate head gradients for upstream `g = ∂loss/∂ŷ`; returns the
    /// gradients with respect to x_u and x_i.
    pub fn backward(&mut self, x_u: &[f64], x_i: &[f64], g: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x_u, x_i)?;
        let n = self.latent();
        self.bias.grad.data_mut()[0] += g;
        let mut g_u: Vec<f64> = x_i.iter().map(|v| g * v).collect();
        let mut g_i: Vec<f64> = x_u.iter().map(|v| g * v).collect();
        if !self.pure_dot {
            let w = self.linear.value.data();
            let gw = self.linear.grad.data_mut();
            for k in 0..n {
                gw[k] += g * x_u[k];
                gw[n + k] += g * x_i[k];
                g_u[k] += g * w[k];
                g_i[k] += g * w[n + k];
            }
        }
        Ok((g_u, g_i))
    }
}

impl HasParams for DpHead {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.bias, &self.linear]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.bias, &mut self.linear]
    }
}

/// Second-order factorization machine over `z`, evaluated in O(|z|·k) via
/// `½ Σ_f [(Σ_i V_if z_i)² − Σ_i V_if² z_i²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FmHead {
    pub bias: Parameter,
    pub linear: Parameter,
    /// `[|z| × k]`, row i is v_i
    pub factors: Parameter,
}

impl FmHead {
    pub fn new<R: Rng + ?Sized>(width: usize, rank: usize, rng: &mut R) -> Self {
        FmHead {
            bias: Parameter::zeros("head.bias", &[1]),
            linear: Parameter::zeros("head.linear", &[width]),
            factors: glorot_uniform("head.factors", &[width, rank], width, rank, rng),
        }
    }

    pub fn from_parts(bias: f64, linear: Vec<f64>, factors: Parameter) -> Result<Self> {
        let (n, _) = factors.value.dims2()?;
        if linear.len() != n {
            return Err(Error::shape("fm linear and factor rows disagree"));
        }
        Ok(FmHead {
            bias: Parameter::new("head.bias", crate::kernel::Tensor::scalar(bias)),
            linear: Parameter::new("head.linear", crate::kernel::Tensor::vector(linear)),
            factors,
        })
    }

    pub fn width(&self) -> usize {
        self.factors.shape()[0]
    }

    pub fn rank(&self) -> usize {
        self.factors.shape()[1]
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.width() {
            return Err(Error::shape(format!(
                "fm head expects |z| = {}, got {}",
                self.width(),
                z.len()
            )));
        }
        Ok(())
    }

    /// q_f = Σ_i V_if z_i
    fn projections(&self, z: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let v = self.factors.value.data();
        let mut q = vec![0.0; k];
        for (i, &zi) in z.iter().enumerate() {
            for f in 0..k {
                q[f] += v[i * k + f] * zi;
            }
        }
        q
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let k = self.rank();
        let v = self.factors.value.data();
        let q = self.projections(z);
        let mut pair = 0.0;
        for f in 0..k {
            let sq: f64 = z
                .iter()
                .enumerate()
                .map(|(i, &zi)| v[i * k + f] * v[i * k + f] * zi * zi)
                .sum();
            pair += q[f] * q[f] - sq;
        }
        Ok(self.bias.value.data()[0] + dot(self.linear.value.data(), z) + 0.5 * pair)
    }

    /// Accumulate gradients for upstream `g`; returns ∂loss/∂z.
    pub fn backward(&mut self, z: &[f64], g: f64) -> Result<Vec<f64>> {
        self.check(z)?;
        let k = self.rank();
        let q = self.projections(z);
        self.bias.grad.data_mut()[0] += g;
        let mut gz = vec![0.0; z.len()];
        let w = self.linear.value.data();
        let v = self.factors.value.data();
        let gw = self.linear.grad.data_mut();
        for (i, &zi) in z.iter().enumerate() {
            gw[i] += g * zi;
            let mut d = w[i];
            for f in 0..k {
                d += v[i * k + f] * (q[f] - v[i * k + f] * zi);
            }
            gz[i] = g * d;
        }
        let gv = self.factors.grad.data_mut();
        for (i, &zi) in z.iter().enumerate() {
            for f in 0..k {
                gv[i * k + f] += g * (zi * q[f] - v[i * k + f] * zi * zi);
            }
        }
        Ok(gz)
    }
}

impl HasParams for FmHead {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.bias, &self.linear, &self.factors]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.bias, &mut self.linear, &mut self.factors]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Dp(DpHead),
    Fm(FmHead),
}

impl Head {
    pub fn predict(&self, x_u: &[f64], x_i: &[f64]) -> Result<f64> {
        match self {
            Head::Dp(h) => h.predict(x_u, x_i),
            Head::Fm(h) => h.predict(&[x_u, x_i].concat()),
        }
    }

    pub fn backward(&mut self, x_u: &[f64], x_i: &[f64], g: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Head::Dp(h) => h.backward(x_u, x_i, g),
            Head::Fm(h) => {
                let mut gz = h.backward(&[x_u, x_i].concat(), g)?;
                let g_i = gz.split_off(x_u.len());
                Ok((gz, g_i))
            }
        }
    }

    pub fn bias_mut(&mut self) -> &mut Parameter {
        match self {
            Head::Dp(h) => &mut h.bias,
            Head::Fm(h) => &mut h.bias,
        }
    }
}

impl HasParams for Head {
    fn params(&self) -> Vec<&Parameter> {
        match self {
            Head::Dp(h) => h.params(),
            Head::Fm(h) => h.params(),
        }
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Head::Dp(h) => h.params_mut(),
            Head::Fm(h) => h.params_mut(),
        }
    }
}
