use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::init::glorot_uniform;
use crate::kernel::{matvec_acc, outer_acc, sigmoid, vecmat_acc, HasParams, Parameter, Tensor};

/// Standard LSTM cell with per-gate weights and biases.
///
/// ```text
/// i = σ(x·W_i + h·U_i + b_i)    f = σ(x·W_f + h·U_f + b_f)
/// o = σ(x·W_o + h·U_o + b_o)    g = tanh(x·W_g + h·U_g + b_g)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    /// input weights `[d_x × d_h]`, in gate order i, f, o, g
    pub w: [Parameter; 4],
    /// recurrent weights `[d_h × d_h]`
    pub u: [Parameter; 4],
    /// biases `[d_h]`
    pub b: [Parameter; 4],
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(d_h: usize) -> Self {
        LstmState {
            h: vec![0.0; d_h],
            c: vec![0.0; d_h],
        }
    }
}

#[derive(Clone, Debug)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_in: Vec<f64>,
    c_prev: Vec<f64>,
    mask: Option<Vec<f64>>,
    /// post-activation gates i, f, o, g
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

impl LstmStepCache {
    pub fn gate(&self, k: usize) -> &[f64] {
        &self.gates[k]
    }
}

impl LstmCell {
    /// Glorot weights, zero biases, forget bias 1.
    pub fn new<R: Rng + ?Sized>(name: &str, d_x: usize, d_h: usize, rng: &mut R) -> Self {
        let w = GATES.map(|g| glorot_uniform(&format!("{name}.w_{g}"), &[d_x, d_h], d_x, d_h, rng));
        let u = GATES.map(|g| glorot_uniform(&format!("{name}.u_{g}"), &[d_h, d_h], d_h, d_h, rng));
        let mut b = GATES.map(|g| Parameter::zeros(format!("{name}.b_{g}"), &[d_h]));
        b[FORGET].value.fill(1.0);
        LstmCell { w, u, b }
    }

    /// All weights and biases zero except the forget bias, which is 1.
    pub fn zeros(name: &str, d_x: usize, d_h: usize) -> Self {
        let w = GATES.map(|g| Parameter::zeros(format!("{name}.w_{g}"), &[d_x, d_h]));
        let u = GATES.map(|g| Parameter::zeros(format!("{name}.u_{g}"), &[d_h, d_h]));
        let mut b = GATES.map(|g| Parameter::zeros(format!("{name}.b_{g}"), &[d_h]));
        b[FORGET].value.fill(1.0);
        LstmCell { w, u, b }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w[0].shape()[1]
    }

    pub fn step_masked(
        &self,
        state: &LstmState,
        x: &[f64],
        mask: Option<&[f64]>,
    ) -> Result<(LstmState, LstmStepCache)> {
        let dh = self.hidden_dim();
        if x.len() != self.input_dim() || state.h.len() != dh || state.c.len() != dh {
            return Err(Error::shape(format!(
                "lstm `{}`: got x[{}], h[{}], c[{}]; expected x[{}], h/c[{dh}]",
                self.w[0].name,
                x.len(),
                state.h.len(),
                state.c.len(),
                self.input_dim()
            )));
        }
        let h_in: Vec<f64> = match mask {
            Some(m) => state.h.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => state.h.clone(),
        };
        let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let mut a = self.b[k].value.data().to_vec();
            vecmat_acc(x, self.w[k].value.data(), &mut a);
            vecmat_acc(&h_in, self.u[k].value.data(), &mut a);
            let act: fn(f64) -> f64 = if k == 3 { f64::tanh } else { sigmoid };
            a.into_iter().map(act).collect()
        });
        let [i, f, o, g] = &gates;
        let c: Vec<f64> = (0..dh).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..dh).map(|k| o[k] * tanh_c[k]).collect();
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_in,
            c_prev: state.c.clone(),
            mask: mask.map(<[f64]>::to_vec),
            gates,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    pub fn step(&self, state: &LstmState, x: &Tensor) -> Result<(LstmState, LstmStepCache)> {
        let (s, cache) = self.step_masked(state, x.data(), None)?;
        if !s.h.iter().chain(&s.c).all(|v| v.is_finite()) {
            return Err(Error::NumericFault(format!(
                "lstm `{}` state",
                self.w[0].name
            )));
        }
        Ok((s, cache))
    }

    /// Backward through one step given ∂/∂h' and ∂/∂c'.
    /// Returns (∂/∂h_prev, ∂/∂c_prev, ∂/∂x).
    pub fn backward_step(
        &mut self,
        cache: &LstmStepCache,
        grad_h: &[f64],
        grad_c: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let dh = self.hidden_dim();
        if grad_h.len() != dh || grad_c.len() != dh {
            return Err(Error::shape("lstm grad width"));
        }
        let [i, f, o, g] = &cache.gates;
        let g_c: Vec<f64> = (0..dh)
            .map(|k| grad_c[k] + grad_h[k] * o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]))
            .collect();
        let pre: [Vec<f64>; 4] = [
            (0..dh)
                .map(|k| g_c[k] * g[k] * i[k] * (1.0 - i[k]))
                .collect(),
            (0..dh)
                .map(|k| g_c[k] * cache.c_prev[k] * f[k] * (1.0 - f[k]))
                .collect(),
            (0..dh)
                .map(|k| grad_h[k] * cache.tanh_c[k] * o[k] * (1.0 - o[k]))
                .collect(),
            (0..dh)
                .map(|k| g_c[k] * i[k] * (1.0 - g[k] * g[k]))
                .collect(),
        ];
        let g_cprev: Vec<f64> = (0..dh).map(|k| g_c[k] * f[k]).collect();
        let mut g_x = vec![0.0; self.input_dim()];
        let mut g_hin = vec![0.0; dh];
        for (k, a) in pre.iter().enumerate() {
            outer_acc(&cache.x, a, self.w[k].grad.data_mut());
            outer_acc(&cache.h_in, a, self.u[k].grad.data_mut());
            for (b, v) in self.b[k].grad.data_mut().iter_mut().zip(a) {
                *b += v;
            }
            matvec_acc(self.w[k].value.data(), a, &mut g_x);
            matvec_acc(self.u[k].value.data(), a, &mut g_hin);
        }
        if let Some(m) = &cache.mask {
            g_hin.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        Ok((g_hin, g_cprev, g_x))
    }
}

impl HasParams for LstmCell {
    fn params(&self) -> Vec<&Parameter> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .collect()
    }
}
