use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::init::glorot_uniform;
use crate::kernel::{matvec_acc, outer_acc, sigmoid, vecmat_acc, HasParams, Parameter, Tensor};

/// Gated recurrent unit without biases:
///
/// ```text
/// z  = σ(x·U_z + s·W_z)
/// r  = σ(x·U_r + s·W_r)
/// h  = tanh(x·U_h + (s ⊙ r)·W_h)
/// s' = (1 − z) ⊙ s + z ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub u_z: Parameter,
    pub u_r: Parameter,
    pub u_h: Parameter,
    pub w_z: Parameter,
    pub w_r: Parameter,
    pub w_h: Parameter,
}

#[derive(Clone, Debug)]
pub struct GruStepCache {
    x: Vec<f64>,
    s_prev: Vec<f64>,
    /// s_prev after the recurrent dropout mask, the value the gates see
    s_in: Vec<f64>,
    mask: Option<Vec<f64>>,
    z: Vec<f64>,
    r: Vec<f64>,
    h: Vec<f64>,
}

impl GruStepCache {
    pub fn update_gate(&self) -> &[f64] {
        &self.z
    }
    pub fn reset_gate(&self) -> &[f64] {
        &self.r
    }
    pub fn candidate(&self) -> &[f64] {
        &self.h
    }
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(name: &str, d_x: usize, d_h: usize, rng: &mut R) -> Self {
        let mut input =
            |g: &str| glorot_uniform(&format!("{name}.u_{g}"), &[d_x, d_h], d_x, d_h, rng);
        let (u_z, u_r, u_h) = (input("z"), input("r"), input("h"));
        let mut rec =
            |g: &str| glorot_uniform(&format!("{name}.w_{g}"), &[d_h, d_h], d_h, d_h, rng);
        let (w_z, w_r, w_h) = (rec("z"), rec("r"), rec("h"));
        GruCell {
            u_z,
            u_r,
            u_h,
            w_z,
            w_r,
            w_h,
        }
    }

    pub fn zeros(name: &str, d_x: usize, d_h: usize) -> Self {
        let p = |n: &str, r: usize| Parameter::zeros(format!("{name}.{n}"), &[r, d_h]);
        GruCell {
            u_z: p("u_z", d_x),
            u_r: p("u_r", d_x),
            u_h: p("u_h", d_x),
            w_z: p("w_z", d_h),
            w_r: p("w_r", d_h),
            w_h: p("w_h", d_h),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u_z.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.shape()[1]
    }

    fn check(&self, s_prev: &[f64], x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() || s_prev.len() != self.hidden_dim() {
            return Err(Error::shape(format!(
                "gru `{}`: got x[{}], s[{}]; expected x[{}], s[{}]",
                self.u_z.name,
                x.len(),
                s_prev.len(),
                self.input_dim(),
                self.hidden_dim()
            )));
        }
        Ok(())
    }

    fn gate(&self, u: &Parameter, w: &Parameter, x: &[f64], s: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.hidden_dim()];
        vecmat_acc(x, u.value.data(), &mut a);
        vecmat_acc(s, w.value.data(), &mut a);
        a
    }

    /// One step. `mask` is an optional recurrent-dropout multiplier on the
    /// state fed to the gates; the interpolation always uses the raw state.
    pub fn step_masked(
        &self,
        s_prev: &[f64],
        x: &[f64],
        mask: Option<&[f64]>,
    ) -> Result<(Vec<f64>, GruStepCache)> {
        self.check(s_prev, x)?;
        let s_in: Vec<f64> = match mask {
            Some(m) => s_prev.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => s_prev.to_vec(),
        };
        let z: Vec<f64> = self
            .gate(&self.u_z, &self.w_z, x, &s_in)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = self
            .gate(&self.u_r, &self.w_r, x, &s_in)
            .into_iter()
            .map(sigmoid)
            .collect();
        let sr: Vec<f64> = s_in.iter().zip(&r).map(|(a, b)| a * b).collect();
        let h: Vec<f64> = self
            .gate(&self.u_h, &self.w_h, x, &sr)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let s: Vec<f64> = (0..self.hidden_dim())
            .map(|k| (1.0 - z[k]) * s_prev[k] + z[k] * h[k])
            .collect();
        let cache = GruStepCache {
            x: x.to_vec(),
            s_prev: s_prev.to_vec(),
            s_in,
            mask: mask.map(<[f64]>::to_vec),
            z,
            r,
            h,
        };
        Ok((s, cache))
    }

    pub fn step(&self, s_prev: &Tensor, x: &Tensor) -> Result<(Tensor, GruStepCache)> {
        let (s, cache) = self.step_masked(s_prev.data(), x.data(), None)?;
        let s = Tensor::vector(s);
        s.check_finite(&self.u_z.name)?;
        Ok((s, cache))
    }

    /// Backward through one step. Returns (∂/∂s_prev, ∂/∂x).
    pub fn backward_step(
        &mut self,
        c: &GruStepCache,
        grad_s: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let dh = self.hidden_dim();
        if grad_s.len() != dh {
            return Err(Error::shape("gru grad width"));
        }
        let mut g_sprev: Vec<f64> = (0..dh).map(|k| grad_s[k] * (1.0 - c.z[k])).collect();
        let mut g_sin = vec![0.0; dh];
        let mut g_x = vec![0.0; self.input_dim()];

        // candidate
        let g_ah: Vec<f64> = (0..dh)
            .map(|k| grad_s[k] * c.z[k] * (1.0 - c.h[k] * c.h[k]))
            .collect();
        let sr: Vec<f64> = c.s_in.iter().zip(&c.r).map(|(a, b)| a * b).collect();
        outer_acc(&c.x, &g_ah, self.u_h.grad.data_mut());
        outer_acc(&sr, &g_ah, self.w_h.grad.data_mut());
        matvec_acc(self.u_h.value.data(), &g_ah, &mut g_x);
        let mut g_sr = vec![0.0; dh];
        matvec_acc(self.w_h.value.data(), &g_ah, &mut g_sr);

        // reset gate
        let g_ar: Vec<f64> = (0..dh)
            .map(|k| g_sr[k] * c.s_in[k] * c.r[k] * (1.0 - c.r[k]))
            .collect();
        for k in 0..dh {
            g_sin[k] += g_sr[k] * c.r[k];
        }
        outer_acc(&c.x, &g_ar, self.u_r.grad.data_mut());
        outer_acc(&c.s_in, &g_ar, self.w_r.grad.data_mut());
        matvec_acc(self.u_r.value.data(), &g_ar, &mut g_x);
        matvec_acc(self.w_r.value.data(), &g_ar, &mut g_sin);

        // update gate
        let g_az: Vec<f64> = (0..dh)
            .map(|k| grad_s[k] * (c.h[k] - c.s_prev[k]) * c.z[k] * (1.0 - c.z[k]))
            .collect();
        outer_acc(&c.x, &g_az, self.u_z.grad.data_mut());
        outer_acc(&c.s_in, &g_az, self.w_z.grad.data_mut());
        matvec_acc(self.u_z.value.data(), &g_az, &mut g_x);
        matvec_acc(self.w_z.value.data(), &g_az, &mut g_sin);

        match &c.mask {
            Some(m) => (0..dh).for_each(|k| g_sprev[k] += g_sin[k] * m[k]),
            None => (0..dh).for_each(|k| g_sprev[k] += g_sin[k]),
        }
        Ok((g_sprev, g_x))
    }
}

impl HasParams for GruCell {
    fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.u_z, &self.u_r, &self.u_h, &self.w_z, &self.w_r, &self.w_h,
        ]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_halve_the_state() {
        let cell = GruCell::zeros("g", 3, 4);
        let s_prev = Tensor::vector(vec![0.8, -0.4, 0.2, 1.0]);
        let (s, c) = cell
            .step(&s_prev, &Tensor::vector(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert!(c.update_gate().iter().all(|&z| z == 0.5));
        assert!(c.reset_gate().iter().all(|&r| r == 0.5));
        assert!(c.candidate().iter().all(|&h| h == 0.0));
        for (a, b) in s.data().iter().zip(s_prev.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn zero_state_zero_weights_stay_zero() {
        let cell = GruCell::zeros("g", 2, 3);
        let (s, _) = cell
            .step(&Tensor::zeros(&[3]), &Tensor::vector(vec![5.0, -5.0]))
            .unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let cell = GruCell::zeros("g", 2, 3);
        assert!(cell
            .step(&Tensor::zeros(&[2]), &Tensor::zeros(&[2]))
            .is_err());
    }

    proptest! {
        #[test]
        fn gates_open_interval_and_state_bounded(
            seed in 0u64..1000,
            s0 in proptest::collection::vec(-1.0f64..1.0, 4),
            x in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cell = GruCell::new("g", 3, 4, &mut rng);
            let (s, c) = cell.step(&Tensor::vector(s0), &Tensor::vector(x)).unwrap();
            prop_assert!(c.update_gate().iter().chain(c.reset_gate()).all(|&g| g > 0.0 && g < 1.0));
            prop_assert!(s.max_abs() <= 1.0);
        }
    }
}
