use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::dropout::check_rate;
use crate::kernel::{
    DropoutMask, GruCell, GruStepCache, HasParams, LstmCell, LstmState, LstmStepCache, Mode,
    Parameter, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentCell {
    Gru(GruCell),
    Lstm(LstmCell),
}

/// Runs a cell over every row of a `[T × d]` sequence from a zero state and
/// returns the final hidden state.
///
/// Recurrent dropout draws one mask per sequence and applies it to the
/// hidden state entering the recurrent weights at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct Recurrent {
    pub cell: RecurrentCell,
    pub recurrent_dropout: f64,
}

#[derive(Clone, Debug)]
enum Steps {
    Gru(Vec<GruStepCache>),
    Lstm(Vec<LstmStepCache>),
}

#[derive(Clone, Debug)]
pub struct RecurrentCache {
    steps: Steps,
    len: usize,
    features: usize,
}

impl Recurrent {
    pub fn gru<R: Rng + ?Sized>(
        name: &str,
        d_x: usize,
        d_h: usize,
        rate: f64,
        rng: &mut R,
    ) -> Self {
        Recurrent {
            cell: RecurrentCell::Gru(GruCell::new(name, d_x, d_h, rng)),
            recurrent_dropout: rate,
        }
    }

    pub fn lstm<R: Rng + ?Sized>(
        name: &str,
        d_x: usize,
        d_h: usize,
        rate: f64,
        rng: &mut R,
    ) -> Self {
        Recurrent {
            cell: RecurrentCell::Lstm(LstmCell::new(name, d_x, d_h, rng)),
            recurrent_dropout: rate,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.cell {
            RecurrentCell::Gru(c) => c.input_dim(),
            RecurrentCell::Lstm(c) => c.input_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match &self.cell {
            RecurrentCell::Gru(c) => c.hidden_dim(),
            RecurrentCell::Lstm(c) => c.hidden_dim(),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, RecurrentCache)> {
        check_rate(self.recurrent_dropout)?;
        let mask = match mode {
            Mode::Train(rng) if self.recurrent_dropout > 0.0 => {
                DropoutMask::sample(self.recurrent_dropout, self.hidden_dim(), &mut **rng)?
            }
            _ => DropoutMask::identity(),
        };
        self.forward_with_mask(x, &mask)
    }

    pub fn forward_with_mask(
        &self,
        x: &Tensor,
        mask: &DropoutMask,
    ) -> Result<(Tensor, RecurrentCache)> {
        let (t, d) = x.dims2()?;
        if d != self.input_dim() {
            return Err(Error::shape(format!(
                "recurrent input width {d}, cell expects {}",
                self.input_dim()
            )));
        }
        let m = mask.0.as_deref();
        let dh = self.hidden_dim();
        let (h, steps) = match &self.cell {
            RecurrentCell::Gru(cell) => {
                let mut s = vec![0.0; dh];
                let mut caches = Vec::with_capacity(t);
                for row in 0..t {
                    let (next, c) = cell.step_masked(&s, x.row(row), m)?;
                    s = next;
                    caches.push(c);
                }
                (s, Steps::Gru(caches))
            }
            RecurrentCell::Lstm(cell) => {
                let mut state = LstmState::zeros(dh);
                let mut caches = Vec::with_capacity(t);
                for row in 0..t {
                    let (next, c) = cell.step_masked(&state, x.row(row), m)?;
                    state = next;
                    caches.push(c);
                }
                (state.h, Steps::Lstm(caches))
            }
        };
        let h = Tensor::vector(h);
        h.check_finite("recurrent state")?;
        Ok((
            h,
            RecurrentCache {
                steps,
                len: t,
                features: d,
            },
        ))
    }

    /// Backpropagation through time. Returns the `[T × d]` input gradient.
    pub fn backward(&mut self, cache: &RecurrentCache, grad_h: &Tensor) -> Result<Tensor> {
        let dh = self.hidden_dim();
        grad_h.expect_shape(&[dh], "recurrent grad")?;
        let mut gx = Tensor::zeros(&[cache.len, cache.features]);
        match (&mut self.cell, &cache.steps) {
            (RecurrentCell::Gru(cell), Steps::Gru(steps)) => {
                let mut g = grad_h.data().to_vec();
                for (row, c) in steps.iter().enumerate().rev() {
                    let (g_prev, g_x) = cell.backward_step(c, &g)?;
                    gx.row_mut(row).copy_from_slice(&g_x);
                    g = g_prev;
                }
            }
            (RecurrentCell::Lstm(cell), Steps::Lstm(steps)) => {
                let mut g_h = grad_h.data().to_vec();
                let mut g_c = vec![0.0; dh];
                for (row, c) in steps.iter().enumerate().rev() {
                    let (gh, gc, g_x) = cell.backward_step(c, &g_h, &g_c)?;
                    gx.row_mut(row).copy_from_slice(&g_x);
                    g_h = gh;
                    g_c = gc;
                }
            }
            _ => return Err(Error::Internal("recurrent cache/cell kind mismatch".into())),
        }
        Ok(gx)
    }
}

impl HasParams for Recurrent {
    fn params(&self) -> Vec<&Parameter> {
        match &self.cell {
            RecurrentCell::Gru(c) => c.params(),
            RecurrentCell::Lstm(c) => c.params(),
        }
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match &mut self.cell {
            RecurrentCell::Gru(c) => c.params_mut(),
            RecurrentCell::Lstm(c) => c.params_mut(),
        }
    }
}
