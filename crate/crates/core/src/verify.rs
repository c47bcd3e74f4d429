//! Finite-difference verification of every layer's backward pass and of the
//! assembled model.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kernel::gradcheck::gradcheck_scaled;
use crate::kernel::{
    dropout_backward, maxpool_backward, maxpool_over_time, Activation, Conv1d, Dense, DropoutMask,
    GradCheckReport, GruCell, HasParams, LstmCell, LstmState, Mode, Objective, Parameter, Tensor,
};
use crate::model::{DeepConn, DpHead, FmHead, HeadKind, ModelConfig, Preset, TowerKind};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub eps: f64,
    pub threshold: f64,
    /// Multiplier applied to analytic gradients; anything but 1 simulates a
    /// broken backward pass.
    pub grad_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            eps: DEFAULT_EPS,
            threshold: DEFAULT_THRESHOLD,
            grad_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
    pub passed: bool,
    pub seconds: f64,
}

impl CheckOutcome {
    fn new(name: &str, r: GradCheckReport, threshold: f64, seconds: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: r.passes(threshold),
            max_relative_error: r.max_relative_error,
            worst_param: r.worst_param,
            worst_index: r.worst_index,
            worst_analytic: r.worst_analytic,
            worst_numeric: r.worst_numeric,
            entries_checked: r.entries_checked,
            seconds,
        }
    }
}

struct Harness<S> {
    state: S,
    params: fn(&mut S) -> Vec<&mut Parameter>,
    eval: fn(&mut S, bool) -> Result<f64>,
}

impl<S> Objective for Harness<S> {
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        (self.params)(&mut self.state)
    }
    fn evaluate(&mut self, accumulate_grad: bool) -> Result<f64> {
        (self.eval)(&mut self.state, accumulate_grad)
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_param(name: &str, shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Parameter {
    let n = shape.iter().product();
    Parameter::new(
        name,
        Tensor::new(shape, random(rng, n, scale)).expect("shape"),
    )
}

fn projection(out: &Tensor, coeffs: &[f64]) -> f64 {
    out.data().iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

fn add_grad(p: &mut Parameter, g: &[f64]) {
    for (a, b) in p.grad.data_mut().iter_mut().zip(g) {
        *a += b;
    }
}

struct DenseState {
    layer: Dense,
    x: Parameter,
    c: Vec<f64>,
}

fn dense_check() -> Harness<DenseState> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let layer = Dense::new("dense", 6, 4, Activation::Relu, &mut rng);
    let mut layer = layer;
    layer
        .bias
        .value
        .data_mut()
        .copy_from_slice(&random(&mut rng, 4, 0.5));
    Harness {
        state: DenseState {
            layer,
            x: random_param("dense.input", &[6], &mut rng, 1.0),
            c: random(&mut rng, 4, 1.0),
        },
        params: |s| {
            let mut p = s.layer.params_mut();
            p.push(&mut s.x);
            p
        },
        eval: |s, grad| {
            let (y, cache) = s.layer.forward(&s.x.value)?;
            if grad {
                let gx = s.layer.backward(&cache, &Tensor::vector(s.c.clone()))?;
                add_grad(&mut s.x, gx.data());
            }
            Ok(projection(&y, &s.c))
        },
    }
}

struct ConvState {
    layer: Conv1d,
    x: Parameter,
    c: Vec<f64>,
}

fn conv_check() -> Harness<ConvState> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut layer = Conv1d::new("conv", 3, 3, 4, 2, &mut rng);
    layer
        .bias
        .value
        .data_mut()
        .copy_from_slice(&random(&mut rng, 3, 0.3));
    let out_len = layer.output_len(9).expect("length");
    Harness {
        state: ConvState {
            layer,
            x: random_param("conv.input", &[9, 4], &mut rng, 1.0),
            c: random(&mut rng, out_len * 3, 1.0),
        },
        params: |s| {
            let mut p = s.layer.params_mut();
            p.push(&mut s.x);
            p
        },
        eval: |s, grad| {
            let (y, cache) = s.layer.forward(&s.x.value)?;
            if grad {
                let g = Tensor::new(y.shape(), s.c.clone())?;
                let gx = s.layer.backward(&cache, &g)?;
                add_grad(&mut s.x, gx.data());
            }
            Ok(projection(&y, &s.c))
        },
    }
}

struct InputState {
    x: Parameter,
    c: Vec<f64>,
    mask: DropoutMask,
}

fn pool_check() -> Harness<InputState> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    Harness {
        state: InputState {
            x: random_param("pool.input", &[7, 5], &mut rng, 1.0),
            c: random(&mut rng, 5, 1.0),
            mask: DropoutMask::identity(),
        },
        params: |s| vec![&mut s.x],
        eval: |s, grad| {
            let (y, cache) = maxpool_over_time(&s.x.value)?;
            if grad {
                let gx = maxpool_backward(&cache, &Tensor::vector(s.c.clone()))?;
                add_grad(&mut s.x, gx.data());
            }
            Ok(projection(&y, &s.c))
        },
    }
}

fn dropout_check() -> Result<Harness<InputState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mask = DropoutMask::sample(0.5, 12, &mut rng)?;
    Ok(Harness {
        state: InputState {
            x: random_param("dropout.input", &[12], &mut rng, 1.0),
            c: random(&mut rng, 12, 1.0),
            mask,
        },
        params: |s| vec![&mut s.x],
        eval: |s, grad| {
            let y = s.mask.apply(&s.x.value)?;
            if grad {
                let gx = dropout_backward(&s.mask, &Tensor::vector(s.c.clone()))?;
                add_grad(&mut s.x, gx.data());
            }
            Ok(projection(&y, &s.c))
        },
    })
}

const UNROLL: usize = 3;

struct GruState {
    cell: GruCell,
    s0: Parameter,
    xs: Parameter,
    mask: Vec<f64>,
    c: Vec<f64>,
}

fn gru_check() -> Harness<GruState> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (dx, dh) = (4, 3);
    Harness {
        state: GruState {
            cell: GruCell::new("gru", dx, dh, &mut rng),
            s0: random_param("gru.s0", &[dh], &mut rng, 0.8),
            xs: random_param("gru.inputs", &[UNROLL, dx], &mut rng, 1.0),
            mask: vec![1.25, 0.0, 1.25],
            c: random(&mut rng, dh, 1.0),
        },
        params: |s| {
            let mut p = s.cell.params_mut();
            p.push(&mut s.s0);
            p.push(&mut s.xs);
            p
        },
        eval: |s, grad| {
            let mut state = s.s0.value.data().to_vec();
            let mut caches = Vec::new();
            for t in 0..UNROLL {
                let (next, c) = s
                    .cell
                    .step_masked(&state, s.xs.value.row(t), Some(&s.mask))?;
                state = next;
                caches.push(c);
            }
            if grad {
                let mut g = s.c.clone();
                for t in (0..UNROLL).rev() {
                    let (g_prev, g_x) = s.cell.backward_step(&caches[t], &g)?;
                    for (a, b) in s.xs.grad.row_mut(t).iter_mut().zip(&g_x) {
                        *a += b;
                    }
                    g = g_prev;
                }
                add_grad(&mut s.s0, &g);
            }
            Ok(state.iter().zip(&s.c).map(|(a, b)| a * b).sum())
        },
    }
}

struct LstmHarness {
    cell: LstmCell,
    h0: Parameter,
    c0: Parameter,
    xs: Parameter,
    mask: Vec<f64>,
    ch: Vec<f64>,
    cc: Vec<f64>,
}

fn lstm_check() -> Harness<LstmHarness> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (dx, dh) = (4, 3);
    let mut cell = LstmCell::new("lstm", dx, dh, &mut rng);
    for b in cell.b.iter_mut() {
        let v = random(&mut rng, dh, 0.5);
        b.value
            .data_mut()
            .iter_mut()
            .zip(v)
            .for_each(|(a, r)| *a += r);
    }
    Harness {
        state: LstmHarness {
            cell,
            h0: random_param("lstm.h0", &[dh], &mut rng, 0.8),
            c0: random_param("lstm.c0", &[dh], &mut rng, 0.8),
            xs: random_param("lstm.inputs", &[UNROLL, dx], &mut rng, 1.0),
            mask: vec![0.0, 1.25, 1.25],
            ch: random(&mut rng, dh, 1.0),
            cc: random(&mut rng, dh, 1.0),
        },
        params: |s| {
            let mut p = s.cell.params_mut();
            p.push(&mut s.h0);
            p.push(&mut s.c0);
            p.push(&mut s.xs);
            p
        },
        eval: |s, grad| {
            let mut state = LstmState {
                h: s.h0.value.data().to_vec(),
                c: s.c0.value.data().to_vec(),
            };
            let mut caches = Vec::new();
            for t in 0..UNROLL {
                let (next, c) = s
                    .cell
                    .step_masked(&state, s.xs.value.row(t), Some(&s.mask))?;
                state = next;
                caches.push(c);
            }
            if grad {
                let (mut gh, mut gc) = (s.ch.clone(), s.cc.clone());
                for t in (0..UNROLL).rev() {
                    let (gh_prev, gc_prev, g_x) = s.cell.backward_step(&caches[t], &gh, &gc)?;
                    for (a, b) in s.xs.grad.row_mut(t).iter_mut().zip(&g_x) {
                        *a += b;
                    }
                    gh = gh_prev;
                    gc = gc_prev;
                }
                add_grad(&mut s.h0, &gh);
                add_grad(&mut s.c0, &gc);
            }
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            Ok(dot(&state.h, &s.ch) + dot(&state.c, &s.cc))
        },
    }
}

struct DpState {
    head: DpHead,
    xu: Parameter,
    xi: Parameter,
}

fn dp_check() -> Harness<DpState> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut head = DpHead::new(4, false);
    head.bias.value.data_mut()[0] = 0.3;
    head.linear
        .value
        .data_mut()
        .copy_from_slice(&random(&mut rng, 8, 1.0));
    Harness {
        state: DpState {
            head,
            xu: random_param("dp.x_u", &[4], &mut rng, 1.0),
            xi: random_param("dp.x_i", &[4], &mut rng, 1.0),
        },
        params: |s| {
            let mut p = s.head.params_mut();
            p.push(&mut s.xu);
            p.push(&mut s.xi);
            p
        },
        eval: |s, grad| {
            let y = s.head.predict(s.xu.value.data(), s.xi.value.data())?;
            let loss = (y - 2.0) * (y - 2.0);
            if grad {
                let (gu, gi) =
                    s.head
                        .backward(s.xu.value.data(), s.xi.value.data(), 2.0 * (y - 2.0))?;
                add_grad(&mut s.xu, &gu);
                add_grad(&mut s.xi, &gi);
            }
            Ok(loss)
        },
    }
}

struct FmState {
    head: FmHead,
    z: Parameter,
}

fn fm_check() -> Harness<FmState> {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut head = FmHead::new(8, 3, &mut rng);
    head.bias.value.data_mut()[0] = -0.2;
    head.linear
        .value
        .data_mut()
        .copy_from_slice(&random(&mut rng, 8, 1.0));
    Harness {
        state: FmState {
            head,
            z: random_param("fm.z", &[8], &mut rng, 1.0),
        },
        params: |s| {
            let mut p = s.head.params_mut();
            p.push(&mut s.z);
            p
        },
        eval: |s, grad| {
            let y = s.head.predict(s.z.value.data())?;
            let loss = (y - 2.0) * (y - 2.0);
            if grad {
                let gz = s.head.backward(s.z.value.data(), 2.0 * (y - 2.0))?;
                add_grad(&mut s.z, &gz);
            }
            Ok(loss)
        },
    }
}

/// The miniature configuration: T=12, d=8, four units everywhere.
pub fn miniature_config(kind: TowerKind, head: HeadKind) -> ModelConfig {
    let mut c = Preset::Comparison.model(kind, 8, head);
    c.doc_len = 12;
    c.tower.hidden_units = 4;
    c.tower.conv_channels = 4;
    c.tower.kernel_size = 4;
    c.tower.stride = 2;
    c.tower.dense_units = 4;
    c.tower.recurrent_dropout = if kind == TowerKind::Cnn { 0.0 } else { 0.2 };
    c.fm_rank = 3;
    c.init_seed = 109;
    c
}

struct ModelState {
    model: DeepConn,
    user: Tensor,
    item: Tensor,
    target: f64,
}

fn model_check(kind: TowerKind, head: HeadKind) -> Result<Harness<ModelState>> {
    let config = miniature_config(kind, head);
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut model = DeepConn::new(config)?;
    for p in model.params_mut() {
        if p.name.ends_with("bias") && !p.name.starts_with("head") {
            let v = random(&mut rng, p.len(), 0.2);
            p.value
                .data_mut()
                .iter_mut()
                .zip(v)
                .for_each(|(a, r)| *a += r);
        }
    }
    model.set_global_bias(0.5);
    Ok(Harness {
        state: ModelState {
            model,
            user: Tensor::new(&[12, 8], random(&mut rng, 96, 1.0))?,
            item: Tensor::new(&[12, 8], random(&mut rng, 96, 1.0))?,
            target: 3.0,
        },
        params: |s| s.model.params_mut(),
        eval: |s, grad| {
            // Same masks on every evaluation.
            let mut rng = ChaCha8Rng::seed_from_u64(111);
            let (y, cache) = s
                .model
                .forward(&s.user, &s.item, &mut Mode::Train(&mut rng))?;
            if grad {
                s.model.backward(&cache, 2.0 * (y - s.target))?;
            }
            Ok((y - s.target) * (y - s.target))
        },
    })
}

fn run<O: Objective>(
    name: &str,
    mut obj: O,
    opts: &SuiteOptions,
    out: &mut Vec<CheckOutcome>,
) -> Result<()> {
    let started = Instant::now();
    let report = gradcheck_scaled(&mut obj, opts.eps, opts.grad_scale)?;
    out.push(CheckOutcome::new(
        name,
        report,
        opts.threshold,
        started.elapsed().as_secs_f64(),
    ));
    Ok(())
}

pub fn layer_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "dense",
        "conv1d",
        "maxpool_over_time",
        "dropout",
        "gru_step",
        "lstm_step",
        "dp_head",
        "fm_head",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for kind in [TowerKind::Cnn, TowerKind::Gru, TowerKind::Lstm] {
        for head in [HeadKind::Dp, HeadKind::Fm] {
            names.push(model_check_name(kind, head));
        }
    }
    names
}

fn model_check_name(kind: TowerKind, head: HeadKind) -> String {
    let h = match head {
        HeadKind::Dp => "dp",
        HeadKind::Fm => "fm",
    };
    format!("model[{}+{h}]", kind.to_string().to_lowercase())
}

/// Run every check; one outcome per entry of [`layer_names`].
pub fn gradcheck_suite(opts: &SuiteOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    run("dense", dense_check(), opts, &mut out)?;
    run("conv1d", conv_check(), opts, &mut out)?;
    run("maxpool_over_time", pool_check(), opts, &mut out)?;
    run("dropout", dropout_check()?, opts, &mut out)?;
    run("gru_step", gru_check(), opts, &mut out)?;
    run("lstm_step", lstm_check(), opts, &mut out)?;
    run("dp_head", dp_check(), opts, &mut out)?;
    run("fm_head", fm_check(), opts, &mut out)?;
    for kind in [TowerKind::Cnn, TowerKind::Gru, TowerKind::Lstm] {
        for head in [HeadKind::Dp, HeadKind::Fm] {
            run(
                &model_check_name(kind, head),
                model_check(kind, head)?,
                opts,
                &mut out,
            )?;
        }
    }
    Ok(out)
}
