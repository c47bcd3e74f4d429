use rand::Rng;

use crate::kernel::{Parameter, Tensor};

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(
    name: &str,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Parameter {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Parameter::new(
        name,
        Tensor::new(shape, data).expect("shape product matches"),
    )
}
