use crate::error::{Error, Result};
use crate::kernel::Tensor;

#[derive(Clone, Debug)]
pub struct PoolCache {
    len: usize,
    argmax: Vec<usize>,
}

/// Per-channel maximum over the time axis of an `[L × C]` tensor.
pub fn maxpool_over_time(x: &Tensor) -> Result<(Tensor, PoolCache)> {
    let (l, c) = x.dims2()?;
    if l == 0 {
        return Err(Error::shape("max-pool over an empty sequence"));
    }
    let mut best = x.row(0).to_vec();
    let mut argmax = vec![0; c];
    for pos in 1..l {
        for (ch, &v) in x.row(pos).iter().enumerate() {
            // strict comparison keeps the first argmax on ties
            if v > best[ch] {
                best[ch] = v;
                argmax[ch] = pos;
            }
        }
    }
    Ok((Tensor::vector(best), PoolCache { len: l, argmax }))
}

pub fn maxpool_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    let c = cache.argmax.len();
    grad_out.expect_shape(&[c], "max-pool grad")?;
    let mut gx = Tensor::zeros(&[cache.len, c]);
    for (ch, &pos) in cache.argmax.iter().enumerate() {
        gx.data_mut()[pos * c + ch] = grad_out.data()[ch];
    }
    Ok(gx)
}
