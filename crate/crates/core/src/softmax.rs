use rayon::prelude::*;

use crate::meter::FlopMeter;
use crate::tensor::{Element, Tensor};

/// Softmax across the channel axis at every `(n, y, x)`, max-subtracted.
pub fn channel_softmax<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    channel_softmax_metered(input, None)
}

pub(crate) fn channel_softmax_metered<T: Element>(
    input: &Tensor<T>,
    meter: Option<&FlopMeter>,
) -> Tensor<T> {
    let s = input.shape();
    let plane = s.plane();
    let mut out = vec![T::zero(); s.numel()];
    let src = input.data();
    if plane == 0 || s.c == 0 {
        return Tensor::from_parts(s, out);
    }
    out.par_chunks_mut(s.c * plane)
        .enumerate()
        .for_each(|(n, dst)| {
            let base = n * s.c * plane;
            for p in 0..plane {
                let mut max = T::neg_infinity();
                for c in 0..s.c {
                    max = max.max(src[base + c * plane + p]);
                }
                let mut sum = T::zero();
                for c in 0..s.c {
                    let e = (src[base + c * plane + p] - max).exp();
                    dst[c * plane + p] = e;
                    sum = sum + e;
                }
                for c in 0..s.c {
                    dst[c * plane + p] = dst[c * plane + p] / sum;
                }
            }
        });
    if let Some(m) = meter {
        m.add_softmax((s.n * plane) as u64, s.c as u64);
    }
    Tensor::from_parts(s, out)
}
