use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::meter::{tally_macs, FlopMeter};
use crate::tensor::{Element, Shape, Tensor};

use super::{KernelField, UpsampleConfig};

/// Content-aware reassembly: output `(i, j, c)` is the inner product of the
/// kernel at `(i, j)` with the zero-padded `k_up x k_up` neighbourhood of
/// input pixel `(i / sigma, j / sigma)` in channel `c`.
pub fn reassemble<T: Element>(
    input: &Tensor<T>,
    kernels: &KernelField<T>,
    config: &UpsampleConfig,
) -> Result<Tensor<T>> {
    reassemble_metered(input, kernels, config, None)
}

pub(crate) fn check_reassemble_shapes(
    input: Shape,
    kernels: Shape,
    config: &UpsampleConfig,
) -> Result<Shape> {
    let sigma = config.sigma;
    if kernels.c != config.taps() {
        return shape_err(format!(
            "reassemble: kernels have {} channels, k_up^2 = {}",
            kernels.c,
            config.taps()
        ));
    }
    let out = Shape::new(input.n, input.c, input.h * sigma, input.w * sigma);
    if kernels.n != input.n || kernels.h != out.h || kernels.w != out.w {
        return shape_err(format!(
            "reassemble: kernel field {kernels} does not cover output {out}"
        ));
    }
    Ok(out)
}

pub(crate) fn reassemble_metered<T: Element>(
    input: &Tensor<T>,
    kernels: &KernelField<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<Tensor<T>> {
    let s = input.shape();
    let out_shape = check_reassemble_shapes(s, kernels.kernels.shape(), config)?;
    let (sigma, k, r) = (config.sigma, config.k_up, config.radius() as isize);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let out_plane = oh * ow;
    let mut out = vec![T::zero(); out_shape.numel()];
    if out.is_empty() {
        return Ok(Tensor::from_parts(out_shape, out));
    }
    let kd = kernels.kernels.data();
    out.par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, c) = (idx / s.c, idx % s.c);
            let src = input.plane(n, c);
            let kbase = n * k * k * out_plane;
            for i in 0..oh {
                let by = (i / sigma) as isize;
                for j in 0..ow {
                    let bx = (j / sigma) as isize;
                    let p = i * ow + j;
                    let mut acc = T::zero();
                    for u in 0..k {
                        let y = by + u as isize - r;
                        if y < 0 || y >= s.h as isize {
                            continue;
                        }
                        for v in 0..k {
                            let x = bx + v as isize - r;
                            if x < 0 || x >= s.w as isize {
                                continue;
                            }
                            let kv = kd[kbase + (u * k + v) * out_plane + p];
                            acc = acc + kv * src[y as usize * s.w + x as usize];
                        }
                    }
                    dst[p] = acc;
                }
            }
            tally_macs(meter, out_plane * k * k);
        });
    Ok(Tensor::from_parts(out_shape, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_uniform, Rng};
    use crate::upsample::nearest_upsample;

    fn cfg(sigma: usize, k_up: usize) -> UpsampleConfig {
        UpsampleConfig {
            sigma,
            k_up,
            ..UpsampleConfig::default()
        }
    }

    #[test]
    fn uniform_kernels_preserve_constant_interior() {
        let c = cfg(2, 3);
        let input = Tensor::<f64>::full((1, 2, 5, 5), 0.7);
        let kernels = KernelField::new(Tensor::full((1, 9, 10, 10), 1.0 / 9.0), true);
        let out = reassemble(&input, &kernels, &c).unwrap();
        for ch in 0..2 {
            for i in 2..8 {
                for j in 2..8 {
                    assert!((out.at(0, ch, i, j) - 0.7).abs() < 1e-12);
                }
            }
        }
        // corner neighbourhood is 4/9 inside the input
        assert!((out.at(0, 0, 0, 0) - 0.7 * 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn delta_kernels_equal_nearest() {
        let c = cfg(3, 5);
        let input: Tensor = random_uniform(&mut Rng::new(1), (2, 3, 4, 3), -1.0, 1.0);
        let kernels = Tensor::from_fn((2, 25, 12, 9), |_, t, _, _| if t == 12 { 1.0 } else { 0.0 });
        let out = reassemble(&input, &KernelField::new(kernels, true), &c).unwrap();
        assert_eq!(out, nearest_upsample(&input, 3).unwrap());
    }

    #[test]
    fn wrong_tap_count_is_shape_error() {
        let input = Tensor::<f64>::zeros((1, 1, 2, 2));
        let kernels = KernelField::new(Tensor::zeros((1, 9, 4, 4)), true);
        assert!(matches!(
            reassemble(&input, &kernels, &cfg(2, 5)),
            Err(crate::Error::Shape(_))
        ));
        let kernels = KernelField::new(Tensor::zeros((1, 25, 2, 4)), true);
        assert!(matches!(
            reassemble(&input, &kernels, &cfg(2, 5)),
            Err(crate::Error::Shape(_))
        ));
    }
}
