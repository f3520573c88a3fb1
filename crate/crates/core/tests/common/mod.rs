//! Scalar reference implementations written straight from the operator
//! definitions, with no shared code paths besides reading tensor data.

#![allow(dead_code)]

use dlu_core::{CarafeParams, ConvSpec, DluParams, Rng, Tensor, UpsampleConfig};

/// Plain `n x c x h x w` array.
#[derive(Debug, Clone)]
pub struct Arr {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Arr {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Arr {
            n,
            c,
            h,
            w,
            v: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let s = t.shape();
        Arr {
            n: s.n,
            c: s.c,
            h: s.h,
            w: s.w,
            v: t.data().to_vec(),
        }
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }

    /// Zero outside the grid.
    pub fn get_padded(&self, n: usize, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.get(n, c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, val: f64) {
        let i = ((n * self.c + c) * self.h + y) * self.w + x;
        self.v[i] = val;
    }

    pub fn max_abs_diff(&self, t: &Tensor) -> f64 {
        let s = t.shape();
        assert_eq!(
            (self.n, self.c, self.h, self.w),
            (s.n, s.c, s.h, s.w),
            "oracle shape"
        );
        self.v
            .iter()
            .zip(t.data())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn conv_ref(x: &Arr, spec: &ConvSpec) -> Arr {
    let (oc, k) = (spec.out_channels(), spec.kernel_size());
    let p = (k / 2) as isize;
    let wt = spec.weights.data();
    let mut out = Arr::zeros(x.n, oc, x.h, x.w);
    for n in 0..x.n {
        for o in 0..oc {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = spec.bias[o];
                    for ic in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let v = x.get_padded(
                                    n,
                                    ic,
                                    y as isize + ky as isize - p,
                                    xx as isize + kx as isize - p,
                                );
                                acc += wt[((o * x.c + ic) * k + ky) * k + kx] * v;
                            }
                        }
                    }
                    out.set(n, o, y, xx, acc);
                }
            }
        }
    }
    out
}

pub fn softmax_ref(x: &Arr) -> Arr {
    let mut out = x.clone();
    for n in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                let m = (0..x.c)
                    .map(|c| x.get(n, c, y, xx))
                    .fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..x.c).map(|c| (x.get(n, c, y, xx) - m).exp()).sum();
                for c in 0..x.c {
                    out.set(n, c, y, xx, (x.get(n, c, y, xx) - m).exp() / z);
                }
            }
        }
    }
    out
}

/// Channel `g * s^2 + k` goes to `(s*y + k / s, s*x + k % s)` of channel `g`.
pub fn pixel_shuffle_ref(x: &Arr, s: usize) -> Arr {
    let g = x.c / (s * s);
    let mut out = Arr::zeros(x.n, g, x.h * s, x.w * s);
    for n in 0..x.n {
        for c in 0..x.c {
            let (gc, k) = (c / (s * s), c % (s * s));
            for y in 0..x.h {
                for xx in 0..x.w {
                    out.set(n, gc, s * y + k / s, s * xx + k % s, x.get(n, c, y, xx));
                }
            }
        }
    }
    out
}

/// `out(i, j) = sum_t K_t(i, j) * x(i / s + a - r, j / s + b - r)`.
pub fn reassemble_ref(x: &Arr, kernels: &Arr, s: usize, k: usize) -> Arr {
    let r = (k / 2) as isize;
    let mut out = Arr::zeros(x.n, x.c, x.h * s, x.w * s);
    for n in 0..x.n {
        for c in 0..x.c {
            for i in 0..x.h * s {
                for j in 0..x.w * s {
                    let mut acc = 0.0;
                    for a in 0..k {
                        for b in 0..k {
                            let v = x.get_padded(
                                n,
                                c,
                                (i / s) as isize + a as isize - r,
                                (j / s) as isize + b as isize - r,
                            );
                            acc += kernels.get(n, a * k + b, i, j) * v;
                        }
                    }
                    out.set(n, c, i, j, acc);
                }
            }
        }
    }
    out
}

/// Four-neighbour bilinear blend at a clamped point.
pub fn bilinear_ref(f: &Arr, n: usize, c: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (f.w - 1) as f64);
    let y = y.clamp(0.0, (f.h - 1) as f64);
    let (xl, xr, yt, yb) = (x.floor(), x.ceil(), y.floor(), y.ceil());
    let (wx, wy) = (xr - x, yb - y);
    let g = |yy: f64, xx: f64| f.get(n, c, yy as usize, xx as usize);
    wy * (wx * g(yt, xl) + (1.0 - wx) * g(yt, xr))
        + (1.0 - wy) * (wx * g(yb, xl) + (1.0 - wx) * g(yb, xr))
}

/// Expanded kernel field; offset pair `(2s, 2s+1) = (dx, dy)` of raw offsets.
pub fn expand_ref(source: &Arr, raw_offsets: &Arr, s: usize) -> Arr {
    let mut out = Arr::zeros(source.n, source.c, source.h * s, source.w * s);
    for n in 0..source.n {
        for i in 0..source.h * s {
            for j in 0..source.w * s {
                let (y, x) = (i / s, j / s);
                let sub = (i % s) * s + j % s;
                let dx = raw_offsets.get(n, 2 * sub, y, x);
                let dy = raw_offsets.get(n, 2 * sub + 1, y, x);
                for t in 0..source.c {
                    out.set(
                        n,
                        t,
                        i,
                        j,
                        bilinear_ref(source, n, t, x as f64 + dx, y as f64 + dy),
                    );
                }
            }
        }
    }
    out
}

pub fn carafe_ref(x: &Arr, p: &CarafeParams, cfg: &UpsampleConfig) -> Arr {
    let comp = conv_ref(x, &p.compressor);
    let logits = pixel_shuffle_ref(&conv_ref(&comp, &p.kernel_generator), cfg.sigma);
    reassemble_ref(x, &softmax_ref(&logits), cfg.sigma, cfg.k_up)
}

pub fn dlu_ref(x: &Arr, p: &DluParams, cfg: &UpsampleConfig) -> Arr {
    let comp = conv_ref(x, &p.compressor);
    let source = softmax_ref(&conv_ref(&comp, &p.space_generator));
    let offsets = conv_ref(&comp, &p.offset_predictor);
    reassemble_ref(
        x,
        &expand_ref(&source, &offsets, cfg.sigma),
        cfg.sigma,
        cfg.k_up,
    )
}

/// Random small config: `n <= 2`, `C <= 8`, `h, w <= 8`.
pub fn random_instance(rng: &mut Rng) -> (UpsampleConfig, usize, usize, usize) {
    let odd = |rng: &mut Rng| [1, 3, 5][rng.below(3)];
    let cfg = UpsampleConfig {
        sigma: 1 + rng.below(3),
        k_up: odd(rng),
        k_encoder: odd(rng),
        c_mid: 1 + rng.below(6),
        c_in: 1 + rng.below(8),
    };
    (cfg, 1 + rng.below(2), 1 + rng.below(8), 1 + rng.below(8))
}
