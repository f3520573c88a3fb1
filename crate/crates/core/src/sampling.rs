//! Channel-wise bilinear sampling with coordinate clamping.

use crate::tensor::{Element, Tensor};

/// Interpolation cell for a clamped sample point.
///
/// Follows the four-neighbour form `wy*(wx*f(xl,yt) + (1-wx)*f(xr,yt)) +
/// (1-wy)*(wx*f(xl,yb) + (1-wx)*f(xr,yb))` with `xl = floor(x)`,
/// `xr = ceil(x)`, `wx = ceil(x) - x` (likewise for y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cell<T> {
    pub xl: usize,
    pub xr: usize,
    pub yt: usize,
    pub yb: usize,
    pub wx: T,
    pub wy: T,
    /// Right/bottom neighbour used for the spatial derivative: the cell on the
    /// positive side of the point (so at integer coordinates the derivative is
    /// taken from the cell toward larger coordinates).
    pub xr_grad: usize,
    pub yb_grad: usize,
    /// The coordinate fell outside the grid and was clamped; its derivative is 0.
    pub x_clamped: bool,
    pub y_clamped: bool,
}

impl<T: Element> Cell<T> {
    pub fn locate(x: T, y: T, h: usize, w: usize) -> Self {
        let (xl, xr, wx, xr_grad, x_clamped) = axis(x, w);
        let (yt, yb, wy, yb_grad, y_clamped) = axis(y, h);
        Cell {
            xl,
            xr,
            yt,
            yb,
            wx,
            wy,
            xr_grad,
            yb_grad,
            x_clamped,
            y_clamped,
        }
    }

    /// Interpolates one channel plane of width `w` (9 flops).
    #[inline]
    pub fn sample(&self, plane: &[T], w: usize) -> T {
        // lerp form of the four-neighbour blend: exact on constant fields
        let one = T::one();
        let (ax, ay) = (one - self.wx, one - self.wy);
        let tl = plane[self.yt * w + self.xl];
        let bl = plane[self.yb * w + self.xl];
        let top = tl + ax * (plane[self.yt * w + self.xr] - tl);
        let bot = bl + ax * (plane[self.yb * w + self.xr] - bl);
        top + ay * (bot - top)
    }

    /// Corner indices and their blend weights, in (tl, tr, bl, br) order.
    #[inline]
    pub fn corners(&self, w: usize) -> [(usize, T); 4] {
        let one = T::one();
        [
            (self.yt * w + self.xl, self.wy * self.wx),
            (self.yt * w + self.xr, self.wy * (one - self.wx)),
            (self.yb * w + self.xl, (one - self.wy) * self.wx),
            (self.yb * w + self.xr, (one - self.wy) * (one - self.wx)),
        ]
    }

    /// `(df/dx, df/dy)` of the sampled value for one channel plane, using the
    /// positive-side cell at nodes and zero on clamped axes.
    #[inline]
    pub fn gradient(&self, plane: &[T], w: usize) -> (T, T) {
        let one = T::one();
        let gx = if self.x_clamped {
            T::zero()
        } else {
            let top = plane[self.yt * w + self.xr_grad] - plane[self.yt * w + self.xl];
            let bot = plane[self.yb * w + self.xr_grad] - plane[self.yb * w + self.xl];
            self.wy * top + (one - self.wy) * bot
        };
        let gy = if self.y_clamped {
            T::zero()
        } else {
            // positive-side row pair; x-blend uses the forward weights
            let yb = self.yb_grad;
            let left = plane[yb * w + self.xl] - plane[self.yt * w + self.xl];
            let right = plane[yb * w + self.xr] - plane[self.yt * w + self.xr];
            self.wx * left + (one - self.wx) * right
        };
        (gx, gy)
    }
}

fn axis<T: Element>(coord: T, len: usize) -> (usize, usize, T, usize, bool) {
    let max = T::from_f64((len - 1) as f64);
    let clamped = !(coord >= T::zero() && coord <= max);
    let c = if coord.is_nan() {
        T::zero()
    } else {
        coord.max(T::zero()).min(max)
    };
    let lo = c.floor();
    let hi = c.ceil();
    let wlo = hi - c;
    let lo_i = lo.to_f64() as usize;
    let hi_i = hi.to_f64() as usize;
    let hi_grad = if hi_i > lo_i {
        hi_i
    } else {
        (lo_i + 1).min(len - 1)
    };
    (lo_i, hi_i, wlo, hi_grad, clamped)
}

/// Bilinear sample of every channel of `field[n]` at `(x, y)`, where `x`
/// indexes the width axis. Coordinates are clamped to the grid.
pub fn bilinear_sample<T: Element>(field: &Tensor<T>, n: usize, x: T, y: T) -> Vec<T> {
    let s = field.shape();
    assert!(
        n < s.n && s.h > 0 && s.w > 0,
        "bilinear_sample: index out of range"
    );
    let cell = Cell::locate(x, y, s.h, s.w);
    (0..s.c)
        .map(|c| cell.sample(field.plane(n, c), s.w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_uniform, Rng};

    #[test]
    fn integer_coordinates_hit_nodes_exactly() {
        let field: Tensor = random_uniform(&mut Rng::new(4), (1, 3, 4, 5), -1.0, 1.0);
        for y in 0..4 {
            for x in 0..5 {
                let v = bilinear_sample(&field, 0, x as f64, y as f64);
                for (c, &vc) in v.iter().enumerate() {
                    assert_eq!(vc, field.at(0, c, y, x));
                }
            }
        }
    }

    #[test]
    fn midpoint_average() {
        let field = Tensor::from_vec((1, 1, 1, 2), vec![0.0, 10.0]).unwrap();
        assert_eq!(bilinear_sample(&field, 0, 0.5, 0.0), vec![5.0]);
    }

    #[test]
    fn clamps_out_of_range() {
        let field: Tensor = random_uniform(&mut Rng::new(9), (1, 2, 3, 4), -1.0, 1.0);
        let w = 4.0;
        assert_eq!(
            bilinear_sample(&field, 0, w + 3.7, 1.25),
            bilinear_sample(&field, 0, w - 1.0, 1.25)
        );
        assert_eq!(
            bilinear_sample(&field, 0, -2.0, -0.1),
            bilinear_sample(&field, 0, 0.0, 0.0)
        );
    }

    #[test]
    fn gradient_positive_side_at_nodes() {
        let field = Tensor::from_vec((1, 1, 2, 3), vec![0.0, 1.0, 5.0, 0.0, 2.0, 4.0]).unwrap();
        let cell = Cell::locate(1.0, 0.0, 2, 3);
        let (gx, gy) = cell.gradient(field.plane(0, 0), 3);
        assert_eq!(gx, 4.0);
        assert_eq!(gy, 1.0);
        // right edge: no cell on the positive side
        let edge = Cell::locate(2.0, 1.0, 2, 3);
        assert_eq!(edge.gradient(field.plane(0, 0), 3), (0.0, 0.0));
        // clamped axis
        let out = Cell::locate(-0.5, 0.5, 2, 3);
        assert_eq!(out.gradient(field.plane(0, 0), 3).0, 0.0);
    }
}
