//! 3D convolution kernels: forward, input-gradient and filter-gradient.
//!
//! Layouts are channel-last throughout: activations `[t][h][w][c]`, filters
//! `[out][kt][kh][kw][in]`. Padding is symmetric `(k - 1) / 2` per axis
//! (odd kernels only), strides apply per axis. Out-of-bounds taps read zero.
//!
//! Internally the kernels transpose the filter into a tap-major scratch
//! layout `[kt][kh][kw][in][out]` so the innermost loops run over
//! contiguous output channels; the filter tensors are tiny next to the
//! activation grids, so the transpose cost is noise.

use crate::scalar::Scalar;

/// Activation geometry for one conv layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.t * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Geometry of one convolution: kernel, stride, channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    /// (kt, kh, kw); all odd.
    pub kernel: (usize, usize, usize),
    /// (st, sh, sw).
    pub stride: (usize, usize, usize),
}

impl ConvGeom {
    pub fn pad(&self) -> (usize, usize, usize) {
        (
            (self.kernel.0 - 1) / 2,
            (self.kernel.1 - 1) / 2,
            (self.kernel.2 - 1) / 2,
        )
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.kernel.0 * self.kernel.1 * self.kernel.2 * self.in_ch
    }

    fn taps(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.kernel.2
    }

    pub fn out_grid(&self, input: Grid) -> Grid {
        let (pt, ph, pw) = self.pad();
        let o = |n: usize, k: usize, p: usize, s: usize| (n + 2 * p - k) / s + 1;
        Grid {
            t: o(input.t, self.kernel.0, pt, self.stride.0),
            h: o(input.h, self.kernel.1, ph, self.stride.1),
            w: o(input.w, self.kernel.2, pw, self.stride.2),
            c: self.out_ch,
        }
    }
}

/// Valid kernel-offset range along one axis for output coordinate `o`.
#[inline]
fn tap_range(o: usize, stride: usize, pad: usize, k: usize, n: usize) -> (usize, usize) {
    let base = (o * stride) as isize - pad as isize;
    let lo = (-base).max(0) as usize;
    let hi = ((n as isize - base).min(k as isize)).max(0) as usize;
    (lo, hi)
}

/// `[out][tap][in]` -> `[tap][in][out]`.
fn to_tap_major<T: Scalar>(weights: &[T], geom: &ConvGeom) -> Vec<T> {
    let taps = geom.taps();
    let (ci, co) = (geom.in_ch, geom.out_ch);
    let mut out = vec![T::zero(); weights.len()];
    for o in 0..co {
        for tap in 0..taps {
            for i in 0..ci {
                out[(tap * ci + i) * co + o] = weights[(o * taps + tap) * ci + i];
            }
        }
    }
    out
}

/// `[tap][in][out]` -> `[out][tap][in]`.
fn from_tap_major<T: Scalar>(tap_major: &[T], geom: &ConvGeom, out: &mut [T]) {
    let taps = geom.taps();
    let (ci, co) = (geom.in_ch, geom.out_ch);
    for o in 0..co {
        for tap in 0..taps {
            for i in 0..ci {
                out[(o * taps + tap) * ci + i] = tap_major[(tap * ci + i) * co + o];
            }
        }
    }
}

/// Visit every (output position, valid tap) pair, handing the callback the
/// flat input base index, the tap index, and the flat output base index.
#[inline]
fn for_each_tap<T: Scalar, F: FnMut(usize, usize, usize)>(grid: Grid, geom: &ConvGeom, mut f: F) {
    let out = geom.out_grid(grid);
    let (pt, ph, pw) = geom.pad();
    let (kt, kh, kw) = geom.kernel;
    let (st, sh, sw) = geom.stride;
    let ci = geom.in_ch;
    let co = geom.out_ch;
    let mut out_base = 0usize;
    for to in 0..out.t {
        let (dt_lo, dt_hi) = tap_range(to, st, pt, kt, grid.t);
        for yo in 0..out.h {
            let (dy_lo, dy_hi) = tap_range(yo, sh, ph, kh, grid.h);
            for xo in 0..out.w {
                let (dx_lo, dx_hi) = tap_range(xo, sw, pw, kw, grid.w);
                for dt in dt_lo..dt_hi {
                    let ti = to * st + dt - pt;
                    for dy in dy_lo..dy_hi {
                        let yi = yo * sh + dy - ph;
                        let row_in = (ti * grid.h + yi) * grid.w * ci;
                        let tap_row = (dt * kh + dy) * kw;
                        for dx in dx_lo..dx_hi {
                            let xi = xo * sw + dx - pw;
                            f(row_in + xi * ci, tap_row + dx, out_base);
                        }
                    }
                }
                out_base += co;
            }
        }
    }
}

pub fn forward<T: Scalar>(
    input: &[T],
    grid: Grid,
    geom: &ConvGeom,
    weights: &[T],
    bias: &[T],
    output: &mut [T],
) {
    let out = geom.out_grid(grid);
    debug_assert_eq!(input.len(), grid.len());
    debug_assert_eq!(weights.len(), geom.weight_len());
    debug_assert_eq!(bias.len(), geom.out_ch);
    debug_assert_eq!(output.len(), out.len());
    let ci = geom.in_ch;
    let co = geom.out_ch;
    let wt = to_tap_major(weights, geom);

    for chunk in output.chunks_exact_mut(co) {
        chunk.copy_from_slice(bias);
    }
    for_each_tap::<T, _>(grid, geom, |in_base, tap, out_base| {
        let patch = &input[in_base..in_base + ci];
        let acc = &mut output[out_base..out_base + co];
        for (i, &x) in patch.iter().enumerate() {
            let wrow = &wt[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            for (a, &w) in acc.iter_mut().zip(wrow) {
                *a = *a + x * w;
            }
        }
    });
}

/// Gradient w.r.t. the input activations.
pub fn backward_data<T: Scalar>(
    dout: &[T],
    grid: Grid,
    geom: &ConvGeom,
    weights: &[T],
    dinput: &mut [T],
) {
    let out = geom.out_grid(grid);
    debug_assert_eq!(dout.len(), out.len());
    debug_assert_eq!(dinput.len(), grid.len());
    for x in dinput.iter_mut() {
        *x = T::zero();
    }
    let ci = geom.in_ch;
    let co = geom.out_ch;
    let wt = to_tap_major(weights, geom);

    for_each_tap::<T, _>(grid, geom, |in_base, tap, out_base| {
        let g = &dout[out_base..out_base + co];
        let din = &mut dinput[in_base..in_base + ci];
        for (i, d) in din.iter_mut().enumerate() {
            let wrow = &wt[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            let mut dot = T::zero();
            for (&w, &go) in wrow.iter().zip(g) {
                dot = dot + w * go;
            }
            *d = *d + dot;
        }
    });
}

/// Gradients w.r.t. the filter weights and bias.
pub fn backward_filter<T: Scalar>(
    input: &[T],
    grid: Grid,
    geom: &ConvGeom,
    dout: &[T],
    dweights: &mut [T],
    dbias: &mut [T],
) {
    let out = geom.out_grid(grid);
    debug_assert_eq!(input.len(), grid.len());
    debug_assert_eq!(dout.len(), out.len());
    debug_assert_eq!(dweights.len(), geom.weight_len());
    debug_assert_eq!(dbias.len(), geom.out_ch);
    let ci = geom.in_ch;
    let co = geom.out_ch;
    let mut dwt = vec![T::zero(); dweights.len()];

    for x in dbias.iter_mut() {
        *x = T::zero();
    }
    for chunk in dout.chunks_exact(co) {
        for (b, &g) in dbias.iter_mut().zip(chunk) {
            *b = *b + g;
        }
    }
    for_each_tap::<T, _>(grid, geom, |in_base, tap, out_base| {
        let g = &dout[out_base..out_base + co];
        let patch = &input[in_base..in_base + ci];
        for (i, &x) in patch.iter().enumerate() {
            let drow = &mut dwt[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            for (d, &go) in drow.iter_mut().zip(g) {
                *d = *d + x * go;
            }
        }
    });
    from_tap_major(&dwt, geom, dweights);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom121() -> ConvGeom {
        ConvGeom {
            in_ch: 1,
            out_ch: 1,
            kernel: (3, 3, 3),
            stride: (1, 1, 1),
        }
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let grid = Grid { t: 3, h: 4, w: 4, c: 1 };
        let geom = geom121();
        let mut weights = vec![0.0_f64; geom.weight_len()];
        // center tap
        weights[(1 * 3 + 1) * 3 + 1] = 1.0;
        let input: Vec<f64> = (0..grid.len()).map(|i| i as f64 * 0.1).collect();
        let mut out = vec![0.0; grid.len()];
        forward(&input, grid, &geom, &weights, &[0.0], &mut out);
        assert_eq!(out, input);
    }

    #[test]
    fn stride_two_halves_spatial_dims() {
        let grid = Grid { t: 4, h: 8, w: 6, c: 2 };
        let geom = ConvGeom {
            in_ch: 2,
            out_ch: 3,
            kernel: (3, 3, 3),
            stride: (1, 2, 2),
        };
        let out = geom.out_grid(grid);
        assert_eq!((out.t, out.h, out.w, out.c), (4, 4, 3, 3));
    }

    #[test]
    fn tap_major_round_trip() {
        let geom = ConvGeom {
            in_ch: 3,
            out_ch: 4,
            kernel: (3, 1, 3),
            stride: (1, 1, 1),
        };
        let weights: Vec<f64> = (0..geom.weight_len()).map(|i| i as f64).collect();
        let t = to_tap_major(&weights, &geom);
        let mut back = vec![0.0; weights.len()];
        from_tap_major(&t, &geom, &mut back);
        assert_eq!(weights, back);
    }

    #[test]
    fn filter_gradient_matches_finite_difference() {
        let grid = Grid { t: 3, h: 3, w: 3, c: 2 };
        let geom = ConvGeom {
            in_ch: 2,
            out_ch: 2,
            kernel: (3, 3, 3),
            stride: (1, 1, 1),
        };
        let input: Vec<f64> = (0..grid.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let mut weights: Vec<f64> = (0..geom.weight_len())
            .map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.05)
            .collect();
        let bias = vec![0.1, -0.2];
        let out = geom.out_grid(grid);
        // loss = sum of outputs
        let dout = vec![1.0; out.len()];
        let mut dw = vec![0.0; weights.len()];
        let mut db = vec![0.0; 2];
        backward_filter(&input, grid, &geom, &dout, &mut dw, &mut db);

        let loss = |w: &[f64]| {
            let mut o = vec![0.0; out.len()];
            forward(&input, grid, &geom, w, &bias, &mut o);
            o.iter().sum::<f64>()
        };
        let h = 1e-6;
        for idx in [0usize, 5, 17, 31, weights.len() - 1] {
            let orig = weights[idx];
            weights[idx] = orig + h;
            let up = loss(&weights);
            weights[idx] = orig - h;
            let down = loss(&weights);
            weights[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dw[idx]).abs() < 1e-6, "idx {}: fd {} vs {}", idx, fd, dw[idx]);
        }
    }

    #[test]
    fn data_gradient_matches_finite_difference() {
        let grid = Grid { t: 3, h: 3, w: 3, c: 2 };
        let geom = ConvGeom {
            in_ch: 2,
            out_ch: 2,
            kernel: (3, 3, 3),
            stride: (1, 2, 2),
        };
        let mut input: Vec<f64> = (0..grid.len()).map(|i| ((i * 29 % 13) as f64 - 6.0) * 0.1).collect();
        let weights: Vec<f64> = (0..geom.weight_len())
            .map(|i| ((i * 11 % 9) as f64 - 4.0) * 0.03)
            .collect();
        let bias = vec![0.0, 0.0];
        let out = geom.out_grid(grid);
        let dout: Vec<f64> = (0..out.len()).map(|i| 0.5 + (i % 3) as f64).collect();
        let mut din = vec![0.0; input.len()];
        backward_data(&dout, grid, &geom, &weights, &mut din);

        let loss = |inp: &[f64]| {
            let mut o = vec![0.0; out.len()];
            forward(inp, grid, &geom, &weights, &bias, &mut o);
            o.iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = 1e-6;
        for idx in [0usize, 7, 20, input.len() - 1] {
            let orig = input[idx];
            input[idx] = orig + h;
            let up = loss(&input);
            input[idx] = orig - h;
            let down = loss(&input);
            input[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - din[idx]).abs() < 1e-6, "idx {}: fd {} vs {}", idx, fd, din[idx]);
        }
    }
}
