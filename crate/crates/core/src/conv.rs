//! 2-D cross-correlation kernels over `[batch, channel, time, freq]` tensors.
//!
//! The transposed convolution is implemented as the exact adjoint of the
//! forward kernel, so a deconvolution with the same hyperparameters restores
//! the extents of the convolution input.

use crate::tensor::{matmul_acc, matmul_at, matmul_bt_acc};
use serde::{Deserialize, Serialize};

/// Hyperparameters of one spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad_before: usize,
    pub pad_after: usize,
    /// Extra trailing extent of a transposed convolution; ignored by the forward form.
    pub output_padding: usize,
}

impl AxisGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        AxisGeom {
            kernel,
            stride,
            pad_before: pad,
            pad_after: pad,
            output_padding: 0,
        }
    }

    pub fn with_pads(mut self, before: usize, after: usize) -> Self {
        self.pad_before = before;
        self.pad_after = after;
        self
    }

    pub fn with_output_padding(mut self, op: usize) -> Self {
        self.output_padding = op;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.kernel >= 1 && self.stride >= 1 && self.output_padding < self.stride.max(1)
    }

    /// Output extent of the forward convolution.
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let padded = n + self.pad_before + self.pad_after;
        padded.checked_sub(self.kernel).map(|r| r / self.stride + 1)
    }

    /// Output extent of the transposed convolution.
    pub fn deconv_out(&self, n: usize) -> Option<usize> {
        if n == 0 {
            return None;
        }
        let full = (n - 1) * self.stride + self.kernel + self.output_padding;
        full.checked_sub(self.pad_before + self.pad_after).filter(|&v| v > 0)
    }

    /// Copy whose transposed output for an input of `n` is exactly `target`,
    /// if an output padding below the stride achieves it.
    pub fn fit_deconv(&self, n: usize, target: usize) -> Option<AxisGeom> {
        let base = AxisGeom {
            output_padding: 0,
            ..*self
        };
        let op = target.checked_sub(base.deconv_out(n)?)?;
        (op < self.stride.max(1)).then_some(AxisGeom {
            output_padding: op,
            ..*self
        })
    }

    /// Output padding that makes `deconv_out(conv_out(n)) == n`.
    pub fn adjoint_output_padding(&self, n: usize) -> usize {
        (n + self.pad_before + self.pad_after - self.kernel) % self.stride
    }

    /// Output positions `o` (for kernel tap `k`) whose input index
    /// `o*stride + k - pad_before` falls inside `[0, n_in)`.
    #[inline]
    fn valid_range(&self, k: usize, n_in: usize, n_out: usize) -> (usize, usize) {
        let pb = self.pad_before;
        let lo = if pb > k { (pb - k).div_ceil(self.stride) } else { 0 };
        let top = n_in + pb;
        if top <= k {
            return (0, 0);
        }
        let hi = ((top - 1 - k) / self.stride + 1).min(n_out);
        (lo.min(hi), hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dGeom {
    pub time: AxisGeom,
    pub freq: AxisGeom,
}

impl Conv2dGeom {
    pub fn conv_out(&self, t: usize, f: usize) -> Option<(usize, usize)> {
        Some((self.time.conv_out(t)?, self.freq.conv_out(f)?))
    }

    pub fn deconv_out(&self, t: usize, f: usize) -> Option<(usize, usize)> {
        Some((self.time.deconv_out(t)?, self.freq.deconv_out(f)?))
    }

    pub fn fit_deconv(&self, t: usize, f: usize, target_t: usize, target_f: usize) -> Option<Conv2dGeom> {
        Some(Conv2dGeom {
            time: self.time.fit_deconv(t, target_t)?,
            freq: self.freq.fit_deconv(f, target_f)?,
        })
    }

    pub fn kernel_area(&self) -> usize {
        self.time.kernel * self.freq.kernel
    }
}

/// Shapes of one convolution: input `[b, c, it, if]`, weight `[o, c, kt, kf]`,
/// output `[b, o, ot, of]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub b: usize,
    pub c: usize,
    pub it: usize,
    pub if_: usize,
    pub o: usize,
    pub ot: usize,
    pub of: usize,
}

/// Unrolls one batch item into `cols[c·kt·kf, ot·of]`, zero where the kernel
/// overlaps padding.
fn im2col(x: &[f64], cols: &mut [f64], d: ConvDims, g: &Conv2dGeom) {
    let (kt_n, kf_n) = (g.time.kernel, g.freq.kernel);
    let p_len = d.ot * d.of;
    for c in 0..d.c {
        let xplane = &x[c * d.it * d.if_..][..d.it * d.if_];
        for kt in 0..kt_n {
            let (t_lo, t_hi) = g.time.valid_range(kt, d.it, d.ot);
            for kf in 0..kf_n {
                let (f_lo, f_hi) = g.freq.valid_range(kf, d.if_, d.of);
                let row = &mut cols[((c * kt_n + kt) * kf_n + kf) * p_len..][..p_len];
                if t_hi - t_lo < d.ot || f_hi - f_lo < d.of {
                    row.fill(0.0);
                }
                for ot in t_lo..t_hi {
                    let it = ot * g.time.stride + kt - g.time.pad_before;
                    let xrow = &xplane[it * d.if_..(it + 1) * d.if_];
                    let dst = &mut row[ot * d.of..(ot + 1) * d.of];
                    for of in f_lo..f_hi {
                        dst[of] = xrow[of * g.freq.stride + kf - g.freq.pad_before];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into one batch item.
fn col2im_acc(cols: &[f64], x: &mut [f64], d: ConvDims, g: &Conv2dGeom) {
    let (kt_n, kf_n) = (g.time.kernel, g.freq.kernel);
    let p_len = d.ot * d.of;
    for c in 0..d.c {
        let xplane = &mut x[c * d.it * d.if_..][..d.it * d.if_];
        for kt in 0..kt_n {
            let (t_lo, t_hi) = g.time.valid_range(kt, d.it, d.ot);
            for kf in 0..kf_n {
                let (f_lo, f_hi) = g.freq.valid_range(kf, d.if_, d.of);
                let row = &cols[((c * kt_n + kt) * kf_n + kf) * p_len..][..p_len];
                for ot in t_lo..t_hi {
                    let it = ot * g.time.stride + kt - g.time.pad_before;
                    let xrow = &mut xplane[it * d.if_..(it + 1) * d.if_];
                    let src = &row[ot * d.of..(ot + 1) * d.of];
                    for of in f_lo..f_hi {
                        xrow[of * g.freq.stride + kf - g.freq.pad_before] += src[of];
                    }
                }
            }
        }
    }
}

fn col_len(d: ConvDims, g: &Conv2dGeom) -> usize {
    d.c * g.kernel_area()
}

/// `y += conv(x, w)`
pub(crate) fn conv_forward(x: &[f64], w: &[f64], y: &mut [f64], d: ConvDims, g: &Conv2dGeom) {
    let (q, p) = (col_len(d, g), d.ot * d.of);
    let mut cols = vec![0.0; q * p];
    for b in 0..d.b {
        im2col(&x[b * d.c * d.it * d.if_..][..d.c * d.it * d.if_], &mut cols, d, g);
        matmul_acc(w, &cols, &mut y[b * d.o * p..][..d.o * p], d.o, q, p);
    }
}

/// `gx += convᵀ(gy, w)`; also the forward pass of a transposed convolution.
pub(crate) fn conv_backward_input(gy: &[f64], w: &[f64], gx: &mut [f64], d: ConvDims, g: &Conv2dGeom) {
    let (q, p) = (col_len(d, g), d.ot * d.of);
    let mut cols = vec![0.0; q * p];
    for b in 0..d.b {
        matmul_at(w, &gy[b * d.o * p..][..d.o * p], &mut cols, d.o, q, p);
        col2im_acc(&cols, &mut gx[b * d.c * d.it * d.if_..][..d.c * d.it * d.if_], d, g);
    }
}

/// `gw += ∂⟨gy, conv(x, w)⟩/∂w`
pub(crate) fn conv_backward_weight(x: &[f64], gy: &[f64], gw: &mut [f64], d: ConvDims, g: &Conv2dGeom) {
    let (q, p) = (col_len(d, g), d.ot * d.of);
    let mut cols = vec![0.0; q * p];
    for b in 0..d.b {
        im2col(&x[b * d.c * d.it * d.if_..][..d.c * d.it * d.if_], &mut cols, d, g);
        matmul_bt_acc(&gy[b * d.o * p..][..d.o * p], &cols, gw, d.o, p, q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_conv(x: &[f64], w: &[f64], d: ConvDims, g: &Conv2dGeom) -> Vec<f64> {
        let (kt_n, kf_n) = (g.time.kernel, g.freq.kernel);
        let mut y = vec![0.0; d.b * d.o * d.ot * d.of];
        for b in 0..d.b {
            for o in 0..d.o {
                for ot in 0..d.ot {
                    for of in 0..d.of {
                        let mut s = 0.0;
                        for c in 0..d.c {
                            for kt in 0..kt_n {
                                for kf in 0..kf_n {
                                    let it = (ot * g.time.stride + kt) as isize - g.time.pad_before as isize;
                                    let ifx = (of * g.freq.stride + kf) as isize - g.freq.pad_before as isize;
                                    if it < 0 || ifx < 0 || it as usize >= d.it || ifx as usize >= d.if_ {
                                        continue;
                                    }
                                    s += w[((o * d.c + c) * kt_n + kt) * kf_n + kf]
                                        * x[((b * d.c + c) * d.it + it as usize) * d.if_ + ifx as usize];
                                }
                            }
                        }
                        y[((b * d.o + o) * d.ot + ot) * d.of + of] = s;
                    }
                }
            }
        }
        y
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (Conv2dGeom, ConvDims) {
        let kt = rng.gen_range(1..=3);
        let kf = rng.gen_range(1..=5);
        let time = AxisGeom::new(kt, rng.gen_range(1..=2), 0).with_pads(rng.gen_range(0..kt), rng.gen_range(0..kt));
        let freq = AxisGeom::new(kf, rng.gen_range(1..=3), 0).with_pads(rng.gen_range(0..kf), rng.gen_range(0..kf));
        let g = Conv2dGeom { time, freq };
        let it = rng.gen_range(kt..kt + 6);
        let if_ = rng.gen_range(kf..kf + 9);
        let (ot, of) = g.conv_out(it, if_).unwrap();
        let d = ConvDims {
            b: rng.gen_range(1..=2),
            c: rng.gen_range(1..=3),
            it,
            if_,
            o: rng.gen_range(1..=3),
            ot,
            of,
        };
        (g, d)
    }

    #[test]
    fn forward_matches_sliding_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (g, d) = random_case(&mut rng);
            let x: Vec<f64> = (0..d.b * d.c * d.it * d.if_).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..d.o * d.c * g.kernel_area()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; d.b * d.o * d.ot * d.of];
            conv_forward(&x, &w, &mut y, d, &g);
            let want = brute_conv(&x, &w, d, &g);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_kernels_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let (g, d) = random_case(&mut rng);
            let x: Vec<f64> = (0..d.b * d.c * d.it * d.if_).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..d.o * d.c * g.kernel_area()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gy: Vec<f64> = (0..d.b * d.o * d.ot * d.of).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; gy.len()];
            conv_forward(&x, &w, &mut y, d, &g);
            let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();

            let mut gx = vec![0.0; x.len()];
            conv_backward_input(&gy, &w, &mut gx, d, &g);
            let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

            let mut gw = vec![0.0; w.len()];
            conv_backward_weight(&x, &gy, &mut gw, d, &g);
            let rhs: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_output_padding_restores_extent() {
        for n in 4..60 {
            for (k, s, p) in [(3, 2, 0), (5, 2, 2), (3, 1, 1), (7, 2, 3), (2, 1, 0)] {
                let a = AxisGeom::new(k, s, p);
                let Some(m) = a.conv_out(n) else { continue };
                let a = a.with_output_padding(a.adjoint_output_padding(n));
                assert_eq!(a.deconv_out(m), Some(n), "n={n} k={k} s={s} p={p}");
            }
        }
    }
}
