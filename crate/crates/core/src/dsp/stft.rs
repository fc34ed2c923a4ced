use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::complex::{CNode, ComplexPair};
use crate::error::{invalid, Error, Result};
use crate::graph::{CustomOp, Graph, NodeId};
use crate::tensor::Tensor;

/// Analysis framing: periodic Hann window of `window_len` samples every `hop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Framing {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
}

impl Framing {
    /// 512-sample window, 128 hop at 16 kHz.
    pub const W512_H128: Framing = Framing {
        sample_rate: 16_000,
        window_len: 512,
        hop: 128,
    };
    /// 320-sample window, 160 hop at 16 kHz.
    pub const W320_H160: Framing = Framing {
        sample_rate: 16_000,
        window_len: 320,
        hop: 160,
    };

    pub fn new(sample_rate: u32, window_len: usize, hop: usize) -> Result<Self> {
        let f = Framing {
            sample_rate,
            window_len,
            hop,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(invalid("framing", "sample rate must be positive"));
        }
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(invalid("framing", format!("window length {} must be even and >= 2", self.window_len)));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(invalid("framing", format!("hop {} must be in 1..={}", self.hop, self.window_len)));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Frames of a centered analysis of `n` samples: `1 + floor(n / hop)`.
    pub fn frames(&self, n: usize) -> usize {
        1 + n / self.hop
    }

    pub fn samples(&self, duration_s: f64) -> usize {
        (duration_s * self.sample_rate as f64).round() as usize
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()).collect()
    }

    pub fn label(&self) -> String {
        format!("{}/{}@{}", self.window_len, self.hop, self.sample_rate)
    }
}

/// Complex spectrogram `[frames, bins]` with the framing and signal length it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub data: ComplexPair,
    pub framing: Framing,
    pub length: usize,
}

impl Spectrogram {
    pub fn new(data: ComplexPair, framing: Framing, length: usize) -> Result<Self> {
        let want = [framing.frames(length), framing.bins()];
        if data.shape() != want {
            return Err(Error::Framing {
                expected: format!("{want:?} for {} samples at {}", length, framing.label()),
                got: format!("{:?}", data.shape()),
            });
        }
        Ok(Spectrogram { data, framing, length })
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = FftPlanner::new();
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

/// Centered, reflect-padded STFT of a mono waveform.
pub fn stft(x: &[f64], framing: &Framing) -> Result<Spectrogram> {
    framing.validate()?;
    let w_len = framing.window_len;
    if x.len() < w_len {
        return Err(invalid("stft", format!("signal of {} samples is shorter than the window ({w_len})", x.len())));
    }
    if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("stft input sample {bad}")));
    }
    let padded = reflect_pad(x, w_len / 2);
    let window = framing.window();
    let (frames, bins) = (framing.frames(x.len()), framing.bins());
    let fft = plan(w_len, false);
    let mut buf = vec![Complex::new(0.0, 0.0); w_len];
    let (mut re, mut im) = (Vec::with_capacity(frames * bins), Vec::with_capacity(frames * bins));
    for t in 0..frames {
        let seg = &padded[t * framing.hop..t * framing.hop + w_len];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for c in &buf[..bins] {
            re.push(c.re);
            im.push(c.im);
        }
    }
    let shape = [frames, bins];
    let data = ComplexPair::new(Tensor::new(&shape, re)?, Tensor::new(&shape, im)?)?;
    Spectrogram::new(data, *framing, x.len())
}

/// Weight of bin `k` in a real inverse transform of length `n`.
fn bin_weight(k: usize, n: usize) -> f64 {
    if k == 0 || 2 * k == n {
        1.0
    } else {
        2.0
    }
}

/// Sum of squared analysis windows at each position of the padded signal.
fn envelope(framing: &Framing, frames: usize) -> Vec<f64> {
    let window = framing.window();
    let mut env = vec![0.0; (frames - 1) * framing.hop + framing.window_len];
    for t in 0..frames {
        for (n, w) in window.iter().enumerate() {
            env[t * framing.hop + n] += w * w;
        }
    }
    env
}

/// Inverse STFT over a batch `[b, frames, bins]`, giving `[b, length]`.
fn istft_batch(re: &[f64], im: &[f64], batch: usize, framing: &Framing, frames: usize, length: usize) -> Vec<f64> {
    let (w_len, hop, bins) = (framing.window_len, framing.hop, framing.bins());
    let window = framing.window();
    let env = envelope(framing, frames);
    let ifft = plan(w_len, true);
    let mut buf = vec![Complex::new(0.0, 0.0); w_len];
    let offset = w_len / 2;
    let mut out = vec![0.0; batch * length];
    let mut acc = vec![0.0; env.len()];
    for b in 0..batch {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..frames {
            let base = (b * frames + t) * bins;
            for k in 0..bins {
                buf[k] = Complex::new(re[base + k], im[base + k]);
            }
            // Hermitian extension; DC and Nyquist imaginary parts do not contribute.
            buf[0].im = 0.0;
            buf[bins - 1].im = 0.0;
            for k in bins..w_len {
                buf[k] = buf[w_len - k].conj();
            }
            ifft.process(&mut buf);
            for n in 0..w_len {
                acc[t * hop + n] += window[n] * buf[n].re / w_len as f64;
            }
        }
        for n in 0..length {
            out[b * length + n] = acc[offset + n] / env[offset + n];
        }
    }
    out
}

/// Overlap-add inverse of [`stft`], normalized by the summed squared window.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let d = &spec.data;
    Ok(istft_batch(d.re.data(), d.im.data(), 1, &spec.framing, spec.frames(), spec.length))
}

/// Adjoint of the batched inverse STFT.
#[derive(Debug)]
struct IstftOp {
    framing: Framing,
    batch: usize,
    frames: usize,
    length: usize,
}

impl CustomOp for IstftOp {
    fn name(&self) -> &'static str {
        "istft"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let f = &self.framing;
        let (w_len, hop, bins) = (f.window_len, f.hop, f.bins());
        let window = f.window();
        let env = envelope(f, self.frames);
        let fft = plan(w_len, false);
        let offset = w_len / 2;
        let mut buf = vec![Complex::new(0.0, 0.0); w_len];
        let n_out = self.batch * self.frames * bins;
        let (mut gre, mut gim) = (vec![0.0; n_out], vec![0.0; n_out]);
        let mut gpad = vec![0.0; env.len()];
        for b in 0..self.batch {
            gpad.iter_mut().for_each(|v| *v = 0.0);
            for n in 0..self.length {
                gpad[offset + n] = grad.data()[b * self.length + n] / env[offset + n];
            }
            for t in 0..self.frames {
                for n in 0..w_len {
                    buf[n] = Complex::new(window[n] * gpad[t * hop + n], 0.0);
                }
                fft.process(&mut buf);
                let base = (b * self.frames + t) * bins;
                for k in 0..bins {
                    let c = bin_weight(k, w_len) / w_len as f64;
                    gre[base + k] = c * buf[k].re;
                    gim[base + k] = c * buf[k].im;
                }
                gim[base] = 0.0;
                gim[base + bins - 1] = 0.0;
            }
        }
        let shape = [self.batch, self.frames, bins];
        Ok(vec![Some(Tensor::new(&shape, gre)?), Some(Tensor::new(&shape, gim)?)])
    }
}

/// Differentiable inverse STFT of `spec[b, frames, bins]` to `[b, length]`.
pub fn istft_graph(g: &mut Graph, spec: CNode, framing: &Framing, length: usize) -> Result<NodeId> {
    let shape = g.shape(spec.re)?.to_vec();
    let &[batch, frames, bins] = shape.as_slice() else {
        return Err(invalid("istft", format!("expected [batch, frames, bins], got {shape:?}")));
    };
    if bins != framing.bins() || frames != framing.frames(length) {
        return Err(Error::Framing {
            expected: format!("[{}, {}] for {length} samples at {}", framing.frames(length), framing.bins(), framing.label()),
            got: format!("[{frames}, {bins}]"),
        });
    }
    let out = istft_batch(
        g.value(spec.re)?.data(),
        g.value(spec.im)?.data(),
        batch,
        framing,
        frames,
        length,
    );
    let out = Tensor::new(&[batch, length], out)?;
    let op = IstftOp {
        framing: *framing,
        batch,
        frames,
        length,
    };
    g.custom(&[spec.re, spec.im], out, Box::new(op))
}

/// `Σ_t Σ_k c_k |X[t,k]|² / N`, equal to the energy of the windowed frames.
pub fn spectral_energy(spec: &Spectrogram) -> f64 {
    let (w_len, bins) = (spec.framing.window_len, spec.bins());
    let (re, im) = (spec.data.re.data(), spec.data.im.data());
    let mut e = 0.0;
    for t in 0..spec.frames() {
        for k in 0..bins {
            let i = t * bins + k;
            e += bin_weight(k, w_len) * (re[i] * re[i] + im[i] * im[i]);
        }
    }
    e / w_len as f64
}

/// Energy of the signal as seen through the analysis windows:
/// `Σ_n env[n] · x_pad[n]²` with `env` the summed squared window.
pub fn windowed_energy(x: &[f64], framing: &Framing) -> Result<f64> {
    if x.len() < framing.window_len {
        return Err(invalid("windowed_energy", "signal shorter than the window"));
    }
    let padded = reflect_pad(x, framing.window_len / 2);
    let env = envelope(framing, framing.frames(x.len()));
    Ok(env.iter().zip(&padded).map(|(e, v)| e * v * v).sum())
}
