use crate::complex::{ActivationKind, CNode, ComplexPair};
use crate::conv::{AxisGeom, Conv2dGeom};
use crate::dsp::{Spectrogram, LOSS_MAG_EPS};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Act, Conv2d, Deconv2d, Domain, Gating, Glu, Linear, Lstm, LstmVariant};
use crate::params::ParamStore;

use super::exec::{Exec, GraphExec, LayerCost, LayerRef, ShapeAct, ShapeExec};
use super::spec::{Arch, DccrnSpec, Dims2, GcrnSpec, LinearStackSpec, LstmStackSpec, ModelSpec, OutputMode, UNetSpec};

fn units(domain: Domain, real_channels: usize) -> usize {
    match domain {
        Domain::Real => real_channels,
        Domain::Complex => real_channels / 2,
    }
}

/// Input channels carrying one complex spectrogram.
fn input_units(domain: Domain) -> usize {
    match domain {
        Domain::Real => 2,
        Domain::Complex => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TimePad {
    /// `kt - 1` frames of look-back, none ahead.
    Causal,
    /// `kt / 2` on both sides.
    Centered,
}

fn stage_geom(kernel: Dims2, stride: Dims2, time: TimePad, pad_f: usize) -> Conv2dGeom {
    let t = match time {
        TimePad::Causal => AxisGeom::new(kernel.t, stride.t, 0).with_pads(kernel.t - 1, 0),
        TimePad::Centered => AxisGeom::new(kernel.t, stride.t, kernel.t / 2),
    };
    Conv2dGeom {
        time: t,
        freq: AxisGeom::new(kernel.f, stride.f, pad_f),
    }
}

#[derive(Clone, Debug)]
enum Unit {
    Conv(Conv2d),
    Deconv(Deconv2d),
    Glu(Box<Glu>),
}

#[derive(Clone, Debug)]
struct Stage {
    unit: Unit,
    act: Option<ActivationKind>,
}

impl Stage {
    /// Applies the stage; transposed units are fitted to `target` extents.
    fn run<E: Exec>(&self, ex: &mut E, x: E::V, target: Option<(usize, usize)>) -> Result<E::V> {
        let shape = ex.shape(&x)?;
        let y = match (&self.unit, target) {
            (Unit::Conv(c), _) => ex.layer(LayerRef::Conv(c), x)?,
            (Unit::Deconv(d), Some((t, f))) => ex.layer(LayerRef::Deconv(&d.resized(&shape, t, f)?), x)?,
            (Unit::Deconv(d), None) => ex.layer(LayerRef::Deconv(d), x)?,
            (Unit::Glu(u), Some((t, f))) if matches!(u.feature, crate::nn::GluBranch::Deconv(_)) => {
                ex.layer(LayerRef::Glu(&u.resized(&shape, t, f)?), x)?
            }
            (Unit::Glu(u), _) => ex.layer(LayerRef::Glu(u), x)?,
        };
        match self.act {
            Some(f) => ex.activate(y, f),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
struct Bottleneck {
    domain: Domain,
    lstms: Vec<Lstm>,
    proj: Option<Linear>,
}

/// Convolutional encoder, optional recurrent bottleneck, mirrored decoder
/// with channel-concatenated skips, optional per-row output layer.
#[derive(Clone, Debug)]
struct EncDec {
    enc_domain: Domain,
    dec_domain: Domain,
    enc: Vec<Stage>,
    mid: Option<Bottleneck>,
    dec: Vec<Stage>,
    skip_deepest: bool,
    out_linear: Option<Linear>,
    drop_dc: bool,
}

impl EncDec {
    fn run<E: Exec>(&self, ex: &mut E, x: E::V) -> Result<E::V> {
        let s = ex.shape(&x)?;
        let (b, t, f) = (s[0], s[1], s[2]);
        let x = if self.drop_dc { ex.slice(x, 2, 1, f - 1)? } else { x };
        let f_in = if self.drop_dc { f - 1 } else { f };
        let x = ex.reshape(x, &[b, 1, t, f_in])?;
        let mut h = ex.to_domain(x, self.enc_domain, 1)?;

        let mut skips = Vec::with_capacity(self.enc.len());
        let mut extents = Vec::with_capacity(self.enc.len());
        for stage in &self.enc {
            let sh = ex.shape(&h)?;
            extents.push((sh[2], sh[3]));
            h = stage.run(ex, h, None)?;
            skips.push(h.clone());
        }

        if let Some(mid) = &self.mid {
            let sh = ex.shape(&h)?;
            let (c, tt, ff) = (sh[1], sh[2], sh[3]);
            let seq = ex.permute(h, &[0, 2, 1, 3])?;
            let seq = ex.reshape(seq, &[b, tt, c * ff])?;
            let mut z = ex.to_domain(seq, mid.domain, 2)?;
            for l in &mid.lstms {
                z = ex.layer(LayerRef::Lstm(l), z)?;
            }
            if let Some(p) = &mid.proj {
                z = ex.layer(LayerRef::Linear(p), z)?;
            }
            let feats = ex.shape(&z)?[2];
            let cz = feats / ff;
            let z = ex.reshape(z, &[b, tt, cz, ff])?;
            h = ex.permute(z, &[0, 2, 1, 3])?;
        }

        h = ex.to_domain(h, self.dec_domain, 1)?;
        let n = self.dec.len();
        for (j, stage) in self.dec.iter().enumerate() {
            let k = n - 1 - j;
            if j > 0 || self.skip_deepest {
                let skip = ex.to_domain(skips[k].clone(), self.dec_domain, 1)?;
                h = ex.concat(&[h, skip], 1)?;
            }
            h = stage.run(ex, h, Some(extents[k]))?;
        }
        if let Some(l) = &self.out_linear {
            h = ex.layer(LayerRef::Linear(l), h)?;
        }
        let h = ex.to_domain(h, Domain::Complex, 1)?;
        let h = ex.reshape(h, &[b, t, f_in])?;
        if self.drop_dc {
            ex.pad_front(h, 2, 1)
        } else {
            Ok(h)
        }
    }
}

#[derive(Clone, Debug)]
enum Body {
    Linear { domain: Domain, layers: Vec<Linear> },
    Lstm { domain: Domain, lstms: Vec<Lstm>, out: Linear },
    EncDec(EncDec),
}

impl Body {
    fn run<E: Exec>(&self, ex: &mut E, x: E::V) -> Result<E::V> {
        match self {
            Body::Linear { domain, layers } => {
                let mut h = ex.to_domain(x, *domain, 2)?;
                for (i, l) in layers.iter().enumerate() {
                    h = ex.layer(LayerRef::Linear(l), h)?;
                    if i + 1 < layers.len() {
                        h = ex.activate(h, ActivationKind::ReLU)?;
                    }
                }
                ex.to_domain(h, Domain::Complex, 2)
            }
            Body::Lstm { domain, lstms, out } => {
                let mut h = ex.to_domain(x, *domain, 2)?;
                for l in lstms {
                    h = ex.layer(LayerRef::Lstm(l), h)?;
                }
                h = ex.layer(LayerRef::Linear(out), h)?;
                ex.to_domain(h, Domain::Complex, 2)
            }
            Body::EncDec(e) => e.run(ex, x),
        }
    }
}

fn build_linear(s: &LinearStackSpec, bins: usize, store: &mut ParamStore) -> Body {
    let io = units(s.domain, 2 * bins);
    let mut widths = vec![io];
    widths.extend(&s.hidden);
    widths.push(io);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| Linear::new(store, &format!("fc{i}"), s.domain, w[0], w[1], s.bias))
        .collect();
    Body::Linear {
        domain: s.domain,
        layers,
    }
}

fn build_lstm(s: &LstmStackSpec, bins: usize, store: &mut ParamStore) -> Result<Body> {
    let domain = s.variant.domain();
    let io = units(domain, 2 * bins);
    let mut lstms = Vec::with_capacity(s.layers);
    for i in 0..s.layers {
        let input = if i == 0 { io } else { s.hidden };
        lstms.push(Lstm::new(store, &format!("lstm{i}"), s.variant, input, s.hidden, 1, s.bias)?);
    }
    let out = Linear::new(store, "out", domain, s.hidden, io, true);
    Ok(Body::Lstm { domain, lstms, out })
}

fn gating_for(domain: Domain, complex: Gating) -> Gating {
    match domain {
        Domain::Real => Gating::RealSigmoid,
        Domain::Complex => complex,
    }
}

fn freq_chain(bins: usize, geoms: &[Conv2dGeom], name: &str) -> Result<Vec<usize>> {
    let mut f = vec![bins];
    for g in geoms {
        let last = *f.last().expect("non-empty");
        let next = g
            .freq
            .conv_out(last)
            .ok_or_else(|| Error::Config(format!("model `{name}`: {last} bins are too few for the encoder kernel")))?;
        f.push(next);
    }
    Ok(f)
}

fn build_gcrn(s: &GcrnSpec, bins: usize, name: &str, store: &mut ParamStore) -> Result<Body> {
    let n = s.channels.len();
    let geom = stage_geom(s.kernel, s.stride, TimePad::Causal, 0);
    let freqs = freq_chain(bins, &vec![geom; n], name)?;
    let (ed, dd) = (s.encoder, s.decoder);

    let mut enc = Vec::with_capacity(n);
    let mut cin = input_units(ed);
    for (i, &c) in s.channels.iter().enumerate() {
        let cout = units(ed, c);
        let glu = Glu::conv(store, &format!("enc{i}"), ed, gating_for(ed, s.gating), cin, cout, geom, true)?;
        enc.push(Stage {
            unit: Unit::Glu(Box::new(glu)),
            act: Some(s.activation),
        });
        cin = cout;
    }

    let feats = s.channels[n - 1] * freqs[n];
    let mid_domain = s.bottleneck.domain();
    let width = units(mid_domain, feats);
    let groups = if s.bottleneck == LstmVariant::Real { s.lstm_groups } else { 1 };
    let lstms = (0..s.lstm_layers)
        .map(|i| Lstm::new(store, &format!("lstm{i}"), s.bottleneck, width, width, groups, s.lstm_bias))
        .collect::<Result<Vec<_>>>()?;

    let mut dec = Vec::with_capacity(n);
    for j in 0..n {
        let k = n - 1 - j;
        let cin = units(dd, 2 * s.channels[k]);
        let last = j + 1 == n;
        let cout = if last { input_units(dd) } else { units(dd, s.channels[k - 1]) };
        let glu = Glu::deconv(store, &format!("dec{j}"), dd, gating_for(dd, s.gating), cin, cout, geom, true)?;
        dec.push(Stage {
            unit: Unit::Glu(Box::new(glu)),
            act: (!last).then_some(s.activation),
        });
    }
    let out_linear = s.output_linear.then(|| Linear::new(store, "out", dd, bins, bins, true));
    Ok(Body::EncDec(EncDec {
        enc_domain: ed,
        dec_domain: dd,
        enc,
        mid: Some(Bottleneck {
            domain: mid_domain,
            lstms,
            proj: None,
        }),
        dec,
        skip_deepest: true,
        out_linear,
        drop_dc: false,
    }))
}

fn build_dccrn(s: &DccrnSpec, bins: usize, name: &str, store: &mut ParamStore) -> Result<Body> {
    let n = s.channels.len();
    let d = s.domain;
    let geom = stage_geom(s.kernel, s.stride, TimePad::Causal, s.kernel.f / 2);
    let freqs = freq_chain(bins - 1, &vec![geom; n], name)?;

    let mut enc = Vec::with_capacity(n);
    let mut cin = input_units(d);
    for (i, &c) in s.channels.iter().enumerate() {
        enc.push(Stage {
            unit: Unit::Conv(Conv2d::new(store, &format!("enc{i}"), d, cin, c, geom, true)?),
            act: Some(s.activation),
        });
        cin = c;
    }
    let feats = s.channels[n - 1] * freqs[n];
    let variant = match d {
        Domain::Real => LstmVariant::Real,
        Domain::Complex => LstmVariant::QuasiComplex,
    };
    let lstms = (0..s.lstm_layers)
        .map(|i| {
            let input = if i == 0 { feats } else { s.lstm_hidden };
            Lstm::new(store, &format!("lstm{i}"), variant, input, s.lstm_hidden, 1, s.lstm_bias)
        })
        .collect::<Result<Vec<_>>>()?;
    let proj = Linear::new(store, "proj", d, s.lstm_hidden, feats, true);

    let mut dec = Vec::with_capacity(n);
    for j in 0..n {
        let k = n - 1 - j;
        let last = j + 1 == n;
        let cout = if last { input_units(d) } else { s.channels[k - 1] };
        dec.push(Stage {
            unit: Unit::Deconv(Deconv2d::new(store, &format!("dec{j}"), d, 2 * s.channels[k], cout, geom, true)?),
            act: (!last).then_some(s.activation),
        });
    }
    Ok(Body::EncDec(EncDec {
        enc_domain: d,
        dec_domain: d,
        enc,
        mid: Some(Bottleneck {
            domain: d,
            lstms,
            proj: Some(proj),
        }),
        dec,
        skip_deepest: true,
        out_linear: None,
        drop_dc: true,
    }))
}

fn build_unet(s: &UNetSpec, store: &mut ParamStore) -> Result<Body> {
    let n = s.channels.len();
    let d = s.domain;
    let geoms: Vec<Conv2dGeom> = (0..n)
        .map(|i| stage_geom(s.kernels[i], s.strides[i], TimePad::Centered, s.kernels[i].f / 2))
        .collect();
    let mut enc = Vec::with_capacity(n);
    let mut cin = input_units(d);
    for (i, &c) in s.channels.iter().enumerate() {
        enc.push(Stage {
            unit: Unit::Conv(Conv2d::new(store, &format!("enc{i}"), d, cin, c, geoms[i], true)?),
            act: Some(s.activation),
        });
        cin = c;
    }
    let mut dec = Vec::with_capacity(n);
    for j in 0..n {
        let k = n - 1 - j;
        let last = j + 1 == n;
        let cin = if j == 0 { s.channels[k] } else { 2 * s.channels[k] };
        let cout = if last { input_units(d) } else { s.channels[k - 1] };
        dec.push(Stage {
            unit: Unit::Deconv(Deconv2d::new(store, &format!("dec{j}"), d, cin, cout, geoms[k], true)?),
            act: (!last).then_some(s.activation),
        });
    }
    Ok(Body::EncDec(EncDec {
        enc_domain: d,
        dec_domain: d,
        enc,
        mid: None,
        dec,
        skip_deepest: false,
        out_linear: None,
        drop_dc: false,
    }))
}

/// Combines the network output with the noisy input according to `mode`.
pub fn apply_head(g: &mut Graph, mode: OutputMode, noisy: CNode, raw: CNode) -> Result<CNode> {
    match mode {
        OutputMode::Mapping => Ok(raw),
        OutputMode::Masking => g.c_hadamard(noisy, raw),
        OutputMode::PolarMasking => {
            // m/|m| · tanh|m| == m · tanh(r)/r, finite at m = 0
            let r = g.c_magnitude(raw, LOSS_MAG_EPS)?;
            let t = g.tanh(r)?;
            let k = g.div(t, r)?;
            let unit = g.c_scale_by(raw, k)?;
            g.c_hadamard(noisy, unit)
        }
    }
}

/// A built architecture. Parameters live in the [`ParamStore`] passed to
/// [`Model::build`]; the model itself only holds handles.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    body: Body,
}

impl Model {
    pub fn build(spec: &ModelSpec, store: &mut ParamStore) -> Result<Model> {
        spec.validate()?;
        let bins = spec.framing.bins();
        let body = match &spec.arch {
            Arch::LinearStack(s) => build_linear(s, bins, store),
            Arch::LstmStack(s) => build_lstm(s, bins, store)?,
            Arch::UNet(s) => build_unet(s, store)?,
            Arch::Gcrn(s) => build_gcrn(s, bins, &spec.name, store)?,
            Arch::Dccrn(s) => build_dccrn(s, bins, &spec.name, store)?,
        };
        let model = Model {
            spec: spec.clone(),
            body,
        };
        // Surface shape errors at build time rather than on first use.
        model.layer_costs(spec.framing.frames(spec.framing.window_len))?;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Network output before the head, for `noisy[b, frames, bins]`.
    pub fn raw_forward(&self, g: &mut Graph, store: &ParamStore, noisy: CNode) -> Result<CNode> {
        let shape = g.shape(noisy.re)?.to_vec();
        if shape.len() != 3 || shape[2] != self.spec.framing.bins() {
            return Err(Error::Framing {
                expected: format!("[batch, frames, {}] ({})", self.spec.framing.bins(), self.spec.framing.label()),
                got: format!("{shape:?}"),
            });
        }
        let mut ex = GraphExec { g, store };
        let out = self.body.run(&mut ex, Act::Complex(noisy))?;
        out.expect_complex(&self.spec.name)
    }

    /// Estimated clean spectrogram `[b, frames, bins]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, noisy: CNode) -> Result<CNode> {
        let raw = self.raw_forward(g, store, noisy)?;
        apply_head(g, self.spec.output, noisy, raw)
    }

    /// Eager single-example enhancement.
    pub fn enhance(&self, store: &ParamStore, noisy: &Spectrogram) -> Result<Spectrogram> {
        if noisy.framing != self.spec.framing {
            return Err(Error::Framing {
                expected: self.spec.framing.label(),
                got: noisy.framing.label(),
            });
        }
        let (t, f) = (noisy.frames(), noisy.bins());
        let mut g = Graph::new();
        let x = g.c_constant(ComplexPair::new(noisy.data.re.reshape(&[1, t, f])?, noisy.data.im.reshape(&[1, t, f])?)?);
        let y = self.forward(&mut g, store, x)?;
        let y = g.c_value(y)?;
        let data = ComplexPair::new(y.re.reshape(&[t, f])?, y.im.reshape(&[t, f])?)?;
        Spectrogram::new(data, noisy.framing, noisy.length)
    }

    /// Per-layer parameter and MAC counts for one sequence of `frames` frames.
    pub fn layer_costs(&self, frames: usize) -> Result<Vec<LayerCost>> {
        let mut ex = ShapeExec::default();
        let x = ShapeAct {
            shape: vec![1, frames, self.spec.framing.bins()],
            domain: Domain::Complex,
        };
        let out = self.body.run(&mut ex, x)?;
        if out.shape != [1, frames, self.spec.framing.bins()] {
            return Err(Error::Config(format!(
                "model `{}` maps {frames} frames to shape {:?}",
                self.spec.name, out.shape
            )));
        }
        Ok(ex.costs)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layer_costs(1)?.iter().map(|c| c.params).sum())
    }
}
