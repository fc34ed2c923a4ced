use crate::conv::Conv2dGeom;
use crate::error::{invalid, shape_err, Error, Result};
use crate::graph::Graph;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::CNode;

use super::{apply_core, fan_in_bound, Act, Domain, Layer, Weight};

fn add_channel_bias(g: &mut Graph, store: &ParamStore, y: Act, b: &Option<Weight>) -> Result<Act> {
    let Some(b) = b else { return Ok(y) };
    Ok(match (y, b.bind(g, store)?) {
        (Act::Real(y), Act::Real(b)) => Act::Real(g.add_channel_bias(y, b)?),
        (Act::Complex(y), Act::Complex(b)) => Act::Complex(CNode {
            re: g.add_channel_bias(y.re, b.re)?,
            im: g.add_channel_bias(y.im, b.im)?,
        }),
        _ => unreachable!("bias shares the weight domain"),
    })
}

fn check_geom(name: &str, geom: &Conv2dGeom) -> Result<()> {
    if geom.time.is_valid() && geom.freq.is_valid() {
        Ok(())
    } else {
        Err(invalid(name, "kernel and stride must be >= 1 and output padding < stride"))
    }
}

fn spatial(name: &str, input: &[usize], channels: usize) -> Result<(usize, usize, usize)> {
    match input {
        &[b, c, t, f] if c == channels => Ok((b, t, f)),
        _ => Err(Error::Shape {
            op: name.to_string(),
            lhs: input.to_vec(),
            rhs: vec![channels],
        }),
    }
}

/// 2-D convolution over `[batch, channel, time, freq]`; in the complex
/// domain channel counts are complex channels.
#[derive(Clone, Debug)]
pub struct Conv2d {
    name: String,
    pub domain: Domain,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: Conv2dGeom,
    pub(crate) w: Weight,
    pub(crate) b: Option<Weight>,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        domain: Domain,
        in_ch: usize,
        out_ch: usize,
        geom: Conv2dGeom,
        bias: bool,
    ) -> Result<Self> {
        check_geom(name, &geom)?;
        let (kt, kf) = (geom.time.kernel, geom.freq.kernel);
        let bound = fan_in_bound(in_ch * kt * kf);
        let w = Weight::new(store, &format!("{name}.w"), domain, &[out_ch, in_ch, kt, kf], bound);
        let b = bias.then(|| Weight::new(store, &format!("{name}.b"), domain, &[out_ch], bound));
        Ok(Conv2d {
            name: name.to_string(),
            domain,
            in_ch,
            out_ch,
            geom,
            w,
            b,
        })
    }

    pub fn weight(&self) -> Weight {
        self.w
    }

    pub fn bias(&self) -> Option<Weight> {
        self.b
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        let shape = x.shape(g)?;
        self.output_shape(&shape)?;
        let w = self.w.bind(g, store)?;
        let geom = self.geom;
        let y = apply_core(g, x, w, &self.name, |g, a, b| g.conv2d(a, b, geom))?;
        add_channel_bias(g, store, y, &self.b)
    }

    /// Real convolution `2·in → 2·out` on `[re | im]` channels with the
    /// block kernel `[[Wr, -Wi], [Wi, Wr]]` (rows are output channels).
    pub fn structured_real(&self, src: &ParamStore, dst: &mut ParamStore) -> Result<Conv2d> {
        let Weight::Complex { re, im } = self.w else {
            return Err(Error::Domain("structured_real needs a complex layer".into()));
        };
        let real = Conv2d::new(dst, &format!("{}.sr", self.name), Domain::Real, 2 * self.in_ch, 2 * self.out_ch, self.geom, self.b.is_some())?;
        let block = block_kernel(src.get(re)?, src.get(im)?, self.out_ch, self.in_ch, false);
        dst.set(real.w.ids()[0], block)?;
        copy_bias(self.b, real.b, src, dst)?;
        Ok(real)
    }
}

/// Block kernel for the structured-real form. With `[o, c, ..]` layout the
/// real-output rows take `Wr·xr − Wi·xi` and the imaginary rows `Wi·xr + Wr·xi`.
/// For transposed kernels (`[c, o, ..]`) the roles of the two leading axes swap.
fn block_kernel(wr: &Tensor, wi: &Tensor, lead: usize, second: usize, transposed: bool) -> Tensor {
    let area: usize = wr.shape()[2..].iter().product();
    let shape = [2 * lead, 2 * second, wr.shape()[2], wr.shape()[3]];
    Tensor::from_fn(&shape, |k| {
        let a = k % area;
        let s = (k / area) % (2 * second);
        let l = k / area / (2 * second);
        let at = ((l % lead) * second + s % second) * area + a;
        let (lo_half, so_half) = (l >= lead, s >= second);
        // (output half, input half) after undoing the transposition
        let (out_im, in_im) = if transposed { (so_half, lo_half) } else { (lo_half, so_half) };
        match (out_im, in_im) {
            (false, false) | (true, true) => wr.data()[at],
            (false, true) => -wi.data()[at],
            (true, false) => wi.data()[at],
        }
    })
}

fn copy_bias(b: Option<Weight>, rb: Option<Weight>, src: &ParamStore, dst: &mut ParamStore) -> Result<()> {
    if let (Some(Weight::Complex { re, im }), Some(rb)) = (b, rb) {
        let bias = Tensor::concat(&[src.get(re)?, src.get(im)?], 0)?;
        dst.set(rb.ids()[0], bias)?;
    }
    Ok(())
}

impl Layer for Conv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_count(&self) -> usize {
        let w = self.out_ch * self.in_ch * self.geom.kernel_area();
        (w + if self.b.is_some() { self.out_ch } else { 0 }) * self.domain.param_factor()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, t, f) = spatial(&self.name, input, self.in_ch)?;
        let (ot, of) = self
            .geom
            .conv_out(t, f)
            .ok_or_else(|| shape_err(&self.name, input, &[self.geom.time.kernel, self.geom.freq.kernel]))?;
        Ok(vec![b, self.out_ch, ot, of])
    }

    fn mac_count(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        let positions = (out[0] * out[2] * out[3]) as u64;
        let per = (self.out_ch * self.in_ch * self.geom.kernel_area()) as u64;
        Ok(positions * per * self.domain.mac_factor())
    }
}

/// Transposed 2-D convolution, the adjoint of [`Conv2d`] with the same
/// geometry. Weights are laid out `[in, out, kt, kf]`.
#[derive(Clone, Debug)]
pub struct Deconv2d {
    name: String,
    pub domain: Domain,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: Conv2dGeom,
    pub(crate) w: Weight,
    pub(crate) b: Option<Weight>,
}

impl Deconv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        domain: Domain,
        in_ch: usize,
        out_ch: usize,
        geom: Conv2dGeom,
        bias: bool,
    ) -> Result<Self> {
        check_geom(name, &geom)?;
        let (kt, kf) = (geom.time.kernel, geom.freq.kernel);
        let bound = fan_in_bound(in_ch * kt * kf);
        let w = Weight::new(store, &format!("{name}.w"), domain, &[in_ch, out_ch, kt, kf], bound);
        let b = bias.then(|| Weight::new(store, &format!("{name}.b"), domain, &[out_ch], bound));
        Ok(Deconv2d {
            name: name.to_string(),
            domain,
            in_ch,
            out_ch,
            geom,
            w,
            b,
        })
    }

    pub fn weight(&self) -> Weight {
        self.w
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        let shape = x.shape(g)?;
        self.output_shape(&shape)?;
        let w = self.w.bind(g, store)?;
        let geom = self.geom;
        let y = apply_core(g, x, w, &self.name, |g, a, b| g.deconv2d(a, b, geom))?;
        add_channel_bias(g, store, y, &self.b)
    }

    /// Copy whose output spatial extents for `input` are `(t, f)`; only the
    /// output padding changes, so parameters are shared.
    pub fn resized(&self, input: &[usize], t: usize, f: usize) -> Result<Deconv2d> {
        let (_, it, if_) = spatial(&self.name, input, self.in_ch)?;
        let geom = self
            .geom
            .fit_deconv(it, if_, t, f)
            .ok_or_else(|| invalid(&self.name, format!("cannot map extents ({it}, {if_}) to ({t}, {f})")))?;
        Ok(Deconv2d { geom, ..self.clone() })
    }

    pub fn structured_real(&self, src: &ParamStore, dst: &mut ParamStore) -> Result<Deconv2d> {
        let Weight::Complex { re, im } = self.w else {
            return Err(Error::Domain("structured_real needs a complex layer".into()));
        };
        let real = Deconv2d::new(dst, &format!("{}.sr", self.name), Domain::Real, 2 * self.in_ch, 2 * self.out_ch, self.geom, self.b.is_some())?;
        let block = block_kernel(src.get(re)?, src.get(im)?, self.in_ch, self.out_ch, true);
        dst.set(real.w.ids()[0], block)?;
        copy_bias(self.b, real.b, src, dst)?;
        Ok(real)
    }
}

impl Layer for Deconv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_count(&self) -> usize {
        let w = self.out_ch * self.in_ch * self.geom.kernel_area();
        (w + if self.b.is_some() { self.out_ch } else { 0 }) * self.domain.param_factor()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, t, f) = spatial(&self.name, input, self.in_ch)?;
        let (ot, of) = self
            .geom
            .deconv_out(t, f)
            .ok_or_else(|| shape_err(&self.name, input, &[self.geom.time.kernel, self.geom.freq.kernel]))?;
        Ok(vec![b, self.out_ch, ot, of])
    }

    /// Counted per output element: `out_positions · in · out · kt · kf`.
    fn mac_count(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        let positions = (out[0] * out[2] * out[3]) as u64;
        let per = (self.out_ch * self.in_ch * self.geom.kernel_area()) as u64;
        Ok(positions * per * self.domain.mac_factor())
    }
}
