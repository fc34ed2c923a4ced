//! One body definition drives two interpreters: graph execution and shape
//! tracing for cost accounting.

use crate::complex::{ActivationKind, CNode};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Act, Conv2d, Deconv2d, Domain, Glu, Layer, Linear, Lstm};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
pub(crate) enum LayerRef<'a> {
    Linear(&'a Linear),
    Conv(&'a Conv2d),
    Deconv(&'a Deconv2d),
    Glu(&'a Glu),
    Lstm(&'a Lstm),
}

impl LayerRef<'_> {
    fn as_layer(&self) -> &dyn Layer {
        match *self {
            LayerRef::Linear(l) => l,
            LayerRef::Conv(l) => l,
            LayerRef::Deconv(l) => l,
            LayerRef::Glu(l) => l,
            LayerRef::Lstm(l) => l,
        }
    }

    fn domain(&self) -> Domain {
        match *self {
            LayerRef::Linear(l) => l.domain,
            LayerRef::Conv(l) => l.domain,
            LayerRef::Deconv(l) => l.domain,
            LayerRef::Glu(l) => l.domain,
            LayerRef::Lstm(l) => l.domain(),
        }
    }
}

pub(crate) trait Exec {
    type V: Clone;
    fn shape(&self, v: &Self::V) -> Result<Vec<usize>>;
    fn to_domain(&mut self, v: Self::V, d: Domain, axis: usize) -> Result<Self::V>;
    fn reshape(&mut self, v: Self::V, shape: &[usize]) -> Result<Self::V>;
    fn permute(&mut self, v: Self::V, perm: &[usize]) -> Result<Self::V>;
    fn concat(&mut self, parts: &[Self::V], axis: usize) -> Result<Self::V>;
    fn slice(&mut self, v: Self::V, axis: usize, start: usize, len: usize) -> Result<Self::V>;
    /// Prepends `n` zero entries along `axis`.
    fn pad_front(&mut self, v: Self::V, axis: usize, n: usize) -> Result<Self::V>;
    fn activate(&mut self, v: Self::V, f: ActivationKind) -> Result<Self::V>;
    fn layer(&mut self, l: LayerRef<'_>, v: Self::V) -> Result<Self::V>;
}

pub(crate) struct GraphExec<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
}

impl Exec for GraphExec<'_> {
    type V = Act;

    fn shape(&self, v: &Act) -> Result<Vec<usize>> {
        v.shape(self.g)
    }

    fn to_domain(&mut self, v: Act, d: Domain, axis: usize) -> Result<Act> {
        v.to_domain(self.g, d, axis)
    }

    fn reshape(&mut self, v: Act, shape: &[usize]) -> Result<Act> {
        v.reshape(self.g, shape)
    }

    fn permute(&mut self, v: Act, perm: &[usize]) -> Result<Act> {
        v.permute(self.g, perm)
    }

    fn concat(&mut self, parts: &[Act], axis: usize) -> Result<Act> {
        Act::concat(self.g, parts, axis)
    }

    fn slice(&mut self, v: Act, axis: usize, start: usize, len: usize) -> Result<Act> {
        Ok(match v {
            Act::Real(x) => Act::Real(self.g.slice(x, axis, start, len)?),
            Act::Complex(z) => Act::Complex(self.g.c_slice(z, axis, start, len)?),
        })
    }

    fn pad_front(&mut self, v: Act, axis: usize, n: usize) -> Result<Act> {
        let mut shape = v.shape(self.g)?;
        shape[axis] = n;
        let zero = |g: &mut Graph| g.constant(Tensor::zeros(&shape));
        let pad = match v {
            Act::Real(_) => Act::Real(zero(self.g)),
            Act::Complex(_) => Act::Complex(CNode {
                re: zero(self.g),
                im: zero(self.g),
            }),
        };
        Act::concat(self.g, &[pad, v], axis)
    }

    fn activate(&mut self, v: Act, f: ActivationKind) -> Result<Act> {
        v.activate(self.g, f)
    }

    fn layer(&mut self, l: LayerRef<'_>, v: Act) -> Result<Act> {
        let (g, s) = (&mut *self.g, self.store);
        match l {
            LayerRef::Linear(l) => l.forward(g, s, v),
            LayerRef::Conv(l) => l.forward(g, s, v),
            LayerRef::Deconv(l) => l.forward(g, s, v),
            LayerRef::Glu(l) => l.forward(g, s, v),
            LayerRef::Lstm(l) => l.forward(g, s, v),
        }
    }
}

/// Cost of one layer application.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub params: usize,
    pub macs: u64,
}

/// Shape of an activation plus its domain; channel counts are in domain units.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ShapeAct {
    pub shape: Vec<usize>,
    pub domain: Domain,
}

#[derive(Default)]
pub(crate) struct ShapeExec {
    pub costs: Vec<LayerCost>,
}

impl Exec for ShapeExec {
    type V = ShapeAct;

    fn shape(&self, v: &ShapeAct) -> Result<Vec<usize>> {
        Ok(v.shape.clone())
    }

    fn to_domain(&mut self, mut v: ShapeAct, d: Domain, axis: usize) -> Result<ShapeAct> {
        match (v.domain, d) {
            (Domain::Real, Domain::Complex) => {
                if !v.shape[axis].is_multiple_of(2) {
                    return Err(Error::Domain(format!("cannot split odd extent {} into real and imaginary halves", v.shape[axis])));
                }
                v.shape[axis] /= 2;
            }
            (Domain::Complex, Domain::Real) => v.shape[axis] *= 2,
            _ => {}
        }
        v.domain = d;
        Ok(v)
    }

    fn reshape(&mut self, v: ShapeAct, shape: &[usize]) -> Result<ShapeAct> {
        let (a, b): (usize, usize) = (v.shape.iter().product(), shape.iter().product());
        if a != b {
            return Err(crate::error::shape_err("reshape", &v.shape, shape));
        }
        Ok(ShapeAct {
            shape: shape.to_vec(),
            domain: v.domain,
        })
    }

    fn permute(&mut self, v: ShapeAct, perm: &[usize]) -> Result<ShapeAct> {
        Ok(ShapeAct {
            shape: perm.iter().map(|&p| v.shape[p]).collect(),
            domain: v.domain,
        })
    }

    fn concat(&mut self, parts: &[ShapeAct], axis: usize) -> Result<ShapeAct> {
        let mut out = parts[0].clone();
        for p in &parts[1..] {
            if p.domain != out.domain {
                return Err(Error::Domain("concat of mixed domains".into()));
            }
            out.shape[axis] += p.shape[axis];
        }
        Ok(out)
    }

    fn slice(&mut self, mut v: ShapeAct, axis: usize, _start: usize, len: usize) -> Result<ShapeAct> {
        v.shape[axis] = len;
        Ok(v)
    }

    fn pad_front(&mut self, mut v: ShapeAct, axis: usize, n: usize) -> Result<ShapeAct> {
        v.shape[axis] += n;
        Ok(v)
    }

    fn activate(&mut self, v: ShapeAct, _f: ActivationKind) -> Result<ShapeAct> {
        Ok(v)
    }

    fn layer(&mut self, l: LayerRef<'_>, v: ShapeAct) -> Result<ShapeAct> {
        if l.domain() != v.domain {
            return Err(Error::Domain(format!("{}: {} input", l.as_layer().name(), v.domain.as_str())));
        }
        let layer = l.as_layer();
        self.costs.push(LayerCost {
            name: layer.name().to_string(),
            params: layer.param_count(),
            macs: layer.mac_count(&v.shape)?,
        });
        Ok(ShapeAct {
            shape: layer.output_shape(&v.shape)?,
            domain: v.domain,
        })
    }
}
