//! Real and complex versions of the atomic units: linear, convolution,
//! transposed convolution, LSTM (three variants) and gated linear units.
//!
//! Complex layers store every weight as a `(re, im)` parameter pair; their
//! parameter count is the number of real scalars (a complex weight counts 2)
//! and their MAC count charges 4 real MACs per complex multiply-add.
//! Element-wise gate products, activations and bias additions are not
//! counted as MACs.

mod conv;
mod glu;
mod linear;
mod lstm;

pub use conv::{Conv2d, Deconv2d};
pub use glu::{magnitude_gate, Gating, Glu, GluBranch};
pub use linear::Linear;
pub use lstm::{Lstm, LstmBias, LstmVariant};

use serde::{Deserialize, Serialize};

use crate::complex::CNode;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Real,
    Complex,
}

impl Domain {
    /// Real MACs per scalar multiply-add in this domain.
    pub fn mac_factor(self) -> u64 {
        match self {
            Domain::Real => 1,
            Domain::Complex => 4,
        }
    }

    /// Real scalars per stored weight.
    pub fn param_factor(self) -> usize {
        match self {
            Domain::Real => 1,
            Domain::Complex => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Real => "real",
            Domain::Complex => "complex",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Domain::Real),
            "complex" => Ok(Domain::Complex),
            other => Err(Error::Config(format!("unknown domain `{other}`"))),
        }
    }
}

/// A value flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Real(NodeId),
    Complex(CNode),
}

impl Act {
    pub fn domain(&self) -> Domain {
        match self {
            Act::Real(_) => Domain::Real,
            Act::Complex(_) => Domain::Complex,
        }
    }

    /// Shape of the underlying tensor(s).
    pub fn shape(&self, g: &Graph) -> Result<Vec<usize>> {
        match self {
            Act::Real(x) => Ok(g.shape(*x)?.to_vec()),
            Act::Complex(z) => Ok(g.shape(z.re)?.to_vec()),
        }
    }

    pub fn expect_real(self, what: &str) -> Result<NodeId> {
        match self {
            Act::Real(x) => Ok(x),
            Act::Complex(_) => Err(Error::Domain(format!("{what} expects a real input, got complex"))),
        }
    }

    pub fn expect_complex(self, what: &str) -> Result<CNode> {
        match self {
            Act::Complex(z) => Ok(z),
            Act::Real(_) => Err(Error::Domain(format!("{what} expects a complex input, got real"))),
        }
    }

    /// Real view: a complex value becomes `[re | im]` concatenated on `axis`.
    pub fn to_real(self, g: &mut Graph, axis: usize) -> Result<NodeId> {
        match self {
            Act::Real(x) => Ok(x),
            Act::Complex(z) => g.concat(&[z.re, z.im], axis),
        }
    }

    /// Complex view: a real value with `2n` entries on `axis` splits into
    /// `re = [0, n)` and `im = [n, 2n)`.
    pub fn to_complex(self, g: &mut Graph, axis: usize) -> Result<CNode> {
        match self {
            Act::Complex(z) => Ok(z),
            Act::Real(x) => {
                let n = g.shape(x)?[axis];
                if n % 2 != 0 {
                    return Err(Error::Domain(format!("cannot split odd extent {n} into real and imaginary halves")));
                }
                Ok(CNode {
                    re: g.slice(x, axis, 0, n / 2)?,
                    im: g.slice(x, axis, n / 2, n / 2)?,
                })
            }
        }
    }

    pub fn to_domain(self, g: &mut Graph, domain: Domain, axis: usize) -> Result<Act> {
        Ok(match domain {
            Domain::Real => Act::Real(self.to_real(g, axis)?),
            Domain::Complex => Act::Complex(self.to_complex(g, axis)?),
        })
    }

    pub fn reshape(self, g: &mut Graph, shape: &[usize]) -> Result<Act> {
        Ok(match self {
            Act::Real(x) => Act::Real(g.reshape(x, shape)?),
            Act::Complex(z) => Act::Complex(g.c_reshape(z, shape)?),
        })
    }

    pub fn permute(self, g: &mut Graph, perm: &[usize]) -> Result<Act> {
        Ok(match self {
            Act::Real(x) => Act::Real(g.permute(x, perm)?),
            Act::Complex(z) => Act::Complex(g.c_permute(z, perm)?),
        })
    }

    /// Split (part-wise) activation for complex values.
    pub fn activate(self, g: &mut Graph, f: crate::ActivationKind) -> Result<Act> {
        Ok(match self {
            Act::Real(x) => Act::Real(g.activation(x, f)?),
            Act::Complex(z) => Act::Complex(g.c_activation(z, f)?),
        })
    }

    /// Concatenates values of one domain along `axis`.
    pub fn concat(g: &mut Graph, parts: &[Act], axis: usize) -> Result<Act> {
        let domain = parts.first().map(Act::domain).ok_or_else(|| Error::Graph("empty concat".into()))?;
        match domain {
            Domain::Real => {
                let xs: Vec<NodeId> = parts.iter().map(|p| p.expect_real("concat")).collect::<Result<_>>()?;
                Ok(Act::Real(g.concat(&xs, axis)?))
            }
            Domain::Complex => {
                let zs: Vec<CNode> = parts.iter().map(|p| p.expect_complex("concat")).collect::<Result<_>>()?;
                Ok(Act::Complex(g.c_concat(&zs, axis)?))
            }
        }
    }
}

/// Parameter handle(s) of one logical weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Real(ParamId),
    Complex { re: ParamId, im: ParamId },
}

impl Weight {
    pub(crate) fn new(store: &mut ParamStore, name: &str, domain: Domain, shape: &[usize], bound: f64) -> Self {
        match domain {
            Domain::Real => Weight::Real(store.add(name, shape, bound)),
            Domain::Complex => Weight::Complex {
                re: store.add(format!("{name}.re"), shape, bound),
                im: store.add(format!("{name}.im"), shape, bound),
            },
        }
    }

    pub(crate) fn bind(&self, g: &mut Graph, store: &ParamStore) -> Result<Act> {
        Ok(match *self {
            Weight::Real(p) => Act::Real(g.param(store, p)?),
            Weight::Complex { re, im } => Act::Complex(CNode {
                re: g.param(store, re)?,
                im: g.param(store, im)?,
            }),
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        match *self {
            Weight::Real(p) => vec![p],
            Weight::Complex { re, im } => vec![re, im],
        }
    }
}

/// Static cost interface shared by all layers.
pub trait Layer {
    fn name(&self) -> &str;

    /// Exact count of real scalars in all parameters.
    fn param_count(&self) -> usize;

    /// Output shape for an input of shape `input`.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Weight multiply-accumulates of one forward pass.
    fn mac_count(&self, input: &[usize]) -> Result<u64>;
}

pub(crate) fn fan_in_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in.max(1) as f64).sqrt()
}

/// Applies a real or complex weight by the per-part rule shared by every
/// matmul-cored layer: four real products for complex operands.
pub(crate) fn apply_core(
    g: &mut Graph,
    x: Act,
    w: Act,
    what: &str,
    mut core: impl FnMut(&mut Graph, NodeId, NodeId) -> Result<NodeId>,
) -> Result<Act> {
    match (x, w) {
        (Act::Real(x), Act::Real(w)) => Ok(Act::Real(core(g, x, w)?)),
        (Act::Complex(x), Act::Complex(w)) => {
            let rr = core(g, x.re, w.re)?;
            let ii = core(g, x.im, w.im)?;
            let ri = core(g, x.re, w.im)?;
            let ir = core(g, x.im, w.re)?;
            Ok(Act::Complex(CNode {
                re: g.sub(rr, ii)?,
                im: g.add(ri, ir)?,
            }))
        }
        (x, _) => Err(Error::Domain(format!(
            "{what}: {} input to a layer of the other domain",
            x.domain().as_str()
        ))),
    }
}
