//! Complex arithmetic over paired real tensors.
//!
//! A complex array is stored as two same-shape real tensors. Every complex
//! operation here is spelled out over the parts; a complex product of
//! matrices costs exactly four real matrix products.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::graph::{sigmoid, Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPair {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexPair {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(shape_err("complex pair", re.shape(), im.shape()));
        }
        Ok(ComplexPair { re, im })
    }

    /// Embeds a real tensor with zero imaginary part.
    pub fn from_real(re: Tensor) -> Self {
        let im = Tensor::zeros(re.shape());
        ComplexPair { re, im }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        ComplexPair {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn max_abs_diff(&self, other: &ComplexPair) -> Result<f64> {
        Ok(self.re.max_abs_diff(&other.re)?.max(self.im.max_abs_diff(&other.im)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    ReLU,
    Sigmoid,
    Tanh,
    Elu,
    Identity,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::ReLU => x.max(0.0),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::Identity => x,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::ReLU => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Elu => "elu",
            ActivationKind::Identity => "identity",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => ActivationKind::ReLU,
            "sigmoid" => ActivationKind::Sigmoid,
            "tanh" => ActivationKind::Tanh,
            "elu" => ActivationKind::Elu,
            "identity" => ActivationKind::Identity,
            other => return Err(crate::Error::Config(format!("unknown activation `{other}`"))),
        })
    }
}

/// `(X_r W_r − X_i W_i) + j(X_r W_i + X_i W_r)`
pub fn complex_matmul(x: &ComplexPair, w: &ComplexPair) -> Result<ComplexPair> {
    let rr = x.re.matmul(&w.re)?;
    let ii = x.im.matmul(&w.im)?;
    let ri = x.re.matmul(&w.im)?;
    let ir = x.im.matmul(&w.re)?;
    Ok(ComplexPair {
        re: rr.sub(&ii)?,
        im: ri.add(&ir)?,
    })
}

/// Element-wise complex product.
pub fn complex_hadamard(a: &ComplexPair, b: &ComplexPair) -> Result<ComplexPair> {
    if a.shape() != b.shape() {
        return Err(shape_err("complex_hadamard", a.shape(), b.shape()));
    }
    let re = a.re.mul(&b.re)?.sub(&a.im.mul(&b.im)?)?;
    let im = a.re.mul(&b.im)?.add(&a.im.mul(&b.re)?)?;
    Ok(ComplexPair { re, im })
}

/// Applies `f` to the real and imaginary parts independently.
pub fn split_activation(z: &ComplexPair, f: ActivationKind) -> ComplexPair {
    ComplexPair {
        re: z.re.map(|v| f.apply(v)),
        im: z.im.map(|v| f.apply(v)),
    }
}

/// Element-wise `sqrt(re² + im² + eps)`.
pub fn complex_magnitude(z: &ComplexPair, eps: f64) -> Result<Tensor> {
    if eps < 0.0 {
        return Err(invalid("complex_magnitude", format!("eps must be nonnegative, got {eps}")));
    }
    z.re.zip_with(&z.im, "complex_magnitude", |r, i| (r * r + i * i + eps).sqrt())
}

/// Graph handle of a complex value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CNode {
    pub re: NodeId,
    pub im: NodeId,
}

impl Graph {
    pub fn c_constant(&mut self, z: ComplexPair) -> CNode {
        CNode {
            re: self.constant(z.re),
            im: self.constant(z.im),
        }
    }

    pub fn c_variable(&mut self, z: ComplexPair) -> CNode {
        CNode {
            re: self.variable(z.re),
            im: self.variable(z.im),
        }
    }

    pub fn c_value(&self, z: CNode) -> Result<ComplexPair> {
        ComplexPair::new(self.value(z.re)?.clone(), self.value(z.im)?.clone())
    }

    pub fn c_add(&mut self, a: CNode, b: CNode) -> Result<CNode> {
        Ok(CNode {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    pub fn c_sub(&mut self, a: CNode, b: CNode) -> Result<CNode> {
        Ok(CNode {
            re: self.sub(a.re, b.re)?,
            im: self.sub(a.im, b.im)?,
        })
    }

    /// Four real matrix products combined per the complex product rule.
    pub fn c_matmul(&mut self, x: CNode, w: CNode) -> Result<CNode> {
        let rr = self.matmul(x.re, w.re)?;
        let ii = self.matmul(x.im, w.im)?;
        let ri = self.matmul(x.re, w.im)?;
        let ir = self.matmul(x.im, w.re)?;
        Ok(CNode {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    pub fn c_hadamard(&mut self, a: CNode, b: CNode) -> Result<CNode> {
        let rr = self.mul(a.re, b.re)?;
        let ii = self.mul(a.im, b.im)?;
        let ri = self.mul(a.re, b.im)?;
        let ir = self.mul(a.im, b.re)?;
        Ok(CNode {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Scales both parts by the same real tensor.
    pub fn c_scale_by(&mut self, z: CNode, k: NodeId) -> Result<CNode> {
        Ok(CNode {
            re: self.mul(z.re, k)?,
            im: self.mul(z.im, k)?,
        })
    }

    pub fn activation(&mut self, x: NodeId, f: ActivationKind) -> Result<NodeId> {
        match f {
            ActivationKind::ReLU => self.relu(x),
            ActivationKind::Sigmoid => self.sigmoid(x),
            ActivationKind::Tanh => self.tanh(x),
            ActivationKind::Elu => self.elu(x, 1.0),
            ActivationKind::Identity => Ok(x),
        }
    }

    pub fn c_activation(&mut self, z: CNode, f: ActivationKind) -> Result<CNode> {
        Ok(CNode {
            re: self.activation(z.re, f)?,
            im: self.activation(z.im, f)?,
        })
    }

    pub fn c_magnitude(&mut self, z: CNode, eps: f64) -> Result<NodeId> {
        self.magnitude(z.re, z.im, eps)
    }

    pub fn c_reshape(&mut self, z: CNode, shape: &[usize]) -> Result<CNode> {
        Ok(CNode {
            re: self.reshape(z.re, shape)?,
            im: self.reshape(z.im, shape)?,
        })
    }

    pub fn c_permute(&mut self, z: CNode, perm: &[usize]) -> Result<CNode> {
        Ok(CNode {
            re: self.permute(z.re, perm)?,
            im: self.permute(z.im, perm)?,
        })
    }

    pub fn c_slice(&mut self, z: CNode, axis: usize, start: usize, len: usize) -> Result<CNode> {
        Ok(CNode {
            re: self.slice(z.re, axis, start, len)?,
            im: self.slice(z.im, axis, start, len)?,
        })
    }

    pub fn c_concat(&mut self, parts: &[CNode], axis: usize) -> Result<CNode> {
        let re: Vec<_> = parts.iter().map(|p| p.re).collect();
        let im: Vec<_> = parts.iter().map(|p| p.im).collect();
        Ok(CNode {
            re: self.concat(&re, axis)?,
            im: self.concat(&im, axis)?,
        })
    }
}
