use serde::{Deserialize, Serialize};

use crate::complex::CNode;
use crate::conv::Conv2dGeom;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;

use super::{Act, Conv2d, Deconv2d, Domain, Layer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gating {
    /// `F1 ⊙ σ(F2)` on real features.
    RealSigmoid,
    /// Sigmoid gates on the real and imaginary parts independently.
    Separate,
    /// Real gate `2σ(|F2|) - 1` shared by both parts; keeps the phase of `F1`.
    Magnitude,
}

impl Gating {
    pub fn domain(self) -> Domain {
        match self {
            Gating::RealSigmoid => Domain::Real,
            _ => Domain::Complex,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gating::RealSigmoid => "real_sigmoid",
            Gating::Separate => "separate",
            Gating::Magnitude => "magnitude",
        }
    }
}

impl std::str::FromStr for Gating {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_sigmoid" => Ok(Gating::RealSigmoid),
            "separate" => Ok(Gating::Separate),
            "magnitude" => Ok(Gating::Magnitude),
            other => Err(Error::Config(format!("unknown gating `{other}`"))),
        }
    }
}

/// Largest gate value; keeps the gate strictly below one where `tanh` rounds up.
const GATE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// `2σ(|z|) - 1`, evaluated as the identical `tanh(|z| / 2)`; exactly zero
/// where `z = 0` and strictly below one.
pub fn magnitude_gate(g: &mut Graph, z: CNode) -> Result<NodeId> {
    let m = g.magnitude(z.re, z.im, 0.0)?;
    let half = g.scale(m, 0.5)?;
    let t = g.tanh(half)?;
    g.clamp_max(t, GATE_MAX)
}

#[derive(Clone, Debug)]
pub enum GluBranch {
    Conv(Conv2d),
    Deconv(Deconv2d),
}

impl GluBranch {
    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        match self {
            GluBranch::Conv(c) => c.forward(g, store, x),
            GluBranch::Deconv(d) => d.forward(g, store, x),
        }
    }

    fn layer(&self) -> &dyn Layer {
        match self {
            GluBranch::Conv(c) => c,
            GluBranch::Deconv(d) => d,
        }
    }
}

/// Gated linear unit: a feature branch and a gate branch of identical
/// geometry, combined by the gating mode.
#[derive(Clone, Debug)]
pub struct Glu {
    name: String,
    pub domain: Domain,
    pub gating: Gating,
    pub feature: GluBranch,
    pub gate: GluBranch,
}

impl Glu {
    fn check(name: &str, domain: Domain, gating: Gating) -> Result<()> {
        if gating.domain() != domain {
            return Err(Error::Domain(format!(
                "{name}: {} gating is not defined for a {} unit",
                gating.as_str(),
                domain.as_str()
            )));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        store: &mut ParamStore,
        name: &str,
        domain: Domain,
        gating: Gating,
        in_ch: usize,
        out_ch: usize,
        geom: Conv2dGeom,
        bias: bool,
    ) -> Result<Self> {
        Self::check(name, domain, gating)?;
        let feature = Conv2d::new(store, &format!("{name}.f"), domain, in_ch, out_ch, geom, bias)?;
        let gate = Conv2d::new(store, &format!("{name}.g"), domain, in_ch, out_ch, geom, bias)?;
        Ok(Glu {
            name: name.to_string(),
            domain,
            gating,
            feature: GluBranch::Conv(feature),
            gate: GluBranch::Conv(gate),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn deconv(
        store: &mut ParamStore,
        name: &str,
        domain: Domain,
        gating: Gating,
        in_ch: usize,
        out_ch: usize,
        geom: Conv2dGeom,
        bias: bool,
    ) -> Result<Self> {
        Self::check(name, domain, gating)?;
        let feature = Deconv2d::new(store, &format!("{name}.f"), domain, in_ch, out_ch, geom, bias)?;
        let gate = Deconv2d::new(store, &format!("{name}.g"), domain, in_ch, out_ch, geom, bias)?;
        Ok(Glu {
            name: name.to_string(),
            domain,
            gating,
            feature: GluBranch::Deconv(feature),
            gate: GluBranch::Deconv(gate),
        })
    }

    /// For deconvolution branches, a copy producing spatial extents `(t, f)`.
    pub fn resized(&self, input: &[usize], t: usize, f: usize) -> Result<Glu> {
        let fit = |b: &GluBranch| -> Result<GluBranch> {
            Ok(match b {
                GluBranch::Deconv(d) => GluBranch::Deconv(d.resized(input, t, f)?),
                GluBranch::Conv(c) => GluBranch::Conv(c.clone()),
            })
        };
        Ok(Glu {
            feature: fit(&self.feature)?,
            gate: fit(&self.gate)?,
            ..self.clone()
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        let f1 = self.feature.forward(g, store, x)?;
        let f2 = self.gate.forward(g, store, x)?;
        self.combine(g, f1, f2)
    }

    /// Applies the gating rule to precomputed branch outputs.
    pub fn combine(&self, g: &mut Graph, f1: Act, f2: Act) -> Result<Act> {
        match self.gating {
            Gating::RealSigmoid => {
                let (f1, f2) = (f1.expect_real(&self.name)?, f2.expect_real(&self.name)?);
                let s = g.sigmoid(f2)?;
                Ok(Act::Real(g.mul(f1, s)?))
            }
            Gating::Separate => {
                let (f1, f2) = (f1.expect_complex(&self.name)?, f2.expect_complex(&self.name)?);
                let (sr, si) = (g.sigmoid(f2.re)?, g.sigmoid(f2.im)?);
                Ok(Act::Complex(CNode {
                    re: g.mul(f1.re, sr)?,
                    im: g.mul(f1.im, si)?,
                }))
            }
            Gating::Magnitude => {
                let (f1, f2) = (f1.expect_complex(&self.name)?, f2.expect_complex(&self.name)?);
                let gate = magnitude_gate(g, f2)?;
                Ok(Act::Complex(CNode {
                    re: g.mul(f1.re, gate)?,
                    im: g.mul(f1.im, gate)?,
                }))
            }
        }
    }
}

impl Layer for Glu {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_count(&self) -> usize {
        self.feature.layer().param_count() + self.gate.layer().param_count()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.feature.layer().output_shape(input)
    }

    fn mac_count(&self, input: &[usize]) -> Result<u64> {
        Ok(self.feature.layer().mac_count(input)? + self.gate.layer().mac_count(input)?)
    }
}
