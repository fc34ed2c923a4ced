use serde::{Deserialize, Serialize};

use crate::complex::{ActivationKind, CNode};
use crate::error::{invalid, shape_err, Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;

use super::{fan_in_bound, Act, Domain, Layer, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LstmVariant {
    Real,
    /// Two real sub-LSTMs `LSTM_r`, `LSTM_i` applied to both parts and
    /// combined as `(F_rr - F_ii) + j(F_ri + F_ir)`.
    QuasiComplex,
    /// Complex weights, split activations and complex element-wise products.
    FullComplex,
}

impl LstmVariant {
    pub fn domain(self) -> Domain {
        match self {
            LstmVariant::Real => Domain::Real,
            _ => Domain::Complex,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LstmVariant::Real => "real",
            LstmVariant::QuasiComplex => "quasi",
            LstmVariant::FullComplex => "full",
        }
    }
}

impl std::str::FromStr for LstmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(LstmVariant::Real),
            "quasi" => Ok(LstmVariant::QuasiComplex),
            "full" => Ok(LstmVariant::FullComplex),
            other => Err(Error::Config(format!("unknown lstm variant `{other}`"))),
        }
    }
}

/// Bias layout of each gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LstmBias {
    /// One bias vector per gate.
    PerGate,
    /// Separate input-side and hidden-side vectors per gate (the cuDNN layout).
    InputAndHidden,
}

impl LstmBias {
    fn vectors(self) -> usize {
        match self {
            LstmBias::PerGate => 1,
            LstmBias::InputAndHidden => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LstmBias::PerGate => "per_gate",
            LstmBias::InputAndHidden => "input_and_hidden",
        }
    }
}

impl std::str::FromStr for LstmBias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_gate" => Ok(LstmBias::PerGate),
            "input_and_hidden" => Ok(LstmBias::InputAndHidden),
            other => Err(Error::Config(format!("unknown lstm bias mode `{other}`"))),
        }
    }
}

/// Weights of one cell; gate blocks are ordered input, forget, cell, output.
#[derive(Clone, Debug)]
struct Cell {
    input: usize,
    hidden: usize,
    w_ih: Weight,
    w_hh: Weight,
    biases: Vec<Weight>,
}

impl Cell {
    fn new(store: &mut ParamStore, name: &str, domain: Domain, input: usize, hidden: usize, bias: LstmBias) -> Self {
        let bound = fan_in_bound(hidden);
        let w_ih = Weight::new(store, &format!("{name}.w_ih"), domain, &[input, 4 * hidden], bound);
        let w_hh = Weight::new(store, &format!("{name}.w_hh"), domain, &[hidden, 4 * hidden], bound);
        let biases = match bias {
            LstmBias::PerGate => vec![Weight::new(store, &format!("{name}.b"), domain, &[4 * hidden], bound)],
            LstmBias::InputAndHidden => vec![
                Weight::new(store, &format!("{name}.b_ih"), domain, &[4 * hidden], bound),
                Weight::new(store, &format!("{name}.b_hh"), domain, &[4 * hidden], bound),
            ],
        };
        Cell {
            input,
            hidden,
            w_ih,
            w_hh,
            biases,
        }
    }

    /// Real scalars of a real cell with these extents.
    fn real_scalars(input: usize, hidden: usize, bias: LstmBias) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden * bias.vectors()
    }

    /// Weight MACs of one real time step.
    fn real_step_macs(input: usize, hidden: usize) -> u64 {
        (4 * hidden * (input + hidden)) as u64
    }

    /// Real cell over `x[b, t, input]`, zero initial state.
    fn run_real(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let shape = g.shape(x)?.to_vec();
        let (b, t, h) = (shape[0], shape[1], self.hidden);
        let (Act::Real(w_ih), Act::Real(w_hh)) = (self.w_ih.bind(g, store)?, self.w_hh.bind(g, store)?) else {
            unreachable!("real cell");
        };
        let flat = g.reshape(x, &[b * t, self.input])?;
        let mut xw = g.matmul(flat, w_ih)?;
        for bias in &self.biases {
            let Act::Real(bv) = bias.bind(g, store)? else { unreachable!("real cell") };
            xw = g.add_bias(xw, bv)?;
        }
        let xw = g.reshape(xw, &[b, t, 4 * h])?;
        let mut state: Option<(NodeId, NodeId)> = None;
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let z = g.slice(xw, 1, step, 1)?;
            let mut z = g.reshape(z, &[b, 4 * h])?;
            if let Some((hp, _)) = state {
                let rec = g.matmul(hp, w_hh)?;
                z = g.add(z, rec)?;
            }
            let gate = |g: &mut Graph, k: usize| g.slice(z, 1, k * h, h);
            let (zi, zf, zg, zo) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
            let i = g.sigmoid(zi)?;
            let cand = g.tanh(zg)?;
            let o = g.sigmoid(zo)?;
            let mut c = g.mul(i, cand)?;
            if let Some((_, cp)) = state {
                let f = g.sigmoid(zf)?;
                let keep = g.mul(f, cp)?;
                c = g.add(keep, c)?;
            }
            let tc = g.tanh(c)?;
            let hn = g.mul(o, tc)?;
            outs.push(g.reshape(hn, &[b, 1, h])?);
            state = Some((hn, c));
        }
        g.concat(&outs, 1)
    }

    /// Complex cell over `x[b, t, input]`, zero initial state.
    fn run_complex(&self, g: &mut Graph, store: &ParamStore, x: CNode) -> Result<CNode> {
        let shape = g.shape(x.re)?.to_vec();
        let (b, t, h) = (shape[0], shape[1], self.hidden);
        let (Act::Complex(w_ih), Act::Complex(w_hh)) = (self.w_ih.bind(g, store)?, self.w_hh.bind(g, store)?) else {
            unreachable!("complex cell");
        };
        let flat = g.c_reshape(x, &[b * t, self.input])?;
        let mut xw = g.c_matmul(flat, w_ih)?;
        for bias in &self.biases {
            let Act::Complex(bv) = bias.bind(g, store)? else { unreachable!("complex cell") };
            xw = CNode {
                re: g.add_bias(xw.re, bv.re)?,
                im: g.add_bias(xw.im, bv.im)?,
            };
        }
        let xw = g.c_reshape(xw, &[b, t, 4 * h])?;
        let mut state: Option<(CNode, CNode)> = None;
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let z = g.c_slice(xw, 1, step, 1)?;
            let mut z = g.c_reshape(z, &[b, 4 * h])?;
            if let Some((hp, _)) = state {
                let rec = g.c_matmul(hp, w_hh)?;
                z = g.c_add(z, rec)?;
            }
            let gate = |g: &mut Graph, k: usize| g.c_slice(z, 1, k * h, h);
            let (zi, zf, zg, zo) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
            let i = g.c_activation(zi, ActivationKind::Sigmoid)?;
            let cand = g.c_activation(zg, ActivationKind::Tanh)?;
            let o = g.c_activation(zo, ActivationKind::Sigmoid)?;
            let mut c = g.c_hadamard(i, cand)?;
            if let Some((_, cp)) = state {
                let f = g.c_activation(zf, ActivationKind::Sigmoid)?;
                let keep = g.c_hadamard(f, cp)?;
                c = g.c_add(keep, c)?;
            }
            let tc = g.c_activation(c, ActivationKind::Tanh)?;
            let hn = g.c_hadamard(o, tc)?;
            outs.push(g.c_reshape(hn, &[b, 1, h])?);
            state = Some((hn, c));
        }
        g.c_concat(&outs, 1)
    }
}

#[derive(Clone, Debug)]
enum Cells {
    Real(Vec<Cell>),
    Quasi { r: Cell, i: Cell },
    Full(Cell),
}

/// One LSTM layer over `[batch, time, features]` sequences.
///
/// The real variant may be split into `groups` independent LSTMs over equal
/// slices of the feature axis.
#[derive(Clone, Debug)]
pub struct Lstm {
    name: String,
    pub variant: LstmVariant,
    pub input: usize,
    pub hidden: usize,
    pub groups: usize,
    pub bias: LstmBias,
    cells: Cells,
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        variant: LstmVariant,
        input: usize,
        hidden: usize,
        groups: usize,
        bias: LstmBias,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || groups == 0 {
            return Err(invalid(name, "extents and groups must be positive"));
        }
        if groups > 1 && variant != LstmVariant::Real {
            return Err(invalid(name, "grouping is only defined for the real variant"));
        }
        if !input.is_multiple_of(groups) || !hidden.is_multiple_of(groups) {
            return Err(invalid(name, format!("input {input} and hidden {hidden} must divide into {groups} groups")));
        }
        let cells = match variant {
            LstmVariant::Real => Cells::Real(
                (0..groups)
                    .map(|k| {
                        let cname = if groups == 1 { name.to_string() } else { format!("{name}.g{k}") };
                        Cell::new(store, &cname, Domain::Real, input / groups, hidden / groups, bias)
                    })
                    .collect(),
            ),
            LstmVariant::QuasiComplex => Cells::Quasi {
                r: Cell::new(store, &format!("{name}.r"), Domain::Real, input, hidden, bias),
                i: Cell::new(store, &format!("{name}.i"), Domain::Real, input, hidden, bias),
            },
            LstmVariant::FullComplex => Cells::Full(Cell::new(store, name, Domain::Complex, input, hidden, bias)),
        };
        Ok(Lstm {
            name: name.to_string(),
            variant,
            input,
            hidden,
            groups,
            bias,
            cells,
        })
    }

    pub fn domain(&self) -> Domain {
        self.variant.domain()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        let shape = x.shape(g)?;
        self.output_shape(&shape)?;
        match &self.cells {
            Cells::Real(cells) => {
                let x = x.expect_real(&self.name)?;
                if cells.len() == 1 {
                    return Ok(Act::Real(cells[0].run_real(g, store, x)?));
                }
                let step = self.input / self.groups;
                let mut outs = Vec::with_capacity(cells.len());
                for (k, cell) in cells.iter().enumerate() {
                    let part = g.slice(x, 2, k * step, step)?;
                    outs.push(cell.run_real(g, store, part)?);
                }
                Ok(Act::Real(g.concat(&outs, 2)?))
            }
            Cells::Quasi { r, i } => {
                let z = x.expect_complex(&self.name)?;
                let b = shape[0];
                // Both parts go through each sub-LSTM in one batch.
                let both = g.concat(&[z.re, z.im], 0)?;
                let lr = r.run_real(g, store, both)?;
                let li = i.run_real(g, store, both)?;
                let f_rr = g.slice(lr, 0, 0, b)?;
                let f_ir = g.slice(lr, 0, b, b)?;
                let f_ri = g.slice(li, 0, 0, b)?;
                let f_ii = g.slice(li, 0, b, b)?;
                Ok(Act::Complex(CNode {
                    re: g.sub(f_rr, f_ii)?,
                    im: g.add(f_ri, f_ir)?,
                }))
            }
            Cells::Full(cell) => {
                let z = x.expect_complex(&self.name)?;
                Ok(Act::Complex(cell.run_complex(g, store, z)?))
            }
        }
    }

    /// Per-time-step weight MACs for one sequence.
    pub fn step_macs(&self) -> u64 {
        match self.variant {
            LstmVariant::Real => self.groups as u64 * Cell::real_step_macs(self.input / self.groups, self.hidden / self.groups),
            LstmVariant::QuasiComplex | LstmVariant::FullComplex => 4 * Cell::real_step_macs(self.input, self.hidden),
        }
    }

    /// Parameter handles of every sub-cell, for tests that set weights by hand.
    pub fn weights(&self) -> Vec<Weight> {
        let cells: Vec<&Cell> = match &self.cells {
            Cells::Real(c) => c.iter().collect(),
            Cells::Quasi { r, i } => vec![r, i],
            Cells::Full(c) => vec![c],
        };
        cells
            .into_iter()
            .flat_map(|c| [c.w_ih, c.w_hh].into_iter().chain(c.biases.iter().copied()))
            .collect()
    }
}

impl Layer for Lstm {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_count(&self) -> usize {
        match self.variant {
            LstmVariant::Real => self.groups * Cell::real_scalars(self.input / self.groups, self.hidden / self.groups, self.bias),
            LstmVariant::QuasiComplex | LstmVariant::FullComplex => 2 * Cell::real_scalars(self.input, self.hidden, self.bias),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            &[b, t, f] if f == self.input => Ok(vec![b, t, self.hidden]),
            _ => Err(shape_err(&self.name, input, &[self.input, self.hidden])),
        }
    }

    fn mac_count(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        Ok((out[0] * out[1]) as u64 * self.step_macs())
    }
}
