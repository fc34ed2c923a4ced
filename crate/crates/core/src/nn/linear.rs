use crate::error::{shape_err, Result};
use crate::graph::Graph;
use crate::params::ParamStore;
use crate::tensor::Tensor;

use super::{apply_core, fan_in_bound, Act, Domain, Layer, Weight};

/// Fully connected layer over the trailing axis.
#[derive(Clone, Debug)]
pub struct Linear {
    name: String,
    pub domain: Domain,
    pub input: usize,
    pub output: usize,
    pub(crate) w: Weight,
    pub(crate) b: Option<Weight>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, domain: Domain, input: usize, output: usize, bias: bool) -> Self {
        let bound = fan_in_bound(input);
        let w = Weight::new(store, &format!("{name}.w"), domain, &[input, output], bound);
        let b = bias.then(|| Weight::new(store, &format!("{name}.b"), domain, &[output], bound));
        Linear {
            name: name.to_string(),
            domain,
            input,
            output,
            w,
            b,
        }
    }

    pub fn has_bias(&self) -> bool {
        self.b.is_some()
    }

    pub fn weight(&self) -> Weight {
        self.w
    }

    pub fn bias(&self) -> Option<Weight> {
        self.b
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Act) -> Result<Act> {
        let shape = x.shape(g)?;
        let last = *shape.last().unwrap_or(&0);
        if last != self.input {
            return Err(shape_err(&self.name, &shape, &[self.input, self.output]));
        }
        let rows = shape[..shape.len() - 1].iter().product::<usize>();
        let flat = x.reshape(g, &[rows, self.input])?;
        let w = self.w.bind(g, store)?;
        let mut y = apply_core(g, flat, w, &self.name, |g, a, b| g.matmul(a, b))?;
        if let Some(b) = &self.b {
            y = match (y, b.bind(g, store)?) {
                (Act::Real(y), Act::Real(b)) => Act::Real(g.add_bias(y, b)?),
                (Act::Complex(y), Act::Complex(b)) => Act::Complex(crate::CNode {
                    re: g.add_bias(y.re, b.re)?,
                    im: g.add_bias(y.im, b.im)?,
                }),
                _ => unreachable!("bias shares the weight domain"),
            };
        }
        let mut out = shape;
        *out.last_mut().expect("non-empty shape") = self.output;
        y.reshape(g, &out)
    }

    /// Real layer `2·in → 2·out` computing the same map on `[re | im]`
    /// features, with weight `[[Wr, Wi], [-Wi, Wr]]` and bias `[br | bi]`.
    pub fn structured_real(&self, src: &ParamStore, dst: &mut ParamStore) -> Result<Linear> {
        let Weight::Complex { re, im } = self.w else {
            return Err(crate::Error::Domain("structured_real needs a complex layer".into()));
        };
        let real = Linear::new(dst, &format!("{}.sr", self.name), Domain::Real, 2 * self.input, 2 * self.output, self.b.is_some());
        let (wr, wi) = (src.get(re)?, src.get(im)?);
        let (i, o) = (self.input, self.output);
        let block = Tensor::from_fn(&[2 * i, 2 * o], |k| {
            let (r, c) = (k / (2 * o), k % (2 * o));
            let (rr, cc) = (r % i, c % o);
            let at = rr * o + cc;
            match (r < i, c < o) {
                (true, true) | (false, false) => wr.data()[at],
                (true, false) => wi.data()[at],
                (false, true) => -wi.data()[at],
            }
        });
        dst.set(real.w.ids()[0], block)?;
        if let (Some(Weight::Complex { re, im }), Some(rb)) = (self.b, real.b) {
            let bias = Tensor::concat(&[src.get(re)?, src.get(im)?], 0)?;
            dst.set(rb.ids()[0], bias)?;
        }
        Ok(real)
    }
}

impl Layer for Linear {
    fn name(&self) -> &str {
        &self.name
    }

    fn param_count(&self) -> usize {
        let per = self.input * self.output + if self.b.is_some() { self.output } else { 0 };
        per * self.domain.param_factor()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input.last() {
            Some(&n) if n == self.input => {
                let mut out = input.to_vec();
                *out.last_mut().expect("non-empty") = self.output;
                Ok(out)
            }
            _ => Err(shape_err(&self.name, input, &[self.input, self.output])),
        }
    }

    fn mac_count(&self, input: &[usize]) -> Result<u64> {
        self.output_shape(input)?;
        let rows = input[..input.len() - 1].iter().product::<usize>() as u64;
        Ok(rows * (self.input * self.output) as u64 * self.domain.mac_factor())
    }
}
