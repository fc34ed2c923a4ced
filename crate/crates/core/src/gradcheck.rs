//! Central finite-difference checks of graph gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries probed per tensor; larger tensors are subsampled.
    pub max_entries: usize,
    /// Magnitudes below this are compared absolutely rather than relatively.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_entries: 24,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub entries: usize,
}

impl GradCheckReport {
    fn record(&mut self, what: String, analytic: f64, numeric: f64, floor: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        let rel = (analytic - numeric).abs() / denom;
        self.entries += 1;
        if rel > self.max_rel_err || self.worst.is_empty() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = format!("{what}: analytic {analytic:.6e}, numeric {numeric:.6e}");
        }
    }
}

fn eval<F>(build: &F, store: &ParamStore, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = build(&mut g, store, &ids)?;
    g.value(loss)?.item()
}

/// Compares the reverse-mode gradient of the scalar built by `build` against
/// central differences, for every parameter in `store` and every input.
pub fn check<F, R>(
    store: &mut ParamStore,
    inputs: &mut [Tensor],
    build: F,
    opts: &GradCheckOptions,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, &[NodeId]) -> Result<NodeId>,
    R: Rng + ?Sized,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = build(&mut g, store, &ids)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport::default();
    let h = opts.step;
    let pids: Vec<_> = store.ids().collect();
    for pid in pids {
        let analytic = grads
            .param_in(store, pid)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.shape(pid)));
        let n = analytic.numel();
        for k in sample(rng, n, n.min(opts.max_entries)) {
            let orig = store.get(pid)?.data()[k];
            store.get_mut(pid)?.data_mut()[k] = orig + h;
            let up = eval(&build, store, inputs)?;
            store.get_mut(pid)?.data_mut()[k] = orig - h;
            let down = eval(&build, store, inputs)?;
            store.get_mut(pid)?.data_mut()[k] = orig;
            let name = format!("{}[{k}]", store.name(pid));
            report.record(name, analytic.data()[k], (up - down) / (2.0 * h), opts.floor);
        }
    }
    for (j, id) in ids.iter().enumerate() {
        let analytic = grads
            .wrt(*id)
            .cloned()
            .ok_or_else(|| Error::Graph(format!("input {j} has no gradient")))?;
        let n = analytic.numel();
        for k in sample(rng, n, n.min(opts.max_entries)) {
            let orig = inputs[j].data()[k];
            inputs[j].data_mut()[k] = orig + h;
            let up = eval(&build, store, inputs)?;
            inputs[j].data_mut()[k] = orig - h;
            let down = eval(&build, store, inputs)?;
            inputs[j].data_mut()[k] = orig;
            report.record(format!("input{j}[{k}]"), analytic.data()[k], (up - down) / (2.0 * h), opts.floor);
        }
    }
    Ok(report)
}

/// Reduces any tensor node to a scalar through a fixed random projection,
/// so every output entry contributes a distinct weight.
pub fn project(g: &mut Graph, x: NodeId, seed: u64) -> Result<NodeId> {
    use rand::SeedableRng;
    let shape = g.shape(x)?.to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(Tensor::uniform(&shape, 1.0, &mut rng));
    let p = g.mul(x, w)?;
    g.sum(p)
}
