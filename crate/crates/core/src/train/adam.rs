use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Complex weights are stored as separate real and
/// imaginary tensors, so they are updated component-wise like any other.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.shape(id))).collect::<Vec<_>>();
        Adam {
            cfg,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, index: usize) -> (&Tensor, &Tensor) {
        (&self.m[index], &self.v[index])
    }

    /// Applies one update. Parameters without a gradient see a zero gradient.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        if ids.len() != self.m.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                ids.len()
            )));
        }
        for &id in &ids {
            if let Some(g) = grads.param_in(store, id) {
                if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of `{}` at entry {pos}", store.name(id))));
                }
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for id in ids {
            let k = id.index();
            let grad = grads.param_in(store, id).cloned();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let w = store.get_mut(id)?.data_mut();
            for i in 0..w.len() {
                let g = grad.as_ref().map_or(0.0, |t| t.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn quadratic_step(store: &mut ParamStore, opt: &mut Adam, target: f64) -> f64 {
        let id = store.ids().next().unwrap();
        let mut g = Graph::new();
        let w = g.param(store, id).unwrap();
        let d = g.add_scalar(w, -target).unwrap();
        let sq = g.square(d).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        opt.step(store, &grads).unwrap();
        g.value(loss).unwrap().item().unwrap()
    }

    fn scalar_store(seed: u64, name: &str, value: f64) -> ParamStore {
        let mut store = ParamStore::seeded(seed);
        let id = store.add(name, &[1], 0.0);
        store.set(id, Tensor::new(&[1], vec![value]).unwrap()).unwrap();
        store
    }

    #[test]
    fn converges_on_a_scalar_quadratic() {
        let mut store = scalar_store(0, "w", 0.0);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &store,
        );
        for _ in 0..200 {
            quadratic_step(&mut store, &mut opt, 3.0);
        }
        let w = store.get(store.ids().next().unwrap()).unwrap().data()[0];
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = ParamStore::seeded(1);
        let id = store.add("w", &[3], 1.0);
        let before = store.get(id).unwrap().clone();
        let mut opt = Adam::new(AdamConfig::default(), &store);
        let mut g = Graph::new();
        let w = g.param(&store, id).unwrap();
        let z = g.scale(w, 0.0).unwrap();
        let loss = g.sum(z).unwrap();
        let grads = g.backward(loss).unwrap();
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).unwrap(), &before);
        let (m, v) = opt.moments(0);
        assert!(m.data().iter().chain(v.data()).all(|&x| x == 0.0));
    }

    #[test]
    fn first_step_moves_by_the_step_size() {
        let mut store = scalar_store(2, "w", 10.0);
        let mut opt = Adam::new(AdamConfig::default(), &store);
        quadratic_step(&mut store, &mut opt, 0.0);
        let moved = 10.0 - store.get(store.ids().next().unwrap()).unwrap().data()[0];
        assert!((moved - 1e-3).abs() < 1e-9, "moved {moved}");
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        // ln is finite at a subnormal input but its derivative overflows
        let mut store = scalar_store(3, "enc0.w", 1e-320);
        let id = store.ids().next().unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &store);
        let mut g = Graph::new();
        let w = g.param(&store, id).unwrap();
        let r = g.ln(w).unwrap();
        let loss = g.sum(r).unwrap();
        let grads = g.backward(loss).unwrap();
        let err = opt.step(&mut store, &grads).unwrap_err().to_string();
        assert!(err.contains("enc0.w"), "{err}");
        assert_eq!(opt.steps(), 0);
    }
}
