use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-5,
            clip_norm: Some(1.0),
        }
    }
}

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.get(id).raw_dim())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        let c = &self.config;
        self.step += 1;
        let mut scale = 1.0;
        if let Some(max) = c.clip_norm {
            let norm = grads.iter().map(|(_, g)| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (id, g) in grads {
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(*id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                *p -= c.lr * (update + c.weight_decay * *p);
            });
        }
    }
}

/// Sum `other` into `acc` (both sorted by id, possibly with different id sets).
pub fn accumulate(acc: &mut Vec<(ParamId, Tensor)>, other: Vec<(ParamId, Tensor)>) {
    for (id, g) in other {
        match acc.binary_search_by_key(&id, |(i, _)| *i) {
            Ok(pos) => acc[pos].1 += &g,
            Err(pos) => acc.insert(pos, (id, g)),
        }
    }
}

pub fn scale_grads(grads: &mut [(ParamId, Tensor)], c: f64) {
    for (_, g) in grads {
        g.mapv_inplace(|x| x * c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use ndarray::array;
    use std::rc::Rc;

    #[test]
    fn adamw_fits_linear_target() {
        let mut store = ParamStore::default();
        let w = store.add("w", array![[0.0], [0.0]]);
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let target = Rc::new(array![[5.0], [1.0], [1.5]]); // w = [1, 2]
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.05,
                weight_decay: 0.0,
                clip_norm: None,
                ..Default::default()
            },
            &store,
        );
        for _ in 0..2000 {
            let mut t = Tape::new();
            let xi = t.input(x.clone());
            let wi = t.param(&store, w);
            let y = t.matmul(xi, wi);
            let l = t.mse(y, target.clone());
            let g = t.backward(l);
            opt.step(&mut store, &g);
        }
        let got = store.get(w);
        assert!((got[[0, 0]] - 1.0).abs() < 1e-3 && (got[[1, 0]] - 2.0).abs() < 1e-3, "{got}");
    }

    #[test]
    fn accumulate_merges_by_id() {
        let mut a = vec![(ParamId(0), array![[1.0]]), (ParamId(2), array![[1.0]])];
        accumulate(&mut a, vec![(ParamId(1), array![[2.0]]), (ParamId(2), array![[3.0]])]);
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].0, ParamId(1));
        assert_eq!(a[2].1[[0, 0]], 4.0);
    }
}
