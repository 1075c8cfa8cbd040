use serde::{Deserialize, Serialize};

use super::graph::{ParamGrads, ParamSet};
use super::tensor::Tensor;

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Cosine annealing from `base` at step 0 to `min` at `period`.
pub fn cosine_lr(base: f64, min: f64, step: usize, period: usize) -> f64 {
    if period == 0 {
        return base;
    }
    let t = (step.min(period) as f64) / period as f64;
    min + 0.5 * (base - min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            clip: Some(5.0),
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are indexed by
/// parameter id.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update at learning rate `lr`, clipping first if configured.
    /// Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut ParamSet, grads: &mut ParamGrads, lr: f64) -> f64 {
        let norm = match self.config.clip {
            Some(c) => clip_grad_norm(grads, c),
            None => grads.norm(),
        };
        let c = self.config;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        if self.m.len() < params.len() {
            self.m.resize(params.len(), None);
            self.v.resize(params.len(), None);
        }
        for id in 0..params.len() {
            if !params.is_trainable(id) {
                continue;
            }
            let Some(g) = grads.0.get(id).and_then(|g| g.as_ref()) else {
                continue;
            };
            let shape = params.value(id).shape().to_vec();
            let m = self.m[id].get_or_insert_with(|| Tensor::zeros(&shape));
            let v = self.v[id].get_or_insert_with(|| Tensor::zeros(&shape));
            let p = params.value_mut(id);
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * *pv);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: Vec<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        let n = value.len();
        p.insert("w", Tensor::new(vec![n], value), true);
        p
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = single(vec![1.0, -2.0]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        let mut g = ParamGrads(vec![Some(Tensor::zeros(&[2]))]);
        opt.step(&mut p, &mut g, 0.1);
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn clipping_halves_norm_ten() {
        let mut g = ParamGrads(vec![Some(Tensor::new(vec![2], vec![6.0, 8.0]))]);
        let n = clip_grad_norm(&mut g, 5.0);
        assert!((n - 10.0).abs() < 1e-12);
        assert_eq!(g.0[0].as_ref().unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(1.0, 0.1, 0, 10) - 1.0).abs() < 1e-12);
        assert!((cosine_lr(1.0, 0.1, 5, 10) - 0.55).abs() < 1e-12);
        assert!((cosine_lr(1.0, 0.1, 10, 10) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn convex_quadratic_descends() {
        let target = [1.0, -1.0, 0.8];
        let mut p = single(vec![0.0; 3]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        let loss = |p: &ParamSet| {
            p.get("w")
                .unwrap()
                .data()
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        };
        let mut prev = loss(&p);
        for step in 0..100 {
            let w = p.get("w").unwrap().data().to_vec();
            let g: Vec<f64> = w.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let mut grads = ParamGrads(vec![Some(Tensor::new(vec![3], g))]);
            opt.step(&mut p, &mut grads, cosine_lr(0.005, 0.0005, step, 100));
            let l = loss(&p);
            assert!(l < prev, "step {step}: {l} >= {prev}");
            prev = l;
        }
    }
}
