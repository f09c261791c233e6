//! Adam with bias correction, shaped over a whole network registry.

use super::mlp::{GradStore, NetRegistry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> AdamParams {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub hp: AdamParams,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(reg: &NetRegistry, hp: AdamParams) -> AdamState {
        AdamState { hp, m: reg.zero_grads(), v: reg.zero_grads(), t: 0 }
    }

    /// One update over every parameter of every registered net.
    pub fn step(&mut self, reg: &mut NetRegistry, grads: &GradStore) {
        self.t += 1;
        let b1t = 1.0 - self.hp.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.hp.beta2.powi(self.t as i32);
        for (net, g) in grads.iter().enumerate() {
            let m = &mut self.m[net];
            let v = &mut self.v[net];
            let p = &mut reg.params[net];
            for i in 0..g.len() {
                m[i] = self.hp.beta1 * m[i] + (1.0 - self.hp.beta1) * g[i];
                v[i] = self.hp.beta2 * v[i] + (1.0 - self.hp.beta2) * g[i] * g[i];
                let mh = m[i] / b1t;
                let vh = v[i] / b2t;
                p[i] -= self.hp.lr * mh / (vh.sqrt() + self.hp.eps);
            }
        }
    }
}
