use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// Adam moments kept per parameter block, so a block's trajectory does not
/// depend on what else is in the store or whether it was frozen earlier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    blocks: Vec<Moments>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of updates applied to block `index` so far.
    pub fn steps(&self, index: usize) -> u64 {
        self.blocks.get(index).map_or(0, |m| m.step)
    }
}

/// One bias-corrected Adam update of every trainable block from its grad slot.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig, state: &mut AdamState) {
    if state.blocks.len() < store.len() {
        state.blocks.resize_with(store.len(), Moments::default);
    }
    for id in store.ids().collect::<Vec<_>>() {
        let block = store.block_mut(id);
        if !block.trainable {
            continue;
        }
        let mom = &mut state.blocks[id.0];
        if mom.m.len() != block.len() {
            mom.m = vec![0.0; block.len()];
            mom.v = vec![0.0; block.len()];
        }
        mom.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(mom.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(mom.step as i32);
        for i in 0..block.len() {
            let g = block.grad[i];
            mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
            mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = mom.m[i] / bc1;
            let v_hat = mom.v[i] / bc2;
            block.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
