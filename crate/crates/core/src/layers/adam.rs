use crate::error::Result;
use crate::tensor::ParamTree;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub m: ParamTree,
    pub v: ParamTree,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ParamTree) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step_count: 0,
        }
    }

    /// In-place bias-corrected Adam update.
    pub fn update(&mut self, params: &mut ParamTree, grads: &ParamTree, lr: f64, cfg: &AdamConfig) -> Result<()> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        params.check_layout(&self.v)?;
        self.step_count += 1;
        let t = self.step_count as f64;
        let c1 = 1.0 - libm::pow(cfg.beta1, t);
        let c2 = 1.0 - libm::pow(cfg.beta2, t);
        for (((p, g), m), v) in params
            .entries
            .values_mut()
            .zip(grads.entries.values())
            .zip(self.m.entries.values_mut())
            .zip(self.v.entries.values_mut())
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
            }
        }
        Ok(())
    }
}

/// One Adam step with the default constants.
pub fn adam_step(params: &ParamTree, grads: &ParamTree, state: &AdamState, lr: f64) -> Result<(ParamTree, AdamState)> {
    adam_step_with(params, grads, state, lr, &AdamConfig::default())
}

pub fn adam_step_with(
    params: &ParamTree,
    grads: &ParamTree,
    state: &AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(ParamTree, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.update(&mut p, grads, lr, cfg)?;
    Ok((p, s))
}
