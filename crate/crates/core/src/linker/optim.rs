use crate::encoder::ModelParams;

/// AdamW moments, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: ModelParams,
    pub second: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to matrices only.
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }
}

/// Learning rate after `progress` (fraction of training done, in `[0, 1]`)
/// under linear decay to zero.
pub fn linear_decay(base: f64, progress: f64) -> f64 {
    base * (1.0 - progress.clamp(0.0, 1.0))
}

impl AdamW {
    /// One bias-corrected update of `params` by `grads` at rate `lr`.
    pub fn step(&self, params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let p_tensors = params.tensors_mut();
        let g_tensors = grads.tensors();
        let m_tensors = state.first.tensors_mut();
        let v_tensors = state.second.tensors_mut();
        for (((( _, p), (_, g)), (_, m)), (_, v)) in p_tensors
            .into_iter()
            .zip(g_tensors)
            .zip(m_tensors)
            .zip(v_tensors)
        {
            let decay = if p.shape.len() >= 2 { self.weight_decay } else { 0.0 };
            for (((x, &gi), mi), vi) in p
                .data
                .iter_mut()
                .zip(g.data)
                .zip(m.data.iter_mut())
                .zip(v.data.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let update = (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                *x -= lr * (update + decay * *x);
            }
        }
    }
}
