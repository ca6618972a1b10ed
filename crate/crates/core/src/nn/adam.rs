use super::ParamMut;

/// Moment coefficients for the adaptive-moment update. The first-moment
/// coefficient doubles as the configured momentum value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_momentum(momentum: f64) -> Self {
        AdamHyper {
            beta1: momentum,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, ordered like the model's parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new_for(params: &[ParamMut<'_>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    /// One update from the accumulated gradients. Weight decay is decoupled
    /// (applied directly to decaying tensors, not through the moments).
    pub fn step(
        &mut self,
        params: &mut [ParamMut<'_>],
        hyper: &AdamHyper,
        lr: f64,
        weight_decay: f64,
    ) {
        assert_eq!(params.len(), self.m.len(), "optimizer/model mismatch");
        self.step += 1;
        let bc1 = 1.0 - hyper.beta1.powi(self.step as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.step as i32);
        for (idx, param) in params.iter_mut().enumerate() {
            assert_eq!(param.data.len(), self.m[idx].len(), "parameter size drift");
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..param.data.len() {
                let g = param.grad[i];
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
                if param.decay {
                    param.data[i] -= lr * weight_decay * param.data[i];
                }
            }
        }
    }
}
