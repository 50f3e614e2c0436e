use crate::error::{shape_err, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with L2 weight decay folded into the gradient (not decoupled AdamW).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: AdamState,
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn for_store(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            state: AdamState::for_store(store),
        }
    }

    /// Applies one update from the gradients accumulated in `store`, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.state.m.len() != store.len() {
            return shape_err(
                "adam_step",
                format!("state for {} params, store has {}", self.state.m.len(), store.len()),
            );
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (_, p)) in store.iter_mut().enumerate() {
            let (m, v) = (&mut self.state.m[i], &mut self.state.v[i]);
            if m.shape() != p.value.shape() {
                return shape_err(
                    "adam_step",
                    format!("{}: state {:?} vs value {:?}", p.name, m.shape(), p.value.shape()),
                );
            }
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for j in 0..values.len() {
                let g = grads[j] + self.weight_decay * values[j];
                md[j] = self.beta1 * md[j] + (1.0 - self.beta1) * g;
                vd[j] = self.beta2 * vd[j] + (1.0 - self.beta2) * g * g;
                let m_hat = md[j] / bc1;
                let v_hat = vd[j] / bc2;
                values[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
