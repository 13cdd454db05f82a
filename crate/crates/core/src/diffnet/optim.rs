use std::sync::Arc;

use super::{DiffError, Tensor};

/// Index of a parameter inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Parameter {
    name: String,
    /// Shared with tapes so recording a forward pass does not copy weights.
    value: Arc<Tensor>,
    grad: Option<Tensor>,
    first_moment: Tensor,
    second_moment: Tensor,
}

/// Named trainable tensors plus their Adam state, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    step: u64,
}

/// Adam hyperparameters. Defaults: lr 1e-4, β₁ 0.9, β₂ 0.999, ε 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let (r, c) = (value.rows(), value.cols());
        self.params.push(Parameter {
            name: name.into(),
            value: Arc::new(value),
            grad: None,
            first_moment: Tensor::zeros(r, c),
            second_moment: Tensor::zeros(r, c),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub(crate) fn shared_value(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.params[id.0].value)
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].grad.as_ref()
    }

    /// Number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adam steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    #[cfg(test)]
    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) -> Result<(), DiffError> {
        self.accumulate_grad_owned(id, g.clone())
    }

    pub(crate) fn accumulate_grad_owned(&mut self, id: ParamId, g: Tensor) -> Result<(), DiffError> {
        let p = &mut self.params[id.0];
        if g.shape() != p.value.shape() {
            return Err(DiffError::ShapeMismatch(format!("gradient for {}", p.name)));
        }
        match &mut p.grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// One bias-corrected Adam update over every parameter, then clears gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), DiffError> {
        if let Some(p) = self.params.iter().find(|p| p.grad.is_none()) {
            return Err(DiffError::MissingGradient(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for p in &mut self.params {
            let g = p.grad.take().expect("checked above");
            let m = p.first_moment.data_mut();
            let v = p.second_moment.data_mut();
            let value = Arc::make_mut(&mut p.value);
            for (((x, &gi), mi), vi) in value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_computation() {
        let mut store = ParameterStore::new();
        let id = store.add("w", Tensor::scalar(0.0));
        store.accumulate_grad(id, &Tensor::scalar(1.0)).unwrap();
        let cfg = AdamConfig::default();
        store.adam_step(&cfg).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr / (1 + ε)
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((store.value(id).item() - expected).abs() < 1e-18);
        assert!(store.grad(id).is_none());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParameterStore::new();
        let id = store.add("w", Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        store.accumulate_grad(id, &Tensor::zeros(1, 3)).unwrap();
        store.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(store.value(id).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut store = ParameterStore::new();
        let id = store.add("w", Tensor::from_vec(1, 2, vec![0.1, 0.3]).unwrap());
        let before = store.value(id).clone();
        store.accumulate_grad(id, &Tensor::from_vec(1, 2, vec![3.0, -7.0]).unwrap()).unwrap();
        store
            .adam_step(&AdamConfig {
                lr: 0.0,
                ..AdamConfig::default()
            })
            .unwrap();
        for (a, b) in store.value(id).data().iter().zip(before.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut store = ParameterStore::new();
        store.add("w", Tensor::scalar(1.0));
        assert!(matches!(
            store.adam_step(&AdamConfig::default()),
            Err(DiffError::MissingGradient(name)) if name == "w"
        ));
    }
}
