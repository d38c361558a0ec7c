use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor;

/// Stochastic gradient descent with heavy-ball momentum.
///
/// `v ← momentum · v + grad`, then `p ← p − lr · v`. Velocity buffers are
/// created lazily on the first step and persist across calls.
#[derive(Debug, Clone)]
pub struct Sgd<T: Real = f32> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: T, momentum: T) -> Result<Self> {
        if !(lr >= T::zero()) || !lr.is_finite() {
            return Err(TensorError::usage("sgd", "learning rate must be finite and non-negative"));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(TensorError::usage("sgd", "momentum must lie in [0, 1)"));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = store.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        }
        if self.velocity.len() != store.len() {
            return Err(TensorError::dim("sgd", "parameter count", self.velocity.len(), store.len()));
        }
        let (lr, momentum) = (self.lr, self.momentum);
        for (p, v) in store.iter_mut().zip(&mut self.velocity) {
            if v.shape() != p.grad.shape() {
                return Err(TensorError::usage("sgd", format!("velocity shape mismatch for {:?}", p.name)));
            }
            for ((w, &g), vel) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(v.data_mut()) {
                *vel = momentum * *vel + g;
                *w -= lr * *vel;
            }
        }
        Ok(())
    }
}
