use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{ParamGrads, ParamStore, Tensor};

/// Heavy-ball SGD: `v ← μ·v + g`, `θ ← θ − η·v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T> {
    lr: T,
    momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(store: &ParamStore<T>, lr: T, momentum: T) -> Result<Self> {
        if !(lr >= T::zero()) || !lr.is_finite() {
            return Err(Error::Parameter(format!("learning rate must be nonnegative, got {lr}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::Parameter(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(SgdMomentum {
            lr,
            momentum,
            velocity: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        })
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    /// Applies one update. Non-finite gradients abort before any parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &ParamGrads<T>) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return Err(Error::Shape("gradient layout differs from optimizer state".into()));
        }
        if !grads.all_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        for (id, vel) in store.ids().zip(self.velocity.iter_mut()) {
            let g = grads.get(id);
            let p = store.get_mut(id);
            for ((v, &gv), w) in vel.data_mut().iter_mut().zip(g.data()).zip(p.data_mut()) {
                *v = self.momentum * *v + gv;
                *w -= self.lr * *v;
            }
        }
        Ok(())
    }
}

/// One stateless-call form of [`SgdMomentum::step`] over explicit velocity buffers.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [T],
    velocity: &mut [T],
    grads: &[T],
    lr: T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape("parameter, velocity and gradient lengths differ".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    for ((w, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}
