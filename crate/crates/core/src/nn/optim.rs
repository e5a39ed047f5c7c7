use super::tensor::{Scalar, Tensor};
use crate::error::{AtrError, Result};

/// RMSProp: `E <- rho E + (1 - rho) g^2`, `theta <- theta - lr g / (sqrt(E) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rmsprop<T: Scalar = f32> {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    mean_square: Vec<Vec<T>>,
}

impl<T: Scalar> Rmsprop<T> {
    pub fn new(learning_rate: f64, params: &[Tensor<T>]) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(AtrError::InvalidParameter(format!("learning rate must be positive, got {learning_rate}")));
        }
        Ok(Self {
            learning_rate,
            decay: 0.9,
            epsilon: 1e-8,
            mean_square: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        })
    }

    pub fn mean_square(&self) -> &[Vec<T>] {
        &self.mean_square
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.mean_square.len() || grads.len() != params.len() {
            return Err(AtrError::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.mean_square.len(),
                params.len(),
                grads.len()
            )));
        }
        let rho = T::of(self.decay);
        let one_minus = T::of(1.0 - self.decay);
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        for ((p, g), e) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
            if p.dims() != g.dims() || e.len() != p.len() {
                return Err(AtrError::Shape(format!("parameter {:?} vs gradient {:?}", p.dims(), g.dims())));
            }
            for ((theta, &gv), ev) in p.data_mut().iter_mut().zip(g.data()).zip(e.iter_mut()) {
                *ev = rho * *ev + one_minus * gv * gv;
                *theta -= lr * gv / (ev.sqrt() + eps);
            }
        }
        Ok(())
    }
}
