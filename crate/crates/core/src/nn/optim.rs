use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `v <- mu v - lr g; p <- p + v`
    SgdMomentum { momentum: f64 },
    /// `s <- rho s + (1 - rho) g^2; p <- p - lr g / (sqrt(s) + eps)`
    RmsProp { decay: f64, epsilon: f64 },
}

/// Optimizer hyperparameters plus one buffer per parameter tensor, in the
/// order parameters are presented to [`OptimizerState::step`].
#[derive(Debug, Clone)]
pub struct OptimizerState<T: Scalar = f32> {
    kind: OptimizerKind,
    lr: f64,
    buffers: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            buffers: Vec::new(),
        })
    }

    pub fn sgd(lr: f64, momentum: f64) -> Result<Self> {
        Self::new(OptimizerKind::SgdMomentum { momentum }, lr)
    }

    pub fn rmsprop(lr: f64, decay: f64, epsilon: f64) -> Result<Self> {
        Self::new(OptimizerKind::RmsProp { decay, epsilon }, lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        self.lr = lr;
        Ok(())
    }

    pub fn buffers(&self) -> &[Vec<T>] {
        &self.buffers
    }

    /// Applies one update using each parameter's gradient buffer. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor<T>)]) -> Result<()> {
        if let Some((name, _)) = params.iter().find(|(_, p)| p.grad().iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        } else if self.buffers.len() != params.len()
            || self.buffers.iter().zip(params.iter()).any(|(b, (_, p))| b.len() != p.len())
        {
            return Err(Error::InvalidArgument(
                "optimizer buffers do not mirror the parameter list".into(),
            ));
        }
        let lr = T::of(self.lr);
        for (buf, (_, param)) in self.buffers.iter_mut().zip(params.iter_mut()) {
            let (data, grad) = param.data_and_grad_mut();
            match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    let mu = T::of(momentum);
                    for ((p, &g), v) in data.iter_mut().zip(grad.iter()).zip(buf.iter_mut()) {
                        *v = mu * *v - lr * g;
                        *p = *p + *v;
                    }
                }
                OptimizerKind::RmsProp { decay, epsilon } => {
                    let (rho, eps) = (T::of(decay), T::of(epsilon));
                    for ((p, &g), s) in data.iter_mut().zip(grad.iter()).zip(buf.iter_mut()) {
                        *s = rho * *s + (T::one() - rho) * g * g;
                        *p = *p - lr * g / (s.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
