use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Plain gradient descent: `p <- p - lr * grad(p)`, then zero the gradients.
pub fn sgd_step<T: Real>(params: &mut [Tensor<T>], lr: T) -> Result<()> {
    Sgd::new(lr.as_f64()).step(params)
}

/// Stochastic gradient descent with optional heavy-ball momentum and
/// global gradient-norm clipping (both off by default).
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Gradients whose joint L2 norm exceeds this are rescaled to it.
    pub clip_norm: Option<f64>,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            momentum: 0.0,
            clip_norm: None,
            velocity: Vec::new(),
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_clip_norm(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    /// Joint L2 norm of every parameter gradient.
    pub fn grad_norm<T: Real>(params: &[Tensor<T>]) -> f64 {
        params
            .iter()
            .filter_map(|p| p.grad())
            .flat_map(|g| g.iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn step<T: Real>(&mut self, params: &mut [Tensor<T>]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::Contract(format!("parameter {i} has no gradient")));
        }
        if self.momentum != 0.0 && self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = Self::grad_norm(params);
                if norm > c { c / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let lr = self.lr;
        for (idx, p) in params.iter_mut().enumerate() {
            let mut grad: Vec<T> = p.grad().expect("checked above").to_vec();
            if scale != 1.0 {
                grad.iter_mut().for_each(|g| *g = T::from_f64_lossy(g.as_f64() * scale));
            }
            if self.momentum != 0.0 {
                let v = &mut self.velocity[idx];
                for ((w, &g), vel) in p.data_mut().iter_mut().zip(&grad).zip(v.iter_mut()) {
                    *vel = self.momentum * *vel + g.as_f64();
                    *w = T::from_f64_lossy(w.as_f64() - lr * *vel);
                }
            } else {
                let lr_t = T::from_f64_lossy(lr);
                for (w, &g) in p.data_mut().iter_mut().zip(&grad) {
                    *w -= lr_t * g;
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}
