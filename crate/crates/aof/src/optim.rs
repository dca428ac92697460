//! Adam optimizer over ndarray tensors, shared by classifier training and
//! the attack loops.

use ndarray::{Array, Dimension};

/// Standard Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<D: Dimension> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Array<f64, D>,
    v: Array<f64, D>,
    t: i32,
}

impl<D: Dimension> Adam<D> {
    pub fn new(lr: f64, shape: D) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Array::zeros(shape.clone()),
            v: Array::zeros(shape),
            t: 0,
        }
    }

    pub fn step(&mut self, param: &mut Array<f64, D>, grad: &Array<f64, D>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        ndarray::Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            });
    }
}
