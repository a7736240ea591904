use ragbind_autograd::Mat;

use super::{grad_norm, ParamStore};

/// Adam with optional global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Mat]) {
        assert_eq!(grads.len(), store.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Mat::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let n = grad_norm(grads);
                if n > c { c / n } else { 1.0 }
            }
            None => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in store.values_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let p = p.data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i] * scale;
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = m.data()[i] / bc1;
                let vh = v.data()[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
