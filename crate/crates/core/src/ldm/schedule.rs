use ragbind_autograd::Mat;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discrete noise levels for `t = 1..=T`; index `t - 1` in the arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

pub const BETA_MAX: f64 = 0.999;

/// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
/// `f(t) = cos²(((t/T + s) / (1 + s)) · π/2)`; betas clipped to 0.999 and
/// `alpha_bar` recomposed from them.
pub fn cosine_schedule(steps: usize, s: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one step".into()));
    }
    let f = |t: f64| (((t / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let mut beta = Vec::with_capacity(steps);
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for t in 1..=steps {
        let b = (1.0 - f(t as f64) / f(t as f64 - 1.0)).clamp(0.0, BETA_MAX);
        prod *= 1.0 - b;
        beta.push(b);
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule { steps, beta, alpha_bar })
}

impl NoiseSchedule {
    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::InvalidArgument(format!("timestep {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// `sqrt(ᾱ_t) u0 + sqrt(1 - ᾱ_t) eps`.
    pub fn forward_sample(&self, u0: &Mat, t: usize, eps: &Mat) -> Result<Mat> {
        self.check(t)?;
        if u0.shape() != eps.shape() {
            let (expected, got) = (u0.cols(), eps.cols());
            return Err(Error::DimMismatch { expected, got });
        }
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(u0.zip_map(eps, |x, e| a * x + b * e))
    }

    /// Posterior mean `(u_t - β_t / sqrt(1 - ᾱ_t) · eps) / sqrt(α_t)`.
    pub fn reverse_mean(&self, ut: &Mat, t: usize, eps: &Mat) -> Result<Mat> {
        self.check(t)?;
        let c = self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt();
        let inv = 1.0 / self.alpha(t).sqrt();
        Ok(ut.zip_map(eps, |u, e| (u - c * e) * inv))
    }
}
