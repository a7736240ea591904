//! Value-level loss formulas. The training graph mirrors these exactly.

use crate::{Error, Result};

use super::{GraphEmbedding, LatentBlock};

/// `KL(N(mu, diag sigma^2) || N(prior_mean, I))`.
pub fn gaussian_kl(mu: &[f64], sigma: &[f64], prior_mean: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .zip(prior_mean)
        .map(|((m, s), p)| 0.5 * (s * s + (m - p).powi(2) - 1.0 - (s * s).ln()))
        .sum()
}

/// Weighted scalar plus coordinate KL against `N(0, I)` and `N(center, I)`.
pub fn kl_loss(lb: &LatentBlock, center: [f64; 3], lambda1: f64, lambda2: f64) -> f64 {
    let zeros = vec![0.0; lb.mu.len()];
    lambda1 * gaussian_kl(&lb.mu, &lb.sigma, &zeros) + lambda2 * gaussian_kl(&lb.mu_vec, &lb.sigma_vec, &center)
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Per-pair terms `(-log softmax_q <k_p, v_q>/tau, -log softmax_q <v_p, k_q>/tau)`.
pub fn contrastive_terms(keys: &[GraphEmbedding], values: &[GraphEmbedding], tau: f64) -> Result<Vec<(f64, f64)>> {
    if keys.len() != values.len() {
        return Err(Error::LengthMismatch(format!("{} keys vs {} values", keys.len(), values.len())));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n = keys.len();
    Ok((0..n)
        .map(|p| {
            let kv: Vec<f64> = (0..n).map(|q| dot(&keys[p].vec, &values[q].vec) / tau).collect();
            let vk: Vec<f64> = (0..n).map(|q| dot(&values[p].vec, &keys[q].vec) / tau).collect();
            (-log_softmax(&kv)[p], -log_softmax(&vk)[p])
        })
        .collect())
}

/// Two-sided InfoNCE over a batch of key/value pairs with raw inner products.
pub fn contrastive_loss(keys: &[GraphEmbedding], values: &[GraphEmbedding], tau: f64) -> Result<f64> {
    let terms = contrastive_terms(keys, values, tau)?;
    if terms.is_empty() {
        return Ok(0.0);
    }
    Ok(terms.iter().map(|(a, b)| a + b).sum::<f64>() / terms.len() as f64)
}

/// Mean cross-entropy of type logits and mean squared field error.
pub fn recon_loss(
    pred_type_logits: &[Vec<f64>],
    true_type: &[usize],
    pred_field: &[[f64; 3]],
    true_field: &[[f64; 3]],
) -> Result<(f64, f64)> {
    if pred_type_logits.len() != true_type.len() || pred_field.len() != true_field.len() {
        return Err(Error::LengthMismatch("recon_loss inputs".into()));
    }
    let ce = if true_type.is_empty() {
        0.0
    } else {
        pred_type_logits
            .iter()
            .zip(true_type)
            .map(|(l, &t)| -log_softmax(l)[t])
            .sum::<f64>()
            / true_type.len() as f64
    };
    let mse = if pred_field.is_empty() {
        0.0
    } else {
        pred_field
            .iter()
            .zip(true_field)
            .map(|(p, t)| (0..3).map(|c| (p[c] - t[c]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (3 * pred_field.len()) as f64
    };
    Ok((ce, mse))
}
