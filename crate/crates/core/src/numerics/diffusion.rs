use serde::{Deserialize, Serialize};

use super::tensor::{ensure_same_shape, Tensor};
use crate::error::{domain, Result};

/// Noise schedule of a `T`-step diffusion process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl DiffusionParams {
    pub fn new(betas: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.len() != sigmas.len() {
            return domain(format!("schedules need equal non-zero length, got {} and {}", betas.len(), sigmas.len()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return domain(format!("β values must lie in (0, 1), found {b}"));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return domain(format!("σ values must be non-negative, found {s}"));
        }
        Ok(Self { betas, sigmas })
    }

    /// Linear β schedule with `σ_t = √β_t`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        let betas: Vec<f64> = (0..steps)
            .map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let sigmas = betas.iter().map(|b| b.sqrt()).collect();
        Self::new(betas, sigmas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }
}

/// `√(1−β_t)·x_prev + √β_t·ε`
pub fn forward_diffusion_step(x_prev: &Tensor, beta: f64, eps: &Tensor) -> Result<Tensor> {
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!("β must lie in (0, 1), got {beta}"));
    }
    let (a, b) = ((1.0 - beta).sqrt(), beta.sqrt());
    x_prev.zip_with(eps, |x, e| a * x + b * e)
}

/// `μ_θ + σ_t·z`
pub fn reverse_diffusion_step(x_t: &Tensor, mu: &Tensor, sigma: f64, z: &Tensor) -> Result<Tensor> {
    ensure_same_shape(x_t, mu)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return domain(format!("σ must be non-negative, got {sigma}"));
    }
    mu.zip_with(z, |m, n| m + sigma * n)
}
