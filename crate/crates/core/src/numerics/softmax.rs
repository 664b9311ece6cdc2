//! Softmax, both naive and through the four log-sum-exp sub-operations the
//! ECU executes: running maximum, shift, `ln Σ exp`, and final `exp`.

use super::lut::Transcendentals;
use crate::error::{domain, Result};

fn check(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return domain("softmax of an empty vector");
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return domain("softmax logits must be finite");
    }
    Ok(())
}

/// Textbook `exp(γ_i) / Σ exp(γ_j)`; overflows for large logits.
pub fn softmax_naive(logits: &[f64]) -> Result<Vec<f64>> {
    check(logits)?;
    let exps: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Comparator stage: track the maximum as logits stream in.
pub fn lse_max(logits: &[f64]) -> f64 {
    logits.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Subtractor stage: `γ_j − γ_max`.
pub fn lse_shift(logits: &[f64], max: f64) -> Vec<f64> {
    logits.iter().map(|v| v - max).collect()
}

/// LUT stage: `ln Σ exp(γ_j − γ_max)`.
pub fn lse_ln_sum_exp(shifted: &[f64], tx: &Transcendentals) -> f64 {
    tx.ln(shifted.iter().map(|&v| tx.exp(v)).sum())
}

/// Final stage: subtract the log-sum and exponentiate.
pub fn lse_finish(shifted: &[f64], ln_sum: f64, tx: &Transcendentals) -> Vec<f64> {
    shifted.iter().map(|&v| tx.exp(v - ln_sum)).collect()
}

pub fn softmax_lse_with(logits: &[f64], tx: &Transcendentals) -> Result<Vec<f64>> {
    check(logits)?;
    let shifted = lse_shift(logits, lse_max(logits));
    let ln_sum = lse_ln_sum_exp(&shifted, tx);
    Ok(lse_finish(&shifted, ln_sum, tx))
}

pub fn softmax_lse(logits: &[f64]) -> Result<Vec<f64>> {
    softmax_lse_with(logits, &Transcendentals::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_pair() {
        let p = softmax_lse(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_logits_are_uniform() {
        let p = softmax_lse(&[2.5; 5]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn survives_overflowing_logits() {
        let big = softmax_lse(&[1000.0, 1000.5]).unwrap();
        let small = softmax_lse(&[0.0, 0.5]).unwrap();
        assert!(softmax_naive(&[1000.0, 1000.5]).unwrap().iter().any(|v| !v.is_finite()));
        for (a, b) in big.iter().zip(&small) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert!(softmax_lse(&[]).is_err());
        assert!(softmax_naive(&[]).is_err());
    }
}
