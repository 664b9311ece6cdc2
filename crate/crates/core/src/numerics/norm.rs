use super::tensor::Tensor;
use crate::error::{domain, Error, Result};

pub const DEFAULT_NORM_EPS: f64 = 1e-5;

/// Per-group mean and (biased) variance of a `[C, H, W]` tensor.
pub fn group_stats(input: &Tensor, groups: usize) -> Result<Vec<(f64, f64)>> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!("group_norm expects [C,H,W], got {:?}", input.shape())));
    }
    let c = input.shape()[0];
    if groups == 0 || !c.is_multiple_of(groups) {
        return domain(format!("{c} channels are not divisible into {groups} groups"));
    }
    let chunk = input.len() / groups;
    Ok(input
        .data()
        .chunks(chunk)
        .map(|g| {
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var)
        })
        .collect())
}

fn check_affine(c: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Result<()> {
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!("γ/β need {c} entries, got {}/{}", gamma.len(), beta.len())));
    }
    if !(eps > 0.0) {
        return domain(format!("normalisation epsilon must be positive, got {eps}"));
    }
    Ok(())
}

/// Standardise each channel group, then apply the per-channel affine `γ, β`.
pub fn group_norm(input: &Tensor, groups: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Tensor> {
    let stats = group_stats(input, groups)?;
    let c = input.shape()[0];
    check_affine(c, gamma, beta, eps)?;
    let plane = input.shape()[1] * input.shape()[2];
    let per_group = c / groups;
    let mut out = input.clone();
    for (ch, row) in out.data_mut().chunks_mut(plane).enumerate() {
        let (mean, var) = stats[ch / per_group];
        let inv = 1.0 / (var + eps).sqrt();
        for v in row {
            *v = (*v - mean) * inv * gamma[ch] + beta[ch];
        }
    }
    Ok(out)
}

/// The same normalisation folded into one multiply and one add per channel:
/// `y = x·scale_c + offset_c`.
pub fn group_norm_affine(input: &Tensor, groups: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<(f64, f64)>> {
    let stats = group_stats(input, groups)?;
    let c = input.shape()[0];
    check_affine(c, gamma, beta, eps)?;
    let per_group = c / groups;
    Ok((0..c)
        .map(|ch| {
            let (mean, var) = stats[ch / per_group];
            let scale = gamma[ch] / (var + eps).sqrt();
            (scale, beta[ch] - mean * scale)
        })
        .collect())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_tensor(t: &Tensor) -> Tensor {
    t.map(swish)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalises_to_zero() {
        let x = Tensor::filled(&[4, 2, 2], 3.0);
        let y = group_norm(&x, 2, &[1.0; 4], &[0.0; 4], DEFAULT_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn groups_are_standardised() {
        let x = Tensor::from_fn(&[4, 3, 3], |i| ((i * 7919) % 31) as f64 * 0.3 - 2.0);
        let y = group_norm(&x, 2, &[1.0; 4], &[0.0; 4], DEFAULT_NORM_EPS).unwrap();
        for g in group_stats(&y, 2).unwrap() {
            assert!(g.0.abs() < 1e-6);
            assert!((g.1 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn folded_affine_matches() {
        let x = Tensor::from_fn(&[4, 2, 3], |i| (i as f64 * 0.71).cos());
        let gamma = [1.0, 0.5, -2.0, 3.0];
        let beta = [0.1, -0.2, 0.0, 1.0];
        let y = group_norm(&x, 2, &gamma, &beta, 1e-5).unwrap();
        let aff = group_norm_affine(&x, 2, &gamma, &beta, 1e-5).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let (s, o) = aff[i / 6];
            assert!((x.data()[i] * s + o - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indivisible_groups_fail() {
        assert!(group_norm(&Tensor::zeros(&[3, 2, 2]), 2, &[1.0; 3], &[0.0; 3], 1e-5).is_err());
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(20.0) - 20.0).abs() < 1e-6);
        assert!((swish(1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
    }
}
