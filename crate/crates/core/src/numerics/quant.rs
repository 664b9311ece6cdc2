use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub weight_bits: u32,
    pub activation_bits: u32,
    /// One scale per leading-axis slice instead of one per tensor.
    pub per_channel: bool,
}

impl Default for QuantScheme {
    fn default() -> Self {
        Self { weight_bits: 8, activation_bits: 8, per_channel: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub shape: Vec<usize>,
    pub codes: Vec<i8>,
    pub scales: Vec<f64>,
}

/// Symmetric 8-bit quantization with `scale = max|t| / 127`.
pub fn quantize_w8a8(t: &Tensor, scheme: &QuantScheme) -> Result<Quantized> {
    if t.is_empty() {
        return Err(Error::Empty("cannot quantize an empty tensor".into()));
    }
    let groups = if scheme.per_channel { t.shape()[0] } else { 1 };
    let chunk = t.len() / groups;
    let mut codes = Vec::with_capacity(t.len());
    let mut scales = Vec::with_capacity(groups);
    for slice in t.data().chunks(chunk) {
        let max = slice.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = max / 127.0;
        scales.push(scale);
        codes.extend(slice.iter().map(|&v| {
            if scale == 0.0 {
                0
            } else {
                (v / scale).round().clamp(-128.0, 127.0) as i8
            }
        }));
    }
    Ok(Quantized { shape: t.shape().to_vec(), codes, scales })
}

pub fn dequantize(q: &Quantized) -> Result<Tensor> {
    let chunk = q.codes.len() / q.scales.len();
    let data = q.codes.iter().enumerate().map(|(i, &c)| c as f64 * q.scales[i / chunk]).collect();
    Tensor::new(q.shape.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tensor_round_trips() {
        let t = Tensor::zeros(&[3, 2]);
        let q = quantize_w8a8(&t, &QuantScheme::default()).unwrap();
        assert_eq!(q.scales, vec![0.0]);
        assert!(q.codes.iter().all(|&c| c == 0));
        assert_eq!(dequantize(&q).unwrap(), t);
    }

    #[test]
    fn lattice_points_are_exact() {
        let t = Tensor::new(vec![2], vec![-127.0, 127.0]).unwrap();
        let q = quantize_w8a8(&t, &QuantScheme::default()).unwrap();
        assert_eq!(q.scales, vec![1.0]);
        assert_eq!(q.codes, vec![-127, 127]);
        assert_eq!(dequantize(&q).unwrap(), t);
    }

    #[test]
    fn per_channel_keeps_one_scale_per_slice() {
        let t = Tensor::new(vec![2, 2], vec![1.0, -1.0, 100.0, 50.0]).unwrap();
        let scheme = QuantScheme { per_channel: true, ..QuantScheme::default() };
        let q = quantize_w8a8(&t, &scheme).unwrap();
        assert_eq!(q.scales.len(), 2);
        assert_eq!(q.codes[..2], [127, -127]);
    }
}
