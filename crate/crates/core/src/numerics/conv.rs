//! Convolution kernels and their GEMM lowerings.
//!
//! Feature maps are `[C, H, W]`. Convolution kernels are `[C_out, C_in, k, k]`;
//! transposed-convolution kernels follow the gradient-of-conv convention
//! `[C_in, C_out, k, k]`.

use super::gemm::GemmOperands;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let full = (input - 1) * stride + kernel;
    if stride == 0 || 2 * padding >= full || padding >= kernel {
        return None;
    }
    Some(full - 2 * padding)
}

fn check_conv(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if input.shape().len() != 3 || kernel.shape().len() != 4 {
        return Err(Error::Shape(format!("conv2d expects [C,H,W] and [Co,Ci,k,k], got {:?} / {:?}", input.shape(), kernel.shape())));
    }
    let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (co, kci, kh, kw) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]);
    if kci != ci {
        return Err(Error::Shape(format!("kernel expects {kci} input channels, input has {ci}")));
    }
    if kh != kw {
        return Err(Error::Shape(format!("only square kernels are supported, got {kh}x{kw}")));
    }
    let ho = conv_output_extent(h, kh, stride, padding)
        .ok_or_else(|| Error::Shape(format!("kernel {kh} with stride {stride} does not fit {h}x{w}")))?;
    let wo = conv_output_extent(w, kw, stride, padding)
        .ok_or_else(|| Error::Shape(format!("kernel {kw} with stride {stride} does not fit {h}x{w}")))?;
    Ok((ci, co, kh, ho, wo, h))
}

/// Direct sliding-window cross-correlation.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (ci, co, k, ho, wo, _) = check_conv(input, kernel, stride, padding)?;
    let (h, w) = (input.shape()[1] as isize, input.shape()[2] as isize);
    let mut out = Tensor::zeros(&[co, ho, wo]);
    let kd = kernel.data();
    let od = out.data_mut();
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for c in 0..ci {
                    for a in 0..k {
                        let y = (oy * stride + a) as isize - padding as isize;
                        if y < 0 || y >= h {
                            continue;
                        }
                        for b in 0..k {
                            let x = (ox * stride + b) as isize - padding as isize;
                            if x < 0 || x >= w {
                                continue;
                            }
                            acc += kd[((o * ci + c) * k + a) * k + b] * input.at3(c, y as usize, x as usize);
                        }
                    }
                }
                od[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Flattened patches: `[C_in·k·k, H_out·W_out]`, padding positions are zero.
pub fn im2col(input: &Tensor, k: usize, stride: usize, padding: usize) -> Result<Tensor> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!("im2col expects [C,H,W], got {:?}", input.shape())));
    }
    let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ho = conv_output_extent(h, k, stride, padding).ok_or_else(|| Error::Shape("kernel larger than input".into()))?;
    let wo = conv_output_extent(w, k, stride, padding).ok_or_else(|| Error::Shape("kernel larger than input".into()))?;
    let cols = ho * wo;
    let mut out = Tensor::zeros(&[ci * k * k, cols]);
    let od = out.data_mut();
    for c in 0..ci {
        for a in 0..k {
            for b in 0..k {
                let row = (c * k + a) * k + b;
                for oy in 0..ho {
                    let y = (oy * stride + a) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let x = (ox * stride + b) as isize - padding as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        od[row * cols + oy * wo + ox] = input.at3(c, y as usize, x as usize);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// GEMM view of a convolution: kernel rows `[C_out, C_in·k·k]` against
/// flattened patches. Row `co·P + p` of the result is output element `(co, p)`.
pub fn conv_gemm_operands(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<GemmOperands> {
    let (ci, co, k, _, _, _) = check_conv(input, kernel, stride, padding)?;
    let left = kernel.clone().reshape(&[co, ci * k * k])?;
    let right = im2col(input, k, stride, padding)?;
    GemmOperands::dense(left, right)
}

/// Convolution through the im2col GEMM view.
pub fn conv2d_gemm(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (_, co, _, ho, wo, _) = check_conv(input, kernel, stride, padding)?;
    let ops = conv_gemm_operands(input, kernel, stride, padding)?;
    Tensor::new(vec![co, ho, wo], ops.evaluate())
}

/// Insert `stride − 1` zeros between neighbouring elements of every channel.
pub fn zero_insert(input: &Tensor, stride: usize) -> Result<Tensor> {
    if input.shape().len() != 3 || stride == 0 {
        return Err(Error::Domain(format!("zero_insert needs [C,H,W] and stride ≥ 1, got {:?} / {stride}", input.shape())));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (he, we) = ((h - 1) * stride + 1, (w - 1) * stride + 1);
    let mut out = Tensor::zeros(&[c, he, we]);
    let od = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                od[(ch * he + y * stride) * we + x * stride] = input.at3(ch, y, x);
            }
        }
    }
    Ok(out)
}

/// `[C_in, C_out, k, k]` → spatially flipped `[C_out, C_in, k, k]`.
pub fn flip_transpose_kernel(kernel: &Tensor) -> Result<Tensor> {
    if kernel.shape().len() != 4 {
        return Err(Error::Shape(format!("kernel must be rank 4, got {:?}", kernel.shape())));
    }
    let (ci, co, k, k2) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]);
    if k != k2 {
        return Err(Error::Shape("only square kernels are supported".into()));
    }
    let kd = kernel.data();
    Ok(Tensor::from_fn(&[co, ci, k, k], |idx| {
        let b = idx % k;
        let a = (idx / k) % k;
        let i = (idx / (k * k)) % ci;
        let o = idx / (k * k * ci);
        kd[((i * co + o) * k + (k - 1 - a)) * k + (k - 1 - b)]
    }))
}

fn check_transpose(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<(usize, usize, usize, usize, usize)> {
    if input.shape().len() != 3 || kernel.shape().len() != 4 {
        return Err(Error::Shape(format!("conv_transpose2d expects [C,H,W] and [Ci,Co,k,k], got {:?} / {:?}", input.shape(), kernel.shape())));
    }
    if stride == 0 {
        return Err(Error::Domain("stride must be at least 1".into()));
    }
    let ci = input.shape()[0];
    if kernel.shape()[0] != ci {
        return Err(Error::Shape(format!("kernel expects {} input channels, input has {ci}", kernel.shape()[0])));
    }
    let (co, k) = (kernel.shape()[1], kernel.shape()[2]);
    let ho = conv_transpose_output_extent(input.shape()[1], k, stride, padding)
        .ok_or_else(|| Error::Shape(format!("padding {padding} too large for kernel {k}")))?;
    let wo = conv_transpose_output_extent(input.shape()[2], k, stride, padding)
        .ok_or_else(|| Error::Shape(format!("padding {padding} too large for kernel {k}")))?;
    Ok((ci, co, k, ho, wo))
}

/// Transposed convolution: zero-insert, pad by `k − 1 − padding`, then
/// cross-correlate with the flipped kernel.
pub fn conv_transpose2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (_, _, k, _, _) = check_transpose(input, kernel, stride, padding)?;
    let expanded = zero_insert(input, stride)?;
    conv2d(&expanded, &flip_transpose_kernel(kernel)?, 1, k - 1 - padding)
}

/// Dense GEMM operands of a transposed convolution (inserted zeros included).
pub fn conv_transpose_dense_operands(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<GemmOperands> {
    let (_, _, k, _, _) = check_transpose(input, kernel, stride, padding)?;
    let expanded = zero_insert(input, stride)?;
    conv_gemm_operands(&expanded, &flip_transpose_kernel(kernel)?, 1, k - 1 - padding)
}

/// Which taps of each output position's patch land on real input elements or
/// on border padding; taps that hit an inserted zero are absent.
///
/// The pattern depends only on geometry, never on data.
#[derive(Debug, Clone, PartialEq)]
pub struct TransposeConvPattern {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// For each output position: `(tap_a, tap_b, source)` where `source` is the
    /// input coordinate or `None` for a padding tap.
    pub taps: Vec<Vec<(usize, usize, Option<(usize, usize)>)>>,
}

impl TransposeConvPattern {
    pub fn new(in_shape: [usize; 3], out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        let [ci, h, w] = in_shape;
        if stride == 0 {
            return Err(Error::Domain("stride must be at least 1".into()));
        }
        let ho = conv_transpose_output_extent(h, kernel, stride, padding)
            .ok_or_else(|| Error::Shape(format!("padding {padding} too large for kernel {kernel}")))?;
        let wo = conv_transpose_output_extent(w, kernel, stride, padding)
            .ok_or_else(|| Error::Shape(format!("padding {padding} too large for kernel {kernel}")))?;
        let (he, we) = ((h - 1) * stride + 1, (w - 1) * stride + 1);
        let pad = (kernel - 1 - padding) as isize;
        let mut taps = Vec::with_capacity(ho * wo);
        for oy in 0..ho {
            for ox in 0..wo {
                let mut kept = Vec::new();
                for a in 0..kernel {
                    let ey = oy as isize + a as isize - pad;
                    for b in 0..kernel {
                        let ex = ox as isize + b as isize - pad;
                        let inside = ey >= 0 && ey < he as isize && ex >= 0 && ex < we as isize;
                        if !inside {
                            kept.push((a, b, None));
                        } else if (ey as usize).is_multiple_of(stride) && (ex as usize).is_multiple_of(stride) {
                            kept.push((a, b, Some((ey as usize / stride, ex as usize / stride))));
                        }
                    }
                }
                taps.push(kept);
            }
        }
        Ok(Self { in_channels: ci, out_channels, kernel, out_h: ho, out_w: wo, taps })
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Reduced dot-product length of output element `(co, p)` (same for every `co`).
    pub fn row_len(&self, position: usize) -> usize {
        self.in_channels * self.taps[position].len()
    }

    pub fn dense_macs(&self) -> u64 {
        (self.out_channels * self.positions() * self.in_channels * self.kernel * self.kernel) as u64
    }

    pub fn reduced_macs(&self) -> u64 {
        let per_co: usize = (0..self.positions()).map(|p| self.row_len(p)).sum();
        (self.out_channels * per_co) as u64
    }
}

/// Reduced operands of a zero-eliminated transposed convolution.
#[derive(Debug, Clone)]
pub struct SparseLowering {
    pub operands: GemmOperands,
    pub out_shape: [usize; 3],
    pub dense_macs: u64,
    pub eliminated_macs: u64,
}

/// Drop every patch entry that comes from an inserted zero, together with the
/// matching flattened-kernel element. Rows are ordered like the output tensor.
pub fn sparse_transpose_conv_lowering(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<SparseLowering> {
    let (ci, co, k, ho, wo) = check_transpose(input, kernel, stride, padding)?;
    let pattern = TransposeConvPattern::new(
        [ci, input.shape()[1], input.shape()[2]],
        co,
        k,
        stride,
        padding,
    )?;
    let flipped = flip_transpose_kernel(kernel)?;
    let fd = flipped.data();
    let positions = pattern.positions();
    let mut offsets = Vec::with_capacity(co * positions + 1);
    let total = pattern.reduced_macs() as usize;
    let mut left = Vec::with_capacity(total);
    let mut right = Vec::with_capacity(total);
    offsets.push(0);
    for o in 0..co {
        for taps in &pattern.taps {
            for c in 0..ci {
                for &(a, b, src) in taps {
                    left.push(fd[((o * ci + c) * k + a) * k + b]);
                    right.push(match src {
                        Some((y, x)) => input.at3(c, y, x),
                        None => 0.0,
                    });
                }
            }
            offsets.push(left.len());
        }
    }
    let dense = pattern.dense_macs();
    Ok(SparseLowering {
        operands: GemmOperands::Sparse { offsets, left, right },
        out_shape: [co, ho, wo],
        dense_macs: dense,
        eliminated_macs: dense - total as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut s = 3;
        let x = Tensor::from_fn(&[1, 4, 5], |_| lcg(&mut s));
        let k = Tensor::filled(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn ones_window_sums_to_nine() {
        let x = Tensor::filled(&[1, 5, 5], 1.0);
        let k = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn gemm_view_matches_sliding_window() {
        let mut s = 11;
        for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
            let x = Tensor::from_fn(&[2, 4, 4], |_| lcg(&mut s));
            let k = Tensor::from_fn(&[3, 2, 3, 3], |_| lcg(&mut s));
            let a = conv2d(&x, &k, stride, pad).unwrap();
            let b = conv2d_gemm(&x, &k, stride, pad).unwrap();
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_insertion_layout() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let e = zero_insert(&x, 2).unwrap();
        assert_eq!(e.shape(), &[1, 3, 3]);
        assert_eq!(e.data(), &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 4.0]);
    }

    #[test]
    fn stride_one_transpose_has_nothing_to_eliminate() {
        let mut s = 5;
        let x = Tensor::from_fn(&[2, 3, 3], |_| lcg(&mut s));
        let k = Tensor::from_fn(&[2, 2, 3, 3], |_| lcg(&mut s));
        let low = sparse_transpose_conv_lowering(&x, &k, 1, 0).unwrap();
        assert_eq!(low.eliminated_macs, 0);
        let dense = conv_transpose_dense_operands(&x, &k, 1, 0).unwrap();
        assert_eq!(low.operands.evaluate(), dense.evaluate());
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[2, 3, 3]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&x, &k, 1, 0).is_err());
        let big = Tensor::zeros(&[1, 2, 5, 5]);
        assert!(conv2d(&x, &big, 1, 0).is_err());
        assert!(conv_transpose2d(&x, &Tensor::zeros(&[2, 1, 3, 3]), 0, 0).is_err());
    }
}
