//! Software reference kernels. Everything the accelerator computes has a
//! plain implementation here that the scheduler replay is checked against.

pub mod attention;
pub mod conv;
pub mod diffusion;
pub mod gemm;
pub mod lut;
pub mod norm;
pub mod quant;
pub mod softmax;
pub mod tensor;

pub use attention::{attention_head, attention_head_decomposed, multi_head_attention, AttentionSpec, MultiHeadSpec};
pub use conv::{conv2d, conv2d_gemm, conv_transpose2d, im2col, sparse_transpose_conv_lowering, zero_insert, SparseLowering, TransposeConvPattern};
pub use diffusion::{forward_diffusion_step, reverse_diffusion_step, DiffusionParams};
pub use gemm::GemmOperands;
pub use lut::{Lut, Transcendentals};
pub use norm::{group_norm, swish, swish_tensor, DEFAULT_NORM_EPS};
pub use quant::{dequantize, quantize_w8a8, QuantScheme, Quantized};
pub use softmax::{softmax_lse, softmax_naive};
pub use tensor::{matmul, max_rel_error, Tensor};
