//! Random-weight instantiation of a workload and its direct reference
//! execution, used as the oracle for schedule replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::attention::{multi_head_attention, AttentionSpec, MultiHeadSpec};
use crate::numerics::conv::{conv2d, conv_transpose2d};
use crate::numerics::diffusion::{reverse_diffusion_step, DiffusionParams};
use crate::numerics::norm::{group_norm, swish_tensor, DEFAULT_NORM_EPS};
use crate::numerics::tensor::{matmul, Tensor};
use crate::workload::{LayerKind, SkipMode, WorkloadGraph};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    None,
    /// `[C_out, C_in, k, k]`
    Conv(Tensor),
    /// `[C_in, C_out, k, k]`
    ConvTranspose(Tensor),
    Norm { gamma: Vec<f64>, beta: Vec<f64> },
    Attention(MultiHeadSpec),
    /// `[C_in, C_out]`
    Linear(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0) * scale)
}

impl ModelWeights {
    /// Uniform weights scaled by `1/√fan_in`.
    pub fn random(graph: &WorkloadGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = graph
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv { in_channels, out_channels, kernel, .. } => {
                    let s = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
                    LayerWeights::Conv(uniform(&mut rng, &[out_channels, in_channels, kernel, kernel], s))
                }
                LayerKind::ConvTranspose { in_channels, out_channels, kernel, .. } => {
                    let s = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
                    LayerWeights::ConvTranspose(uniform(&mut rng, &[in_channels, out_channels, kernel, kernel], s))
                }
                LayerKind::GroupNorm { channels, .. } => LayerWeights::Norm {
                    gamma: (0..channels).map(|_| 1.0 + 0.1 * rng.gen_range(-1.0..1.0)).collect(),
                    beta: (0..channels).map(|_| 0.1 * rng.gen_range(-1.0..1.0)).collect(),
                },
                LayerKind::Attention { channels, heads, d_k } => {
                    let s = 1.0 / (channels as f64).sqrt();
                    let d_v = channels / heads;
                    let specs = (0..heads)
                        .map(|_| {
                            AttentionSpec::new(
                                uniform(&mut rng, &[channels, d_k], s),
                                uniform(&mut rng, &[channels, d_k], s),
                                uniform(&mut rng, &[channels, d_v], s),
                            )
                            .expect("shapes are consistent by construction")
                        })
                        .collect();
                    let w_o = uniform(&mut rng, &[channels, channels], s);
                    LayerWeights::Attention(MultiHeadSpec::new(specs, w_o).expect("shapes are consistent by construction"))
                }
                LayerKind::Linear { in_channels, out_channels } => {
                    let s = 1.0 / (in_channels as f64).sqrt();
                    LayerWeights::Linear(uniform(&mut rng, &[in_channels, out_channels], s))
                }
                LayerKind::Swish | LayerKind::ResidualAdd { .. } => LayerWeights::None,
            })
            .collect();
        Self { layers }
    }
}

/// `[C, H, W]` feature map as a `[H·W, C]` token matrix.
pub fn tokens(fm: &Tensor) -> Result<Tensor> {
    let s = fm.shape();
    fm.clone().reshape(&[s[0], s[1] * s[2]])?.transpose()
}

fn mismatch(i: usize) -> Error {
    Error::Shape(format!("weights for layer {i} do not match its kind"))
}

/// Concatenate two feature maps along channels.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa[1..] != sb[1..] {
        return Err(Error::Shape(format!("cannot concatenate {sa:?} and {sb:?}")));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![sa[0] + sb[0], sa[1], sa[2]], data)
}

/// Output of layer `i` given its input and all earlier outputs.
pub fn layer_forward(graph: &WorkloadGraph, weights: &ModelWeights, i: usize, x: &Tensor, earlier: &[Tensor]) -> Result<Tensor> {
    let out_shape = graph.layer_output(i);
    match (&graph.layers[i].kind, &weights.layers[i]) {
        (LayerKind::Conv { stride, padding, .. }, LayerWeights::Conv(k)) => conv2d(x, k, *stride, *padding),
        (LayerKind::ConvTranspose { stride, padding, .. }, LayerWeights::ConvTranspose(k)) => {
            conv_transpose2d(x, k, *stride, *padding)
        }
        (LayerKind::GroupNorm { groups, bypass, .. }, LayerWeights::Norm { gamma, beta }) => {
            if *bypass {
                Ok(x.clone())
            } else {
                group_norm(x, *groups, gamma, beta, DEFAULT_NORM_EPS)
            }
        }
        (LayerKind::Swish, _) => Ok(swish_tensor(x)),
        (LayerKind::Attention { .. }, LayerWeights::Attention(spec)) => {
            let y = multi_head_attention(&tokens(x)?, spec, false)?;
            let y = y.transpose()?.reshape(x.shape())?;
            y.zip_with(x, |a, b| a + b)
        }
        (LayerKind::Linear { .. }, LayerWeights::Linear(w)) => {
            let s = x.shape();
            let fm = x.clone().reshape(&[s[0], s[1] * s[2]])?;
            matmul(&w.transpose()?, &fm)?.reshape(&out_shape.dims())
        }
        (LayerKind::ResidualAdd { skip_from, mode }, _) => match mode {
            SkipMode::Add => x.zip_with(&earlier[*skip_from], |a, b| a + b),
            SkipMode::Concat => concat_channels(x, &earlier[*skip_from]),
        },
        _ => Err(mismatch(i)),
    }
}

/// One denoiser evaluation `μ_θ(x)`.
pub fn forward(graph: &WorkloadGraph, weights: &ModelWeights, x: &Tensor) -> Result<Tensor> {
    if x.shape() != graph.input.dims() {
        return Err(Error::Shape(format!("input {:?} does not match workload input {}", x.shape(), graph.input)));
    }
    let mut outs: Vec<Tensor> = Vec::with_capacity(graph.layers.len());
    for i in 0..graph.layers.len() {
        let input = outs.last().unwrap_or(x);
        let y = layer_forward(graph, weights, i, input, &outs)?;
        outs.push(y);
    }
    Ok(outs.pop().unwrap())
}

/// Schedule and noise draws of a reverse process over `T` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseInputs {
    pub x_t: Tensor,
    pub params: DiffusionParams,
    /// `z` for each reverse step, in execution order.
    pub noise: Vec<Tensor>,
}

impl ReverseInputs {
    /// Gaussian `x_T` and `z` draws with a linear β schedule.
    pub fn sample(graph: &WorkloadGraph, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = graph.input.dims();
        let normal = |rng: &mut ChaCha8Rng| Tensor::from_fn(&dims, |_| rng.sample::<f64, _>(StandardNormal));
        let x_t = normal(&mut rng);
        let noise = (0..graph.timesteps).map(|_| normal(&mut rng)).collect();
        let params = DiffusionParams::linear(graph.timesteps, 1e-4, 0.02)?;
        Ok(Self { x_t, params, noise })
    }

    /// `σ` of reverse step `step` (which denoises timestep `T − 1 − step`).
    pub fn sigma(&self, step: usize) -> f64 {
        self.params.sigmas[self.params.steps() - 1 - step]
    }
}

/// `x_{t−1} = μ_θ(x_t) + σ_t·z` for `t = T … 1`.
pub fn reverse_process(graph: &WorkloadGraph, weights: &ModelWeights, inputs: &ReverseInputs) -> Result<Tensor> {
    if graph.output() != graph.input {
        return Err(Error::Shape(format!(
            "the denoiser must preserve shape, maps {} to {}",
            graph.input,
            graph.output()
        )));
    }
    if inputs.params.steps() != graph.timesteps || inputs.noise.len() != graph.timesteps {
        return Err(Error::Shape("noise schedule does not match the workload's timesteps".into()));
    }
    let mut x = inputs.x_t.clone();
    for step in 0..graph.timesteps {
        let mu = forward(graph, weights, &x)?;
        x = reverse_diffusion_step(&x, &mu, inputs.sigma(step), &inputs.noise[step])?;
    }
    Ok(x)
}
