use super::{BlockTag, LayerKind, LayerSpec, Shape3, SkipMode, WorkloadGraph};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 3] = ["ddpm-toy", "ldm-toy", "sdm-toy"];

const TIMESTEPS: usize = 10;
const IMAGE: Shape3 = Shape3::new(3, 16, 16);

fn conv(ci: usize, co: usize, k: usize, s: usize, p: usize) -> LayerKind {
    LayerKind::Conv { in_channels: ci, out_channels: co, kernel: k, stride: s, padding: p }
}

fn up(ci: usize, co: usize) -> LayerKind {
    LayerKind::ConvTranspose { in_channels: ci, out_channels: co, kernel: 4, stride: 2, padding: 1 }
}

fn norm(c: usize) -> LayerKind {
    LayerKind::GroupNorm { channels: c, groups: 4, bypass: false }
}

fn attn(c: usize) -> LayerKind {
    LayerKind::Attention { channels: c, heads: 2, d_k: 8 }
}

fn add(from: usize) -> LayerKind {
    LayerKind::ResidualAdd { skip_from: from, mode: SkipMode::Add }
}

/// Pixel-space UNet: two resolutions, one attention at the bottleneck.
fn ddpm() -> Vec<LayerSpec> {
    [
        conv(3, 16, 3, 1, 1),
        norm(16),
        LayerKind::Swish,
        conv(16, 16, 3, 1, 1),
        add(0),
        conv(16, 32, 3, 2, 1),
        norm(32),
        LayerKind::Swish,
        attn(32),
        conv(32, 32, 3, 1, 1),
        add(7),
        up(32, 16),
        norm(16),
        LayerKind::Swish,
        add(4),
        conv(16, 3, 3, 1, 1),
    ]
    .into_iter()
    .map(LayerSpec::new)
    .collect()
}

/// Encoder to a 4x8x8 latent, a UNet on 8x8/4x4, decoder back to pixels.
/// With `extra_attention` the UNet gains attention at both resolutions.
fn latent(extra_attention: bool) -> Vec<LayerSpec> {
    use BlockTag::{Codec, Unet};
    let mut layers = vec![
        LayerSpec::tagged(conv(3, 8, 3, 2, 1), Codec),
        LayerSpec::tagged(LayerKind::Swish, Codec),
        LayerSpec::tagged(conv(8, 4, 1, 1, 0), Codec),
        LayerSpec::tagged(conv(4, 16, 3, 1, 1), Unet),
        LayerSpec::tagged(norm(16), Unet),
        LayerSpec::tagged(LayerKind::Swish, Unet),
    ];
    if extra_attention {
        layers.push(LayerSpec::tagged(attn(16), Unet));
    }
    let skip = layers.len() - 1;
    layers.extend([
        LayerSpec::tagged(conv(16, 32, 3, 2, 1), Unet),
        LayerSpec::tagged(LayerKind::Swish, Unet),
        LayerSpec::tagged(attn(32), Unet),
        LayerSpec::tagged(up(32, 16), Unet),
        LayerSpec::tagged(add(skip), Unet),
        LayerSpec::tagged(norm(16), Unet),
        LayerSpec::tagged(LayerKind::Swish, Unet),
    ]);
    if extra_attention {
        layers.push(LayerSpec::tagged(attn(16), Unet));
    }
    layers.extend([
        LayerSpec::tagged(conv(16, 4, 3, 1, 1), Unet),
        LayerSpec::tagged(up(4, 8), Codec),
        LayerSpec::tagged(LayerKind::Swish, Codec),
        LayerSpec::tagged(conv(8, 3, 3, 1, 1), Codec),
    ]);
    layers
}

/// Bundled toy workloads: `ddpm-toy`, `ldm-toy`, `sdm-toy`.
pub fn preset(name: &str) -> Result<WorkloadGraph> {
    let layers = match name {
        "ddpm-toy" => ddpm(),
        "ldm-toy" => latent(false),
        "sdm-toy" => latent(true),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    WorkloadGraph::new(name, TIMESTEPS, IMAGE, layers)
}
