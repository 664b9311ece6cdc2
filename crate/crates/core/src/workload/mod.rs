//! Per-timestep denoiser graphs.
//!
//! A workload is an ordered list of layers that each consume the previous
//! layer's output; skip connections are explicit `residual_add` layers that
//! reference an earlier layer by index. Documents are JSON:
//!
//! ```json
//! {"name": "tiny", "timesteps": 1,
//!  "input": {"channels": 1, "height": 4, "width": 4},
//!  "layers": [{"kind": "conv", "in_channels": 1, "out_channels": 1,
//!              "kernel": 1, "stride": 1, "padding": 0}]}
//! ```

mod presets;
mod random;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::conv::{conv_output_extent, conv_transpose_output_extent};

pub use presets::{preset, PRESET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn elements(&self) -> usize {
        self.channels * self.spatial()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    #[default]
    Add,
    Concat,
}

/// Which part of the model a layer belongs to; used only for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTag {
    Codec,
    Unet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    GroupNorm {
        channels: usize,
        groups: usize,
        #[serde(default, skip_serializing_if = "is_false")]
        bypass: bool,
    },
    Swish,
    /// Multi-head self-attention over the `H·W` tokens, including the output
    /// projection and the residual add of the block input.
    Attention {
        channels: usize,
        heads: usize,
        d_k: usize,
    },
    /// Per-token channel mixing, no bias.
    Linear {
        in_channels: usize,
        out_channels: usize,
    },
    ResidualAdd {
        skip_from: usize,
        #[serde(default)]
        mode: SkipMode,
    },
}

fn one() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::ConvTranspose { .. } => "conv_transpose",
            LayerKind::GroupNorm { .. } => "group_norm",
            LayerKind::Swish => "swish",
            LayerKind::Attention { .. } => "attention",
            LayerKind::Linear { .. } => "linear",
            LayerKind::ResidualAdd { .. } => "residual_add",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockTag>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self { kind, block: None }
    }

    pub fn tagged(kind: LayerKind, block: BlockTag) -> Self {
        Self { kind, block: Some(block) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Document {
    name: String,
    timesteps: usize,
    input: Shape3,
    layers: Vec<LayerSpec>,
}

/// A validated graph with every tensor shape resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadGraph {
    pub name: String,
    pub timesteps: usize,
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
    shapes: Vec<(Shape3, Shape3)>,
}

/// Per-layer and total MAC counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacCount {
    pub per_layer: Vec<u64>,
    pub per_timestep: u64,
    pub total: u64,
}

impl WorkloadGraph {
    pub fn new(name: impl Into<String>, timesteps: usize, input: Shape3, layers: Vec<LayerSpec>) -> Result<Self> {
        let name = name.into();
        if timesteps == 0 {
            return Err(Error::Schema("timesteps must be at least 1".into()));
        }
        if input.channels == 0 || input.height == 0 || input.width == 0 {
            return Err(Error::Schema(format!("input extents must be positive, got {input}")));
        }
        if layers.is_empty() {
            return Err(Error::Schema("a workload needs at least one layer".into()));
        }
        let mut shapes: Vec<(Shape3, Shape3)> = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let input_shape = shapes.last().map(|s| s.1).unwrap_or(input);
            let out = resolve(i, layer, input_shape, &layers, &shapes)?;
            shapes.push((input_shape, out));
        }
        Ok(Self { name, timesteps, input, layers, shapes })
    }

    pub fn layer_input(&self, i: usize) -> Shape3 {
        self.shapes[i].0
    }

    pub fn layer_output(&self, i: usize) -> Shape3 {
        self.shapes[i].1
    }

    pub fn output(&self) -> Shape3 {
        self.shapes.last().unwrap().1
    }

    pub fn with_timesteps(mut self, timesteps: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::Schema("timesteps must be at least 1".into()));
        }
        self.timesteps = timesteps;
        Ok(self)
    }

    /// Weight elements of layer `i`.
    pub fn layer_parameters(&self, i: usize) -> u64 {
        let p = match self.layers[i].kind {
            LayerKind::Conv { in_channels, out_channels, kernel, .. }
            | LayerKind::ConvTranspose { in_channels, out_channels, kernel, .. } => {
                in_channels * out_channels * kernel * kernel
            }
            LayerKind::GroupNorm { channels, bypass, .. } => {
                if bypass {
                    0
                } else {
                    2 * channels
                }
            }
            LayerKind::Attention { channels, heads, d_k } => {
                heads * (2 * channels * d_k + channels * (channels / heads)) + channels * channels
            }
            LayerKind::Linear { in_channels, out_channels } => in_channels * out_channels,
            LayerKind::Swish | LayerKind::ResidualAdd { .. } => 0,
        };
        p as u64
    }

    pub fn parameter_count(&self) -> u64 {
        (0..self.layers.len()).map(|i| self.layer_parameters(i)).sum()
    }

    /// Dense multiply-accumulates of layer `i` for one timestep.
    pub fn layer_macs(&self, i: usize) -> u64 {
        let (inp, out) = self.shapes[i];
        let m = match self.layers[i].kind {
            LayerKind::Conv { in_channels, out_channels, kernel, .. }
            | LayerKind::ConvTranspose { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel * kernel * out.spatial()
            }
            LayerKind::Linear { in_channels, out_channels } => in_channels * out_channels * inp.spatial(),
            LayerKind::Attention { channels, heads, d_k } => {
                let seq = inp.spatial();
                let d_v = channels / heads;
                let per_head = seq * channels * d_k
                    + seq * d_k * channels
                    + seq * channels * seq
                    + seq * channels * d_v
                    + seq * seq * d_v;
                heads * per_head + seq * channels * channels
            }
            LayerKind::GroupNorm { .. } | LayerKind::Swish | LayerKind::ResidualAdd { .. } => 0,
        };
        m as u64
    }

    pub fn count_macs(&self) -> MacCount {
        let per_layer: Vec<u64> = (0..self.layers.len()).map(|i| self.layer_macs(i)).collect();
        let per_timestep = per_layer.iter().sum();
        MacCount { per_layer, per_timestep, total: per_timestep * self.timesteps as u64 }
    }

    /// MACs spent in attention layers as a fraction of all MACs.
    pub fn attention_mac_fraction(&self) -> f64 {
        let c = self.count_macs();
        let att: u64 = self
            .layers
            .iter()
            .zip(&c.per_layer)
            .filter(|(l, _)| matches!(l.kind, LayerKind::Attention { .. }))
            .map(|(_, m)| m)
            .sum();
        att as f64 / c.per_timestep.max(1) as f64
    }

    /// Largest `H·W` any denoiser layer (not tagged `codec`) consumes.
    pub fn unet_spatial_extent(&self) -> usize {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.block != Some(BlockTag::Codec))
            .map(|(i, _)| self.shapes[i].0.spatial())
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let doc = Document {
            name: self.name.clone(),
            timesteps: self.timesteps,
            input: self.input,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("workload documents always serialize")
    }

    pub fn random(seed: u64) -> Self {
        random::random_graph(seed)
    }
}

fn producer_name(i: usize, layers: &[LayerSpec]) -> String {
    if i == 0 {
        "input".to_string()
    } else {
        format!("{} ({})", i - 1, layers[i - 1].kind.name())
    }
}

fn resolve(i: usize, layer: &LayerSpec, inp: Shape3, layers: &[LayerSpec], shapes: &[(Shape3, Shape3)]) -> Result<Shape3> {
    let path = format!("layers[{i}]");
    let mismatch = |expected: String, found: String| Error::LayerShape {
        layer: i,
        producer: producer_name(i, layers),
        path: path.clone(),
        expected,
        found,
    };
    let schema = |msg: String| Error::Schema(format!("{path} ({}): {msg}", layer.kind.name()));
    let channels_in = |declared: usize| {
        if declared != inp.channels {
            Err(mismatch(format!("{declared} channels"), format!("{} channels ({inp})", inp.channels)))
        } else {
            Ok(())
        }
    };
    match layer.kind {
        LayerKind::Conv { in_channels, out_channels, kernel, stride, padding } => {
            channels_in(in_channels)?;
            if out_channels == 0 || kernel == 0 || stride == 0 {
                return Err(schema("out_channels, kernel and stride must be positive".into()));
            }
            let h = conv_output_extent(inp.height, kernel, stride, padding);
            let w = conv_output_extent(inp.width, kernel, stride, padding);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape3::new(out_channels, h, w)),
                _ => Err(schema(format!("kernel {kernel} does not fit input {inp}"))),
            }
        }
        LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, padding } => {
            channels_in(in_channels)?;
            if out_channels == 0 || kernel == 0 || stride == 0 {
                return Err(schema("out_channels, kernel and stride must be positive".into()));
            }
            let h = conv_transpose_output_extent(inp.height, kernel, stride, padding);
            let w = conv_transpose_output_extent(inp.width, kernel, stride, padding);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape3::new(out_channels, h, w)),
                _ => Err(schema(format!("padding {padding} must be smaller than kernel {kernel}"))),
            }
        }
        LayerKind::GroupNorm { channels, groups, .. } => {
            channels_in(channels)?;
            if groups == 0 || channels % groups != 0 {
                return Err(schema(format!("{channels} channels are not divisible into {groups} groups")));
            }
            Ok(inp)
        }
        LayerKind::Swish => Ok(inp),
        LayerKind::Attention { channels, heads, d_k } => {
            channels_in(channels)?;
            if heads == 0 || d_k == 0 {
                return Err(schema("heads and d_k must be at least 1".into()));
            }
            if channels % heads != 0 {
                return Err(schema(format!("{channels} channels do not split over {heads} heads")));
            }
            Ok(inp)
        }
        LayerKind::Linear { in_channels, out_channels } => {
            channels_in(in_channels)?;
            if out_channels == 0 {
                return Err(schema("out_channels must be positive".into()));
            }
            Ok(Shape3::new(out_channels, inp.height, inp.width))
        }
        LayerKind::ResidualAdd { skip_from, mode } => {
            if skip_from >= i {
                return Err(schema(format!("skip_from {skip_from} does not refer to an earlier layer")));
            }
            let skip = shapes[skip_from].1;
            match mode {
                SkipMode::Add if skip != inp => Err(Error::LayerShape {
                    layer: i,
                    producer: format!("{skip_from} ({})", layers[skip_from].kind.name()),
                    path,
                    expected: inp.to_string(),
                    found: skip.to_string(),
                }),
                SkipMode::Concat if (skip.height, skip.width) != (inp.height, inp.width) => Err(Error::LayerShape {
                    layer: i,
                    producer: format!("{skip_from} ({})", layers[skip_from].kind.name()),
                    path,
                    expected: format!("spatial {}x{}", inp.height, inp.width),
                    found: skip.to_string(),
                }),
                SkipMode::Add => Ok(inp),
                SkipMode::Concat => Ok(Shape3::new(inp.channels + skip.channels, inp.height, inp.width)),
            }
        }
    }
}

/// Parse and validate a JSON workload document.
pub fn load_workload(text: &str) -> Result<WorkloadGraph> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    WorkloadGraph::new(doc.name, doc.timesteps, doc.input, doc.layers)
}

pub fn load_workload_file(path: impl AsRef<Path>) -> Result<WorkloadGraph> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    load_workload(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"name": "one", "timesteps": 1,
        "input": {"channels": 1, "height": 4, "width": 4},
        "layers": [{"kind": "conv", "in_channels": 1, "out_channels": 1, "kernel": 1}]}"#;

    #[test]
    fn minimal_document() {
        let g = load_workload(MINIMAL).unwrap();
        assert_eq!(g.layers.len(), 1);
        assert_eq!(g.count_macs().total, 16);
    }

    #[test]
    fn channel_mismatch_names_both_layers() {
        let doc = r#"{"name": "bad", "timesteps": 1,
            "input": {"channels": 1, "height": 4, "width": 4},
            "layers": [{"kind": "conv", "in_channels": 1, "out_channels": 2, "kernel": 1},
                       {"kind": "conv", "in_channels": 3, "out_channels": 1, "kernel": 1}]}"#;
        match load_workload(doc).unwrap_err() {
            Error::LayerShape { layer, producer, path, .. } => {
                assert_eq!(layer, 1);
                assert!(producer.starts_with("0 (conv)"));
                assert_eq!(path, "layers[1]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_skip_is_rejected() {
        let doc = r#"{"name": "bad", "timesteps": 1,
            "input": {"channels": 1, "height": 4, "width": 4},
            "layers": [{"kind": "swish"}, {"kind": "residual_add", "skip_from": 1}]}"#;
        assert!(matches!(load_workload(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_kind_is_a_schema_error() {
        let doc = r#"{"name": "bad", "timesteps": 1,
            "input": {"channels": 1, "height": 4, "width": 4},
            "layers": [{"kind": "pool"}]}"#;
        assert!(matches!(load_workload(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn linear_macs_are_rows_times_cols() {
        let g = WorkloadGraph::new(
            "lin",
            1,
            Shape3::new(4, 1, 1),
            vec![LayerSpec::new(LayerKind::Linear { in_channels: 4, out_channels: 3 })],
        )
        .unwrap();
        assert_eq!(g.count_macs().total, 12);
    }

    #[test]
    fn concat_skip_stacks_channels() {
        let g = WorkloadGraph::new(
            "cat",
            1,
            Shape3::new(2, 4, 4),
            vec![
                LayerSpec::new(LayerKind::Swish),
                LayerSpec::new(LayerKind::ResidualAdd { skip_from: 0, mode: SkipMode::Concat }),
            ],
        )
        .unwrap();
        assert_eq!(g.output(), Shape3::new(4, 4, 4));
    }
}
