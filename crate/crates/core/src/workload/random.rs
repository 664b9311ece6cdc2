use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerKind, LayerSpec, Shape3, SkipMode, WorkloadGraph};

struct Builder {
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape3>,
    cur: Shape3,
}

impl Builder {
    fn push(&mut self, kind: LayerKind, out: Shape3) {
        self.layers.push(LayerSpec::new(kind));
        self.shapes.push(out);
        self.cur = out;
    }

    fn keep(&mut self, kind: LayerKind) {
        self.push(kind, self.cur);
    }
}

fn conv(ci: usize, co: usize, k: usize, stride: usize) -> LayerKind {
    LayerKind::Conv { in_channels: ci, out_channels: co, kernel: k, stride, padding: k / 2 }
}

/// Small shape-preserving graph (output shape equals input shape) built from
/// every layer kind. Used for property tests.
pub(super) fn random_graph(seed: u64) -> WorkloadGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = *[2usize, 3, 4].choose(&mut rng).unwrap();
    let side = *[4usize, 6, 8].choose(&mut rng).unwrap();
    let input = Shape3::new(c0, side, side);
    let timesteps = rng.gen_range(1..=3);
    let mut b = Builder { layers: Vec::new(), shapes: Vec::new(), cur: input };

    let width = 2 * rng.gen_range(1..=3);
    let k = *[1usize, 3].choose(&mut rng).unwrap();
    b.push(conv(c0, width, k, 1), Shape3::new(width, side, side));

    for _ in 0..rng.gen_range(2..=6) {
        let c = b.cur.channels;
        match rng.gen_range(0..7) {
            0 => {
                let k = *[1usize, 3].choose(&mut rng).unwrap();
                b.keep(conv(c, c, k, 1));
            }
            1 => b.keep(LayerKind::GroupNorm { channels: c, groups: 2, bypass: rng.gen_bool(0.2) }),
            2 => b.keep(LayerKind::Swish),
            3 => b.keep(LayerKind::Attention { channels: c, heads: 2, d_k: rng.gen_range(1..=4) }),
            4 => b.keep(LayerKind::Linear { in_channels: c, out_channels: c }),
            5 if b.cur.height.is_multiple_of(2) => {
                let full = b.cur;
                b.push(conv(c, c, 3, 2), Shape3::new(c, full.height / 2, full.width / 2));
                b.push(
                    LayerKind::ConvTranspose { in_channels: c, out_channels: c, kernel: 4, stride: 2, padding: 1 },
                    full,
                );
            }
            _ => {
                let candidates: Vec<usize> = (0..b.shapes.len()).filter(|&j| b.shapes[j] == b.cur).collect();
                match candidates.choose(&mut rng) {
                    Some(&from) => b.keep(LayerKind::ResidualAdd { skip_from: from, mode: SkipMode::Add }),
                    None => b.keep(LayerKind::Swish),
                }
            }
        }
    }
    let c = b.cur.channels;
    b.push(conv(c, c0, 1, 1), input);
    WorkloadGraph::new(format!("random-{seed}"), timesteps, input, b.layers)
        .expect("generator only emits consistent graphs")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_graphs_validate_and_preserve_shape() {
        for seed in 0..200 {
            let g = random_graph(seed);
            assert_eq!(g.output(), g.input);
        }
        assert_eq!(random_graph(7), random_graph(7));
    }
}
