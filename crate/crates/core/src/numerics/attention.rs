//! Scaled dot-product attention, computed directly and through the
//! `(Q·W_Kᵀ)·Xᵀ` decomposition that never materialises `K`.

use super::softmax::softmax_lse;
use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

/// Weights of one head. `X` is `[seq, d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSpec {
    /// `[d_model, d_k]`
    pub w_q: Tensor,
    /// `[d_model, d_k]`
    pub w_k: Tensor,
    /// `[d_model, d_v]`
    pub w_v: Tensor,
    pub d_k: usize,
}

impl AttentionSpec {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Result<Self> {
        let bad = |m: String| Err(Error::Shape(m));
        if w_q.shape().len() != 2 || w_k.shape().len() != 2 || w_v.shape().len() != 2 {
            return bad("attention weights must be rank 2".into());
        }
        if w_q.shape() != w_k.shape() {
            return bad(format!("W_Q {:?} and W_K {:?} differ", w_q.shape(), w_k.shape()));
        }
        if w_v.rows() != w_q.rows() {
            return bad(format!("W_V has {} rows, W_Q has {}", w_v.rows(), w_q.rows()));
        }
        let d_k = w_q.cols();
        Ok(Self { w_q, w_k, w_v, d_k })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_v(&self) -> usize {
        self.w_v.cols()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.d_model() {
            return Err(Error::Shape(format!(
                "attention input {:?} does not have {} columns",
                x.shape(),
                self.d_model()
            )));
        }
        Ok(())
    }

    /// `W_Kᵀ / √d_k`, the folded right operand of the second upper-path GEMM.
    pub fn folded_key_weights(&self) -> Result<Tensor> {
        Ok(self.w_k.transpose()?.scale(1.0 / (self.d_k as f64).sqrt()))
    }
}

fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (r, c) = (logits.rows(), logits.cols());
    let mut out = Vec::with_capacity(r * c);
    for row in logits.data().chunks(c) {
        out.extend(softmax_lse(row)?);
    }
    Tensor::new(vec![r, c], out)
}

/// Attention matrix of the direct path: `softmax(Q·Kᵀ / √d_k)`.
pub fn attention_weights(x: &Tensor, spec: &AttentionSpec) -> Result<Tensor> {
    spec.check_input(x)?;
    let q = matmul(x, &spec.w_q)?;
    let k = matmul(x, &spec.w_k)?;
    let logits = matmul(&q, &k.transpose()?)?.scale(1.0 / (spec.d_k as f64).sqrt());
    softmax_rows(&logits)
}

/// `softmax(Q·Kᵀ/√d_k)·V` with `Q = X·W_Q`, `K = X·W_K`, `V = X·W_V`.
pub fn attention_head(x: &Tensor, spec: &AttentionSpec) -> Result<Tensor> {
    let attn = attention_weights(x, spec)?;
    matmul(&attn, &matmul(x, &spec.w_v)?)
}

/// Logits as `(Q·(W_Kᵀ/√d_k))·Xᵀ`.
pub fn decomposed_logits(x: &Tensor, spec: &AttentionSpec) -> Result<Tensor> {
    spec.check_input(x)?;
    let q = matmul(x, &spec.w_q)?;
    let p = matmul(&q, &spec.folded_key_weights()?)?;
    matmul(&p, &x.transpose()?)
}

pub fn attention_head_decomposed(x: &Tensor, spec: &AttentionSpec) -> Result<Tensor> {
    let attn = softmax_rows(&decomposed_logits(x, spec)?)?;
    matmul(&attn, &matmul(x, &spec.w_v)?)
}

/// Heads plus the output projection `W_O` (`[d_model, d_model]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSpec {
    pub heads: Vec<AttentionSpec>,
    pub w_o: Tensor,
}

impl MultiHeadSpec {
    pub fn new(heads: Vec<AttentionSpec>, w_o: Tensor) -> Result<Self> {
        let first = heads.first().ok_or_else(|| Error::Shape("attention needs at least one head".into()))?;
        let d_model = first.d_model();
        let concat: usize = heads.iter().map(|h| h.d_v()).sum();
        if heads.iter().any(|h| h.d_model() != d_model) {
            return Err(Error::Shape("heads disagree on d_model".into()));
        }
        if w_o.shape() != [concat, d_model] {
            return Err(Error::Shape(format!("W_O must be [{concat}, {d_model}], got {:?}", w_o.shape())));
        }
        Ok(Self { heads, w_o })
    }

    pub fn d_model(&self) -> usize {
        self.heads[0].d_model()
    }
}

/// Concatenate head outputs and project: `[seq, d_model]`.
pub fn multi_head_attention(x: &Tensor, spec: &MultiHeadSpec, decomposed: bool) -> Result<Tensor> {
    let seq = x.rows();
    let outs = spec
        .heads
        .iter()
        .map(|h| if decomposed { attention_head_decomposed(x, h) } else { attention_head(x, h) })
        .collect::<Result<Vec<_>>>()?;
    let width: usize = outs.iter().map(|o| o.cols()).sum();
    let mut concat = Vec::with_capacity(seq * width);
    for t in 0..seq {
        for o in &outs {
            concat.extend_from_slice(&o.data()[t * o.cols()..(t + 1) * o.cols()]);
        }
    }
    matmul(&Tensor::new(vec![seq, width], concat)?, &spec.w_o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_from(seed: u64, d_model: usize, d_k: usize) -> AttentionSpec {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let wq = Tensor::from_fn(&[d_model, d_k], |_| next());
        let wk = Tensor::from_fn(&[d_model, d_k], |_| next());
        let wv = Tensor::from_fn(&[d_model, d_model], |_| next());
        AttentionSpec::new(wq, wk, wv).unwrap()
    }

    #[test]
    fn zero_query_weights_give_uniform_attention() {
        let mut spec = spec_from(1, 4, 2);
        spec.w_q = Tensor::zeros(&[4, 2]);
        let x = Tensor::from_fn(&[3, 4], |i| i as f64 * 0.1);
        let attn = attention_weights(&x, &spec).unwrap();
        assert!(attn.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_row_returns_value_row() {
        let spec = spec_from(2, 4, 2);
        let x = Tensor::from_fn(&[1, 4], |i| i as f64 - 1.0);
        let out = attention_head(&x, &spec).unwrap();
        assert_eq!(out, matmul(&x, &spec.w_v).unwrap());
    }

    #[test]
    fn decomposition_matches_direct() {
        let spec = spec_from(3, 4, 2);
        let x = Tensor::from_fn(&[4, 4], |i| (i as f64 * 0.37).sin());
        let a = attention_head(&x, &spec).unwrap();
        let b = attention_head_decomposed(&x, &spec).unwrap();
        assert!(crate::numerics::max_rel_error(&b, &a).unwrap() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let spec = spec_from(4, 4, 2);
        assert!(attention_head(&Tensor::zeros(&[2, 3]), &spec).is_err());
        assert!(AttentionSpec::new(Tensor::zeros(&[4, 2]), Tensor::zeros(&[4, 3]), Tensor::zeros(&[4, 4])).is_err());
    }
}
