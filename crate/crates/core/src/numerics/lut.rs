use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Piecewise-linear lookup table over `[lo, hi]`, clamped outside the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut {
    lo: f64,
    hi: f64,
    table: Vec<f64>,
}

impl Lut {
    pub fn build(entries: usize, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if entries < 2 {
            return domain(format!("a LUT needs at least 2 entries, got {entries}"));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return domain(format!("invalid LUT range [{lo}, {hi}]"));
        }
        let step = (hi - lo) / (entries - 1) as f64;
        let table = (0..entries).map(|i| f(lo + step * i as f64)).collect();
        Ok(Self { lo, hi, table })
    }

    pub fn entries(&self) -> usize {
        self.table.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        let pos = (x - self.lo) / (self.hi - self.lo) * (self.table.len() - 1) as f64;
        let i = (pos.floor() as usize).min(self.table.len() - 2);
        let frac = pos - i as f64;
        self.table[i] * (1.0 - frac) + self.table[i + 1] * frac
    }
}

/// How the ECU evaluates `exp` and `ln`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Transcendentals {
    #[default]
    Exact,
    /// Quantized tables: `exp` on `[exp_floor, 0]`, `ln` on `[1, ln_ceiling]`.
    Tables { exp: Lut, ln: Lut },
}

impl Transcendentals {
    /// Tables sized for softmax rows of at most `max_len` logits.
    pub fn tables(entries: usize, max_len: usize) -> Result<Self> {
        let exp = Lut::build(entries, -20.0, 0.0, f64::exp)?;
        let ln = Lut::build(entries, 1.0, max_len.max(2) as f64, f64::ln)?;
        Ok(Transcendentals::Tables { exp, ln })
    }

    pub fn exp(&self, x: f64) -> f64 {
        match self {
            Transcendentals::Exact => x.exp(),
            Transcendentals::Tables { exp, .. } => exp.eval(x),
        }
    }

    pub fn ln(&self, x: f64) -> f64 {
        match self {
            Transcendentals::Exact => x.ln(),
            Transcendentals::Tables { ln, .. } => ln.eval(x),
        }
    }
}
