//! The accelerator template: `Y` conv/norm blocks of `K×N` MR banks plus an
//! activation block, and `H` attention-head blocks of seven MR banks plus a
//! linear-and-add block.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{parse_usize_list, ConfigFile};
use crate::error::{Error, Result};

pub const DEFAULT_MR_LIMIT: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Conv/norm blocks in the residual unit.
    pub y: usize,
    /// Columns (wavelengths) per conv block.
    pub n: usize,
    /// Rows per conv block; each row is a positive/negative waveguide pair.
    pub k: usize,
    /// Attention-head blocks.
    pub h: usize,
    /// Columns of the attention upper-path banks.
    pub l: usize,
    /// Rows of the attention banks.
    pub m: usize,
    /// Bank columns served by one DAC set.
    pub dac_sharing: usize,
    pub mr_per_waveguide_limit: usize,
    pub bit_width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::new(4, 12, 3, 6, 6, 3)
    }
}

impl ArchConfig {
    pub const fn new(y: usize, n: usize, k: usize, h: usize, l: usize, m: usize) -> Self {
        Self { y, n, k, h, l, m, dac_sharing: 2, mr_per_waveguide_limit: DEFAULT_MR_LIMIT, bit_width: 8 }
    }

    pub fn tuple(&self) -> [usize; 6] {
        [self.y, self.n, self.k, self.h, self.l, self.m]
    }

    pub fn from_tuple(t: [usize; 6]) -> Self {
        Self::new(t[0], t[1], t[2], t[3], t[4], t[5])
    }

    /// Parse `"Y,N,K,H,L,M"`.
    pub fn parse(text: &str) -> Result<Self> {
        let v = parse_usize_list(text).map_err(Error::Schema)?;
        let t: [usize; 6] = v
            .try_into()
            .map_err(|v: Vec<usize>| Error::Schema(format!("architecture needs 6 values Y,N,K,H,L,M, got {}", v.len())))?;
        let cfg = Self::from_tuple(t);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dac_sharing(mut self, s: usize) -> Self {
        self.dac_sharing = s;
        self
    }

    /// Structural invariants; the waveguide limit is checked separately.
    pub fn validate(&self) -> Result<()> {
        if self.tuple().contains(&0) {
            return Err(Error::Domain(format!("architecture dimensions must be at least 1, got [{self}]")));
        }
        if self.dac_sharing == 0 || self.mr_per_waveguide_limit == 0 || self.bit_width == 0 {
            return Err(Error::Domain("dac_sharing, MR limit and bit width must be at least 1".into()));
        }
        Ok(())
    }

    /// Read `arch = Y,N,K,H,L,M` or the individual `arch.*` keys.
    pub fn from_config(cfg: &mut ConfigFile) -> Result<Option<Self>> {
        let mut arch = match cfg.take_raw("arch") {
            Some((v, line)) => Some(Self::parse(&v).map_err(|e| Error::Config { line, message: e.to_string() })?),
            None => None,
        };
        let keys = ["arch.y", "arch.n", "arch.k", "arch.h", "arch.l", "arch.m"];
        for (idx, key) in keys.iter().enumerate() {
            if let Some(v) = cfg.take_usize(key)? {
                let a = arch.get_or_insert_with(ArchConfig::default);
                match idx {
                    0 => a.y = v,
                    1 => a.n = v,
                    2 => a.k = v,
                    3 => a.h = v,
                    4 => a.l = v,
                    _ => a.m = v,
                }
            }
        }
        for (key, slot) in [("arch.dac_sharing", 0), ("arch.mr_limit", 1), ("arch.bit_width", 2)] {
            if let Some(v) = cfg.take_usize(key)? {
                let a = arch.get_or_insert_with(ArchConfig::default);
                match slot {
                    0 => a.dac_sharing = v,
                    1 => a.mr_per_waveguide_limit = v,
                    _ => a.bit_width = v,
                }
            }
        }
        if let Some(a) = &arch {
            a.validate()?;
        }
        Ok(arch)
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{},{}", self.y, self.n, self.k, self.h, self.l, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WaveguideVerdict {
    Feasible { max_mrs: usize },
    Infeasible { waveguide: String, mrs: usize, limit: usize },
}

impl WaveguideVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, WaveguideVerdict::Feasible { .. })
    }

    pub fn reason(&self) -> Option<String> {
        match self {
            WaveguideVerdict::Feasible { .. } => None,
            WaveguideVerdict::Infeasible { waveguide, mrs, limit } => {
                Some(format!("{waveguide} carries {mrs} MRs, above the {limit}-MR waveguide limit"))
            }
        }
    }
}

/// Every waveguide must carry at most `mr_per_waveguide_limit` MRs: `N` on
/// conv-block and activation rows, `max(L, N)` in the attention banks.
pub fn check_waveguide_constraint(cfg: &ArchConfig) -> WaveguideVerdict {
    let limit = cfg.mr_per_waveguide_limit;
    let candidates = [
        ("conv-block waveguide (N)", cfg.n),
        ("attention upper-path waveguide (L)", cfg.l),
        ("attention V-path waveguide (N)", cfg.n),
    ];
    for (name, mrs) in candidates {
        if mrs > limit {
            return WaveguideVerdict::Infeasible { waveguide: name.to_string(), mrs, limit };
        }
    }
    WaveguideVerdict::Feasible { max_mrs: cfg.n.max(cfg.l) }
}

/// Device counts of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DeviceCounts {
    /// MRs that imprint operands.
    pub mrs: usize,
    /// Broadband normalisation MRs.
    pub broadband_mrs: usize,
    pub waveguides: usize,
    pub vcsels: usize,
    pub photodetectors: usize,
    pub dacs: usize,
    pub adcs: usize,
    pub soas: usize,
}

impl DeviceCounts {
    fn scaled(self, n: usize) -> Self {
        Self {
            mrs: self.mrs * n,
            broadband_mrs: self.broadband_mrs * n,
            waveguides: self.waveguides * n,
            vcsels: self.vcsels * n,
            photodetectors: self.photodetectors * n,
            dacs: self.dacs * n,
            adcs: self.adcs * n,
            soas: self.soas * n,
        }
    }

    fn plus(self, o: Self) -> Self {
        Self {
            mrs: self.mrs + o.mrs,
            broadband_mrs: self.broadband_mrs + o.broadband_mrs,
            waveguides: self.waveguides + o.waveguides,
            vcsels: self.vcsels + o.vcsels,
            photodetectors: self.photodetectors + o.photodetectors,
            dacs: self.dacs + o.dacs,
            adcs: self.adcs + o.adcs,
            soas: self.soas + o.soas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockInventory {
    pub conv_block: DeviceCounts,
    pub activation_block: DeviceCounts,
    pub head_block: DeviceCounts,
    pub linear_block: DeviceCounts,
    pub conv_blocks: usize,
    pub head_blocks: usize,
    pub total: DeviceCounts,
}

/// DACs for a `rows × cols` bank when `sharing` columns share one DAC set.
pub fn bank_dacs(rows: usize, cols: usize, sharing: usize) -> usize {
    rows * cols.div_ceil(sharing)
}

pub fn build_inventory(cfg: &ArchConfig) -> BlockInventory {
    let ArchConfig { y, n, k, h, l, m, dac_sharing: s, .. } = *cfg;
    let conv_block = DeviceCounts {
        mrs: 2 * k * n,
        broadband_mrs: k,
        waveguides: 2 * k,
        vcsels: n,
        photodetectors: 2 * k,
        dacs: 2 * bank_dacs(k, n, s),
        adcs: k,
        soas: 0,
    };
    let activation_block = DeviceCounts {
        mrs: n,
        broadband_mrs: 0,
        waveguides: n,
        vcsels: n,
        photodetectors: 2 * n,
        dacs: n,
        adcs: n,
        soas: n,
    };
    let head_block = DeviceCounts {
        mrs: 4 * m * l + 3 * m * n,
        broadband_mrs: 0,
        waveguides: 8 * m,
        vcsels: l + n,
        photodetectors: 8 * m,
        dacs: 4 * bank_dacs(m, l, s) + 3 * bank_dacs(m, n, s),
        adcs: 4 * m,
        soas: 0,
    };
    let linear_block = DeviceCounts {
        mrs: 2 * m * l,
        broadband_mrs: 0,
        waveguides: 2 * m + 1,
        vcsels: l + 2,
        photodetectors: 2 * m + 1,
        dacs: 2 * bank_dacs(m, l, s) + 2,
        adcs: m + 1,
        soas: 0,
    };
    let total = conv_block.scaled(y).plus(activation_block).plus(head_block.scaled(h)).plus(linear_block);
    BlockInventory { conv_block, activation_block, head_block, linear_block, conv_blocks: y, head_blocks: h, total }
}

/// Same-wavelength intensity aggregation on one waveguide.
pub fn coherent_sum(a: f64, b: f64) -> f64 {
    a + b
}

/// Balanced photodetector: each signed product lands on the positive or the
/// negative arm, and the detector reports positive minus negative.
pub fn bpd_dot(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for (a, b) in pairs {
        let p = a * b;
        if p >= 0.0 {
            pos += p;
        } else {
            neg -= p;
        }
    }
    pos - neg
}
