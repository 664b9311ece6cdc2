use serde::Serialize;

/// One tile of a GEMM pass grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileSpec {
    pub rows: [u32; 2],
    pub inner: [u32; 2],
    pub rows_used: u32,
    pub cols_used: u32,
    pub macs: u64,
}

/// Cover `rows × inner` with `bank_rows × bank_cols` tiles: row tiles outer,
/// inner tiles inner, so each row sees its inner tiles in increasing order.
pub fn tile_gemm(rows: usize, inner: usize, bank_rows: usize, bank_cols: usize) -> Vec<TileSpec> {
    let mut out = Vec::with_capacity(rows.div_ceil(bank_rows) * inner.div_ceil(bank_cols));
    for r0 in (0..rows).step_by(bank_rows) {
        let r1 = (r0 + bank_rows).min(rows);
        for k0 in (0..inner).step_by(bank_cols) {
            let k1 = (k0 + bank_cols).min(inner);
            out.push(TileSpec {
                rows: [r0 as u32, r1 as u32],
                inner: [k0 as u32, k1 as u32],
                rows_used: (r1 - r0) as u32,
                cols_used: (k1 - k0) as u32,
                macs: ((r1 - r0) * (k1 - k0)) as u64,
            });
        }
    }
    out
}

/// Stable permutation ordering rows by descending length.
pub fn longest_first(lens: &[usize]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..lens.len() as u32).collect();
    order.sort_by(|&a, &b| lens[b as usize].cmp(&lens[a as usize]));
    order
}

/// Tile ragged rows given in `lens` (already permuted longest first). Each
/// row tile needs as many inner tiles as its longest row; rows that have run
/// out of terms drop out of later passes.
pub fn tile_ragged(lens: &[usize], bank_rows: usize, bank_cols: usize) -> Vec<TileSpec> {
    let mut out = Vec::new();
    for r0 in (0..lens.len()).step_by(bank_rows) {
        let r1 = (r0 + bank_rows).min(lens.len());
        let longest = lens[r0..r1].iter().copied().max().unwrap_or(0);
        for k0 in (0..longest).step_by(bank_cols) {
            let active = lens[r0..r1].iter().take_while(|&&l| l > k0).count();
            let cols = (longest - k0).min(bank_cols);
            let macs: usize = lens[r0..r0 + active].iter().map(|&l| (l - k0).min(bank_cols)).sum();
            out.push(TileSpec {
                rows: [r0 as u32, (r0 + active) as u32],
                inner: [k0 as u32, (k0 + cols) as u32],
                rows_used: active as u32,
                cols_used: cols as u32,
                macs: macs as u64,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_division_grids() {
        assert_eq!(tile_gemm(3, 12, 3, 12).len(), 1);
        assert_eq!(tile_gemm(6, 6, 3, 6).len(), 2);
        let one = tile_gemm(1, 1, 3, 12);
        assert_eq!((one.len(), one[0].rows_used, one[0].cols_used), (1, 1, 1));
    }

    #[test]
    fn ragged_tiles_cover_every_term_once() {
        let lens = [9, 9, 4, 4, 4, 1, 1];
        let tiles = tile_ragged(&lens, 3, 4);
        let total: u64 = tiles.iter().map(|t| t.macs).sum();
        assert_eq!(total, lens.iter().sum::<usize>() as u64);
        assert!(tiles.iter().all(|t| t.rows_used <= 3 && t.cols_used <= 4 && t.rows_used >= 1));
    }

    #[test]
    fn longest_first_is_stable() {
        assert_eq!(longest_first(&[1, 3, 3, 2]), vec![1, 2, 3, 0]);
    }
}
