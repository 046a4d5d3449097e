//! Closed-form off-chip traffic for one pass over the graph.
//!
//! Byte constants: 8B row-index entry per vertex per tile, 4B column index
//! per edge, properties of `prop_bytes`.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::{Error, Result};

pub const ROW_INDEX_BYTES: u64 = 8;
pub const COL_INDEX_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    /// every random property access costs a full burst
    Untiled,
    /// tile fits on chip; each vertex fetched once
    Perfect,
    /// 8B granularity, at most one fetch per vertex per tile pass
    Piccolo,
}

impl FromStr for TrafficMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untiled" => Ok(TrafficMode::Untiled),
            "perfect" => Ok(TrafficMode::Perfect),
            "piccolo" => Ok(TrafficMode::Piccolo),
            _ => Err(Error::Argument(format!("unknown traffic mode `{s}` (untiled, perfect, piccolo)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficEstimate {
    pub row_index_bytes: u64,
    pub col_index_bytes: u64,
    pub seq_prop_bytes: u64,
    pub rand_prop_bytes: u64,
    pub total: u64,
}

pub fn estimate_traffic(
    nv: u64,
    ne: u64,
    t: u64,
    burst_bytes: u64,
    prop_bytes: u64,
    mode: TrafficMode,
) -> Result<TrafficEstimate> {
    if t == 0 {
        return Err(Error::Argument("tile count must be at least 1".into()));
    }
    let row_index_bytes = t * nv * ROW_INDEX_BYTES;
    let col_index_bytes = ne * COL_INDEX_BYTES;
    let seq_prop_bytes = t * nv * prop_bytes;
    let rand_prop_bytes = match mode {
        TrafficMode::Untiled => ne * burst_bytes,
        TrafficMode::Perfect => nv * burst_bytes,
        TrafficMode::Piccolo => (ne * prop_bytes).min(t * nv * prop_bytes),
    };
    Ok(TrafficEstimate {
        row_index_bytes,
        col_index_bytes,
        seq_prop_bytes,
        rand_prop_bytes,
        total: row_index_bytes + col_index_bytes + seq_prop_bytes + rand_prop_bytes,
    })
}

/// Step model: a tile whose destination properties fit in `cache_bytes`
/// behaves as perfectly tiled, otherwise as untiled.
pub fn estimate_with_cache(
    nv: u64,
    ne: u64,
    t: u64,
    burst_bytes: u64,
    prop_bytes: u64,
    cache_bytes: u64,
) -> Result<TrafficEstimate> {
    if t == 0 {
        return Err(Error::Argument("tile count must be at least 1".into()));
    }
    let width = nv.div_ceil(t);
    let mode = if width * prop_bytes <= cache_bytes { TrafficMode::Perfect } else { TrafficMode::Untiled };
    estimate_traffic(nv, ne, t, burst_bytes, prop_bytes, mode)
}

/// Tile count in `1..=max_t` minimising [`estimate_with_cache`] total;
/// the smallest such t on ties.
pub fn sweet_spot(nv: u64, ne: u64, burst_bytes: u64, prop_bytes: u64, cache_bytes: u64, max_t: u64) -> Result<u64> {
    let mut best = (u64::MAX, 0);
    for t in 1..=max_t.max(1) {
        let e = estimate_with_cache(nv, ne, t, burst_bytes, prop_bytes, cache_bytes)?;
        if e.total < best.0 {
            best = (e.total, t);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_tiles_rejected() {
        assert!(estimate_traffic(10, 10, 0, 64, 8, TrafficMode::Untiled).is_err());
    }

    #[test]
    fn degenerate_single_tile() {
        let u = estimate_traffic(1000, 5000, 1, 64, 8, TrafficMode::Untiled).unwrap();
        let p = estimate_traffic(1000, 5000, 1, 64, 8, TrafficMode::Perfect).unwrap();
        assert_eq!(u.row_index_bytes, p.row_index_bytes);
        assert_eq!(u.col_index_bytes, p.col_index_bytes);
        assert_eq!(u.seq_prop_bytes, p.seq_prop_bytes);
    }

    #[test]
    fn granularity_gap() {
        let u = estimate_traffic(10_000, 100_000, 1, 64, 8, TrafficMode::Untiled).unwrap();
        let p = estimate_traffic(10_000, 100_000, 1, 64, 8, TrafficMode::Piccolo).unwrap();
        assert_eq!(u.rand_prop_bytes, 6_400_000);
        assert!(p.rand_prop_bytes <= 800_000);
        assert_eq!(u.rand_prop_bytes / 800_000, 8);
    }

    #[test]
    fn sweet_spot_is_where_tile_first_fits() {
        // 4096 vertices of 8B = 32KB; a 4KB cache first fits at t = 8
        assert_eq!(sweet_spot(4096, 65536, 64, 8, 4096, 64).unwrap(), 8);
    }

    proptest! {
        #[test]
        fn total_is_sum_and_topology_monotone(nv in 1u64..100_000, ne in 0u64..1_000_000, t in 1u64..64) {
            for mode in [TrafficMode::Untiled, TrafficMode::Perfect, TrafficMode::Piccolo] {
                let a = estimate_traffic(nv, ne, t, 64, 8, mode).unwrap();
                let b = estimate_traffic(nv, ne, t + 1, 64, 8, mode).unwrap();
                prop_assert_eq!(a.total, a.row_index_bytes + a.col_index_bytes + a.seq_prop_bytes + a.rand_prop_bytes);
                prop_assert!(b.row_index_bytes + b.seq_prop_bytes >= a.row_index_bytes + a.seq_prop_bytes);
            }
        }

        #[test]
        fn cached_rand_term_never_grows_with_t(nv in 1u64..100_000, ne in 0u64..1_000_000, t in 1u64..64, cache in 8u64..1_000_000) {
            let a = estimate_with_cache(nv, ne, t, 64, 8, cache).unwrap();
            let b = estimate_with_cache(nv, ne, t + 1, 64, 8, cache).unwrap();
            // once perfect, stays perfect
            if a.rand_prop_bytes == nv * 64 {
                prop_assert_eq!(b.rand_prop_bytes, nv * 64);
            }
        }
    }
}
