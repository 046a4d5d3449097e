mod common;

use common::cache_ref::{run_trace, scenario};
use graphfim::cache::{CacheConfig, CacheModel};

#[test]
fn random_traces_match_reference() {
    for (k, model) in CacheModel::ALL.into_iter().enumerate() {
        run_trace(CacheConfig::new(model, 16 << 10), 11 + k as u64, 100_000, false);
    }
}

#[test]
fn piccolo_with_partition_matches_reference() {
    let mut cfg = CacheConfig::new(CacheModel::Piccolo, 4 << 10);
    cfg.fg_tag_bits = 4;
    for seed in 0..4 {
        run_trace(cfg, 100 + seed, 25_000, true);
    }
}

#[test]
fn sector_eviction_versus_line_eviction() {
    let (sec, c) = scenario(CacheModel::Sectored);
    // whole LRU line goes, both of its sectors
    assert_eq!(sec[0], vec![0, 8]);
    assert!(sec[1].is_empty());
    assert_eq!(c.valid_bytes(), 8 * 8);

    let (pic, c) = scenario(CacheModel::Piccolo);
    // only the clashing sector goes; its line keeps the other one
    assert_eq!(pic[0], vec![0]);
    assert!(pic[1].is_empty(), "a free slot in an owned line takes the next miss");
    assert!(c.contains(8));
    assert_eq!(c.valid_bytes(), 9 * 8);
}
