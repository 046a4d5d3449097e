//! Set-associative cache models for 8B vertex properties.
//!
//! All four models share one storage layout: `sets × ways` lines, each with
//! `sectors_per_line` sectors. Conventional and 8B-line caches have a single
//! sector per line. The piccolo model additionally keeps an fg-tag per sector
//! and lets one tag occupy several ways of a set.
//!
//! Address layouts (high to low):
//!
//! ```text
//! conventional64   [tag | set | byte(6)]
//! sectored         [tag | set | sector | byte(3)]
//! line8            [tag | set | byte(3)]
//! piccolo          [tag | fg_tag | set | fg_offset | byte(3)]
//! ```
//!
//! The piccolo fg-tag sits above the set bits, so `set ++ fg_offset` indexes
//! data exactly like the 16-bit set index of the 8B-line cache. Putting the
//! fg-tag below the set bits would squeeze a contiguous tile into a handful
//! of sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheModel {
    Conventional64,
    Sectored,
    Line8,
    Piccolo,
}

impl CacheModel {
    pub const ALL: [CacheModel; 4] =
        [CacheModel::Conventional64, CacheModel::Sectored, CacheModel::Line8, CacheModel::Piccolo];

    pub fn name(self) -> &'static str {
        match self {
            CacheModel::Conventional64 => "conventional64",
            CacheModel::Sectored => "sectored",
            CacheModel::Line8 => "line8",
            CacheModel::Piccolo => "piccolo",
        }
    }

    /// Models whose misses are 8B requests rather than whole 64B lines.
    pub fn fine_grained(self) -> bool {
        self != CacheModel::Conventional64
    }
}

impl fmt::Display for CacheModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CacheModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional64" | "conventional" => Ok(CacheModel::Conventional64),
            "sectored" => Ok(CacheModel::Sectored),
            "line8" => Ok(CacheModel::Line8),
            "piccolo" => Ok(CacheModel::Piccolo),
            _ => Err(Error::Argument(format!(
                "unknown cache model `{s}` (valid: conventional64, sectored, line8, piccolo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: u64,
    pub ways: usize,
    pub model: CacheModel,
    pub line_bytes: u64,
    pub sectors_per_line: usize,
    pub fg_tag_bits: u32,
    pub address_bits: u32,
}

impl CacheConfig {
    /// Natural geometry for `model` at the given capacity, 8 ways.
    pub fn new(model: CacheModel, capacity: u64) -> Self {
        let (line_bytes, sectors_per_line, fg_tag_bits) = match model {
            CacheModel::Conventional64 => (64, 1, 0),
            CacheModel::Sectored => (128, 16, 0),
            CacheModel::Line8 => (8, 1, 0),
            CacheModel::Piccolo => (128, 16, 8),
        };
        CacheConfig { capacity, ways: 8, model, line_bytes, sectors_per_line, fg_tag_bits, address_bits: 48 }
    }

    pub fn sector_bytes(&self) -> u64 {
        self.line_bytes / self.sectors_per_line as u64
    }

    pub fn n_lines(&self) -> u64 {
        self.capacity / self.line_bytes
    }

    pub fn sets(&self) -> u64 {
        self.n_lines() / self.ways as u64
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |x: u64| x != 0 && x.is_power_of_two();
        if self.ways == 0 {
            return Err(Error::config("cache.ways", "must be at least 1"));
        }
        if self.sectors_per_line == 0 || !pow2(self.line_bytes) || !pow2(self.sectors_per_line as u64) {
            return Err(Error::config("cache.line_bytes", "line and sector counts must be powers of two"));
        }
        if !self.capacity.is_multiple_of(self.line_bytes * self.ways as u64) || !pow2(self.sets()) {
            return Err(Error::config(
                "cache.capacity",
                format!(
                    "{} B is not a power-of-two number of {}-way sets of {} B lines",
                    self.capacity, self.ways, self.line_bytes
                ),
            ));
        }
        let sector = self.sector_bytes();
        match self.model {
            CacheModel::Conventional64 | CacheModel::Line8 if self.sectors_per_line != 1 => {
                Err(Error::config("cache.sectors_per_line", "must be 1 for unsectored models"))
            }
            CacheModel::Sectored | CacheModel::Piccolo if sector != 8 => {
                Err(Error::config("cache.sectors_per_line", "sectors_per_line * 8 must equal line_bytes"))
            }
            CacheModel::Piccolo if self.fg_tag_bits == 0 || self.fg_tag_bits > 16 => {
                Err(Error::config("cache.fg_tag_bits", "must be in 1..=16"))
            }
            _ if sector > 64 => Err(Error::config("cache.line_bytes", "sectors wider than 64B")),
            _ if self.tag_bits() == 0 => Err(Error::config("cache.address_bits", "no bits left for the tag")),
            _ => Ok(()),
        }
    }

    fn layout(&self) -> Layout {
        let fg = if self.model == CacheModel::Piccolo { self.fg_tag_bits } else { 0 };
        Layout {
            byte: self.sector_bytes().trailing_zeros(),
            off: (self.sectors_per_line as u64).trailing_zeros(),
            set: self.sets().trailing_zeros(),
            fg,
        }
    }

    /// Width of the per-line tag.
    pub fn tag_bits(&self) -> u32 {
        let l = self.layout();
        self.address_bits.saturating_sub(l.byte + l.off + l.set + l.fg)
    }

    /// Tag storage in bits: one tag per line plus, for piccolo, one fg-tag
    /// per sector. Valid and dirty bits are not counted.
    pub fn metadata_bits(&self) -> u64 {
        let per_line = self.tag_bits() as u64
            + if self.model == CacheModel::Piccolo {
                self.fg_tag_bits as u64 * self.sectors_per_line as u64
            } else {
                0
            };
        per_line * self.n_lines()
    }

    /// Tag value of a byte address, the unit a way partition is keyed on.
    pub fn tag_of(&self, addr: u64) -> u64 {
        self.layout().split(addr).tag
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    byte: u32,
    off: u32,
    set: u32,
    fg: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Parts {
    tag: u64,
    fg: u64,
    set: usize,
    off: usize,
    /// 8B word index inside the sector
    word: u32,
}

impl Layout {
    fn split(&self, addr: u64) -> Parts {
        let mask = |b: u32| (1u64 << b) - 1;
        let mut a = addr;
        let word = ((a & mask(self.byte)) >> 3) as u32;
        a >>= self.byte;
        let off = (a & mask(self.off)) as usize;
        a >>= self.off;
        let set = (a & mask(self.set)) as usize;
        a >>= self.set;
        let fg = a & mask(self.fg);
        a >>= self.fg;
        Parts { tag: a, fg, set, off, word }
    }

    fn join(&self, tag: u64, fg: u64, set: usize, off: usize) -> u64 {
        let mut a = tag;
        a = (a << self.fg) | fg;
        a = (a << self.set) | set as u64;
        a = (a << self.off) | off as u64;
        a << self.byte
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessResult {
    Hit,
    SectorMiss,
    LineMiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Victim {
    pub addr: u64,
    pub bytes: u64,
    pub dirty: bool,
    /// Bytes of this block the pipeline actually read or wrote while resident.
    pub touched_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fill {
    pub addr: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessOutcome {
    pub result: AccessResult,
    pub victims: Vec<Victim>,
    pub fill: Option<Fill>,
    /// Ways examined by the sequential same-tag search (piccolo only).
    pub search_cycles: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WayPartition {
    pub alloc: BTreeMap<u64, usize>,
    /// More tags than ways: some tags got zero ways and share one.
    pub oversubscribed: bool,
}

/// Equal split of `ways` among `tile_tags`, remainder to the lowest tags.
pub fn configure_partition(tile_tags: &[u64], ways: usize) -> Result<WayPartition> {
    let mut tags = tile_tags.to_vec();
    tags.sort_unstable();
    tags.dedup();
    if tags.is_empty() {
        return Err(Error::Argument("way partition needs at least one tag".into()));
    }
    let base = ways / tags.len();
    let extra = ways % tags.len();
    let alloc = tags.iter().enumerate().map(|(i, &t)| (t, base + usize::from(i < extra))).collect();
    Ok(WayPartition { alloc, oversubscribed: tags.len() > ways })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub sector_misses: u64,
    pub line_misses: u64,
    pub evicted_sectors: u64,
    pub dirty_evictions: u64,
    pub bytes_filled: u64,
    /// Filled bytes that were touched before leaving the cache.
    pub bytes_useful: u64,
    /// Misses of tags that received zero ways from the partition.
    pub oversubscribed_misses: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    tag: u64,
    stamp: u64,
    n_valid: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sector {
    fg: u64,
    valid: bool,
    dirty: bool,
    /// bit per 8B word touched since fill
    touched: u8,
}

/// One entry of [`Cache::dump`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorState {
    pub set: usize,
    pub way: usize,
    pub sector: usize,
    pub tag: u64,
    pub fg_tag: u64,
    pub dirty: bool,
}

#[derive(Debug, Clone)]
pub struct Cache {
    cfg: CacheConfig,
    layout: Layout,
    lines: Vec<Line>,
    sectors: Vec<Sector>,
    clock: u64,
    partition: WayPartition,
    pub stats: CacheStats,
}

impl Cache {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_lines() as usize;
        Ok(Cache {
            layout: cfg.layout(),
            lines: vec![Line::default(); n],
            sectors: vec![Sector::default(); n * cfg.sectors_per_line],
            clock: 0,
            partition: WayPartition::default(),
            stats: CacheStats::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn set_partition(&mut self, p: WayPartition) {
        self.partition = p;
    }

    pub fn partition(&self) -> &WayPartition {
        &self.partition
    }

    fn alloc_for(&self, tag: u64) -> (usize, bool) {
        match self.partition.alloc.get(&tag) {
            Some(0) => (1, true),
            Some(&a) => (a.min(self.cfg.ways), false),
            None => (self.cfg.ways, false),
        }
    }

    fn sector_idx(&self, line: usize, off: usize) -> usize {
        line * self.cfg.sectors_per_line + off
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn check(&self, addr: u64) -> Result<()> {
        if !addr.is_multiple_of(8) {
            return Err(Error::Alignment { addr, size: 8 });
        }
        if self.cfg.address_bits < 64 && addr >> self.cfg.address_bits != 0 {
            return Err(Error::Range(format!("address {addr:#x} exceeds {} bits", self.cfg.address_bits)));
        }
        Ok(())
    }

    pub fn contains(&self, addr: u64) -> bool {
        let p = self.layout.split(addr);
        let base = p.set * self.cfg.ways;
        (base..base + self.cfg.ways).any(|li| {
            let s = &self.sectors[self.sector_idx(li, p.off)];
            self.lines[li].n_valid > 0 && self.lines[li].tag == p.tag && s.valid && s.fg == p.fg
        })
    }

    /// Reads (or, with `write`, read-modify-writes) the 8B word at `addr`.
    pub fn access(&mut self, addr: u64, write: bool) -> Result<AccessOutcome> {
        self.check(addr)?;
        let p = self.layout.split(addr);
        let out = if self.cfg.model == CacheModel::Piccolo {
            self.access_piccolo(p, write)
        } else {
            self.access_plain(p, write)
        };
        match out.result {
            AccessResult::Hit => self.stats.hits += 1,
            AccessResult::SectorMiss => self.stats.sector_misses += 1,
            AccessResult::LineMiss => self.stats.line_misses += 1,
        }
        if let Some(f) = out.fill {
            self.stats.bytes_filled += f.bytes;
        }
        Ok(out)
    }

    fn touch(&mut self, li: usize, p: Parts, write: bool) {
        let si = self.sector_idx(li, p.off);
        let s = &mut self.sectors[si];
        s.touched |= 1 << p.word;
        s.dirty |= write;
        let stamp = self.tick();
        self.lines[li].stamp = stamp;
    }

    fn fill_sector(&mut self, li: usize, p: Parts, write: bool) -> Fill {
        let si = self.sector_idx(li, p.off);
        debug_assert!(!self.sectors[si].valid);
        self.sectors[si] = Sector { fg: p.fg, valid: true, dirty: false, touched: 0 };
        self.lines[li].n_valid += 1;
        self.touch(li, p, write);
        Fill { addr: self.layout.join(p.tag, p.fg, p.set, p.off), bytes: self.cfg.sector_bytes() }
    }

    fn evict_sector(&mut self, li: usize, set: usize, off: usize, out: &mut Vec<Victim>) {
        let si = self.sector_idx(li, off);
        let s = self.sectors[si];
        if !s.valid {
            return;
        }
        let v = Victim {
            addr: self.layout.join(self.lines[li].tag, s.fg, set, off),
            bytes: self.cfg.sector_bytes(),
            dirty: s.dirty,
            touched_bytes: s.touched.count_ones() as u64 * 8,
        };
        self.stats.evicted_sectors += 1;
        self.stats.dirty_evictions += u64::from(s.dirty);
        self.stats.bytes_useful += v.touched_bytes;
        self.sectors[si] = Sector::default();
        self.lines[li].n_valid -= 1;
        out.push(v);
    }

    fn evict_line(&mut self, li: usize, set: usize, out: &mut Vec<Victim>) {
        for off in 0..self.cfg.sectors_per_line {
            self.evict_sector(li, set, off, out);
        }
    }

    /// Free way if any, else the LRU line among those `eligible`.
    fn pick_victim(&self, set: usize, eligible: impl Fn(&Line) -> bool) -> Option<usize> {
        let base = set * self.cfg.ways;
        let ways = base..base + self.cfg.ways;
        if let Some(li) = ways.clone().find(|&li| self.lines[li].n_valid == 0) {
            return Some(li);
        }
        ways.filter(|&li| eligible(&self.lines[li])).min_by_key(|&li| self.lines[li].stamp)
    }

    fn access_plain(&mut self, p: Parts, write: bool) -> AccessOutcome {
        let base = p.set * self.cfg.ways;
        let hit_line =
            (base..base + self.cfg.ways).find(|&li| self.lines[li].n_valid > 0 && self.lines[li].tag == p.tag);
        let mut victims = Vec::new();
        let (result, li) = match hit_line {
            Some(li) if self.sectors[self.sector_idx(li, p.off)].valid => {
                self.touch(li, p, write);
                return AccessOutcome { result: AccessResult::Hit, victims, fill: None, search_cycles: 0 };
            }
            Some(li) => (AccessResult::SectorMiss, li),
            None => {
                let li = self.pick_victim(p.set, |_| true).expect("set has ways");
                self.evict_line(li, p.set, &mut victims);
                self.lines[li].tag = p.tag;
                (AccessResult::LineMiss, li)
            }
        };
        let fill = self.fill_sector(li, p, write);
        AccessOutcome { result, victims, fill: Some(fill), search_cycles: 0 }
    }

    fn access_piccolo(&mut self, p: Parts, write: bool) -> AccessOutcome {
        let base = p.set * self.cfg.ways;
        let mut same: Vec<usize> = (base..base + self.cfg.ways)
            .filter(|&li| self.lines[li].n_valid > 0 && self.lines[li].tag == p.tag)
            .collect();
        same.sort_unstable_by_key(|&li| std::cmp::Reverse(self.lines[li].stamp));

        for (i, &li) in same.iter().enumerate() {
            let s = self.sectors[self.sector_idx(li, p.off)];
            if s.valid && s.fg == p.fg {
                self.touch(li, p, write);
                return AccessOutcome {
                    result: AccessResult::Hit,
                    victims: Vec::new(),
                    fill: None,
                    search_cycles: i as u32 + 1,
                };
            }
        }
        let search_cycles = same.len() as u32;
        let (alloc, over) = self.alloc_for(p.tag);
        self.stats.oversubscribed_misses += u64::from(over);
        let mut victims = Vec::new();

        // an empty slot at this offset in a line we already own
        if let Some(&li) = same.iter().find(|&&li| !self.sectors[self.sector_idx(li, p.off)].valid) {
            let fill = self.fill_sector(li, p, write);
            return AccessOutcome { result: AccessResult::SectorMiss, victims, fill: Some(fill), search_cycles };
        }
        if same.len() < alloc {
            let tag = p.tag;
            if let Some(li) = self.pick_victim(p.set, |l| l.tag != tag) {
                self.evict_line(li, p.set, &mut victims);
                self.lines[li].tag = p.tag;
                let fill = self.fill_sector(li, p, write);
                return AccessOutcome { result: AccessResult::LineMiss, victims, fill: Some(fill), search_cycles };
            }
        }
        // the tag is at its allocation: replace the sector in its LRU line
        let li = match same.last() {
            Some(&li) => li,
            None => {
                // zero-way tag with every way held by other tags
                let li = self.pick_victim(p.set, |_| true).expect("set has ways");
                self.evict_line(li, p.set, &mut victims);
                self.lines[li].tag = p.tag;
                let fill = self.fill_sector(li, p, write);
                return AccessOutcome { result: AccessResult::LineMiss, victims, fill: Some(fill), search_cycles };
            }
        };
        self.evict_sector(li, p.set, p.off, &mut victims);
        let fill = self.fill_sector(li, p, write);
        AccessOutcome { result: AccessResult::SectorMiss, victims, fill: Some(fill), search_cycles }
    }

    /// Empties the cache, returning every valid block (dirty or not).
    pub fn invalidate_all(&mut self) -> Vec<Victim> {
        let mut out = Vec::new();
        for li in 0..self.lines.len() {
            if self.lines[li].n_valid > 0 {
                let set = li / self.cfg.ways;
                self.evict_line(li, set, &mut out);
            }
        }
        out
    }

    pub fn valid_bytes(&self) -> u64 {
        self.lines.iter().map(|l| l.n_valid as u64).sum::<u64>() * self.cfg.sector_bytes()
    }

    /// Valid lines holding `tag` in `set`.
    pub fn lines_with_tag(&self, set: usize, tag: u64) -> usize {
        let base = set * self.cfg.ways;
        self.lines[base..base + self.cfg.ways].iter().filter(|l| l.n_valid > 0 && l.tag == tag).count()
    }

    /// Valid sectors ordered by (set, way, sector).
    pub fn dump(&self) -> Vec<SectorState> {
        let mut out = Vec::new();
        for (li, line) in self.lines.iter().enumerate() {
            for off in 0..self.cfg.sectors_per_line {
                let s = &self.sectors[self.sector_idx(li, off)];
                if s.valid {
                    out.push(SectorState {
                        set: li / self.cfg.ways,
                        way: li % self.cfg.ways,
                        sector: off,
                        tag: line.tag,
                        fg_tag: s.fg,
                        dirty: s.dirty,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB4: u64 = 4 << 20;

    #[test]
    fn default_geometries() {
        let l8 = CacheConfig::new(CacheModel::Line8, MB4);
        assert_eq!(l8.n_lines(), 512 * 1024);
        assert_eq!(l8.sets(), 1 << 16);
        assert_eq!(l8.tag_bits(), 29);
        let pc = CacheConfig::new(CacheModel::Piccolo, MB4);
        assert_eq!(pc.sets(), 1 << 12);
        assert_eq!(pc.tag_bits(), 21);
        for m in CacheModel::ALL {
            CacheConfig::new(m, MB4).validate().unwrap();
        }
    }

    #[test]
    fn tag_overhead_arithmetic() {
        let l8 = CacheConfig::new(CacheModel::Line8, MB4).metadata_bits();
        assert_eq!(l8, 29 * 512 * 1024);
        let pc = CacheConfig::new(CacheModel::Piccolo, MB4).metadata_bits();
        assert_eq!(pc, 32768 * (21 + 16 * 8));
        assert!(pc * 2 < l8);
    }

    #[test]
    fn piccolo_address_split_round_trips() {
        let cfg = CacheConfig::new(CacheModel::Piccolo, MB4);
        let l = cfg.layout();
        let addr = 0x0000_1234_5678_9ab8u64;
        let p = l.split(addr);
        assert_eq!(p.word, 0);
        assert_eq!(l.join(p.tag, p.fg, p.set, p.off), addr);
        // neighbouring 8B words of one 128B block share a set, differ in offset
        let q = l.split(addr + 8);
        assert_eq!((q.set, q.tag, q.fg), (p.set, p.tag, p.fg));
    }

    #[test]
    fn second_access_hits_in_every_model() {
        for m in CacheModel::ALL {
            let mut c = Cache::new(CacheConfig::new(m, 64 * 1024)).unwrap();
            assert_ne!(c.access(0x1238, false).unwrap().result, AccessResult::Hit);
            assert_eq!(c.access(0x1238, true).unwrap().result, AccessResult::Hit, "{m}");
            assert!(c.contains(0x1238));
        }
    }

    #[test]
    fn misaligned_is_error() {
        let mut c = Cache::new(CacheConfig::new(CacheModel::Piccolo, 64 * 1024)).unwrap();
        assert!(matches!(c.access(0x1003, false), Err(Error::Alignment { .. })));
        assert!(matches!(c.access(1 << 50, false), Err(Error::Range(_))));
    }

    #[test]
    fn conventional_fills_whole_line() {
        let mut c = Cache::new(CacheConfig::new(CacheModel::Conventional64, 64 * 1024)).unwrap();
        let o = c.access(0x1008, false).unwrap();
        assert_eq!(o.fill, Some(Fill { addr: 0x1000, bytes: 64 }));
        assert_eq!(c.access(0x1030, false).unwrap().result, AccessResult::Hit);
    }

    #[test]
    fn partition_splits() {
        let p = configure_partition(&[7, 3], 8).unwrap();
        assert_eq!(p.alloc.values().copied().collect::<Vec<_>>(), vec![4, 4]);
        assert_eq!(configure_partition(&[1], 8).unwrap().alloc[&1], 8);
        let p = configure_partition(&[1, 2, 3], 8).unwrap();
        assert_eq!(p.alloc.values().copied().collect::<Vec<_>>(), vec![3, 3, 2]);
        assert!(!p.oversubscribed);
        assert!(configure_partition(&(0..9).collect::<Vec<_>>(), 8).unwrap().oversubscribed);
        assert!(configure_partition(&[], 8).is_err());
    }

    #[test]
    fn useful_bytes_count_touched_words() {
        let mut c = Cache::new(CacheConfig::new(CacheModel::Conventional64, 64 * 1024)).unwrap();
        c.access(0x40, false).unwrap();
        c.access(0x48, true).unwrap();
        let v = c.invalidate_all();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].touched_bytes, 16);
        assert!(v[0].dirty);
        assert_eq!(c.stats.bytes_useful, 16);
        assert_eq!(c.stats.bytes_filled, 64);
        assert_eq!(c.valid_bytes(), 0);
    }
}
