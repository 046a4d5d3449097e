//! A plain recency-list cache model that decodes addresses with integer
//! division instead of bit fields.

use graphfim::cache::{configure_partition, AccessResult, Cache, CacheConfig, CacheModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
struct RefLine {
    tag: u64,
    /// per slot: (fg, sector base address, dirty)
    slots: Vec<Option<(u64, u64, bool)>>,
}

struct RefCache {
    cfg: CacheConfig,
    /// per set, most recent first
    sets: Vec<Vec<RefLine>>,
    alloc: Option<std::collections::BTreeMap<u64, usize>>,
}

#[derive(Debug, PartialEq, Eq)]
struct Event {
    result: AccessResult,
    victims: Vec<(u64, bool)>,
    fill: Option<u64>,
}

impl RefCache {
    fn new(cfg: CacheConfig) -> Self {
        let n_sets = (cfg.capacity / cfg.line_bytes) as usize / cfg.ways;
        RefCache { cfg, sets: vec![Vec::new(); n_sets], alloc: None }
    }

    /// (tag, fg, set, slot, sector base)
    fn decode(&self, a: u64) -> (u64, u64, usize, usize, u64) {
        let sets = self.sets.len() as u64;
        let sector = self.cfg.line_bytes / self.cfg.sectors_per_line as u64;
        let slot = (a / sector) % self.cfg.sectors_per_line as u64;
        let line = a / self.cfg.line_bytes;
        let set = line % sets;
        let base = a / sector * sector;
        if self.cfg.model == CacheModel::Piccolo {
            let fgs = 1u64 << self.cfg.fg_tag_bits;
            let fg = (line / sets) % fgs;
            (line / sets / fgs, fg, set as usize, slot as usize, base)
        } else {
            (line / sets, 0, set as usize, slot as usize, base)
        }
    }

    fn new_line(&self, tag: u64) -> RefLine {
        RefLine { tag, slots: vec![None; self.cfg.sectors_per_line] }
    }

    fn spill(l: &RefLine, out: &mut Vec<(u64, bool)>) {
        out.extend(l.slots.iter().flatten().map(|&(_, a, d)| (a, d)));
    }

    fn access(&mut self, a: u64, write: bool) -> Event {
        let (tag, fg, si, slot, base) = self.decode(a);
        let ways = self.cfg.ways;
        let piccolo = self.cfg.model == CacheModel::Piccolo;
        let alloc = match self.alloc.as_ref().and_then(|m| m.get(&tag)) {
            Some(0) => 1,
            Some(&n) => n.min(ways),
            None => ways,
        };
        let set = &mut self.sets[si];
        let mut victims = Vec::new();
        let fresh = Some((fg, base, write));

        let same: Vec<usize> = (0..set.len()).filter(|&i| set[i].tag == tag).collect();
        if let Some(&i) = same.iter().find(|&&i| matches!(set[i].slots[slot], Some((f, _, _)) if f == fg)) {
            let mut l = set.remove(i);
            if let Some(s) = &mut l.slots[slot] {
                s.2 |= write;
            }
            set.insert(0, l);
            return Event { result: AccessResult::Hit, victims, fill: None };
        }
        // sector miss into an owned line with a free slot
        if let Some(&i) = same.iter().find(|&&i| set[i].slots[slot].is_none()) {
            let mut l = set.remove(i);
            l.slots[slot] = fresh;
            set.insert(0, l);
            return Event { result: AccessResult::SectorMiss, victims, fill: Some(base) };
        }
        let new_line_ok = if piccolo { same.len() < alloc } else { same.is_empty() };
        if new_line_ok {
            let victim = if set.len() < ways { None } else { set.iter().rposition(|l| l.tag != tag) };
            if set.len() < ways || victim.is_some() {
                if let Some(v) = victim {
                    let old = set.remove(v);
                    Self::spill(&old, &mut victims);
                }
                let mut l = self.new_line(tag);
                l.slots[slot] = fresh;
                self.sets[si].insert(0, l);
                return Event { result: AccessResult::LineMiss, victims, fill: Some(base) };
            }
        }
        if let Some(&i) = same.last() {
            let mut l = set.remove(i);
            let (_, va, vd) = l.slots[slot].take().unwrap();
            victims.push((va, vd));
            l.slots[slot] = fresh;
            set.insert(0, l);
            return Event { result: AccessResult::SectorMiss, victims, fill: Some(base) };
        }
        let old = set.pop().unwrap();
        Self::spill(&old, &mut victims);
        let mut l = self.new_line(tag);
        l.slots[slot] = fresh;
        self.sets[si].insert(0, l);
        Event { result: AccessResult::LineMiss, victims, fill: Some(base) }
    }
}

pub fn run_trace(cfg: CacheConfig, seed: u64, n: usize, partition: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dut = Cache::new(cfg).unwrap();
    let mut r = RefCache::new(cfg);
    if partition {
        let tags: Vec<u64> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0..16)).collect();
        let p = configure_partition(&tags, cfg.ways).unwrap();
        r.alloc = Some(p.alloc.clone());
        dut.set_partition(p);
    }
    let span = 4u64 << 20;
    let mut hot = 0u64;
    for i in 0..n {
        // a drifting hot window plus uniform noise
        if i % 512 == 0 {
            hot = rng.gen_range(0..span / 8) * 8;
        }
        let a = if rng.gen_bool(0.6) {
            (hot + rng.gen_range(0..8192u64) * 8) % span
        } else {
            rng.gen_range(0..span / 8) * 8
        };
        let w = rng.gen_bool(0.3);
        let got = dut.access(a, w).unwrap();
        let mut victims: Vec<(u64, bool)> = got.victims.iter().map(|v| (v.addr, v.dirty)).collect();
        victims.sort_unstable();
        let got = Event { result: got.result, victims, fill: got.fill.map(|f| f.addr) };
        let mut want = r.access(a, w);
        want.victims.sort_unstable();
        assert_eq!(got, want, "{:?} request {i} addr {a:#x} write {w}", cfg.model);
    }
    let st = &dut.stats;
    assert!(st.hits > 0 && st.line_misses > 0 && st.evicted_sectors > 0 && st.dirty_evictions > 0, "{st:?}");
    if cfg.sectors_per_line > 1 {
        assert!(st.sector_misses > 0);
    }
}

pub fn scenario(model: CacheModel) -> (Vec<Vec<u64>>, Cache) {
    // one set of four 256B lines, 32 sectors each
    let cfg = CacheConfig {
        capacity: 1024,
        ways: 4,
        model,
        line_bytes: 256,
        sectors_per_line: 32,
        fg_tag_bits: 8,
        address_bits: 48,
    };
    let mut c = Cache::new(cfg).unwrap();
    for k in 0..4u64 {
        c.access(k * 256, false).unwrap();
        c.access(k * 256 + 8, false).unwrap();
    }
    let a = c.access(4 * 256, false).unwrap();
    let b = c.access(4 * 256 + 40, false).unwrap();
    (vec![a.victims.iter().map(|v| v.addr).collect(), b.victims.iter().map(|v| v.addr).collect()], c)
}
