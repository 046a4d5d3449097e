//! Replays random miss streams through the MSHR against a scalar memory and
//! a brute-force count of the FIM operations the collection rules imply.

use std::collections::HashMap;

use graphfim::dram::{AddrMap, DramConfig, FimKind, MemoryImage, RowKey};
use graphfim::mshr::{CollectAction, Flush, Mshr, MshrConfig, MshrRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Slot {
    key: Option<RowKey>,
    ga: Vec<(u16, usize)>,
    sc: Vec<u16>,
}

impl Slot {
    fn clear(&mut self) -> u64 {
        let n = u64::from(!self.ga.is_empty()) + u64::from(!self.sc.is_empty());
        self.ga.clear();
        self.sc.clear();
        n
    }
}

/// Counts FIM ops without producing them.
struct BruteForce {
    slots: HashMap<usize, Slot>,
    cap: usize,
    ops: u64,
}

impl BruteForce {
    fn access(&mut self, idx: usize, key: RowKey, off: u16, write: bool) {
        let s = self.slots.entry(idx).or_default();
        if s.key != Some(key) {
            self.ops += s.clear();
            s.key = Some(key);
        }
        if write {
            if s.sc.contains(&off) {
                return;
            }
            if s.ga.iter().any(|g| g.0 == off) {
                self.ops += 1;
                s.ga.clear();
            }
            s.sc.push(off);
            if s.sc.len() == 8 {
                self.ops += 1;
                s.sc.clear();
            }
        } else if s.sc.contains(&off) {
        } else if let Some(g) = s.ga.iter_mut().find(|g| g.0 == off) {
            if g.1 < self.cap {
                g.1 += 1;
            } else {
                // stall: the row is flushed and the read retried
                self.ops += s.clear();
                s.ga.push((off, 1));
            }
        } else {
            s.ga.push((off, 1));
            if s.ga.len() == 8 {
                self.ops += 1;
                s.ga.clear();
            }
        }
    }

    fn drain(&mut self) {
        for s in self.slots.values_mut() {
            self.ops += s.clear();
        }
    }
}

struct Replay {
    mem: MemoryImage,
    /// value each read returned, by requestor
    got: HashMap<u32, u64>,
    ops: u64,
    gather_offsets: u64,
    scatter_offsets: u64,
}

impl Replay {
    fn apply(&mut self, f: &Flush) {
        self.ops += 1;
        let op = &f.op;
        match op.kind {
            FimKind::Gather => {
                self.gather_offsets += op.offsets.len() as u64;
                assert_eq!(op.offsets.len(), f.waiters.len());
                for (o, ws) in op.offsets.iter().zip(&f.waiters) {
                    let v = self.mem.read(op.target, *o as u32);
                    for w in ws {
                        assert!(self.got.insert(*w, v).is_none(), "requestor {w} woken twice");
                    }
                }
            }
            FimKind::Scatter => {
                self.scatter_offsets += op.offsets.len() as u64;
                for (o, d) in op.offsets.iter().zip(&op.data) {
                    self.mem.write(op.target, *o as u32, *d);
                }
            }
        }
        let mut seen = op.offsets.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), op.offsets.len(), "offset repeated inside one op");
    }
}

pub fn replay(seed: u64, n: usize, entries: usize, cap: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dcfg = DramConfig::default();
    let map = AddrMap::new(&dcfg);
    let cfg = MshrConfig { entries, subentry_capacity: cap, ..MshrConfig::default() };
    let mut m = Mshr::new(cfg, map).unwrap();
    let rows: Vec<RowKey> = (0..rng.gen_range(2..16))
        .map(|_| RowKey {
            channel: rng.gen_range(0..dcfg.channels as u32),
            rank: rng.gen_range(0..dcfg.ranks as u32),
            bank: rng.gen_range(0..dcfg.banks_per_rank as u32),
            row: rng.gen_range(0..64),
        })
        .collect();
    let span = rng.gen_range(4..40u16);

    let mut scalar: HashMap<(RowKey, u16), u64> = HashMap::new();
    let mut expect: HashMap<u32, u64> = HashMap::new();
    let mut r = Replay {
        mem: MemoryImage::new(dcfg.words_per_row() as usize),
        got: HashMap::new(),
        ops: 0,
        gather_offsets: 0,
        scatter_offsets: 0,
    };
    let mut bf = BruteForce { slots: HashMap::new(), cap, ops: 0 };
    let (mut inserted_g, mut inserted_s) = (0u64, 0u64);

    for i in 0..n {
        let key = rows[rng.gen_range(0..rows.len())];
        let off = rng.gen_range(0..span);
        let addr = map.word_addr(key, off as u32).unwrap();
        let write = rng.gen_bool(0.35);
        bf.access(m.index_of(key), key, off, write);
        let req = if write {
            let d = rng.gen::<u64>() | 1;
            scalar.insert((key, off), d);
            MshrRequest::Write { addr, data: d }
        } else {
            let id = i as u32;
            expect.insert(id, scalar.get(&(key, off)).copied().unwrap_or(0));
            MshrRequest::Read { addr, requestor: id }
        };
        let mut acts = m.access(req).unwrap();
        if acts.contains(&CollectAction::Stall) {
            for f in m.flush_row_of(addr).unwrap() {
                r.apply(&f);
            }
            acts = m.access(req).unwrap();
            assert!(!acts.contains(&CollectAction::Stall));
        }
        for a in acts {
            match a {
                CollectAction::ServeFromWriteback(v) => {
                    let MshrRequest::Read { requestor, .. } = req else { panic!("forward on a write") };
                    r.got.insert(requestor, v);
                }
                CollectAction::InsertGather => inserted_g += 1,
                CollectAction::InsertScatter => inserted_s += 1,
                CollectAction::FlushGather(f) | CollectAction::FlushScatter(f) => r.apply(&f),
                CollectAction::EvictEntry(fs) => fs.iter().for_each(|f| r.apply(f)),
                CollectAction::MergeSubentry | CollectAction::OverwriteScatter | CollectAction::Stall => {}
            }
        }
    }
    for f in m.drain() {
        r.apply(&f);
    }
    bf.drain();
    assert_eq!(m.resident(), 0);

    // every collected offset left in exactly one op
    assert_eq!(r.gather_offsets, inserted_g);
    assert_eq!(r.scatter_offsets, inserted_s);
    // every read answered once, with the latest value written before it
    assert_eq!(r.got, expect);
    assert_eq!(r.ops, bf.ops);
    let want: Vec<_> = scalar
        .iter()
        .filter(|(_, &v)| v != 0)
        .map(|(&(k, o), &v)| (k, o as u32, v))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    assert_eq!(r.mem.nonzero(), want);
}
