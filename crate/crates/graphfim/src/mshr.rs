//! Row-collecting MSHR. Fine-grained misses that fall into the same DRAM row
//! are parked in one entry until eight of them can travel as a single
//! in-bank gather (reads) or scatter (write-backs).

use serde::{Deserialize, Serialize};

use crate::dram::{AddrMap, FimOp, RowKey, FIM_WORDS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MshrConfig {
    pub entries: usize,
    /// Offsets per gather group and per scatter group.
    pub offsets_per_group: usize,
    /// Waiting requestors per gather offset before back-pressure.
    pub subentry_capacity: usize,
    pub lookup_cycles: u64,
}

impl Default for MshrConfig {
    fn default() -> Self {
        MshrConfig { entries: 4096, offsets_per_group: FIM_WORDS, subentry_capacity: 8, lookup_cycles: 1 }
    }
}

impl MshrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entries == 0 {
            return Err(Error::config("mshr.entries", "must be at least 1"));
        }
        if self.offsets_per_group != FIM_WORDS {
            return Err(Error::config(
                "mshr.offsets_per_group",
                format!("must equal the FIM word count {FIM_WORDS}, got {}", self.offsets_per_group),
            ));
        }
        if self.subentry_capacity == 0 {
            return Err(Error::config("mshr.subentry_capacity", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MshrRequest {
    Read { addr: u64, requestor: u32 },
    Write { addr: u64, data: u64 },
}

impl MshrRequest {
    pub fn addr(&self) -> u64 {
        match *self {
            MshrRequest::Read { addr, .. } | MshrRequest::Write { addr, .. } => addr,
        }
    }
}

/// A FIM operation leaving the MSHR. For gathers, `waiters[i]` are the
/// requestors to wake with the word at `op.offsets[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flush {
    pub op: FimOp,
    pub waiters: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectAction {
    /// RAW: the read is answered from buffered scatter data.
    ServeFromWriteback(u64),
    MergeSubentry,
    InsertGather,
    InsertScatter,
    /// WAW: buffered data replaced in place.
    OverwriteScatter,
    FlushGather(Flush),
    FlushScatter(Flush),
    /// Conflict or drain eviction, possibly with partial groups.
    EvictEntry(Vec<Flush>),
    /// Subentry list full; retry after the row's gather is flushed.
    Stall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushReason {
    Conflict,
    Drain,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MshrStats {
    pub collections: u64,
    pub full_flushes: u64,
    pub partial_flushes: u64,
    pub forwardings: u64,
    pub merges: u64,
    pub stalls: u64,
    pub conflicts: u64,
}

#[derive(Debug, Clone)]
pub struct RowEntry {
    pub key: RowKey,
    pub ga: Vec<(u16, Vec<u32>)>,
    pub sc: Vec<(u16, u64)>,
}

impl RowEntry {
    fn new(key: RowKey) -> Self {
        RowEntry { key, ga: Vec::new(), sc: Vec::new() }
    }

    fn is_empty(&self) -> bool {
        self.ga.is_empty() && self.sc.is_empty()
    }

    fn take_gather(&mut self) -> Option<Flush> {
        if self.ga.is_empty() {
            return None;
        }
        let (offs, waiters): (Vec<u16>, Vec<Vec<u32>>) = std::mem::take(&mut self.ga).into_iter().unzip();
        Some(Flush { op: FimOp::gather(self.key, offs), waiters })
    }

    fn take_scatter(&mut self) -> Option<Flush> {
        if self.sc.is_empty() {
            return None;
        }
        let (offs, data): (Vec<u16>, Vec<u64>) = std::mem::take(&mut self.sc).into_iter().unzip();
        Some(Flush { op: FimOp::scatter(self.key, offs, data), waiters: Vec::new() })
    }
}

pub struct Mshr {
    cfg: MshrConfig,
    map: AddrMap,
    slots: Vec<Option<RowEntry>>,
    index_bits: u32,
    pub stats: MshrStats,
}

impl Mshr {
    pub fn new(cfg: MshrConfig, map: AddrMap) -> Result<Self> {
        cfg.validate()?;
        let index_bits = usize::BITS - (cfg.entries - 1).leading_zeros();
        Ok(Mshr {
            cfg,
            map,
            slots: vec![None; cfg.entries],
            index_bits: index_bits.max(1),
            stats: MshrStats::default(),
        })
    }

    pub fn config(&self) -> &MshrConfig {
        &self.cfg
    }

    /// Direct-mapped slot: the row key XOR-folded down to the index width.
    pub fn index_of(&self, key: RowKey) -> usize {
        let mut x = key.row << 24 | (key.channel as u64) << 16 | (key.rank as u64) << 8 | key.bank as u64;
        let mask = (1u64 << self.index_bits) - 1;
        let mut idx = 0;
        while x != 0 {
            idx ^= x & mask;
            x >>= self.index_bits;
        }
        (idx % self.cfg.entries as u64) as usize
    }

    pub fn resident(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn entry(&self, key: RowKey) -> Option<&RowEntry> {
        self.slots[self.index_of(key)].as_ref().filter(|e| e.key == key)
    }

    /// A cache miss plus the write-back it displaced. The write-back is
    /// collected first.
    pub fn handle(&mut self, miss: Option<MshrRequest>, writeback: Option<(u64, u64)>) -> Result<Vec<CollectAction>> {
        let mut out = Vec::new();
        if let Some((addr, data)) = writeback {
            out.extend(self.access(MshrRequest::Write { addr, data })?);
        }
        if let Some(m) = miss {
            out.extend(self.access(m)?);
        }
        Ok(out)
    }

    pub fn access(&mut self, req: MshrRequest) -> Result<Vec<CollectAction>> {
        let addr = req.addr();
        if !addr.is_multiple_of(8) {
            return Err(Error::Alignment { addr, size: 8 });
        }
        let d = self.map.decode(addr)?;
        let key = d.row_key();
        let off = d.word as u16;
        let idx = self.index_of(key);
        let mut out = Vec::new();

        if self.slots[idx].as_ref().is_some_and(|e| e.key != key) {
            self.stats.conflicts += 1;
            let old = self.slots[idx].take().expect("checked");
            out.push(CollectAction::EvictEntry(self.flush(old, FlushReason::Conflict)));
        }
        let e = self.slots[idx].get_or_insert_with(|| RowEntry::new(key));
        let full = self.cfg.offsets_per_group;

        match req {
            MshrRequest::Read { requestor, .. } => {
                if let Some(&(_, v)) = e.sc.iter().find(|s| s.0 == off) {
                    self.stats.forwardings += 1;
                    out.push(CollectAction::ServeFromWriteback(v));
                } else if let Some(g) = e.ga.iter_mut().find(|g| g.0 == off) {
                    if g.1.len() >= self.cfg.subentry_capacity {
                        self.stats.stalls += 1;
                        out.push(CollectAction::Stall);
                    } else {
                        g.1.push(requestor);
                        self.stats.merges += 1;
                        out.push(CollectAction::MergeSubentry);
                    }
                } else {
                    e.ga.push((off, vec![requestor]));
                    self.stats.collections += 1;
                    out.push(CollectAction::InsertGather);
                    if e.ga.len() == full {
                        let f = e.take_gather().expect("non-empty");
                        self.stats.full_flushes += 1;
                        out.push(CollectAction::FlushGather(f));
                    }
                }
            }
            MshrRequest::Write { data, .. } => {
                if let Some(s) = e.sc.iter_mut().find(|s| s.0 == off) {
                    s.1 = data;
                    out.push(CollectAction::OverwriteScatter);
                } else {
                    // pending reads of this word must see the old value, so
                    // their gather leaves before the new data is buffered
                    if e.ga.iter().any(|g| g.0 == off) {
                        let f = e.take_gather().expect("non-empty");
                        if f.op.is_partial() {
                            self.stats.partial_flushes += 1;
                        } else {
                            self.stats.full_flushes += 1;
                        }
                        out.push(CollectAction::FlushGather(f));
                    }
                    e.sc.push((off, data));
                    self.stats.collections += 1;
                    out.push(CollectAction::InsertScatter);
                    if e.sc.len() == full {
                        let f = e.take_scatter().expect("non-empty");
                        self.stats.full_flushes += 1;
                        out.push(CollectAction::FlushScatter(f));
                    }
                }
            }
        }
        if self.slots[idx].as_ref().is_some_and(RowEntry::is_empty) {
            self.slots[idx] = None;
        }
        Ok(out)
    }

    /// Empties one entry: the gather group first, then the scatter group.
    pub fn flush(&mut self, mut entry: RowEntry, _reason: FlushReason) -> Vec<Flush> {
        let fl: Vec<Flush> = [entry.take_gather(), entry.take_scatter()].into_iter().flatten().collect();
        for f in &fl {
            if f.op.is_partial() {
                self.stats.partial_flushes += 1;
            } else {
                self.stats.full_flushes += 1;
            }
        }
        fl
    }

    /// Pushes out whatever the entry for `addr`'s row holds, e.g. to relieve
    /// a stall.
    pub fn flush_row_of(&mut self, addr: u64) -> Result<Vec<Flush>> {
        let key = self.map.decode(addr)?.row_key();
        let idx = self.index_of(key);
        match self.slots[idx].take() {
            Some(e) if e.key == key => Ok(self.flush(e, FlushReason::Drain)),
            other => {
                self.slots[idx] = other;
                Ok(Vec::new())
            }
        }
    }

    /// Flushes every resident entry in slot order.
    pub fn drain(&mut self) -> Vec<Flush> {
        let mut out = Vec::new();
        for i in 0..self.slots.len() {
            if let Some(e) = self.slots[i].take() {
                out.extend(self.flush(e, FlushReason::Drain));
            }
        }
        out
    }
}
