//! Physical address mapping, 64B interleaved:
//!
//! ```text
//! [row | col_hi | rank | bank | channel | col_lo(burst) | byte(3)]
//! ```
//!
//! Consecutive bursts rotate over channels, then banks, then ranks, so a
//! sequential stream spreads over every bank while each bank stays inside one
//! open row. `col_lo ++ col_hi` is the 8B word index within the row.

use serde::{Deserialize, Serialize};

use super::DramConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DecodedAddr {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u64,
    /// 8B word index within the row
    pub word: u32,
}

impl DecodedAddr {
    pub fn row_key(&self) -> RowKey {
        RowKey { channel: self.channel, rank: self.rank, bank: self.bank, row: self.row }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AddrMap {
    lo_bits: u32,
    ch_bits: u32,
    bank_bits: u32,
    rank_bits: u32,
    hi_bits: u32,
    capacity: u64,
    data_rows: u64,
}

fn log2(x: u64) -> u32 {
    x.trailing_zeros()
}

impl AddrMap {
    pub fn new(cfg: &DramConfig) -> Self {
        let words_per_burst = cfg.burst_bytes / 8;
        AddrMap {
            lo_bits: log2(words_per_burst),
            ch_bits: log2(cfg.channels as u64),
            bank_bits: log2(cfg.banks_per_rank as u64),
            rank_bits: log2(cfg.ranks as u64),
            hi_bits: log2(cfg.cols_per_row()),
            capacity: cfg.capacity(),
            data_rows: cfg.data_rows(),
        }
    }

    /// Bytes covered by one row index across all banks.
    pub fn stripe_bytes(&self) -> u64 {
        1 << (3 + self.lo_bits + self.ch_bits + self.bank_bits + self.rank_bits + self.hi_bits)
    }

    pub fn decode(&self, addr: u64) -> Result<DecodedAddr> {
        if addr >= self.capacity {
            return Err(Error::Range(format!("address {addr:#x} beyond DRAM capacity {:#x}", self.capacity)));
        }
        let mut a = addr >> 3;
        let mut take = |b: u32| {
            let v = a & ((1u64 << b) - 1);
            a >>= b;
            v
        };
        let lo = take(self.lo_bits);
        let channel = take(self.ch_bits) as u32;
        let bank = take(self.bank_bits) as u32;
        let rank = take(self.rank_bits) as u32;
        let hi = take(self.hi_bits);
        let row = a;
        Ok(DecodedAddr { channel, rank, bank, row, word: ((hi << self.lo_bits) | lo) as u32 })
    }

    pub fn encode(&self, d: &DecodedAddr) -> Result<u64> {
        let words = 1u64 << (self.lo_bits + self.hi_bits);
        if d.row >= self.data_rows
            || d.word as u64 >= words
            || d.channel >= 1 << self.ch_bits
            || d.bank >= 1 << self.bank_bits
            || d.rank >= 1 << self.rank_bits
        {
            return Err(Error::Range(format!("{d:?} outside the DRAM geometry")));
        }
        let lo = d.word as u64 & ((1 << self.lo_bits) - 1);
        let hi = d.word as u64 >> self.lo_bits;
        let mut a = d.row;
        for (v, b) in [
            (hi, self.hi_bits),
            (d.rank as u64, self.rank_bits),
            (d.bank as u64, self.bank_bits),
            (d.channel as u64, self.ch_bits),
            (lo, self.lo_bits),
        ] {
            a = (a << b) | v;
        }
        Ok(a << 3)
    }

    /// Address of word `word` in the row named by `key`.
    pub fn word_addr(&self, key: RowKey, word: u32) -> Result<u64> {
        self.encode(&DecodedAddr { channel: key.channel, rank: key.rank, bank: key.bank, row: key.row, word })
    }
}
