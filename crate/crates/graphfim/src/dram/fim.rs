//! In-bank gather/scatter: the operation descriptor and the per-bank
//! offset/data buffers with their internal controller.

use serde::{Deserialize, Serialize};

use super::{MemoryImage, RowKey};
use crate::{Error, Result};

pub const FIM_WORDS: usize = 8;
/// Marks unused scatter slots; the internal controller stops there.
pub const SCATTER_SENTINEL: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FimKind {
    Gather,
    Scatter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FimOp {
    pub kind: FimKind,
    pub target: RowKey,
    /// 1..=8 distinct word offsets within the row.
    pub offsets: Vec<u16>,
    /// Scatter payload, one word per offset. Empty for gathers.
    pub data: Vec<u64>,
}

impl FimOp {
    pub fn gather(target: RowKey, offsets: Vec<u16>) -> Self {
        FimOp { kind: FimKind::Gather, target, offsets, data: Vec::new() }
    }

    pub fn scatter(target: RowKey, offsets: Vec<u16>, data: Vec<u64>) -> Self {
        FimOp { kind: FimKind::Scatter, target, offsets, data }
    }

    pub fn validate(&self, words_per_row: u64) -> Result<()> {
        if self.offsets.is_empty() || self.offsets.len() > FIM_WORDS {
            return Err(Error::Argument(format!("FIM op needs 1..=8 offsets, got {}", self.offsets.len())));
        }
        if let Some(&o) = self.offsets.iter().find(|&&o| o as u64 >= words_per_row) {
            return Err(Error::Range(format!("offset {o} beyond a {words_per_row}-word row")));
        }
        let want = if self.kind == FimKind::Scatter { self.offsets.len() } else { 0 };
        if self.data.len() != want {
            return Err(Error::Argument("scatter data must match its offsets".into()));
        }
        Ok(())
    }

    pub fn is_partial(&self) -> bool {
        self.offsets.len() < FIM_WORDS
    }

    /// The eight offsets as shipped to the offset buffer. A short gather
    /// repeats its last offset; a short scatter ends at the sentinel.
    pub fn padded_offsets(&self) -> [u16; FIM_WORDS] {
        let pad = match self.kind {
            FimKind::Gather => *self.offsets.last().expect("validated op"),
            FimKind::Scatter => SCATTER_SENTINEL,
        };
        let mut out = [pad; FIM_WORDS];
        out[..self.offsets.len()].copy_from_slice(&self.offsets);
        out
    }

    /// Internal column accesses the bank performs.
    pub fn internal_cols(&self) -> u64 {
        match self.kind {
            FimKind::Gather => FIM_WORDS as u64,
            FimKind::Scatter => self.offsets.len() as u64,
        }
    }
}

/// Offset and data buffers of one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FimBuffers {
    pub offsets: [u16; FIM_WORDS],
    pub data: [u64; FIM_WORDS],
}

impl Default for FimBuffers {
    fn default() -> Self {
        FimBuffers { offsets: [SCATTER_SENTINEL; FIM_WORDS], data: [0; FIM_WORDS] }
    }
}

impl FimBuffers {
    /// Reads the eight offsets of the latched row into the data buffer.
    pub fn gather(&mut self, mem: &MemoryImage, row: RowKey) {
        for i in 0..FIM_WORDS {
            self.data[i] = mem.read(row, self.offsets[i] as u32);
        }
    }

    /// Writes the data buffer out, stopping at the first sentinel offset.
    pub fn scatter(&self, mem: &mut MemoryImage, row: RowKey) {
        for i in 0..FIM_WORDS {
            if self.offsets[i] == SCATTER_SENTINEL {
                break;
            }
            mem.write(row, self.offsets[i] as u32, self.data[i]);
        }
    }
}
