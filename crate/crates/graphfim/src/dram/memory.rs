use std::collections::HashMap;

use super::RowKey;

/// Sparse word-addressed DRAM contents; untouched rows read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryImage {
    words_per_row: usize,
    rows: HashMap<RowKey, Box<[u64]>>,
}

impl MemoryImage {
    pub fn new(words_per_row: usize) -> Self {
        MemoryImage { words_per_row, rows: HashMap::new() }
    }

    pub fn read(&self, key: RowKey, word: u32) -> u64 {
        self.rows.get(&key).map_or(0, |r| r[word as usize])
    }

    pub fn write(&mut self, key: RowKey, word: u32, val: u64) {
        let n = self.words_per_row;
        self.rows.entry(key).or_insert_with(|| vec![0; n].into_boxed_slice())[word as usize] = val;
    }

    /// Non-zero words as a sorted list, for comparing two images.
    pub fn nonzero(&self) -> Vec<(RowKey, u32, u64)> {
        let mut v: Vec<_> = self
            .rows
            .iter()
            .flat_map(|(&k, r)| r.iter().enumerate().filter(|(_, &x)| x != 0).map(move |(i, &x)| (k, i as u32, x)))
            .collect();
        v.sort_unstable();
        v
    }
}
