//! Strided-read microbenchmark: plain 64B reads against in-bank gathers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dram::{Command, Controller, DramConfig, DramStats, FimOp, Request, RowKey};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Natural address order: each bank's words sit in its currently open row.
    SingleRow,
    /// Every group of eight words lands in a different row of its bank.
    MultiRow,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::SingleRow => "single-row",
            Layout::MultiRow => "multi-row",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-row" | "single" => Ok(Layout::SingleRow),
            "multi-row" | "multi" => Ok(Layout::MultiRow),
            _ => Err(Error::Argument(format!("layout `{s}` (valid: single-row, multi-row)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideResult {
    pub stride: u64,
    pub layout: Layout,
    pub words: u64,
    pub baseline_cycles: u64,
    pub fim_cycles: u64,
    pub baseline_bursts: u64,
    pub fim_bursts: u64,
    pub speedup: f64,
}

/// Requests kept in flight by the host.
pub const HOST_WINDOW: usize = 256;

/// Replays `reqs` in order with at most `window` outstanding; returns the
/// cycle at which the last one completes.
pub fn run_windowed(ctl: &mut Controller, reqs: Vec<Request>, window: usize) -> Result<u64> {
    let mut it = reqs.into_iter();
    let mut inflight = 0;
    let mut last = ctl.now();
    loop {
        while inflight < window {
            match it.next() {
                Some(r) => {
                    ctl.submit(r)?;
                    inflight += 1;
                }
                None => break,
            }
        }
        if inflight == 0 {
            return Ok(last);
        }
        let done = ctl.advance()?;
        if done.is_empty() {
            return Err(Error::Protocol("controller idle with requests in flight".into()));
        }
        inflight -= done.len();
        last = done.iter().map(|d| d.time).max().unwrap_or(last);
    }
}

/// The word set as (row, word-in-row) groups of at most eight, in issue order.
fn groups(cfg: &DramConfig, stride: u64, total_bytes: u64, layout: Layout) -> Result<Vec<(RowKey, Vec<u16>)>> {
    let ctl = Controller::new(*cfg)?;
    let map = ctl.addr_map();
    let n_words = total_bytes / 8 / stride;
    match layout {
        Layout::SingleRow => {
            // rows in order of first appearance, words in address order
            let mut order: Vec<RowKey> = Vec::new();
            let mut by_row: BTreeMap<RowKey, Vec<u16>> = BTreeMap::new();
            for i in 0..n_words {
                let d = map.decode(i * stride * 8)?;
                let e = by_row.entry(d.row_key()).or_insert_with(|| {
                    order.push(d.row_key());
                    Vec::new()
                });
                e.push(d.word as u16);
            }
            let mut out = Vec::new();
            // interleave rows so consecutive groups go to different banks
            let chunks: Vec<Vec<Vec<u16>>> =
                order.iter().map(|k| by_row[k].chunks(8).map(|c| c.to_vec()).collect()).collect();
            let stripes = order.chunks(cfg.banks());
            let mut ci = 0;
            for stripe in stripes {
                let rows = &chunks[ci..ci + stripe.len()];
                let depth = rows.iter().map(|r| r.len()).max().unwrap_or(0);
                for j in 0..depth {
                    for (k, r) in stripe.iter().zip(rows) {
                        if let Some(g) = r.get(j) {
                            out.push((*k, g.clone()));
                        }
                    }
                }
                ci += stripe.len();
            }
            Ok(out)
        }
        Layout::MultiRow => {
            let banks = cfg.banks() as u64;
            let wpr = cfg.words_per_row();
            let n_groups = n_words.div_ceil(8);
            let mut out = Vec::new();
            for g in 0..n_groups {
                let b = g % banks;
                let row = g / banks;
                if row >= cfg.data_rows() {
                    return Err(Error::Argument("multi-row layout exceeds the DRAM rows".into()));
                }
                let key = RowKey {
                    channel: (b % cfg.channels as u64) as u32,
                    bank: ((b / cfg.channels as u64) % cfg.banks_per_rank as u64) as u32,
                    rank: (b / (cfg.channels * cfg.banks_per_rank) as u64) as u32,
                    row,
                };
                let n = (n_words - g * 8).min(8);
                let words = (0..n).map(|j| ((j * stride) % wpr) as u16).collect();
                out.push((key, words));
            }
            Ok(out)
        }
    }
}

fn run(cfg: &DramConfig, reqs: Vec<Request>) -> Result<(u64, DramStats, Vec<Command>)> {
    let mut ctl = Controller::new(*cfg)?.with_trace();
    let cycles = run_windowed(&mut ctl, reqs, HOST_WINDOW)?;
    let stats = ctl.stats.clone();
    Ok((cycles, stats, ctl.take_trace()))
}

/// Runs both variants; also returns their command traces for validation.
pub fn microbench_stride_traced(
    cfg: &DramConfig,
    stride: u64,
    total_bytes: u64,
    layout: Layout,
) -> Result<(StrideResult, Vec<Command>, Vec<Command>)> {
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    let cfg = DramConfig { fim_enabled: true, ..*cfg };
    let map = *Controller::new(cfg)?.addr_map();
    let gs = groups(&cfg, stride, total_bytes, layout)?;
    let wpb = (cfg.burst_bytes / 8) as u16;

    let mut base = Vec::new();
    let mut seen = BTreeSet::new();
    for (key, words) in &gs {
        for &w in words {
            let blk = w / wpb;
            if seen.insert((*key, blk)) {
                base.push(map.word_addr(*key, (blk * wpb) as u32)?);
            }
        }
    }
    let base: Vec<Request> = base.into_iter().enumerate().map(|(i, a)| Request::read(i as u64, a)).collect();
    let fim: Vec<Request> =
        gs.iter().enumerate().map(|(i, (k, w))| Request::fim(i as u64, FimOp::gather(*k, w.clone()))).collect();
    let words = gs.iter().map(|(_, w)| w.len() as u64).sum();
    let (bc, bs, bt) = run(&cfg, base)?;
    let (fc, fs, ft) = run(&cfg, fim)?;
    Ok((
        StrideResult {
            stride,
            layout,
            words,
            baseline_cycles: bc,
            fim_cycles: fc,
            baseline_bursts: bs.bursts,
            fim_bursts: fs.bursts,
            speedup: bc as f64 / fc as f64,
        },
        bt,
        ft,
    ))
}

pub fn microbench_stride(cfg: &DramConfig, stride: u64, total_bytes: u64, layout: Layout) -> Result<StrideResult> {
    Ok(microbench_stride_traced(cfg, stride, total_bytes, layout)?.0)
}
