//! Memory layout of the graph arrays and the prefetcher's request streams.

use serde::{Deserialize, Serialize};

use crate::graph::{Tile, TiledGraph, VertexId};

pub const BLOCK: u64 = 64;
pub const PROP_BYTES: u64 = 8;
const REGION_ALIGN: u64 = 512 << 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stream {
    RowIndex,
    ColIndex,
    SeqProp,
    RandProp,
}

impl Stream {
    pub const ALL: [Stream; 4] = [Stream::RowIndex, Stream::ColIndex, Stream::SeqProp, Stream::RandProp];

    pub fn name(self) -> &'static str {
        match self {
            Stream::RowIndex => "row-index",
            Stream::ColIndex => "col-index",
            Stream::SeqProp => "seq-prop",
            Stream::RandProp => "rand-prop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRequest {
    pub address: u64,
    pub kind: MemKind,
    /// 8 or 64
    pub size: u64,
    pub stream: Stream,
    pub requestor: u32,
    pub issue_cycle: u64,
}

impl MemRequest {
    pub fn block(address: u64, kind: MemKind, stream: Stream) -> Self {
        debug_assert_eq!(address % BLOCK, 0);
        MemRequest { address, kind, size: BLOCK, stream, requestor: 0, issue_cycle: 0 }
    }
}

/// Base addresses of every array; each region starts on a 512KB boundary.
#[derive(Debug, Clone)]
pub struct Layout {
    pub row_index: Vec<u64>,
    pub col_index: Vec<u64>,
    pub v_prop: u64,
    pub v_temp: u64,
    pub frontier: u64,
    pub next_frontier: u64,
    /// bytes per column-index entry (4, or 8 with a packed weight)
    pub edge_bytes: u64,
    pub end: u64,
}

fn align(x: u64) -> u64 {
    x.div_ceil(REGION_ALIGN).max(1) * REGION_ALIGN
}

impl Layout {
    pub fn new(g: &TiledGraph, weighted: bool) -> Self {
        let n = g.n_vertices() as u64;
        let edge_bytes = if weighted { 8 } else { 4 };
        let mut at = 0;
        let mut row_index = Vec::new();
        for _ in &g.tiles {
            row_index.push(at);
            at += align((n + 1) * 8);
        }
        let mut col_index = Vec::new();
        for t in &g.tiles {
            col_index.push(at);
            at += align(t.n_edges() as u64 * edge_bytes);
        }
        let v_prop = at;
        at += align(n * PROP_BYTES);
        let v_temp = at;
        at += align(n * PROP_BYTES);
        let frontier = at;
        at += align(n.div_ceil(8));
        let next_frontier = at;
        at += align(n.div_ceil(8));
        Layout { row_index, col_index, v_prop, v_temp, frontier, next_frontier, edge_bytes, end: at }
    }

    pub fn v_prop_addr(&self, v: VertexId) -> u64 {
        self.v_prop + v as u64 * PROP_BYTES
    }

    pub fn v_temp_addr(&self, v: VertexId) -> u64 {
        self.v_temp + v as u64 * PROP_BYTES
    }
}

pub fn block_of(addr: u64) -> u64 {
    addr & !(BLOCK - 1)
}

/// Appends a 64B read of `addr`'s block unless it repeats the previous one
/// of the same stream.
pub(crate) struct BlockStream {
    last: Option<u64>,
    stream: Stream,
    kind: MemKind,
}

impl BlockStream {
    pub fn new(stream: Stream, kind: MemKind) -> Self {
        BlockStream { last: None, stream, kind }
    }

    pub fn touch(&mut self, addr: u64, out: &mut Vec<MemRequest>) {
        let b = block_of(addr);
        if self.last != Some(b) {
            self.last = Some(b);
            out.push(MemRequest::block(b, self.kind, self.stream));
        }
    }

    pub fn touch_range(&mut self, lo: u64, hi: u64, out: &mut Vec<MemRequest>) {
        if hi <= lo {
            return;
        }
        let mut b = block_of(lo);
        while b < hi {
            self.touch(b, out);
            b += BLOCK;
        }
    }
}

/// The prefetcher's output for one tile, in issue order: the tile's row
/// index, then for each active source its property and its edge list,
/// then the 8B random updates of its in-tile destinations.
pub fn prefetch_streams(layout: &Layout, tile_no: usize, tile: &Tile, active: &[bool]) -> Vec<MemRequest> {
    let mut out = Vec::new();
    let mut ri = BlockStream::new(Stream::RowIndex, MemKind::Read);
    let mut sp = BlockStream::new(Stream::SeqProp, MemKind::Read);
    let mut ci = BlockStream::new(Stream::ColIndex, MemKind::Read);
    for (u, &act) in active.iter().enumerate() {
        ri.touch(layout.row_index[tile_no] + u as u64 * 8, &mut out);
        if !act {
            continue;
        }
        let u = u as VertexId;
        sp.touch(layout.v_prop_addr(u), &mut out);
        let r = tile.edge_range(u);
        let base = layout.col_index[tile_no];
        ci.touch_range(base + r.start as u64 * layout.edge_bytes, base + r.end as u64 * layout.edge_bytes, &mut out);
        for (v, _) in tile.neighbors(u) {
            out.push(MemRequest {
                address: layout.v_temp_addr(v),
                kind: MemKind::Write,
                size: PROP_BYTES,
                stream: Stream::RandProp,
                requestor: v,
                issue_cycle: 0,
            });
        }
    }
    // closing entry of the row index
    ri.touch(layout.row_index[tile_no] + active.len() as u64 * 8, &mut out);
    out
}

/// Updater lane for a destination vertex. Same-vertex updates always land on
/// one lane, so they serialize in arrival order.
pub fn crossbar_route(dst: VertexId, n_pes: usize) -> usize {
    dst as usize % n_pes
}
