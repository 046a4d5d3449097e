//! Graph ingestion, CSR construction, destination tiling and synthetic
//! generators.

mod io;
mod synth;

use std::ops::Range;

pub use io::{load_edge_list, read_binary_csr, read_props, write_binary_csr, write_props, write_text, EdgeFormat};
pub use synth::{assign_weights, gen_synthetic, SyntheticSpec};

use crate::{Error, Result};

pub type VertexId = u32;
pub type Weight = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: Weight,
}

impl Edge {
    pub fn new(src: VertexId, dst: VertexId, weight: Weight) -> Self {
        Self { src, dst, weight }
    }
}

/// Unordered bag of weighted directed edges over `0..n_vertices`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeList {
    pub n_vertices: usize,
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        let el = Self { n_vertices, edges };
        el.validate()?;
        Ok(el)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if e.src as usize >= self.n_vertices || e.dst as usize >= self.n_vertices {
                return Err(Error::Range(format!("edge ({}, {}) outside 0..{}", e.src, e.dst, self.n_vertices)));
            }
        }
        Ok(())
    }

    /// Adds the reverse of every edge. Input is treated as directed
    /// everywhere else.
    pub fn symmetrize(&self) -> EdgeList {
        let mut edges = Vec::with_capacity(self.edges.len() * 2);
        for e in &self.edges {
            edges.push(*e);
            if e.src != e.dst {
                edges.push(Edge::new(e.dst, e.src, e.weight));
            }
        }
        EdgeList { n_vertices: self.n_vertices, edges }
    }
}

/// Compressed sparse row topology, edges grouped by source and sorted by
/// destination within a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    pub n_vertices: usize,
    pub row_ptr: Vec<u64>,
    pub col_idx: Vec<VertexId>,
    pub weights: Vec<Weight>,
}

impl CsrGraph {
    pub fn n_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn out_degree(&self, v: VertexId) -> u64 {
        self.row_ptr[v as usize + 1] - self.row_ptr[v as usize]
    }

    pub fn edge_range(&self, v: VertexId) -> Range<usize> {
        self.row_ptr[v as usize] as usize..self.row_ptr[v as usize + 1] as usize
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, Weight)> + '_ {
        let r = self.edge_range(v);
        self.col_idx[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// Flattens back to an edge list in CSR order.
    pub fn to_edge_list(&self) -> EdgeList {
        let mut edges = Vec::with_capacity(self.n_edges());
        for u in 0..self.n_vertices as VertexId {
            edges.extend(self.neighbors(u).map(|(v, w)| Edge::new(u, v, w)));
        }
        EdgeList { n_vertices: self.n_vertices, edges }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Range(m.to_string()));
        if self.row_ptr.len() != self.n_vertices + 1 {
            return bad("row_ptr length must be n_vertices + 1");
        }
        if self.row_ptr[0] != 0 || *self.row_ptr.last().unwrap() != self.col_idx.len() as u64 {
            return bad("row_ptr must start at 0 and end at |E|");
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_ptr must be non-decreasing");
        }
        if self.col_idx.iter().any(|&c| c as usize >= self.n_vertices) {
            return bad("col_idx entry out of range");
        }
        if self.weights.len() != self.col_idx.len() {
            return bad("weights length must equal |E|");
        }
        Ok(())
    }
}

pub fn build_csr(el: &EdgeList) -> CsrGraph {
    let n = el.n_vertices;
    let mut row_ptr = vec![0u64; n + 1];
    for e in &el.edges {
        row_ptr[e.src as usize + 1] += 1;
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    let mut cursor: Vec<u64> = row_ptr[..n].to_vec();
    let mut slots = vec![(0 as VertexId, 0 as Weight); el.edges.len()];
    for e in &el.edges {
        let c = &mut cursor[e.src as usize];
        slots[*c as usize] = (e.dst, e.weight);
        *c += 1;
    }
    for u in 0..n {
        // stable: duplicate destinations keep input order
        slots[row_ptr[u] as usize..row_ptr[u + 1] as usize].sort_by_key(|&(d, _)| d);
    }
    let (col_idx, weights) = slots.into_iter().unzip();
    CsrGraph { n_vertices: n, row_ptr, col_idx, weights }
}

/// One destination range of a tiled graph. `row_ptr` spans every source
/// vertex; only edges whose destination falls in `dst_range` are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub dst_range: Range<VertexId>,
    pub row_ptr: Vec<u64>,
    pub col_idx: Vec<VertexId>,
    pub weights: Vec<Weight>,
}

impl Tile {
    pub fn n_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn edge_range(&self, u: VertexId) -> Range<usize> {
        self.row_ptr[u as usize] as usize..self.row_ptr[u as usize + 1] as usize
    }

    pub fn neighbors(&self, u: VertexId) -> impl Iterator<Item = (VertexId, Weight)> + '_ {
        let r = self.edge_range(u);
        self.col_idx[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn width(&self) -> usize {
        (self.dst_range.end - self.dst_range.start) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TiledGraph {
    pub base: CsrGraph,
    pub tile_width: usize,
    pub tiles: Vec<Tile>,
}

impl TiledGraph {
    pub fn n_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.base.n_vertices
    }
}

pub fn partition_tiles(g: &CsrGraph, tile_width: usize) -> Result<TiledGraph> {
    if tile_width == 0 {
        return Err(Error::Argument("tile_width must be at least 1".into()));
    }
    let n = g.n_vertices;
    let n_tiles = n.div_ceil(tile_width);
    let mut tiles: Vec<Tile> = (0..n_tiles)
        .map(|t| {
            let lo = t * tile_width;
            let hi = ((t + 1) * tile_width).min(n);
            Tile {
                dst_range: lo as VertexId..hi as VertexId,
                row_ptr: Vec::with_capacity(n + 1),
                col_idx: Vec::new(),
                weights: Vec::new(),
            }
        })
        .collect();
    for tile in &mut tiles {
        tile.row_ptr.push(0);
    }
    for u in 0..n as VertexId {
        for (v, w) in g.neighbors(u) {
            let tile = &mut tiles[v as usize / tile_width];
            tile.col_idx.push(v);
            tile.weights.push(w);
        }
        for tile in &mut tiles {
            tile.row_ptr.push(tile.col_idx.len() as u64);
        }
    }
    Ok(TiledGraph { base: g.clone(), tile_width, tiles })
}
