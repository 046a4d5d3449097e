//! Untimed vertex-centric executor. Every timed run is checked against it.
//!
//! Properties are 64-bit words. PageRank keeps `f64` bits in them.
//!
//! `V_prop` is double-buffered per iteration: Process always reads the
//! values from the start of the iteration, so the result is the same for any
//! tile width. Within a destination, updates are reduced in ascending source
//! order, which also makes the floating-point PageRank sums reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{CsrGraph, TiledGraph, VertexId, Weight};
use crate::{Error, Result};

pub const INF: u64 = u64::MAX;
pub const DAMPING: f64 = 0.85;
pub const MAX_ITERS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Pr,
    Bfs,
    Cc,
    Sssp,
    Sswp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Pr, Algorithm::Bfs, Algorithm::Cc, Algorithm::Sssp, Algorithm::Sswp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pr => "pr",
            Algorithm::Bfs => "bfs",
            Algorithm::Cc => "cc",
            Algorithm::Sssp => "sssp",
            Algorithm::Sswp => "sswp",
        }
    }

    /// Whether the edge weight is streamed alongside the column index.
    pub fn uses_weights(self) -> bool {
        matches!(self, Algorithm::Sssp | Algorithm::Sswp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pr" | "pagerank" => Ok(Algorithm::Pr),
            "bfs" => Ok(Algorithm::Bfs),
            "cc" => Ok(Algorithm::Cc),
            "sssp" => Ok(Algorithm::Sssp),
            "sswp" => Ok(Algorithm::Sswp),
            _ => Err(Error::Argument(format!("unknown algorithm `{s}` (valid: pr, bfs, cc, sssp, sswp)"))),
        }
    }
}

/// Operator set for one algorithm. `source` applies to BFS, SSSP and SSWP;
/// `None` picks the vertex with the largest out-degree (lowest id on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub source: Option<VertexId>,
}

pub fn algorithm_spec(name: &str) -> Result<AlgorithmSpec> {
    Ok(AlgorithmSpec::new(name.parse()?))
}

impl AlgorithmSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        AlgorithmSpec { algorithm, source: None }
    }

    pub fn with_source(mut self, source: VertexId) -> Self {
        self.source = Some(source);
        self
    }

    pub fn uses_const(&self) -> bool {
        self.algorithm == Algorithm::Pr
    }

    /// PageRank keeps every vertex active and runs the full iteration cap.
    pub fn always_active(&self) -> bool {
        self.algorithm == Algorithm::Pr
    }

    pub fn identity(&self) -> u64 {
        match self.algorithm {
            Algorithm::Pr => 0f64.to_bits(),
            Algorithm::Bfs | Algorithm::Cc | Algorithm::Sssp => INF,
            Algorithm::Sswp => 0,
        }
    }

    #[inline]
    pub fn process(&self, w: Weight, src_prop: u64, src_out_degree: u64) -> u64 {
        match self.algorithm {
            Algorithm::Pr => (f64::from_bits(src_prop) / src_out_degree as f64).to_bits(),
            Algorithm::Bfs => src_prop.saturating_add(1),
            Algorithm::Cc => src_prop,
            Algorithm::Sssp => src_prop.saturating_add(w as u64),
            Algorithm::Sswp => src_prop.min(w as u64),
        }
    }

    #[inline]
    pub fn reduce(&self, acc: u64, val: u64) -> u64 {
        match self.algorithm {
            Algorithm::Pr => (f64::from_bits(acc) + f64::from_bits(val)).to_bits(),
            Algorithm::Bfs | Algorithm::Cc | Algorithm::Sssp => acc.min(val),
            Algorithm::Sswp => acc.max(val),
        }
    }

    #[inline]
    pub fn apply(&self, prop: u64, temp: u64, cst: u64) -> u64 {
        match self.algorithm {
            Algorithm::Pr => (f64::from_bits(cst) + DAMPING * f64::from_bits(temp)).to_bits(),
            Algorithm::Bfs | Algorithm::Cc | Algorithm::Sssp => prop.min(temp),
            Algorithm::Sswp => prop.max(temp),
        }
    }

    pub fn resolve_source(&self, g: &CsrGraph) -> Option<VertexId> {
        if g.n_vertices == 0 {
            return None;
        }
        Some(self.source.unwrap_or_else(|| default_source(g)))
    }

    pub fn initial_state(&self, g: &CsrGraph) -> VertexState {
        let n = g.n_vertices;
        let mut st = VertexState {
            v_prop: vec![0; n],
            v_temp: vec![self.identity(); n],
            v_const: None,
            active: vec![false; n],
            next_active: vec![false; n],
        };
        match self.algorithm {
            Algorithm::Pr => {
                let r = (1.0 / n as f64).to_bits();
                let c = ((1.0 - DAMPING) / n as f64).to_bits();
                st.v_prop.fill(r);
                st.v_const = Some(vec![c; n]);
                st.active.fill(true);
            }
            Algorithm::Cc => {
                for (v, p) in st.v_prop.iter_mut().enumerate() {
                    *p = v as u64;
                }
                st.active.fill(true);
            }
            Algorithm::Bfs | Algorithm::Sssp | Algorithm::Sswp => {
                let (init, src_val) = if self.algorithm == Algorithm::Sswp { (0, INF) } else { (INF, 0) };
                st.v_prop.fill(init);
                if let Some(s) = self.resolve_source(g) {
                    st.v_prop[s as usize] = src_val;
                    st.active[s as usize] = true;
                }
            }
        }
        st
    }
}

/// Highest out-degree vertex, lowest id among ties.
pub fn default_source(g: &CsrGraph) -> VertexId {
    (0..g.n_vertices as VertexId).max_by_key(|&v| (g.out_degree(v), std::cmp::Reverse(v))).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexState {
    pub v_prop: Vec<u64>,
    pub v_temp: Vec<u64>,
    pub v_const: Option<Vec<u64>>,
    pub active: Vec<bool>,
    pub next_active: Vec<bool>,
}

impl VertexState {
    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn cst(&self, v: usize) -> u64 {
        self.v_const.as_ref().map_or(0, |c| c[v])
    }
}

/// One pass of the tiled Process/Reduce/Apply loop. On return `active` holds
/// the next frontier and `next_active` is cleared.
pub fn run_iteration(g: &TiledGraph, spec: &AlgorithmSpec, st: &mut VertexState) {
    let snapshot = st.v_prop.clone();
    let base = &g.base;
    st.next_active.fill(false);
    for tile in &g.tiles {
        for u in 0..base.n_vertices as VertexId {
            if !st.active[u as usize] {
                continue;
            }
            let p = snapshot[u as usize];
            let deg = base.out_degree(u);
            for (v, w) in tile.neighbors(u) {
                let t = &mut st.v_temp[v as usize];
                *t = spec.reduce(*t, spec.process(w, p, deg));
            }
        }
        for v in tile.dst_range.clone() {
            let v = v as usize;
            let res = spec.apply(st.v_prop[v], st.v_temp[v], st.cst(v));
            if res != st.v_prop[v] {
                st.v_prop[v] = res;
                st.next_active[v] = true;
            }
            st.v_temp[v] = spec.identity();
        }
    }
    if spec.always_active() {
        st.next_active.fill(true);
    }
    std::mem::swap(&mut st.active, &mut st.next_active);
    st.next_active.fill(false);
}

/// Iterates until the frontier empties or `max_iters` passes have run.
pub fn run_to_convergence(g: &TiledGraph, spec: &AlgorithmSpec, max_iters: usize) -> (VertexState, usize) {
    let mut st = spec.initial_state(&g.base);
    let mut iters = 0;
    while iters < max_iters && st.active.iter().any(|&a| a) {
        run_iteration(g, spec, &mut st);
        iters += 1;
    }
    (st, iters)
}
