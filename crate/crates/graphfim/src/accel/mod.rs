//! Timed accelerator model. Each iteration walks the tiles like the
//! untimed executor, but every memory touch becomes a DRAM request: the
//! prefetcher's 64B streams go straight to memory, random 8B property
//! updates go through the cache and, for fine-grained caches, through the
//! row-collecting MSHR into in-bank gathers and scatters.

pub mod streams;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cache::{configure_partition, Cache, CacheConfig, CacheModel, Victim};
use crate::dram::{Command, Controller, DramConfig, Request};
use crate::graph::{TiledGraph, VertexId};
use crate::mshr::{CollectAction, Flush, Mshr, MshrConfig, MshrRequest};
use crate::vcm::{AlgorithmSpec, VertexState};
use crate::{Error, Result};

pub use streams::{crossbar_route, prefetch_streams, Layout, MemKind, MemRequest, Stream};
use streams::{BlockStream, BLOCK, PROP_BYTES};

/// On-chip cache size used for desk-scale graphs (scale 10-12 Kronecker).
pub const DESK_CACHE_BYTES: u64 = 2 << 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelConfig {
    pub n_pes: usize,
    pub simd_width: usize,
    pub clock_ghz: f64,
    pub prefetch_enabled: bool,
    /// outstanding requests per stream
    pub prefetch_depth: usize,
    pub cache: CacheConfig,
    pub mshr: MshrConfig,
    pub dram: DramConfig,
    /// tile width in multiples of the perfect-tiling width
    pub tile_scaling: usize,
}

impl AccelConfig {
    pub fn new(model: CacheModel, cache_bytes: u64) -> Self {
        let dram = DramConfig { fim_enabled: model.fine_grained(), ..DramConfig::default() };
        AccelConfig {
            n_pes: 8,
            simd_width: 8,
            clock_ghz: 1.0,
            prefetch_enabled: true,
            prefetch_depth: 64,
            cache: CacheConfig::new(model, cache_bytes),
            mshr: MshrConfig::default(),
            dram,
            tile_scaling: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("accel.n_pes", self.n_pes),
            ("accel.simd_width", self.simd_width),
            ("accel.prefetch_depth", self.prefetch_depth),
            ("accel.tile_scaling", self.tile_scaling),
        ] {
            if v == 0 {
                return Err(Error::config(k, "must be at least 1"));
            }
        }
        if !(self.clock_ghz > 0.0) {
            return Err(Error::config("accel.clock_ghz", "must be positive"));
        }
        self.cache.validate()?;
        self.mshr.validate()?;
        self.dram.validate()?;
        if self.cache.model.fine_grained() && !self.dram.fim_enabled {
            return Err(Error::config(
                "dram.fim_enabled",
                format!("the {} cache needs in-bank gather/scatter", self.cache.model.name()),
            ));
        }
        Ok(())
    }

    /// Vertices whose properties exactly fill the cache.
    pub fn perfect_tile_width(&self) -> usize {
        (self.cache.capacity / PROP_BYTES).max(1) as usize
    }

    pub fn tile_width(&self, n_vertices: usize) -> usize {
        (self.perfect_tile_width() * self.tile_scaling).min(n_vertices.max(1))
    }

    fn window(&self) -> usize {
        if self.prefetch_enabled {
            self.prefetch_depth * Stream::ALL.len()
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub cycles: u64,
    pub iterations: usize,
    /// DRAM read transactions (64B reads and gathers)
    pub reads: u64,
    /// DRAM write transactions (64B writes and scatters)
    pub writes: u64,
    pub bytes_fetched: u64,
    pub bytes_useful: u64,
    pub rand_bytes_fetched: u64,
    pub rand_bytes_useful: u64,
    pub bandwidth_offchip: f64,
    pub bandwidth_internal: f64,
    pub stream_requests: BTreeMap<Stream, u64>,
    /// bytes read per stream (gathers count their real words)
    pub stream_read_bytes: BTreeMap<Stream, u64>,
    pub fim_gathers: u64,
    pub fim_scatters: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub mshr_collections: u64,
    pub mshr_full_flushes: u64,
    pub mshr_partial_flushes: u64,
    pub mshr_forwardings: u64,
    pub mshr_stalls: u64,
    pub memory_cycles: u64,
    pub compute_cycles: u64,
    pub dram_bursts: u64,
}

impl StatsReport {
    pub fn stream(&self, s: Stream) -> u64 {
        self.stream_requests.get(&s).copied().unwrap_or(0)
    }

    pub fn stream_bytes(&self, s: Stream) -> u64 {
        self.stream_read_bytes.get(&s).copied().unwrap_or(0)
    }

    pub fn unuseful_rand_fraction(&self) -> f64 {
        if self.rand_bytes_fetched == 0 {
            return 0.0;
        }
        1.0 - self.rand_bytes_useful as f64 / self.rand_bytes_fetched as f64
    }
}

pub struct SimOutput {
    pub state: VertexState,
    pub stats: StatsReport,
    pub trace: Option<Vec<Command>>,
}

/// One tile's worth of memory work, in issue order.
struct Batch {
    reqs: Vec<Request>,
    next_id: u64,
}

impl Batch {
    fn push(&mut self, stats: &mut StatsReport, stream: Stream, r: impl FnOnce(u64) -> Request) {
        let req = r(self.next_id);
        self.next_id += 1;
        *stats.stream_requests.entry(stream).or_default() += 1;
        match &req.kind {
            crate::dram::ReqKind::Read => {
                stats.reads += 1;
                *stats.stream_read_bytes.entry(stream).or_default() += BLOCK;
                if stream != Stream::RandProp {
                    stats.bytes_fetched += BLOCK;
                    stats.bytes_useful += BLOCK;
                }
            }
            crate::dram::ReqKind::Write(_) => stats.writes += 1,
            crate::dram::ReqKind::Fim(op) => match op.kind {
                crate::dram::FimKind::Gather => {
                    stats.reads += 1;
                    *stats.stream_read_bytes.entry(stream).or_default() += 8 * op.offsets.len() as u64;
                    stats.fim_gathers += 1;
                }
                crate::dram::FimKind::Scatter => {
                    stats.writes += 1;
                    stats.fim_scatters += 1;
                }
            },
        }
        self.reqs.push(req);
    }

    fn mem(&mut self, stats: &mut StatsReport, m: MemRequest) {
        match m.kind {
            MemKind::Read => self.push(stats, m.stream, |id| Request::read(id, m.address)),
            MemKind::Write => self.push(stats, m.stream, |id| Request::write(id, m.address)),
        }
    }

    fn flushes(&mut self, stats: &mut StatsReport, fl: Vec<Flush>) {
        for f in fl {
            self.push(stats, Stream::RandProp, |id| Request::fim(id, f.op));
        }
    }
}

struct Sim<'a> {
    cfg: &'a AccelConfig,
    layout: Layout,
    cache: Cache,
    mshr: Option<Mshr>,
    ctl: Controller,
    stats: StatsReport,
    lane_work: Vec<u64>,
}

impl Sim<'_> {
    /// One random 8B access through the cache (and MSHR).
    fn rand_access(&mut self, b: &mut Batch, addr: u64, write: bool, lane: usize) -> Result<()> {
        let out = self.cache.access(addr, write)?;
        self.lane_work[lane] += 1 + out.search_cycles as u64;
        match &mut self.mshr {
            None => {
                for v in out.victims.iter().filter(|v| v.dirty) {
                    b.push(&mut self.stats, Stream::RandProp, |id| Request::write(id, v.addr));
                }
                if let Some(f) = out.fill {
                    b.push(&mut self.stats, Stream::RandProp, |id| Request::read(id, f.addr));
                }
            }
            Some(m) => {
                let dirty: Vec<&Victim> = out.victims.iter().filter(|v| v.dirty).collect();
                let mut actions = Vec::new();
                for v in dirty {
                    // victims of fine-grained caches are single 8B sectors
                    actions.extend(m.access(MshrRequest::Write { addr: v.addr, data: 0 })?);
                }
                if let Some(f) = out.fill {
                    self.lane_work[lane] += m.config().lookup_cycles;
                    let req = MshrRequest::Read { addr: f.addr, requestor: lane as u32 };
                    let mut acts = m.access(req)?;
                    if acts == [CollectAction::Stall] {
                        b.flushes(&mut self.stats, m.flush_row_of(f.addr)?);
                        acts = m.access(req)?;
                    }
                    actions.extend(acts);
                }
                for a in actions {
                    match a {
                        CollectAction::FlushGather(f) | CollectAction::FlushScatter(f) => {
                            b.flushes(&mut self.stats, vec![f])
                        }
                        CollectAction::EvictEntry(fl) => b.flushes(&mut self.stats, fl),
                        CollectAction::Stall => return Err(Error::Protocol("MSHR stalled after a flush".into())),
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Replays a batch with the prefetch window; returns elapsed DRAM cycles.
    fn replay(&mut self, b: Batch) -> Result<u64> {
        let start = self.ctl.now();
        let end = crate::experiment::microbench::run_windowed(&mut self.ctl, b.reqs, self.cfg.window())?;
        Ok(end.saturating_sub(start))
    }

    fn to_cycles(&self, nck: u64) -> u64 {
        (nck as f64 * self.cfg.dram.tck_ns * self.cfg.clock_ghz).ceil() as u64
    }
}

pub fn simulate(cfg: &AccelConfig, g: &TiledGraph, spec: &AlgorithmSpec) -> Result<(VertexState, StatsReport)> {
    let o = simulate_traced(cfg, g, spec, false)?;
    Ok((o.state, o.stats))
}

pub fn simulate_traced(cfg: &AccelConfig, g: &TiledGraph, spec: &AlgorithmSpec, trace: bool) -> Result<SimOutput> {
    cfg.validate()?;
    let mut ctl = Controller::new(cfg.dram)?;
    if trace {
        ctl = ctl.with_trace();
    }
    let mshr = if cfg.cache.model.fine_grained() { Some(Mshr::new(cfg.mshr, *ctl.addr_map())?) } else { None };
    let layout = Layout::new(g, spec.algorithm.uses_weights());
    if layout.end > cfg.dram.capacity() {
        return Err(Error::Range(format!("graph needs {}B, DRAM holds {}B", layout.end, cfg.dram.capacity())));
    }
    let mut sim = Sim {
        cfg,
        layout,
        cache: Cache::new(cfg.cache)?,
        mshr,
        ctl,
        stats: StatsReport::default(),
        lane_work: vec![0; cfg.n_pes],
    };
    let base = &g.base;
    let n = base.n_vertices;
    let lanes = (cfg.n_pes * cfg.simd_width) as u64;
    let mut st = spec.initial_state(base);
    // per-destination "received an update" bits held by the updaters
    let mut touched = vec![false; n];
    let mut iters = 0;
    let mut cycles = 0;

    while iters < crate::vcm::MAX_ITERS && st.active.iter().any(|&a| a) {
        let snapshot = st.v_prop.clone();
        st.next_active.fill(false);
        for (ti, tile) in g.tiles.iter().enumerate() {
            let mut b = Batch { reqs: Vec::new(), next_id: 0 };
            sim.lane_work.fill(0);
            if ti == 0 && !spec.always_active() {
                let mut fr = BlockStream::new(Stream::SeqProp, MemKind::Read);
                let mut tmp = Vec::new();
                fr.touch_range(sim.layout.frontier, sim.layout.frontier + (n as u64).div_ceil(8), &mut tmp);
                tmp.into_iter().for_each(|m| b.mem(&mut sim.stats, m));
            }
            if cfg.cache.model == CacheModel::Piccolo {
                let lo = sim.layout.v_temp_addr(tile.dst_range.start);
                let hi = sim.layout.v_temp_addr(tile.dst_range.end);
                let mut tags: Vec<u64> = (lo..hi).step_by(8).map(|a| cfg.cache.tag_of(a)).collect();
                tags.dedup();
                if !tags.is_empty() {
                    sim.cache.set_partition(configure_partition(&tags, cfg.cache.ways)?);
                }
            }

            // process + reduce
            let mut edges = 0u64;
            let mut updates = (0..n as VertexId)
                .filter(|&u| st.active[u as usize])
                .flat_map(|u| tile.neighbors(u).map(move |(v, w)| (u, v, w)));
            for m in prefetch_streams(&sim.layout, ti, tile, &st.active) {
                if m.stream != Stream::RandProp {
                    b.mem(&mut sim.stats, m);
                    continue;
                }
                let (u, v, w) = updates.next().expect("one update per random request");
                debug_assert_eq!(m.address, sim.layout.v_temp_addr(v));
                edges += 1;
                let val = spec.process(w, snapshot[u as usize], base.out_degree(u));
                let t = &mut st.v_temp[v as usize];
                *t = spec.reduce(*t, val);
                touched[v as usize] = true;
                sim.rand_access(&mut b, m.address, true, crossbar_route(v, cfg.n_pes))?;
            }

            // apply
            let mut vp_rd = BlockStream::new(Stream::SeqProp, MemKind::Read);
            let mut vp_wr = BlockStream::new(Stream::SeqProp, MemKind::Write);
            let mut tmp = Vec::new();
            for v in tile.dst_range.clone() {
                let vi = v as usize;
                vp_rd.touch(sim.layout.v_prop_addr(v), &mut tmp);
                // untouched temporaries still hold the identity: nothing to fetch
                if std::mem::take(&mut touched[vi]) {
                    sim.rand_access(&mut b, sim.layout.v_temp_addr(v), false, crossbar_route(v, cfg.n_pes))?;
                }
                let res = spec.apply(st.v_prop[vi], st.v_temp[vi], st.cst(vi));
                if res != st.v_prop[vi] {
                    st.v_prop[vi] = res;
                    st.next_active[vi] = true;
                    vp_wr.touch(sim.layout.v_prop_addr(v), &mut tmp);
                }
                st.v_temp[vi] = spec.identity();
            }
            if !spec.always_active() {
                let lo = sim.layout.next_frontier + tile.dst_range.start as u64 / 8;
                let hi = sim.layout.next_frontier + (tile.dst_range.end as u64).div_ceil(8);
                BlockStream::new(Stream::SeqProp, MemKind::Write).touch_range(lo, hi, &mut tmp);
            }
            tmp.into_iter().for_each(|m| b.mem(&mut sim.stats, m));
            if let Some(m) = &mut sim.mshr {
                let fl = m.drain();
                b.flushes(&mut sim.stats, fl);
            }
            // temporaries are consumed by apply: dropped, not written back
            sim.cache.invalidate_all();

            let mem = sim.replay(b)?;
            let mem_cycles = sim.to_cycles(mem);
            let lane_max = sim.lane_work.iter().copied().max().unwrap_or(0);
            let compute = edges.div_ceil(lanes).max(lane_max) + (tile.width() as u64).div_ceil(lanes);
            sim.stats.memory_cycles += mem_cycles;
            sim.stats.compute_cycles += compute;
            cycles += mem_cycles.max(compute);
        }
        if spec.always_active() {
            st.next_active.fill(true);
        }
        std::mem::swap(&mut st.active, &mut st.next_active);
        st.next_active.fill(false);
        iters += 1;
    }

    let mut stats = sim.stats;
    let cs = &sim.cache.stats;
    stats.cycles = cycles;
    stats.iterations = iters;
    stats.cache_hits = cs.hits;
    stats.cache_misses = cs.sector_misses + cs.line_misses;
    stats.rand_bytes_fetched = cs.bytes_filled;
    stats.rand_bytes_useful = cs.bytes_useful;
    stats.bytes_fetched += cs.bytes_filled;
    stats.bytes_useful += cs.bytes_useful;
    if let Some(m) = &sim.mshr {
        stats.mshr_collections = m.stats.collections;
        stats.mshr_full_flushes = m.stats.full_flushes;
        stats.mshr_partial_flushes = m.stats.partial_flushes;
        stats.mshr_forwardings = m.stats.forwardings;
        stats.mshr_stalls = m.stats.stalls;
    }
    let ds = &sim.ctl.stats;
    stats.dram_bursts = ds.bursts;
    if cycles > 0 {
        let ns = cycles as f64 / cfg.clock_ghz;
        stats.bandwidth_offchip = (ds.bursts * cfg.dram.burst_bytes) as f64 / ns;
        // every in-bank column access moves a full burst across the sense amps
        stats.bandwidth_internal = (ds.internal_cols * cfg.dram.burst_bytes) as f64 / ns;
    }
    let trace = if trace { Some(sim.ctl.take_trace()) } else { None };
    Ok(SimOutput { state: st, stats, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        assign_weights, build_csr, gen_synthetic, partition_tiles, CsrGraph, Edge, EdgeList, SyntheticSpec,
    };
    use crate::traffic::{estimate_traffic, TrafficMode};
    use crate::vcm::{run_to_convergence, Algorithm, MAX_ITERS};

    fn kron(scale: u32) -> CsrGraph {
        let el = gen_synthetic(SyntheticSpec::Kronecker { scale, edge_factor: 8 }, 3).unwrap();
        build_csr(&assign_weights(&el, 4))
    }

    fn run(cfg: &AccelConfig, g: &CsrGraph, spec: &AlgorithmSpec) -> (VertexState, StatsReport) {
        let tg = partition_tiles(g, cfg.tile_width(g.n_vertices)).unwrap();
        simulate(cfg, &tg, spec).unwrap()
    }

    #[test]
    fn matches_untimed_executor() {
        let g = kron(7);
        for model in [CacheModel::Conventional64, CacheModel::Sectored, CacheModel::Line8, CacheModel::Piccolo] {
            for alg in Algorithm::ALL {
                let mut cfg = AccelConfig::new(model, 1024);
                cfg.tile_scaling = 2;
                let spec = AlgorithmSpec::new(alg);
                let (st, s) = run(&cfg, &g, &spec);
                let tg = partition_tiles(&g, 13).unwrap();
                let (want, iters) = run_to_convergence(&tg, &spec, MAX_ITERS);
                assert_eq!(st.v_prop, want.v_prop, "{model:?} {alg:?}");
                assert_eq!(s.iterations, iters);
                assert!(s.bytes_useful <= s.bytes_fetched);
                assert!(s.rand_bytes_useful <= s.rand_bytes_fetched);
                if model.fine_grained() {
                    // a gather or scatter moves 8 bursts inside the bank for 2 on the bus
                    assert!(s.fim_gathers == 0 || s.bandwidth_internal > s.bandwidth_offchip);
                } else {
                    assert_eq!(s.bandwidth_internal, s.bandwidth_offchip);
                }
                if model.fine_grained() {
                    assert_eq!(s.rand_bytes_useful, s.rand_bytes_fetched, "8B fills are always consumed");
                }
            }
        }
    }

    #[test]
    fn empty_frontier_streams_topology_only() {
        // vertex 3 has no out-edges
        let el = EdgeList::new(8, vec![Edge::new(0, 1, 1), Edge::new(1, 2, 1), Edge::new(2, 0, 1)]).unwrap();
        let g = build_csr(&el);
        let cfg = AccelConfig::new(CacheModel::Piccolo, 1024);
        let (st, s) = run(&cfg, &g, &AlgorithmSpec::new(Algorithm::Bfs).with_source(3));
        assert_eq!(s.stream(Stream::RandProp), 0);
        assert_eq!(s.iterations, 1);
        assert!(s.cycles > 0);
        assert_eq!(st.v_prop[3], 0);
    }

    #[test]
    fn deterministic() {
        let g = kron(7);
        let cfg = AccelConfig::new(CacheModel::Piccolo, 1024);
        let spec = AlgorithmSpec::new(Algorithm::Sssp);
        assert_eq!(run(&cfg, &g, &spec).1, run(&cfg, &g, &spec).1);
    }

    #[test]
    fn mshr_group_must_match_fim() {
        let mut cfg = AccelConfig::new(CacheModel::Piccolo, 1024);
        cfg.mshr.offsets_per_group = 16;
        let tg = partition_tiles(&kron(5), 32).unwrap();
        match simulate(&cfg, &tg, &AlgorithmSpec::new(Algorithm::Bfs)) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "mshr.offsets_per_group"),
            other => panic!("{:?}", other.map(|x| x.1)),
        }
    }

    #[test]
    fn fine_grained_cache_needs_fim() {
        let mut cfg = AccelConfig::new(CacheModel::Line8, 1024);
        cfg.dram.fim_enabled = false;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn slower_dram_never_helps() {
        let g = kron(7);
        for model in [CacheModel::Conventional64, CacheModel::Piccolo] {
            let cfg = AccelConfig::new(model, 1024);
            let mut slow = cfg.clone();
            let d = &mut slow.dram;
            d.cl *= 2;
            d.cwl *= 2;
            d.trcd_ns *= 2.0;
            d.trp_ns *= 2.0;
            d.twr_ns *= 2.0;
            let spec = AlgorithmSpec::new(Algorithm::Bfs);
            assert!(run(&slow, &g, &spec).1.cycles >= run(&cfg, &g, &spec).1.cycles, "{model:?}");
        }
    }

    #[test]
    fn no_prefetch_is_slower() {
        let g = kron(6);
        let cfg = AccelConfig::new(CacheModel::Piccolo, 1024);
        let off = AccelConfig { prefetch_enabled: false, ..cfg.clone() };
        let spec = AlgorithmSpec::new(Algorithm::Bfs);
        let (a, b) = (run(&cfg, &g, &spec), run(&off, &g, &spec));
        assert_eq!(a.0.v_prop, b.0.v_prop);
        assert!(b.1.cycles > a.1.cycles);
    }

    #[test]
    fn pr_topology_streams_match_estimator() {
        let g = kron(9);
        let cfg = AccelConfig::new(CacheModel::Conventional64, 512);
        let t = g.n_vertices.div_ceil(cfg.tile_width(g.n_vertices)) as u64;
        assert_eq!(t, 8);
        let (_, s) = run(&cfg, &g, &AlgorithmSpec::new(Algorithm::Pr));
        let it = s.iterations as u64;
        let e = estimate_traffic(g.n_vertices as u64, g.n_edges() as u64, t, 64, 8, TrafficMode::Perfect).unwrap();
        let within = |sim: u64, est: u64| (sim as f64 / est as f64 - 1.0).abs() <= 0.10;
        let ri = s.stream_bytes(Stream::RowIndex) / it;
        let ci = s.stream_bytes(Stream::ColIndex) / it;
        assert!(within(ri, e.row_index_bytes), "{ri} vs {}", e.row_index_bytes);
        assert!(within(ci, e.col_index_bytes), "{ci} vs {}", e.col_index_bytes);
        // sources read once per tile plus one apply pass over the destinations
        let sp = s.stream_bytes(Stream::SeqProp) / it;
        assert!(within(sp, e.seq_prop_bytes * (t + 1) / t), "{sp} vs {}", e.seq_prop_bytes);
    }

    #[test]
    fn traced_run_passes_validator() {
        let g = kron(6);
        for model in [CacheModel::Conventional64, CacheModel::Piccolo] {
            let cfg = AccelConfig::new(model, 1024);
            let tg = partition_tiles(&g, cfg.tile_width(g.n_vertices)).unwrap();
            let out = simulate_traced(&cfg, &tg, &AlgorithmSpec::new(Algorithm::Sssp), true).unwrap();
            let tr = out.trace.unwrap();
            assert!(!tr.is_empty());
            let bad = crate::dram::validate::validate_trace(&cfg.dram, &tr);
            assert!(bad.is_empty(), "{model:?}: {:?}", &bad[..bad.len().min(3)]);
        }
    }
}
