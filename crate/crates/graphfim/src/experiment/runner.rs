//! Runs (preset, tile factor) jobs, pairs them with baseline rows and flags
//! each preset's best factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GraphSource, Preset};
use crate::accel::{simulate, AccelConfig, StatsReport};
use crate::graph::{assign_weights, build_csr, gen_synthetic, load_edge_list, partition_tiles, CsrGraph, EdgeFormat};
use crate::vcm::{AlgorithmSpec, VertexState};
use crate::Result;

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub config_id: String,
    pub graph: String,
    pub algorithm: String,
    pub model: String,
    pub tile_factor: usize,
    pub cycles: u64,
    pub speedup_vs_baseline: f64,
    pub reads: u64,
    pub writes: u64,
    pub bytes_fetched: u64,
    pub bytes_useful: u64,
    #[serde(rename = "offchip_GBps")]
    pub offchip_gbps: f64,
    #[serde(rename = "internal_GBps")]
    pub internal_gbps: f64,
    pub fim_gathers: u64,
    pub fim_scatters: u64,
    pub iterations: usize,
    pub best_factor: bool,
}

pub const CSV_COLUMNS: [&str; 17] = [
    "config_id",
    "graph",
    "algorithm",
    "model",
    "tile_factor",
    "cycles",
    "speedup_vs_baseline",
    "reads",
    "writes",
    "bytes_fetched",
    "bytes_useful",
    "offchip_GBps",
    "internal_GBps",
    "fim_gathers",
    "fim_scatters",
    "iterations",
    "best_factor",
];

/// Loads or generates the graph; synthetic graphs get seeded weights.
pub fn build_graph(src: &GraphSource, seed: u64) -> Result<CsrGraph> {
    match src {
        GraphSource::Synthetic(spec) => {
            let el = gen_synthetic(*spec, seed)?;
            Ok(build_csr(&assign_weights(&el, seed.wrapping_add(1))))
        }
        GraphSource::File { path, format: EdgeFormat::BinaryCsr } => crate::graph::read_binary_csr(path),
        GraphSource::File { path, format } => Ok(build_csr(&load_edge_list(path, *format)?)),
    }
}

/// Tiles `g` for `cfg.tile_scaling` and simulates.
pub fn run_one(cfg: &AccelConfig, g: &CsrGraph, spec: &AlgorithmSpec) -> Result<(VertexState, StatsReport)> {
    let tg = partition_tiles(g, cfg.tile_width(g.n_vertices))?;
    simulate(cfg, &tg, spec)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub preset: Preset,
    pub tile_factor: usize,
    pub stats: StatsReport,
}

/// Every (preset, factor) pair of the config, baseline included. Results are
/// sorted by preset then factor whatever order the pool finishes in.
pub fn run_jobs(cfg: &ExperimentConfig, g: &CsrGraph) -> Result<Vec<RunResult>> {
    let mut presets = cfg.presets.clone();
    if !presets.contains(&Preset::BaselineConventional) {
        presets.push(Preset::BaselineConventional);
    }
    presets.sort();
    presets.dedup();
    let mut spec = AlgorithmSpec::new(cfg.algorithm);
    if let Some(s) = cfg.source {
        spec = spec.with_source(s);
    }
    let jobs: Vec<(Preset, usize)> =
        presets.iter().flat_map(|&p| cfg.tile_factors.iter().map(move |&f| (p, f))).collect();
    let mut out: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(preset, f)| {
            let mut a = cfg.accel_config(preset)?;
            a.tile_scaling = f;
            let (_, stats) = run_one(&a, g, &spec)?;
            Ok(RunResult { preset, tile_factor: f, stats })
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|r| (r.preset, r.tile_factor));
    Ok(out)
}

/// Rows for a finished batch. Speedups divide the baseline's cycles at the
/// same tile factor.
pub fn records(cfg: &ExperimentConfig, results: &[RunResult]) -> Vec<OutputRecord> {
    let graph = cfg.graph.to_string();
    let base = |f: usize| {
        results.iter().find(|r| r.preset == Preset::BaselineConventional && r.tile_factor == f).map(|r| r.stats.cycles)
    };
    let best = |p: Preset| {
        results.iter().filter(|r| r.preset == p).min_by_key(|r| (r.stats.cycles, r.tile_factor)).map(|r| r.tile_factor)
    };
    results
        .iter()
        .map(|r| {
            let s = &r.stats;
            OutputRecord {
                config_id: format!("{graph}/{}/{}/x{}", cfg.algorithm.name(), r.preset, r.tile_factor),
                graph: graph.clone(),
                algorithm: cfg.algorithm.name().to_string(),
                model: r.preset.name().to_string(),
                tile_factor: r.tile_factor,
                cycles: s.cycles,
                speedup_vs_baseline: base(r.tile_factor).map_or(f64::NAN, |b| b as f64 / s.cycles.max(1) as f64),
                reads: s.reads,
                writes: s.writes,
                bytes_fetched: s.bytes_fetched,
                bytes_useful: s.bytes_useful,
                offchip_gbps: s.bandwidth_offchip,
                internal_gbps: s.bandwidth_internal,
                fim_gathers: s.fim_gathers,
                fim_scatters: s.fim_scatters,
                iterations: s.iterations,
                best_factor: best(r.preset) == Some(r.tile_factor),
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<OutputRecord>> {
    let mut g = build_graph(&cfg.graph, cfg.seed)?;
    if cfg.symmetrize {
        g = build_csr(&g.to_edge_list().symmetrize());
    }
    let res = run_jobs(cfg, &g)?;
    Ok(records(cfg, &res))
}

/// The same experiment over the given tile factors.
pub fn sweep_tiles(cfg: &ExperimentConfig, factors: &[usize]) -> Result<Vec<OutputRecord>> {
    let cfg = ExperimentConfig { tile_factors: factors.to_vec(), ..cfg.clone() };
    run_experiment(&cfg)
}
