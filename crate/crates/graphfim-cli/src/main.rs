//! `graphfim`: runs experiments, microbenchmarks and trace checks.
//!
//! Tabular output is CSV on stdout unless `--json` or `-o` says otherwise.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use graphfim::dram::trace::{read_trace, write_trace};
use graphfim::dram::validate::validate_trace;
use graphfim::dram::DramConfig;
use graphfim::experiment::microbench::{microbench_stride_traced, Layout};
use graphfim::experiment::output::{write_csv, write_json};
use graphfim::experiment::{run_experiment, sweep_tiles, ExperimentConfig, Preset};
use graphfim::graph::{
    assign_weights, build_csr, gen_synthetic, write_binary_csr, write_text, EdgeFormat, SyntheticSpec,
};

#[derive(Parser)]
#[command(
    name = "graphfim",
    version,
    about = "Cycle-level simulator of a tiled graph accelerator with in-DRAM gather/scatter"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Out {
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (preset, tile factor) job of an experiment file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Strided 16MB read: plain 64B reads against in-bank gathers.
    Microbench {
        /// Strides in 8B words, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        stride: Vec<u64>,
        /// single-row, multi-row or both.
        #[arg(long, default_value = "both")]
        layout: String,
        #[arg(long, default_value_t = 16 << 20)]
        total_bytes: u64,
        /// Experiment file whose [dram] section overrides the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the gather-side command trace of the first run here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Run an experiment over the given tile factors and flag each preset's best.
    SweepTiles {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        factors: Vec<usize>,
        #[command(flatten)]
        out: Out,
    },
    /// Write a synthetic graph (kronecker:SCALE:EF, ws:N:K:BETA, uniform:N:M).
    GenGraph {
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
        /// text-edge-list or binary-csr
        #[arg(long, default_value = "text-edge-list")]
        format: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Add the reverse of every edge.
        #[arg(long)]
        symmetrize: bool,
    },
    /// Check a command trace against every DRAM timing rule.
    ValidateTrace {
        trace: PathBuf,
        /// Experiment file whose [dram] section describes the device.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn emit<T: Serialize>(rows: &[T], out: &Out) -> Result<()> {
    let w: Box<dyn Write> = match &out.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    if out.json {
        write_json(w, rows)?;
    } else {
        write_csv(w, rows)?;
    }
    Ok(())
}

fn dram_from(config: Option<&Path>) -> Result<DramConfig> {
    Ok(match config {
        Some(p) => ExperimentConfig::load(p)?.accel_config(Preset::Piccolo)?.dram,
        None => DramConfig::default(),
    })
}

fn layouts(s: &str) -> Result<Vec<Layout>> {
    Ok(match s {
        "both" => vec![Layout::SingleRow, Layout::MultiRow],
        other => vec![other.parse()?],
    })
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = Out { output: out.output.or_else(|| cfg.output.clone()), ..out };
            emit(&run_experiment(&cfg)?, &out)?;
        }
        Cmd::SweepTiles { config, factors, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if factors.contains(&0) {
                bail!("tile factors must be at least 1");
            }
            emit(&sweep_tiles(&cfg, &factors)?, &out)?;
        }
        Cmd::Microbench { stride, layout, total_bytes, config, trace, out } => {
            let dram = dram_from(config.as_deref())?;
            let mut rows = Vec::new();
            let mut trace = trace;
            for l in layouts(&layout)? {
                for &s in &stride {
                    let (r, _, fim) = microbench_stride_traced(&dram, s, total_bytes, l)?;
                    if let Some(p) = trace.take() {
                        write_trace(BufWriter::new(File::create(&p)?), &fim)?;
                    }
                    rows.push(r);
                }
            }
            emit(&rows, &out)?;
        }
        Cmd::GenGraph { spec, output, format, seed, symmetrize } => {
            let spec: SyntheticSpec = spec.parse()?;
            let mut el = assign_weights(&gen_synthetic(spec, seed)?, seed.wrapping_add(1));
            if symmetrize {
                el = el.symmetrize();
            }
            match format.parse()? {
                EdgeFormat::Text => write_text(&el, &output)?,
                EdgeFormat::BinaryCsr => write_binary_csr(&build_csr(&el), &output)?,
            }
            eprintln!("{}: {} vertices, {} edges", output.display(), el.n_vertices, el.edges.len());
        }
        Cmd::ValidateTrace { trace, config } => {
            let dram = dram_from(config.as_deref())?;
            let f = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let cmds = read_trace(BufReader::new(f), &trace)?;
            let bad = validate_trace(&dram, &cmds);
            for v in &bad {
                println!("{}: cycle {}: {}", v.index, v.cycle, v.rule);
            }
            println!("{} commands, {} violations", cmds.len(), bad.len());
            if !bad.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
