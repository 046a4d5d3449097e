//! Cycle-level simulator of a tiled vertex-centric graph accelerator attached
//! to a DDR4 memory system with in-bank random scatter/gather.
//!
//! The crate is split along the hardware it models:
//!
//! * [`graph`]: edge lists, CSR, tiling, synthetic generators.
//! * [`vcm`]: untimed Process/Reduce/Apply executor, the functional oracle.
//! * [`cache`]: conventional, sectored, 8B-line and fine-grained-tag caches.
//! * [`mshr`]: the row-collecting MSHR that batches 8B misses into FIM ops.
//! * [`dram`]: DDR4 timing, FR-FCFS controller, in-bank gather/scatter.
//! * [`accel`]: the timed accelerator pipeline tying everything together.
//! * [`traffic`]: closed-form off-chip traffic estimator.
//! * [`experiment`]: config files, sweeps, microbenchmarks, CSV/JSON output.

pub mod accel;
pub mod cache;
pub mod dram;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod mshr;
pub mod traffic;
pub mod vcm;

pub use error::{Error, Result};
