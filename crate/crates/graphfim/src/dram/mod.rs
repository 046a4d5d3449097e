//! DDR4 channel/rank/bank timing with the in-bank gather/scatter extension.

mod addr;
mod config;
mod controller;
pub mod fim;
mod memory;
pub mod trace;
pub mod validate;

pub use addr::{AddrMap, DecodedAddr, RowKey};
pub use config::{timing_check, DeviceWidth, DramConfig, Timing, TimingAdjustment};
pub use controller::{
    CmdKind, Command, Completion, Controller, DramStats, ReqKind, Request, COL_DATABUF, COL_DUMMY, COL_GATHER_OFFS,
    COL_SCATTER_OFFS,
};
pub use fim::{FimKind, FimOp, FIM_WORDS};
pub use memory::MemoryImage;
