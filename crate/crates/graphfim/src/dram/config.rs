use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceWidth {
    X4,
    X8,
    X16,
}

impl DeviceWidth {
    pub fn bits(self) -> u32 {
        match self {
            DeviceWidth::X4 => 4,
            DeviceWidth::X8 => 8,
            DeviceWidth::X16 => 16,
        }
    }
}

impl fmt::Display for DeviceWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.bits())
    }
}

impl FromStr for DeviceWidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches('x') {
            "4" => Ok(DeviceWidth::X4),
            "8" => Ok(DeviceWidth::X8),
            "16" => Ok(DeviceWidth::X16),
            _ => Err(Error::Argument(format!("device width `{s}` (valid: x4, x8, x16)"))),
        }
    }
}

/// DDR4 organisation and timing. Timings that datasheets give in
/// nanoseconds are kept in ns and converted with [`DramConfig::nck`]; the
/// rest are in clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DramConfig {
    pub channels: usize,
    pub ranks: usize,
    pub banks_per_rank: usize,
    pub bank_groups: usize,
    pub rows_per_bank: u64,
    pub device_width: DeviceWidth,
    pub row_bytes: u64,
    pub burst_bytes: u64,
    pub tck_ns: f64,

    pub cl: u32,
    pub cwl: u32,
    pub tras: u32,
    pub tccd_l: u32,
    pub tccd_s: u32,
    pub tburst: u32,
    pub trtrs: u32,

    pub trcd_ns: f64,
    pub trp_ns: f64,
    pub twr_ns: f64,
    pub trtp_ns: f64,
    pub trrd_s_ns: f64,
    pub trrd_l_ns: f64,
    pub tfaw_ns: f64,
    pub twtr_s_ns: f64,
    pub twtr_l_ns: f64,
    pub trefi_ns: f64,
    pub trfc_ns: f64,

    pub refresh: bool,
    pub fim_enabled: bool,
    pub offset_bits: u32,
}

impl Default for DramConfig {
    /// Four-rank DDR4-2400R built from x16 devices.
    fn default() -> Self {
        DramConfig {
            channels: 1,
            ranks: 4,
            banks_per_rank: 16,
            bank_groups: 4,
            rows_per_bank: 1 << 16,
            device_width: DeviceWidth::X16,
            row_bytes: 8192,
            burst_bytes: 64,
            tck_ns: 0.83,
            cl: 16,
            cwl: 12,
            tras: 39,
            tccd_l: 6,
            tccd_s: 4,
            tburst: 4,
            trtrs: 2,
            trcd_ns: 13.32,
            trp_ns: 13.32,
            twr_ns: 15.0,
            trtp_ns: 7.5,
            trrd_s_ns: 5.3,
            trrd_l_ns: 6.4,
            tfaw_ns: 30.0,
            twtr_s_ns: 2.5,
            twtr_l_ns: 7.5,
            trefi_ns: 7800.0,
            trfc_ns: 350.0,
            refresh: true,
            fim_enabled: true,
            offset_bits: 16,
        }
    }
}

/// All timing parameters in clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub cl: u64,
    pub cwl: u64,
    pub trcd: u64,
    pub trp: u64,
    pub tras: u64,
    pub trc: u64,
    pub twr: u64,
    pub trtp: u64,
    pub tccd_l: u64,
    pub tccd_s: u64,
    pub tburst: u64,
    pub trrd_s: u64,
    pub trrd_l: u64,
    pub tfaw: u64,
    pub twtr_s: u64,
    pub twtr_l: u64,
    pub trtrs: u64,
    pub trefi: u64,
    pub trfc: u64,
}

impl Timing {
    /// Minimum RD-to-WR issue spacing on one channel.
    pub fn rd_to_wr(&self) -> u64 {
        (self.cl + self.tburst + 2).saturating_sub(self.cwl)
    }

    /// Cycles an in-bank gather or scatter keeps the bank busy.
    pub fn internal_op(&self, n_cols: u64) -> u64 {
        n_cols * self.tccd_l
    }
}

/// Outcome of [`timing_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingAdjustment {
    pub window_ns: f64,
    pub internal_ns: f64,
    pub old_twr_ns: f64,
    pub new_twr_ns: f64,
}

impl TimingAdjustment {
    pub fn adjusted(&self) -> bool {
        self.new_twr_ns != self.old_twr_ns
    }
}

impl DramConfig {
    /// ns to clock cycles, with a small guard band so that values a hair over
    /// an integer multiple of tCK (13.32 ns at 0.83 ns) do not round up.
    pub fn nck(&self, ns: f64) -> u64 {
        ((ns / self.tck_ns) - 0.15).ceil().max(1.0) as u64
    }

    pub fn banks(&self) -> usize {
        self.channels * self.ranks * self.banks_per_rank
    }

    pub fn words_per_row(&self) -> u64 {
        self.row_bytes / 8
    }

    pub fn cols_per_row(&self) -> u64 {
        self.row_bytes / self.burst_bytes
    }

    /// Highest two rows of every bank are reserved as the FIM virtual rows.
    pub fn data_rows(&self) -> u64 {
        if self.fim_enabled {
            self.rows_per_bank - 2
        } else {
            self.rows_per_bank
        }
    }

    pub fn virtual_rows(&self) -> [u64; 2] {
        [self.rows_per_bank - 2, self.rows_per_bank - 1]
    }

    pub fn is_virtual(&self, row: u64) -> bool {
        self.fim_enabled && row >= self.rows_per_bank - 2
    }

    pub fn capacity(&self) -> u64 {
        self.row_bytes * self.data_rows() * self.banks() as u64
    }

    /// Chips per rank for a 64-bit bus.
    pub fn chips(&self) -> u32 {
        64 / self.device_width.bits()
    }

    /// Bursts needed to ship eight offsets, replicated on every chip.
    pub fn offset_bursts(&self) -> u64 {
        let bits = self.offset_bits as u64 * 8 * self.chips() as u64;
        bits.div_ceil(self.burst_bytes * 8)
    }

    pub fn timing(&self) -> Timing {
        let trcd = self.nck(self.trcd_ns);
        let trp = self.nck(self.trp_ns);
        let mut twr = self.nck(self.twr_ns);
        if self.fim_enabled {
            // the cycle-domain form of the window inequality
            twr = twr.max((8 * self.tccd_l as u64).saturating_sub(trp + trcd));
        }
        let tras = self.tras as u64;
        Timing {
            cl: self.cl as u64,
            cwl: self.cwl as u64,
            trcd,
            trp,
            tras,
            trc: tras + trp,
            twr,
            trtp: self.nck(self.trtp_ns),
            tccd_l: self.tccd_l as u64,
            tccd_s: self.tccd_s as u64,
            tburst: self.tburst as u64,
            trrd_s: self.nck(self.trrd_s_ns),
            trrd_l: self.nck(self.trrd_l_ns),
            tfaw: self.nck(self.tfaw_ns),
            twtr_s: self.nck(self.twtr_s_ns),
            twtr_l: self.nck(self.twtr_l_ns),
            trtrs: self.trtrs as u64,
            trefi: self.nck(self.trefi_ns),
            trfc: self.nck(self.trfc_ns),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |x: u64| x.is_power_of_two();
        let ints = [
            ("dram.channels", self.channels as u64),
            ("dram.ranks", self.ranks as u64),
            ("dram.banks_per_rank", self.banks_per_rank as u64),
            ("dram.bank_groups", self.bank_groups as u64),
            ("dram.row_bytes", self.row_bytes),
            ("dram.burst_bytes", self.burst_bytes),
        ];
        for (k, v) in ints {
            if !pow2(v) {
                return Err(Error::config(k, format!("{v} is not a power of two")));
            }
        }
        if !self.banks_per_rank.is_multiple_of(self.bank_groups) {
            return Err(Error::config("dram.bank_groups", "must divide banks_per_rank"));
        }
        if self.row_bytes < self.burst_bytes || self.burst_bytes < 8 {
            return Err(Error::config("dram.burst_bytes", "burst must be 8B..row_bytes"));
        }
        if self.rows_per_bank < 4 {
            return Err(Error::config("dram.rows_per_bank", "need at least 4 rows"));
        }
        if self.words_per_row() > 1 << self.offset_bits.min(16) || self.offset_bits > 16 {
            return Err(Error::config(
                "dram.offset_bits",
                format!("{} bits cannot address {} words per row", self.offset_bits, self.words_per_row()),
            ));
        }
        let cyc = [self.cl, self.cwl, self.tras, self.tccd_l, self.tccd_s, self.tburst];
        let ns = [
            self.tck_ns,
            self.trcd_ns,
            self.trp_ns,
            self.twr_ns,
            self.trtp_ns,
            self.trrd_s_ns,
            self.trrd_l_ns,
            self.tfaw_ns,
            self.twtr_s_ns,
            self.twtr_l_ns,
            self.trefi_ns,
            self.trfc_ns,
        ];
        if cyc.contains(&0) || ns.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("dram.timing", "all timings must be positive"));
        }
        Ok(())
    }
}

/// Makes sure the in-bank operation fits in the tWR + tRP + tRCD gap the
/// virtual-row command sequence creates, raising tWR just enough if not.
pub fn timing_check(cfg: &DramConfig) -> (DramConfig, TimingAdjustment) {
    let internal_ns = 8.0 * cfg.tccd_l as f64 * cfg.tck_ns;
    let window_ns = cfg.twr_ns + cfg.trp_ns + cfg.trcd_ns;
    let mut out = *cfg;
    // compare at 1 ps resolution so 39.84 vs 41.64 style values stay exact
    let ps = |x: f64| (x * 1000.0).round() as i64;
    if cfg.fim_enabled && ps(internal_ns) > ps(window_ns) {
        let need = internal_ns - cfg.trp_ns - cfg.trcd_ns;
        out.twr_ns = ps(need) as f64 / 1000.0;
    }
    let adj = TimingAdjustment {
        window_ns: out.twr_ns + out.trp_ns + out.trcd_ns,
        internal_ns,
        old_twr_ns: cfg.twr_ns,
        new_twr_ns: out.twr_ns,
    };
    (out, adj)
}
