//! Post-hoc command-trace checker. It shares no state or code path with the
//! controller: every rule is re-derived from the trace and the config.

use std::collections::HashMap;

use super::{CmdKind, Command, DramConfig, COL_DATABUF, COL_GATHER_OFFS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub cycle: u64,
    pub rule: String,
}

#[derive(Default, Clone)]
struct BankSt {
    open: Option<u64>,
    latched: Option<u64>,
    act: Option<u64>,
    pre: Option<u64>,
    rd: Option<u64>,
    wr_end: Option<u64>,
    refresh_end: u64,
    /// internal gather/scatter busy interval
    busy: Option<(u64, u64)>,
}

#[derive(Default, Clone)]
struct RankSt {
    acts: Vec<(u64, usize)>,
    col: Option<u64>,
    col_bg: HashMap<usize, u64>,
    wr_end: Option<u64>,
    wr_end_bg: HashMap<usize, u64>,
}

#[derive(Default, Clone)]
struct ChanSt {
    last_cycle: Option<u64>,
    bus_end: u64,
    bus_rank: Option<u32>,
    last_rd: Option<u64>,
}

/// Checks every timing and protocol rule; returns all violations found.
pub fn validate_trace(cfg: &DramConfig, cmds: &[Command]) -> Vec<Violation> {
    let t = cfg.timing();
    let mut out = Vec::new();
    let mut banks: HashMap<(u32, u32, u32), BankSt> = HashMap::new();
    let mut ranks: HashMap<(u32, u32), RankSt> = HashMap::new();
    let mut chans: HashMap<u32, ChanSt> = HashMap::new();
    let n_off = cfg.offset_bursts();
    let mut prev_cycle = 0;

    for (i, c) in cmds.iter().enumerate() {
        let mut bad = |rule: String| out.push(Violation { index: i, cycle: c.cycle, rule });
        let bg = (c.bank as usize) % cfg.bank_groups;
        let virt = cfg.is_virtual(c.row);

        if c.cycle < prev_cycle {
            bad("trace not in cycle order".into());
        }
        prev_cycle = c.cycle;
        let ch = chans.entry(c.channel).or_default();
        if ch.last_cycle == Some(c.cycle) {
            bad("two commands on one channel in the same cycle".into());
        }
        ch.last_cycle = Some(c.cycle);

        let rk = ranks.entry((c.channel, c.rank)).or_default();
        let key = (c.channel, c.rank, c.bank);
        let need = |bad: &mut dyn FnMut(String), name: &str, since: Option<u64>, gap: u64| {
            if let Some(s) = since {
                if c.cycle < s + gap {
                    bad(format!("{name}: {} < {} + {gap}", c.cycle, s));
                }
            }
        };

        match c.kind {
            CmdKind::Ref => {
                let bpr = cfg.banks_per_rank as u32;
                for b in 0..bpr {
                    let st = banks.entry((c.channel, c.rank, b)).or_default();
                    if st.open.is_some() {
                        bad(format!("REF with bank {b} open"));
                    }
                    need(&mut bad, "tRP before REF", st.pre, t.trp);
                    if let Some((_, e)) = st.busy {
                        if c.cycle < e {
                            bad(format!("REF during in-bank operation of bank {b}"));
                        }
                    }
                    st.latched = None;
                    st.refresh_end = c.cycle + t.trfc;
                }
                continue;
            }
            CmdKind::Act => {
                let st = banks.entry(key).or_default();
                if st.open.is_some() {
                    bad("ACT to an open bank".into());
                }
                need(&mut bad, "tRP", st.pre, t.trp);
                need(&mut bad, "tRC", st.act, t.trc);
                if c.cycle < st.refresh_end {
                    bad("ACT inside tRFC".into());
                }
                if !virt {
                    if let Some((_, e)) = st.busy {
                        if c.cycle < e {
                            bad("real-row ACT during in-bank operation".into());
                        }
                    }
                }
                if let Some(&(last, _)) = rk.acts.last() {
                    need(&mut bad, "tRRD_S", Some(last), t.trrd_s);
                }
                if let Some(&(last, _)) = rk.acts.iter().rev().find(|a| a.1 == bg) {
                    need(&mut bad, "tRRD_L", Some(last), t.trrd_l);
                }
                if rk.acts.len() >= 4 {
                    need(&mut bad, "tFAW", Some(rk.acts[rk.acts.len() - 4].0), t.tfaw);
                }
                rk.acts.push((c.cycle, bg));
                if rk.acts.len() > 8 {
                    rk.acts.remove(0);
                }
                st.open = Some(c.row);
                if !virt {
                    st.latched = Some(c.row);
                }
                st.act = Some(c.cycle);
            }
            CmdKind::Pre => {
                let st = banks.entry(key).or_default();
                if st.open.is_none() {
                    bad("PRE to a closed bank".into());
                }
                need(&mut bad, "tRAS", st.act, t.tras);
                need(&mut bad, "tRTP", st.rd, t.trtp);
                need(&mut bad, "tWR", st.wr_end, t.twr);
                st.open = None;
                st.pre = Some(c.cycle);
            }
            k => {
                let write = k.is_write();
                let st = banks.entry(key).or_default();
                if st.open != Some(c.row) {
                    bad(format!("{} to row {} but open row is {:?}", k.name(), c.row, st.open));
                }
                let is_buffer_cmd =
                    matches!(k, CmdKind::RdDatabuf | CmdKind::WrOffsetbuf | CmdKind::WrDatabuf | CmdKind::DummyWr);
                if is_buffer_cmd != virt {
                    bad(format!("{} addressed to the wrong kind of row", k.name()));
                }
                need(&mut bad, "tRCD", st.act, t.trcd);
                if let Some((_, e)) = st.busy {
                    if c.cycle < e {
                        bad(format!("{} during in-bank operation (ends {e})", k.name()));
                    }
                }
                need(&mut bad, "tCCD_S", rk.col, t.tccd_s);
                need(&mut bad, "tCCD_L", rk.col_bg.get(&bg).copied(), t.tccd_l);
                let start = c.cycle + if write { t.cwl } else { t.cl };
                let end = start + t.tburst;
                let gap = if ch.bus_rank.is_some_and(|r| r != c.rank) { t.trtrs } else { 0 };
                if ch.bus_end > 0 && start < ch.bus_end + gap {
                    bad(format!("data bus overlap: burst at {start}, bus busy to {} (+{gap})", ch.bus_end));
                }
                if write {
                    need(&mut bad, "RD-to-WR turnaround", ch.last_rd, t.rd_to_wr());
                    rk.wr_end = Some(end);
                    rk.wr_end_bg.insert(bg, end);
                    st.wr_end = Some(end);
                } else {
                    need(&mut bad, "tWTR_S", rk.wr_end, t.twtr_s);
                    need(&mut bad, "tWTR_L", rk.wr_end_bg.get(&bg).copied(), t.twtr_l);
                    ch.last_rd = Some(c.cycle);
                    st.rd = Some(c.cycle);
                }
                rk.col = Some(c.cycle);
                rk.col_bg.insert(bg, c.cycle);
                ch.bus_end = end;
                ch.bus_rank = Some(c.rank);

                let triggers = match k {
                    CmdKind::WrOffsetbuf => c.col == COL_GATHER_OFFS + n_off - 1,
                    CmdKind::WrDatabuf => c.col == COL_DATABUF,
                    _ => false,
                };
                if triggers {
                    if st.latched.is_none() {
                        bad("in-bank operation with no latched row".into());
                    }
                    // scatters may be shorter; eight columns is the worst case
                    st.busy = Some((end, end + t.internal_op(8)));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(cycle: u64, kind: CmdKind, bank: u32, row: u64, col: u64) -> Command {
        Command { cycle, kind, channel: 0, rank: 0, bank, row, col }
    }

    #[test]
    fn catches_trcd() {
        let cfg = DramConfig::default();
        let tr = [cmd(0, CmdKind::Act, 0, 5, 0), cmd(10, CmdKind::Rd, 0, 5, 0)];
        let v = validate_trace(&cfg, &tr);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.starts_with("tRCD"));
        let tr = [cmd(0, CmdKind::Act, 0, 5, 0), cmd(16, CmdKind::Rd, 0, 5, 0)];
        assert!(validate_trace(&cfg, &tr).is_empty());
    }

    #[test]
    fn catches_early_databuf_read() {
        let cfg = DramConfig::default();
        let [y, z] = cfg.virtual_rows();
        // WR_offsetbuf at 16 -> gather runs 32..80; RD_databuf at 70 is early
        let tr = [
            cmd(0, CmdKind::Act, 0, y, 0),
            cmd(16, CmdKind::WrOffsetbuf, 0, y, 0),
            cmd(50, CmdKind::Pre, 0, y, 0),
            cmd(66, CmdKind::Act, 0, z, 0),
            cmd(82, CmdKind::RdDatabuf, 0, z, COL_DATABUF),
        ];
        let v = validate_trace(&cfg, &tr);
        assert!(v.iter().any(|v| v.rule.contains("no latched row")), "{v:?}");
    }
}
