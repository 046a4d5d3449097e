//! Text command traces: one `cycle kind channel rank bank row col` per line.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{CmdKind, Command};
use crate::{Error, Result};

pub fn write_trace<W: Write>(mut w: W, cmds: &[Command]) -> Result<()> {
    for c in cmds {
        writeln!(w, "{} {} {} {} {} {} {}", c.cycle, c.kind.name(), c.channel, c.rank, c.bank, c.row, c.col)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R, path: &Path) -> Result<Vec<Command>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        let kind = CmdKind::from_name(f[1]).ok_or_else(|| err(format!("unknown command `{}`", f[1])))?;
        let num = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad number `{s}`")));
        out.push(Command {
            cycle: num(f[0])?,
            kind,
            channel: num(f[2])? as u32,
            rank: num(f[3])? as u32,
            bank: num(f[4])? as u32,
            row: num(f[5])?,
            col: num(f[6])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cmds = vec![
            Command { cycle: 3, kind: CmdKind::Act, channel: 0, rank: 1, bank: 2, row: 9, col: 0 },
            Command { cycle: 19, kind: CmdKind::WrOffsetbuf, channel: 0, rank: 1, bank: 2, row: 65534, col: 0 },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &cmds).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next().unwrap(), "3 ACT 0 1 2 9 0");
        assert_eq!(read_trace(&buf[..], Path::new("t")).unwrap(), cmds);
    }

    #[test]
    fn bad_line() {
        let e = read_trace("1 ACT 0 0 0 0 0\n2 FOO 0 0 0 0 0\n".as_bytes(), Path::new("t")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
