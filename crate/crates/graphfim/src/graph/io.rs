use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{build_csr, CsrGraph, Edge, EdgeList, VertexId};
use crate::{Error, Result};

const CSR_MAGIC: &[u8; 4] = b"PCSR";
const PROP_MAGIC: &[u8; 4] = b"PPRP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFormat {
    /// `src dst [weight]` per line, `#` comments.
    Text,
    BinaryCsr,
}

impl FromStr for EdgeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "text-edge-list" => Ok(EdgeFormat::Text),
            "binary" | "binary-csr" | "csr" => Ok(EdgeFormat::BinaryCsr),
            other => {
                Err(Error::Argument(format!("unknown graph format `{other}` (expected text-edge-list or binary-csr)")))
            }
        }
    }
}

pub fn load_edge_list(path: impl AsRef<Path>, format: EdgeFormat) -> Result<EdgeList> {
    let path = path.as_ref();
    match format {
        EdgeFormat::Text => parse_text(path, BufReader::new(File::open(path)?)),
        EdgeFormat::BinaryCsr => Ok(read_binary_csr(path)?.to_edge_list()),
    }
}

fn parse_text(path: &Path, reader: impl BufRead) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut header_n: Option<usize> = None;
    let mut max_id: Option<VertexId> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
        let body = line.trim();
        if let Some(comment) = body.strip_prefix('#') {
            // `# vertices N` fixes the vertex count
            let mut words = comment.split_whitespace();
            if words.next() == Some("vertices") {
                let n = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| err("malformed `# vertices N` header".into()))?;
                header_n = Some(n);
            }
            continue;
        }
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected `src dst [weight]`, got {} fields", fields.len())));
        }
        let id = |s: &str| -> Result<VertexId> {
            let v: u64 = s.parse().map_err(|_| err(format!("bad vertex id `{s}`")))?;
            VertexId::try_from(v).map_err(|_| Error::Range(format!("line {lineno}: vertex id {v} exceeds 2^32-1")))
        };
        let src = id(fields[0])?;
        let dst = id(fields[1])?;
        let weight = match fields.get(2) {
            None => 0,
            Some(s) => {
                let w: u64 = s.parse().map_err(|_| err(format!("bad weight `{s}`")))?;
                u8::try_from(w).map_err(|_| Error::Range(format!("line {lineno}: weight {w} exceeds 255")))?
            }
        };
        max_id = max_id.max(Some(src.max(dst)));
        edges.push(Edge::new(src, dst, weight));
    }
    let implied = max_id.map_or(0, |m| m as usize + 1);
    let n_vertices = match header_n {
        Some(n) if n < implied => {
            return Err(Error::Range(format!("header declares {n} vertices but id {} appears", implied - 1)))
        }
        Some(n) => n,
        None => implied,
    };
    Ok(EdgeList { n_vertices, edges })
}

pub fn write_text(el: &EdgeList, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vertices {}", el.n_vertices)?;
    for e in &el.edges {
        writeln!(w, "{} {} {}", e.src, e.dst, e.weight)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary_csr(g: &CsrGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CSR_MAGIC)?;
    w.write_all(&(g.n_vertices as u64).to_le_bytes())?;
    w.write_all(&(g.n_edges() as u64).to_le_bytes())?;
    for &r in &g.row_ptr {
        w.write_all(&r.to_le_bytes())?;
    }
    for &c in &g.col_idx {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&g.weights)?;
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated file".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary_csr(path: impl AsRef<Path>) -> Result<CsrGraph> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != CSR_MAGIC {
        return Err(Error::Format("missing PCSR magic".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let row_ptr = (0..=n).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut col_bytes = vec![0u8; m * 4];
    r.read_exact(&mut col_bytes).map_err(|_| Error::Format("truncated col_idx".into()))?;
    let col_idx = col_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut weights = vec![0u8; m];
    r.read_exact(&mut weights).map_err(|_| Error::Format("truncated weights".into()))?;
    let g = CsrGraph { n_vertices: n, row_ptr, col_idx, weights };
    g.check_invariants().map_err(|e| Error::Format(e.to_string()))?;
    // canonical order, in case the writer did not sort destinations
    Ok(build_csr(&g.to_edge_list()))
}

/// Dumps a property array: magic `PPRP`, u64 count, then little-endian u64s.
pub fn write_props(props: &[u64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PROP_MAGIC)?;
    w.write_all(&(props.len() as u64).to_le_bytes())?;
    for p in props {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_props(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != PROP_MAGIC {
        return Err(Error::Format("missing PPRP magic".into()));
    }
    let n = read_u64(&mut r)?;
    (0..n).map(|_| read_u64(&mut r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<EdgeList> {
        parse_text(Path::new("mem"), Cursor::new(s))
    }

    #[test]
    fn two_edge_path() {
        let el = parse("0 1\n1 2\n").unwrap();
        assert_eq!(el.n_vertices, 3);
        assert_eq!(el.edges, vec![Edge::new(0, 1, 0), Edge::new(1, 2, 0)]);
    }

    #[test]
    fn empty_file() {
        let el = parse("").unwrap();
        assert_eq!(el, EdgeList::default());
    }

    #[test]
    fn comments_weights_and_header() {
        let el = parse("# vertices 10\n# a comment\n\n3 4 200\n").unwrap();
        assert_eq!(el.n_vertices, 10);
        assert_eq!(el.edges, vec![Edge::new(3, 4, 200)]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("0 1\n0 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn overflow_is_range_error() {
        assert!(matches!(parse("0 4294967296\n"), Err(Error::Range(_))));
        assert!(matches!(parse("0 1 256\n"), Err(Error::Range(_))));
        assert!(matches!(parse("# vertices 2\n0 5\n"), Err(Error::Range(_))));
    }

    #[test]
    fn random_file_matches_independent_scan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut text = String::new();
        for _ in 0..1000 {
            let (s, d): (u32, u32) = (rng.gen_range(0..5000), rng.gen_range(0..5000));
            text.push_str(&format!("{s} {d}\n"));
        }
        std::fs::write(&path, &text).unwrap();

        // independent pass: count lines and take the largest token
        let lines = text.lines().count();
        let max = text.split_whitespace().map(|t| t.parse::<usize>().unwrap()).max().unwrap();

        let el = load_edge_list(&path, EdgeFormat::Text).unwrap();
        assert_eq!(el.edges.len(), lines);
        assert_eq!(el.n_vertices, max + 1);
    }

    #[test]
    fn binary_csr_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pcsr");
        let el = EdgeList::new(5, vec![Edge::new(4, 0, 9), Edge::new(0, 3, 1), Edge::new(0, 1, 255)]).unwrap();
        let g = build_csr(&el);
        write_binary_csr(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PCSR");
        assert_eq!(bytes.len(), 4 + 16 + 6 * 8 + 3 * 4 + 3);
        assert_eq!(read_binary_csr(&path).unwrap(), g);
        let back = load_edge_list(&path, EdgeFormat::BinaryCsr).unwrap();
        assert_eq!(build_csr(&back), g);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pcsr");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_binary_csr(&path), Err(Error::Format(_))));
    }

    #[test]
    fn props_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_props(&[1, u64::MAX, 7], &path).unwrap();
        assert_eq!(read_props(&path).unwrap(), vec![1, u64::MAX, 7]);
    }
}
