use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Edge, EdgeList, VertexId};
use crate::{Error, Result};

/// Initiator probabilities for recursive quadrant sampling (A, B, C; D is
/// the remainder), Graph500 values.
const KRONECKER_A: f64 = 0.57;
const KRONECKER_B: f64 = 0.19;
const KRONECKER_C: f64 = 0.19;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticSpec {
    Kronecker { scale: u32, edge_factor: u32 },
    WattsStrogatz { n: usize, k: usize, beta: f64 },
    Uniform { n: usize, m: usize },
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntheticSpec::Kronecker { scale, edge_factor } => {
                write!(f, "kronecker:{scale}:{edge_factor}")
            }
            SyntheticSpec::WattsStrogatz { n, k, beta } => write!(f, "ws:{n}:{k}:{beta}"),
            SyntheticSpec::Uniform { n, m } => write!(f, "uniform:{n}:{m}"),
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// `kronecker:SCALE:EDGE_FACTOR`, `ws:N:K:BETA`, `uniform:N:M`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || {
            Error::Argument(format!(
                "bad synthetic graph `{s}` (expected kronecker:SCALE:EF, ws:N:K:BETA or uniform:N:M)"
            ))
        };
        fn num<T: FromStr>(p: &str, bad: impl Fn() -> Error) -> Result<T> {
            p.parse().map_err(|_| bad())
        }
        match parts.as_slice() {
            ["kronecker" | "kron", scale, ef] => {
                Ok(SyntheticSpec::Kronecker { scale: num(scale, bad)?, edge_factor: num(ef, bad)? })
            }
            ["ws" | "watts-strogatz", n, k, beta] => {
                Ok(SyntheticSpec::WattsStrogatz { n: num(n, bad)?, k: num(k, bad)?, beta: num(beta, bad)? })
            }
            ["uniform", n, m] => Ok(SyntheticSpec::Uniform { n: num(n, bad)?, m: num(m, bad)? }),
            _ => Err(bad()),
        }
    }
}

/// Generates a synthetic edge list. Weights are left at zero; see
/// [`assign_weights`].
pub fn gen_synthetic(spec: SyntheticSpec, seed: u64) -> Result<EdgeList> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        SyntheticSpec::Kronecker { scale, edge_factor } => {
            if scale == 0 || scale > 31 {
                return Err(Error::Argument(format!("kronecker scale {scale} not in 1..=31")));
            }
            Ok(kronecker(scale, edge_factor, &mut rng))
        }
        SyntheticSpec::WattsStrogatz { n, k, beta } => {
            if !(0.0..=1.0).contains(&beta) {
                return Err(Error::Argument(format!("beta {beta} outside [0, 1]")));
            }
            if k % 2 != 0 || k >= n {
                return Err(Error::Argument(format!("watts-strogatz needs an even k < n (got n={n}, k={k})")));
            }
            Ok(watts_strogatz(n, k, beta, &mut rng))
        }
        SyntheticSpec::Uniform { n, m } => {
            if n == 0 && m > 0 {
                return Err(Error::Argument("uniform graph with edges needs n > 0".into()));
            }
            let edges = (0..m)
                .map(|_| Edge::new(rng.gen_range(0..n) as VertexId, rng.gen_range(0..n) as VertexId, 0))
                .collect();
            Ok(EdgeList { n_vertices: n, edges })
        }
    }
}

fn kronecker(scale: u32, edge_factor: u32, rng: &mut ChaCha8Rng) -> EdgeList {
    let n = 1usize << scale;
    let m = edge_factor as usize * n;
    let ab = KRONECKER_A + KRONECKER_B;
    let abc = ab + KRONECKER_C;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (mut src, mut dst) = (0u32, 0u32);
        for level in 0..scale {
            let r: f64 = rng.gen();
            let (i, j) = if r < KRONECKER_A {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            src |= i << level;
            dst |= j << level;
        }
        edges.push(Edge::new(src, dst, 0));
    }
    // relabel so high-degree vertices are not clustered at low ids
    let mut perm: Vec<VertexId> = (0..n as VertexId).collect();
    perm.shuffle(rng);
    for e in &mut edges {
        e.src = perm[e.src as usize];
        e.dst = perm[e.dst as usize];
    }
    EdgeList { n_vertices: n, edges }
}

fn watts_strogatz(n: usize, k: usize, beta: f64, rng: &mut ChaCha8Rng) -> EdgeList {
    let mut edges = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 1..=k / 2 {
            let mut t = (i + j) % n;
            if beta > 0.0 && rng.gen::<f64>() < beta {
                loop {
                    t = rng.gen_range(0..n);
                    if t != i {
                        break;
                    }
                }
            }
            edges.push(Edge::new(i as VertexId, t as VertexId, 0));
            edges.push(Edge::new(t as VertexId, i as VertexId, 0));
        }
    }
    EdgeList { n_vertices: n, edges }
}

/// Replaces every weight with a uniform draw from 0..=255.
pub fn assign_weights(el: &EdgeList, seed: u64) -> EdgeList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EdgeList { n_vertices: el.n_vertices, edges: el.edges.iter().map(|e| Edge::new(e.src, e.dst, rng.gen())).collect() }
}
