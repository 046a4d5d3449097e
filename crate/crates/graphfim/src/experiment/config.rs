//! Experiment files: flat `key = value` lines with `[section]` headers.
//!
//! ```text
//! graph = kronecker:12:16
//! algorithm = bfs
//! presets = baseline-conventional, piccolo
//! tile_factors = 1, 2, 4
//!
//! [cache]
//! capacity = 2048
//! [dram]
//! ranks = 2
//! ```
//!
//! Keys under `[accel]`, `[cache]`, `[mshr]` and `[dram]` override fields of
//! the matching config struct for every preset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::accel::{AccelConfig, DESK_CACHE_BYTES};
use crate::cache::CacheModel;
use crate::dram::DeviceWidth;
use crate::graph::{EdgeFormat, SyntheticSpec, VertexId};
use crate::vcm::Algorithm;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    BaselineConventional,
    Sectored,
    Line8,
    Piccolo,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::BaselineConventional, Preset::Sectored, Preset::Line8, Preset::Piccolo];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BaselineConventional => "baseline-conventional",
            Preset::Sectored => "sectored",
            Preset::Line8 => "line8",
            Preset::Piccolo => "piccolo",
        }
    }

    pub fn model(self) -> CacheModel {
        match self {
            Preset::BaselineConventional => CacheModel::Conventional64,
            Preset::Sectored => CacheModel::Sectored,
            Preset::Line8 => CacheModel::Line8,
            Preset::Piccolo => CacheModel::Piccolo,
        }
    }

    /// Desk-scale defaults for this system.
    pub fn accel_config(self) -> AccelConfig {
        AccelConfig::new(self.model(), DESK_CACHE_BYTES)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-conventional" | "conventional" | "baseline" => Ok(Preset::BaselineConventional),
            "sectored" => Ok(Preset::Sectored),
            "line8" => Ok(Preset::Line8),
            "piccolo" => Ok(Preset::Piccolo),
            _ => Err(Error::Argument(format!(
                "unknown preset `{s}` (valid: baseline-conventional, sectored, line8, piccolo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Synthetic(SyntheticSpec),
    File { path: PathBuf, format: EdgeFormat },
}

impl GraphSource {
    pub fn parse(s: &str) -> Result<Self> {
        if let Ok(spec) = s.parse::<SyntheticSpec>() {
            return Ok(GraphSource::Synthetic(spec));
        }
        let path = PathBuf::from(s);
        if !path.exists() {
            return Err(Error::Argument(format!("`{s}` is neither a synthetic spec nor an existing file")));
        }
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("bin" | "csr") => EdgeFormat::BinaryCsr,
            _ => EdgeFormat::Text,
        };
        Ok(GraphSource::File { path, format })
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Synthetic(s) => write!(f, "{s}"),
            GraphSource::File { path, .. } => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    /// `section.field`
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub algorithm: Algorithm,
    pub source: Option<VertexId>,
    pub presets: Vec<Preset>,
    pub tile_factors: Vec<usize>,
    pub seed: u64,
    /// add the reverse of every edge after loading
    pub symmetrize: bool,
    pub output: Option<PathBuf>,
    pub overrides: Vec<Override>,
}

impl ExperimentConfig {
    pub fn new(graph: GraphSource, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            graph,
            algorithm,
            source: None,
            presets: vec![Preset::BaselineConventional, Preset::Piccolo],
            tile_factors: vec![1],
            seed: 1,
            symmetrize: false,
            output: None,
            overrides: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut section = String::new();
        let mut graph = None;
        let mut algorithm = None;
        let mut cfg_rest =
            ExperimentConfig::new(GraphSource::Synthetic(SyntheticSpec::Uniform { n: 1, m: 0 }), Algorithm::Bfs);
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(s) = line.strip_prefix('[') {
                let s =
                    s.strip_suffix(']').ok_or_else(|| perr(ln, format!("unclosed section header `{line}`")))?.trim();
                if !matches!(s, "accel" | "cache" | "mshr" | "dram") {
                    return Err(perr(ln, format!("unknown section `[{s}]` (valid: accel, cache, mshr, dram)")));
                }
                section = s.to_string();
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| perr(ln, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !section.is_empty() {
                let key = format!("{section}.{k}");
                check_override(&key, v)?;
                cfg_rest.overrides.push(Override { key, value: v.to_string() });
                continue;
            }
            let bad = |e: Error| Error::config(k, e.to_string());
            match k {
                "graph" => graph = Some(GraphSource::parse(v).map_err(bad)?),
                "algorithm" => algorithm = Some(v.parse::<Algorithm>().map_err(bad)?),
                "source" => {
                    cfg_rest.source =
                        Some(v.parse().map_err(|_| Error::config(k, format!("`{v}` is not a vertex id")))?)
                }
                "presets" => {
                    cfg_rest.presets = list(v).map(str::parse).collect::<Result<_>>().map_err(bad)?;
                }
                "tile_factors" => {
                    cfg_rest.tile_factors = list(v)
                        .map(|x| match x.parse::<usize>() {
                            Ok(f) if f >= 1 => Ok(f),
                            _ => Err(Error::config(k, format!("`{x}` is not a scaling factor >= 1"))),
                        })
                        .collect::<Result<_>>()?;
                }
                "seed" => {
                    cfg_rest.seed = v.parse().map_err(|_| Error::config(k, format!("`{v}` is not an integer")))?
                }
                "symmetrize" => {
                    cfg_rest.symmetrize =
                        v.parse().map_err(|_| Error::config(k, format!("`{v}` is not true or false")))?
                }
                "output" => cfg_rest.output = Some(PathBuf::from(v)),
                _ => return Err(Error::config(
                    k,
                    "unknown key (valid: graph, algorithm, source, presets, tile_factors, seed, symmetrize, output)",
                )),
            }
        }
        cfg_rest.graph = graph.ok_or_else(|| Error::config("graph", "missing"))?;
        cfg_rest.algorithm = algorithm.ok_or_else(|| Error::config("algorithm", "missing"))?;
        if cfg_rest.presets.is_empty() {
            return Err(Error::config("presets", "empty list"));
        }
        if cfg_rest.tile_factors.is_empty() {
            return Err(Error::config("tile_factors", "empty list"));
        }
        // surface bad values now rather than mid-run
        for p in &cfg_rest.presets {
            cfg_rest.accel_config(*p)?;
        }
        Ok(cfg_rest)
    }

    /// The preset's defaults with every override applied, validated.
    pub fn accel_config(&self, preset: Preset) -> Result<AccelConfig> {
        apply_overrides(preset.accel_config(), &self.overrides)
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn check_override(key: &str, _v: &str) -> Result<()> {
    if key == "cache.model" {
        return Err(Error::config(key, "the cache model is set by the preset"));
    }
    let probe = serde_json::to_value(Preset::Piccolo.accel_config())?;
    let (sec, field) = key.split_once('.').expect("section.key");
    let obj = if sec == "accel" { Some(&probe) } else { probe.get(sec) };
    if obj.and_then(|o| o.get(field)).is_none() || (sec == "accel" && matches!(field, "cache" | "mshr" | "dram")) {
        return Err(Error::config(key, "unknown key"));
    }
    Ok(())
}

pub fn apply_overrides(cfg: AccelConfig, overrides: &[Override]) -> Result<AccelConfig> {
    if overrides.is_empty() {
        cfg.validate()?;
        return Ok(cfg);
    }
    let mut v = serde_json::to_value(&cfg)?;
    for o in overrides {
        check_override(&o.key, &o.value)?;
        let (sec, field) = o.key.split_once('.').expect("checked");
        let obj = if sec == "accel" { &mut v } else { v.get_mut(sec).expect("checked") };
        let slot = obj.get_mut(field).expect("checked");
        *slot = coerce(&o.key, slot, &o.value)?;
    }
    let cfg: AccelConfig = serde_json::from_value(v).map_err(|e| Error::config("config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn coerce(key: &str, old: &Value, s: &str) -> Result<Value> {
    let bad = |what: &str| Error::config(key, format!("expected {what}, got `{s}`"));
    if key == "dram.device_width" {
        let w: DeviceWidth = s.parse().map_err(|_| bad("x4, x8 or x16"))?;
        return Ok(serde_json::to_value(w)?);
    }
    Ok(match old {
        Value::Bool(_) => Value::Bool(match s {
            "true" | "on" | "yes" | "1" => true,
            "false" | "off" | "no" | "0" => false,
            _ => return Err(bad("a boolean")),
        }),
        Value::Number(n) if n.is_f64() => {
            let x: f64 = s.parse().map_err(|_| bad("a number"))?;
            serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| bad("a finite number"))?
        }
        Value::Number(_) => Value::Number(s.parse::<u64>().map_err(|_| bad("a non-negative integer"))?.into()),
        _ => Value::String(s.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(t: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(t, Path::new("test.cfg"))
    }

    #[test]
    fn full_file() {
        let c = parse(
            "graph = kronecker:10:16\nalgorithm = sssp\npresets = conventional, piccolo\ntile_factors = 1,2, 4\nseed = 7\n\n[dram]\nranks = 2\ntck_ns = 0.75\n[accel]\nprefetch_enabled = false\n[cache]\ncapacity = 4096\n",
        )
        .unwrap();
        assert_eq!(c.algorithm, Algorithm::Sssp);
        assert_eq!(c.tile_factors, vec![1, 2, 4]);
        assert_eq!(c.seed, 7);
        let a = c.accel_config(Preset::Piccolo).unwrap();
        assert_eq!(a.dram.ranks, 2);
        assert_eq!(a.dram.tck_ns, 0.75);
        assert!(!a.prefetch_enabled);
        assert_eq!(a.cache.capacity, 4096);
        assert_eq!(a.cache.model, CacheModel::Piccolo);
        assert!(!c.accel_config(Preset::BaselineConventional).unwrap().dram.fim_enabled);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("graph = uniform:10:10\nalgorithm = dfs\n", "algorithm"),
            ("graph = uniform:10:10\nalgorithm = bfs\ntile_factors = 0\n", "tile_factors"),
            ("graph = uniform:10:10\nalgorithm = bfs\n[dram]\nranks = lots\n", "dram.ranks"),
            ("graph = uniform:10:10\nalgorithm = bfs\n[dram]\nranks = 3\n", "dram.ranks"),
            ("graph = uniform:10:10\nalgorithm = bfs\n[mshr]\noffsets_per_group = 4\n", "mshr.offsets_per_group"),
            ("graph = uniform:10:10\nalgorithm = bfs\n[cache]\nbogus = 1\n", "cache.bogus"),
            ("graph = /no/such/file.txt\nalgorithm = bfs\n", "graph"),
            ("algorithm = bfs\n", "graph"),
            ("graph = uniform:10:10\nalgorithm = bfs\nspeed = 11\n", "speed"),
        ];
        for (text, key) in cases {
            match parse(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn algorithm_error_lists_choices() {
        let e = parse("graph = uniform:10:10\nalgorithm = dfs\n").unwrap_err().to_string();
        assert!(e.contains("pr, bfs, cc, sssp, sswp"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse("graph = uniform:10:10\n\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn device_width_override() {
        let c = parse("graph = uniform:10:10\nalgorithm = bfs\n[dram]\ndevice_width = x8\n").unwrap();
        assert_eq!(c.accel_config(Preset::Piccolo).unwrap().dram.device_width, DeviceWidth::X8);
    }
}
