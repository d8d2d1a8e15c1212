//! TOML system files.
//!
//! ```toml
//! name = "cantor-thirds"
//! description = "middle-thirds Cantor set"
//! kind = "self-similar"        # or "graph-directed"
//! ssc = true                   # strong separation is claimed (and certified on load checks)
//!
//! [[maps]]
//! ratio = "1/3"                # number or "p/q"
//! translation = [0.0]
//! # orthogonal = [[1.0]]       # row-major, identity when omitted
//! ```
//!
//! Graph-directed files set `kind = "graph-directed"`, `vertices = N` and list
//! `[[edges]]` tables with `source`, `target` (0-based) plus the map fields.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dimcons_core::ifs::{self, Edge, GraphDirectedIfs, SelfSimilarIfs, Similarity, System};
use dimcons_core::linalg::Mat;
use serde::Deserialize;

/// Problems with a system file. Every offending field is listed.
#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: invalid fields:\n{}", .fields.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n"))]
    Fields { path: String, fields: Vec<String> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> Result<f64, String> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(t) => {
                let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number or p/q"));
                match t.split_once('/') {
                    Some((p, q)) => Ok(parse(p)? / parse(q)?),
                    None => parse(t),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSpec {
    ratio: Number,
    translation: Vec<Number>,
    orthogonal: Option<Vec<Vec<Number>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSpec {
    source: usize,
    target: usize,
    ratio: Number,
    translation: Vec<Number>,
    orthogonal: Option<Vec<Vec<Number>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    SelfSimilar,
    GraphDirected,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "default_kind")]
    kind: Kind,
    #[serde(default)]
    ssc: bool,
    #[serde(default)]
    maps: Vec<MapSpec>,
    vertices: Option<usize>,
    #[serde(default)]
    edges: Vec<EdgeSpec>,
}

fn default_kind() -> Kind {
    Kind::SelfSimilar
}

/// A validated system file.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub name: String,
    pub description: String,
    /// Strong separation is claimed by the file.
    pub ssc: bool,
    pub system: Arc<System>,
}

impl LoadedSystem {
    /// Similarity dimension (Moran or Perron root).
    pub fn dimension(&self) -> f64 {
        ifs::system_dimension(&self.system)
    }

    /// The self-similar system, if that is what the file holds.
    pub fn self_similar(&self) -> Option<&SelfSimilarIfs> {
        match self.system.as_ref() {
            System::SelfSimilar(s) => Some(s),
            System::GraphDirected(_) => None,
        }
    }
}

fn similarity(field: &str, ratio: &Number, translation: &[Number], orthogonal: &Option<Vec<Vec<Number>>>, errs: &mut Vec<String>) -> Option<Similarity> {
    let mut bad = |m: String| {
        errs.push(format!("{field}: {m}"));
        None::<Similarity>
    };
    let ratio = match ratio.value() {
        Ok(r) => r,
        Err(e) => return bad(format!("ratio: {e}")),
    };
    let t: Result<Vec<f64>, String> = translation.iter().map(Number::value).collect();
    let t = match t {
        Ok(t) if !t.is_empty() => t,
        Ok(_) => return bad("translation is empty".into()),
        Err(e) => return bad(format!("translation: {e}")),
    };
    let n = t.len();
    let m = match orthogonal {
        None => Mat::identity(n),
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return bad(format!("orthogonal must be {n}×{n}"));
            }
            let data: Result<Vec<f64>, String> = rows.iter().flatten().map(Number::value).collect();
            match data {
                Ok(d) => Mat::from_row_major(n, n, d).expect("square"),
                Err(e) => return bad(format!("orthogonal: {e}")),
            }
        }
    };
    match Similarity::new(ratio, m, t) {
        Ok(s) => Some(s),
        Err(e) => bad(e.to_string()),
    }
}

/// Parses and validates a system from TOML text; `origin` names the source in
/// error messages.
pub fn parse_system(text: &str, origin: &str) -> Result<LoadedSystem, SchemaError> {
    let file: SystemFile =
        toml::from_str(text).map_err(|e| SchemaError::Parse { path: origin.to_string(), message: e.to_string() })?;
    let mut errs = Vec::new();
    let system = match file.kind {
        Kind::SelfSimilar => {
            if !file.edges.is_empty() || file.vertices.is_some() {
                errs.push("edges/vertices: only allowed with kind = \"graph-directed\"".into());
            }
            let maps: Vec<Similarity> = file
                .maps
                .iter()
                .enumerate()
                .filter_map(|(i, m)| similarity(&format!("maps[{i}]"), &m.ratio, &m.translation, &m.orthogonal, &mut errs))
                .collect();
            if errs.is_empty() {
                match SelfSimilarIfs::new(maps) {
                    Ok(s) => Some(System::from(s)),
                    Err(e) => {
                        errs.push(format!("maps: {e}"));
                        None
                    }
                }
            } else {
                None
            }
        }
        Kind::GraphDirected => {
            if !file.maps.is_empty() {
                errs.push("maps: use [[edges]] for graph-directed systems".into());
            }
            let vertices = file.vertices.unwrap_or_else(|| {
                errs.push("vertices: required for graph-directed systems".into());
                0
            });
            let edges: Vec<Edge> = file
                .edges
                .iter()
                .enumerate()
                .filter_map(|(i, e)| {
                    similarity(&format!("edges[{i}]"), &e.ratio, &e.translation, &e.orthogonal, &mut errs)
                        .map(|map| Edge { source: e.source, target: e.target, map })
                })
                .collect();
            if errs.is_empty() {
                match GraphDirectedIfs::new(vertices, edges) {
                    Ok(g) => Some(System::from(g)),
                    Err(e) => {
                        errs.push(format!("edges: {e}"));
                        None
                    }
                }
            } else {
                None
            }
        }
    };
    if file.ssc && file.kind == Kind::GraphDirected {
        errs.push("ssc: only certifiable for self-similar systems".into());
    }
    match system {
        Some(system) if errs.is_empty() => Ok(LoadedSystem {
            name: file.name,
            description: file.description,
            ssc: file.ssc,
            system: Arc::new(system),
        }),
        _ => Err(SchemaError::Fields { path: origin.to_string(), fields: errs }),
    }
}

/// Reads a system file from disk, or a bundled system by name.
pub fn load_system(spec: &str) -> Result<LoadedSystem, SchemaError> {
    if let Some((_, text)) = BUILTIN.iter().find(|(name, _)| *name == spec) {
        return parse_system(text, spec);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io { path: path.to_path_buf(), source })?;
    parse_system(&text, &path.display().to_string())
}

/// Bundled systems: `(name, TOML)`.
pub const BUILTIN: &[(&str, &str)] = &[
    ("cantor-thirds", include_str!("../systems/cantor-thirds.toml")),
    ("cantor-half", include_str!("../systems/cantor-half.toml")),
    ("four-corner", include_str!("../systems/four-corner.toml")),
    ("sierpinski", include_str!("../systems/sierpinski.toml")),
    ("cantor-dust", include_str!("../systems/cantor-dust.toml")),
    ("menger", include_str!("../systems/menger.toml")),
    ("golden-mean", include_str!("../systems/golden-mean.toml")),
    ("pinwheel", include_str!("../systems/pinwheel.toml")),
    ("unit-interval", include_str!("../systems/unit-interval.toml")),
];

/// All bundled systems, parsed.
pub fn builtin_systems() -> Vec<LoadedSystem> {
    BUILTIN.iter().map(|(name, text)| parse_system(text, name).expect("bundled systems are valid")).collect()
}
