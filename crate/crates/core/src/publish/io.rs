//! Published-graph text format:
//!
//! ```text
//! GP 2
//! L 0 1 2
//! L 1 0
//! E 2 0
//! LIN 0 0 real
//! LIN 1 0 real
//! LIN 2 0 real
//! ```
//!
//! Lines within each section are sorted numerically.

use std::fmt::Write as _;

use super::LayeredGraph;
use crate::graph::{GraphError, Lineage, Origin, VertexId};

pub fn write_published(g: &LayeredGraph) -> String {
    let mut out = String::new();
    writeln!(out, "GP {}", g.layer_count()).unwrap();
    for (l, mut vs) in g.layers().into_iter().enumerate() {
        vs.sort_unstable();
        write!(out, "L {l}").unwrap();
        for v in vs {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    let mut edges: Vec<_> = g.edges().collect();
    edges.sort_unstable();
    for (a, b) in edges {
        writeln!(out, "E {a} {b}").unwrap();
    }
    for (v, origin) in g.lineage().entries() {
        writeln!(out, "LIN {} {} {}", v.base, v.sub, origin.token()).unwrap();
    }
    out
}

pub fn read_published(text: &str) -> Result<LayeredGraph, GraphError> {
    let mut declared = None;
    let mut layers = Vec::new();
    let mut edges = Vec::new();
    let mut lineage = Lineage::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: String| GraphError::Parse { line: line_no, msg };
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let num = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad number `{s}`")));
        match fields.as_slice() {
            ["GP", n] => declared = Some(num(n)? as usize),
            ["L", l, vs @ ..] => {
                let l = num(l)? as usize;
                for v in vs {
                    layers.push((v.parse::<VertexId>().map_err(err)?, l));
                }
            }
            ["E", a, b] => {
                let a: VertexId = a.parse().map_err(err)?;
                let b: VertexId = b.parse().map_err(err)?;
                edges.push((a, b));
            }
            ["LIN", base, sub, origin] => {
                let id = VertexId::new(num(base)?, num(sub)?);
                let origin = Origin::parse_token(origin).ok_or_else(|| err(format!("bad origin `{origin}`")))?;
                lineage.insert(id, origin);
            }
            _ => return Err(err(format!("unrecognized record `{line}`"))),
        }
    }
    let declared = declared.ok_or(GraphError::Parse {
        line: 0,
        msg: "missing GP record".into(),
    })?;
    let g = LayeredGraph::new(layers, edges, lineage).map_err(|e| GraphError::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    if g.layer_count() != declared {
        return Err(GraphError::Parse {
            line: 0,
            msg: format!("GP declares {declared} layers, found {}", g.layer_count()),
        });
    }
    if let Some(v) = g.vertices().iter().find(|v| !g.lineage().contains(**v)) {
        return Err(GraphError::Parse {
            line: 0,
            msg: format!("vertex {v} missing from lineage"),
        });
    }
    Ok(g)
}
