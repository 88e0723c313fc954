//! Line-based map format:
//!
//! ```text
//! # comment
//! V 4
//! E 0 1
//! E 1 2
//! P 0 1 2
//! ```

use std::fmt::Write as _;

use super::{GraphError, Network, PathSeq, VertexId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapFile {
    pub network: Network,
    pub path: PathSeq,
}

pub fn write_map(network: &Network, path: &PathSeq) -> String {
    let mut out = String::new();
    writeln!(out, "V {}", network.vertex_count()).unwrap();
    for (a, b) in network.edges() {
        writeln!(out, "E {a} {b}").unwrap();
    }
    writeln!(out, "P {path}").unwrap();
    out
}

pub fn read_map(text: &str) -> Result<MapFile, GraphError> {
    let mut vertex_count = None;
    let mut edges = Vec::new();
    let mut path = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: String| GraphError::Parse { line: line_no, msg };
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(' ');
        let tag = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        match tag {
            "V" => {
                let [n] = rest.as_slice() else {
                    return Err(err("expected `V <n>`".into()));
                };
                vertex_count = Some(n.parse::<usize>().map_err(|_| err(format!("bad count `{n}`")))?);
            }
            "E" => {
                let [a, b] = rest.as_slice() else {
                    return Err(err("expected `E <u> <v>`".into()));
                };
                let a: VertexId = a.parse().map_err(err)?;
                let b: VertexId = b.parse().map_err(err)?;
                if a.sub != 0 || b.sub != 0 {
                    return Err(err("raw networks carry base vertices only".into()));
                }
                edges.push((a.base as usize, b.base as usize));
            }
            "P" => {
                let seq: Result<Vec<VertexId>, _> = rest.iter().map(|t| t.parse()).collect();
                path = Some(PathSeq(seq.map_err(err)?));
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }
    let missing = |what: &str| GraphError::Parse {
        line: 0,
        msg: format!("missing {what} record"),
    };
    let n = vertex_count.ok_or_else(|| missing("V"))?;
    Ok(MapFile {
        network: Network::new(n, edges)?,
        path: path.ok_or_else(|| missing("P"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_round_trips() {
        let text = "# demo\nV 3\nE 0 1\nE 1 2\n\nP 0 1 2\n";
        let m = read_map(text).unwrap();
        assert_eq!(m.network.edge_count(), 2);
        assert_eq!(m.path, PathSeq::from_bases([0, 1, 2]));
        assert_eq!(write_map(&m.network, &m.path), "V 3\nE 0 1\nE 1 2\nP 0 1 2\n");
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(read_map("V 3\nQ 1\n"), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(read_map("V 3\nE 0 1.1\nP 0 1\n"), Err(GraphError::Parse { .. })));
        assert!(matches!(read_map("V 3\nE 0 0\nP 0\n"), Err(GraphError::SelfLoop(0))));
        assert!(matches!(read_map("E 0 1\nP 0 1\n"), Err(GraphError::Parse { line: 0, .. })));
    }
}
