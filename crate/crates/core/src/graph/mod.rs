//! Network, path and lineage data model shared by every pipeline stage.
//!
//! Raw inputs are a [`Network`] over dense base indices `0..n` plus a
//! [`PathSeq`] visiting every base vertex at least once. Later stages work
//! on sub-vertices ([`VertexId`] with `sub > 0`) whose relationship to the
//! base vertex is recorded in a public [`Lineage`].

mod generate;
mod io;
mod matrix;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use generate::{generate_map, generate_map_seeded, GeneratedMap, MapSpec};
pub use io::{read_map, write_map, MapFile};
pub use matrix::{derive_subgraphs, RelationMatrix, Subgraphs};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("need at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("edge count {edges} outside [{min}, {max}]")]
    OutOfRangeEdges { edges: usize, min: usize, max: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("vertex {vertex} out of range for {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("relation matrix still has an unrandomized pair ({0}, {1})")]
    UnrandomizedMatrix(usize, usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A base vertex (`sub == 0`) or one of its duplicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId {
    pub base: u32,
    pub sub: u32,
}

impl VertexId {
    pub const fn new(base: u32, sub: u32) -> Self {
        Self { base, sub }
    }

    pub const fn base(base: u32) -> Self {
        Self { base, sub: 0 }
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sub == 0 {
            write!(f, "{}", self.base)
        } else {
            write!(f, "{}.{}", self.base, self.sub)
        }
    }
}

impl FromStr for VertexId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, sub) = match s.split_once('.') {
            Some((b, s)) => (b, Some(s)),
            None => (s, None),
        };
        let base = base
            .parse::<u32>()
            .map_err(|_| format!("bad vertex token `{s}`"))?;
        let sub = match sub {
            Some(t) => t.parse::<u32>().map_err(|_| format!("bad vertex token `{s}`"))?,
            None => 0,
        };
        Ok(Self { base, sub })
    }
}

/// Undirected simple graph over base vertices `0..vertex_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[inline]
pub(crate) fn norm(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Network {
    /// Builds a network, rejecting self-loops, duplicates and bad endpoints.
    /// Connectivity is a [`validate`] concern, not a construction one.
    pub fn new(
        vertex_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (a, b) in edges {
            for v in [a, b] {
                if v >= vertex_count {
                    return Err(GraphError::VertexOutOfRange {
                        vertex: v,
                        count: vertex_count,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let e = norm(a, b);
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            vertex_count,
            edges: set,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as normalized `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.edges.contains(&norm(a, b))
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        if self.vertex_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.vertex_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        reached == self.vertex_count
    }

    /// The same network with one edge removed (the missing-edge adversary's view).
    pub fn without_edge(&self, a: usize, b: usize) -> Network {
        let e = norm(a, b);
        Network::new(self.vertex_count, self.edges().filter(|&x| x != e))
            .expect("subset of a valid edge set is valid")
    }
}

/// Ordered vertex sequence; consecutive entries must be network edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PathSeq(pub Vec<VertexId>);

impl PathSeq {
    pub fn from_bases(bases: impl IntoIterator<Item = usize>) -> Self {
        Self(bases.into_iter().map(|b| VertexId::base(b as u32)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bases(&self) -> Vec<usize> {
        self.0.iter().map(|v| v.base as usize).collect()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    /// Unordered base-level steps, normalized.
    pub fn base_edges(&self) -> BTreeSet<(usize, usize)> {
        self.0
            .windows(2)
            .map(|w| norm(w[0].base as usize, w[1].base as usize))
            .collect()
    }
}

impl fmt::Display for PathSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// How a sub-vertex came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// Stands for an actual visit of the base vertex (the first visit is `sub == 0`).
    RealRepeat,
    /// Duplicate added by the vertex mechanism; not part of the real path.
    Injected,
    /// A piece of sub-vertex `of` (same base) created while resolving an insertion conflict.
    Split { of: u32 },
}

impl Origin {
    pub fn token(&self) -> String {
        match self {
            Origin::RealRepeat => "real".to_string(),
            Origin::Injected => "injected".to_string(),
            Origin::Split { of } => format!("split:{of}"),
        }
    }

    pub fn parse_token(s: &str) -> Option<Self> {
        match s {
            "real" => Some(Origin::RealRepeat),
            "injected" => Some(Origin::Injected),
            _ => s
                .strip_prefix("split:")
                .and_then(|x| x.parse().ok())
                .map(|of| Origin::Split { of }),
        }
    }
}

/// Public map from base vertices to their sub-vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lineage {
    table: BTreeMap<u32, BTreeMap<u32, Origin>>,
}

impl Lineage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: VertexId, origin: Origin) {
        self.table.entry(id.base).or_default().insert(id.sub, origin);
    }

    pub fn origin(&self, id: VertexId) -> Option<Origin> {
        self.table.get(&id.base)?.get(&id.sub).copied()
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.origin(id).is_some()
    }

    /// Sub-vertices of `base` in ascending sub order.
    pub fn subs(&self, base: u32) -> impl Iterator<Item = (VertexId, Origin)> + '_ {
        self.table
            .get(&base)
            .into_iter()
            .flat_map(move |m| m.iter().map(move |(&s, &o)| (VertexId::new(base, s), o)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (VertexId, Origin)> + '_ {
        self.table
            .iter()
            .flat_map(|(&b, m)| m.iter().map(move |(&s, &o)| (VertexId::new(b, s), o)))
    }

    pub fn len(&self) -> usize {
        self.table.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The processed vertex a published vertex stands for: split pieces fold
    /// back onto the sub-vertex they were cut from.
    pub fn owner(&self, id: VertexId) -> VertexId {
        match self.origin(id) {
            Some(Origin::Split { of }) => VertexId::new(id.base, of),
            _ => id,
        }
    }

    /// Whether `id`'s owner represents an actual visit of the path.
    pub fn is_real(&self, id: VertexId) -> bool {
        matches!(self.origin(self.owner(id)), Some(Origin::RealRepeat))
    }

    pub fn next_sub(&self, base: u32) -> u32 {
        self.table
            .get(&base)
            .and_then(|m| m.keys().next_back())
            .map_or(0, |s| s + 1)
    }
}

/// A broken invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Disconnected,
    ShortPath(usize),
    NonBaseVertex(usize),
    UnknownVertex(usize),
    NonEdgeStep(usize),
    UncoveredVertex(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Disconnected => write!(f, "network is disconnected"),
            Violation::ShortPath(n) => write!(f, "path has {n} vertices, need at least 2"),
            Violation::NonBaseVertex(i) => write!(f, "path entry {i} is a sub-vertex"),
            Violation::UnknownVertex(i) => write!(f, "path entry {i} is not a network vertex"),
            Violation::NonEdgeStep(i) => {
                write!(f, "path step {i} -> {} is not a network edge", i + 1)
            }
            Violation::UncoveredVertex(v) => write!(f, "vertex {v} is never visited"),
        }
    }
}

/// Checks the network/path invariants; an empty result means the input is usable.
pub fn validate(network: &Network, path: &PathSeq) -> Vec<Violation> {
    let mut out = Vec::new();
    if !network.is_connected() {
        out.push(Violation::Disconnected);
    }
    if path.len() < 2 {
        out.push(Violation::ShortPath(path.len()));
    }
    let n = network.vertex_count();
    let mut covered = vec![false; n];
    for (i, v) in path.0.iter().enumerate() {
        if v.sub != 0 {
            out.push(Violation::NonBaseVertex(i));
        }
        if (v.base as usize) < n {
            covered[v.base as usize] = true;
        } else {
            out.push(Violation::UnknownVertex(i));
        }
    }
    for (i, w) in path.0.windows(2).enumerate() {
        let (a, b) = (w[0].base as usize, w[1].base as usize);
        if a < n && b < n && !network.has_edge(a, b) {
            out.push(Violation::NonEdgeStep(i));
        }
    }
    for (v, c) in covered.iter().enumerate() {
        if !c {
            out.push(Violation::UncoveredVertex(v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_net() -> Network {
        Network::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn vertex_tokens_round_trip() {
        assert_eq!("7".parse::<VertexId>().unwrap(), VertexId::base(7));
        assert_eq!("7.2".parse::<VertexId>().unwrap(), VertexId::new(7, 2));
        assert_eq!(VertexId::new(3, 1).to_string(), "3.1");
        assert!("x".parse::<VertexId>().is_err());
        assert!("1.".parse::<VertexId>().is_err());
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert_eq!(Network::new(3, [(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Network::new(3, [(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert!(matches!(
            Network::new(3, [(0, 3)]),
            Err(GraphError::VertexOutOfRange { vertex: 3, .. })
        ));
    }

    #[test]
    fn valid_input_has_no_violations() {
        assert!(validate(&path_net(), &PathSeq::from_bases([0, 1, 2, 3])).is_empty());
    }

    #[test]
    fn non_edge_step_is_reported() {
        let v = validate(&path_net(), &PathSeq::from_bases([0, 1, 3, 2]));
        assert!(v.contains(&Violation::NonEdgeStep(1)));
    }

    #[test]
    fn disconnected_network_is_reported() {
        let n = Network::new(4, [(0, 1), (2, 3)]).unwrap();
        let v = validate(&n, &PathSeq::from_bases([0, 1]));
        assert!(v.contains(&Violation::Disconnected));
        assert!(v.contains(&Violation::UncoveredVertex(2)));
    }

    #[test]
    fn lineage_owner_folds_pieces() {
        let mut lin = Lineage::new();
        lin.insert(VertexId::new(2, 0), Origin::RealRepeat);
        lin.insert(VertexId::new(2, 1), Origin::Injected);
        lin.insert(VertexId::new(2, 2), Origin::Split { of: 0 });
        assert_eq!(lin.owner(VertexId::new(2, 2)), VertexId::new(2, 0));
        assert!(lin.is_real(VertexId::new(2, 2)));
        assert!(!lin.is_real(VertexId::new(2, 1)));
        assert_eq!(lin.next_sub(2), 3);
        assert_eq!(lin.next_sub(5), 0);
        for o in [Origin::RealRepeat, Origin::Injected, Origin::Split { of: 4 }] {
            assert_eq!(Origin::parse_token(&o.token()), Some(o));
        }
    }
}
