//! Independent checks on published graphs, and an exact comparability-graph
//! test used both as an oracle and as a shortcut when splitting is off.

use std::fmt;

use super::LayeredGraph;
use crate::graph::{RelationMatrix, VertexId};
use crate::preprocess::ProcessedNetwork;

/// Implication classes of the arcs of an undirected graph: `a->b` forces
/// `a->c` when `b` and `c` are not adjacent, and `b->a` forces `c->a`.
#[derive(Debug, Clone)]
pub(crate) struct ArcClasses {
    n: usize,
    arcs: usize,
    class: Vec<u32>,
    transitive: bool,
}

impl ArcClasses {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        const NONE: usize = usize::MAX;
        let mut arc = vec![NONE; n * n];
        let mut nbrs = vec![Vec::new(); n];
        for (k, &(a, b)) in edges.iter().enumerate() {
            arc[a * n + b] = 2 * k;
            arc[b * n + a] = 2 * k + 1;
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut parent: Vec<usize> = (0..2 * edges.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let union = |p: &mut Vec<usize>, x: usize, y: usize| {
            let (rx, ry) = (find(p, x), find(p, y));
            p[rx] = ry;
        };
        for a in 0..n {
            let nb = &nbrs[a];
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    let (b, c) = (nb[i], nb[j]);
                    if arc[b * n + c] == NONE {
                        union(&mut parent, arc[a * n + b], arc[a * n + c]);
                        union(&mut parent, arc[b * n + a], arc[c * n + a]);
                    }
                }
            }
        }
        let transitive = (0..edges.len()).all(|k| find(&mut parent, 2 * k) != find(&mut parent, 2 * k + 1));
        let class = arc
            .iter()
            .map(|&x| if x == NONE { u32::MAX } else { find(&mut parent, x) as u32 })
            .collect();
        Self {
            n,
            arcs: 2 * edges.len(),
            class,
            transitive,
        }
    }

    /// Class of the arc `a->b`; `a` and `b` must be adjacent.
    pub fn of(&self, a: usize, b: usize) -> usize {
        self.class[a * self.n + b] as usize
    }

    /// Upper bound on class ids.
    pub fn count(&self) -> usize {
        self.arcs
    }

    /// Whether some class holds an arc together with its reverse.
    pub fn is_transitive(&self) -> bool {
        self.transitive
    }
}

/// Whether the undirected graph admits a transitive orientation, i.e. no
/// implication class contains an arc together with its reverse.
pub fn is_comparability_graph(n: usize, edges: &[(usize, usize)]) -> bool {
    ArcClasses::new(n, edges).is_transitive()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleViolation {
    /// A graph vertex that is not in the lineage or folds to no processed vertex.
    UnknownVertex(VertexId),
    /// Path-related vertices share a branch.
    PathPairComparable(VertexId, VertexId),
    /// Non-path-related vertices never share a branch.
    NonPathPairSeparated(VertexId, VertexId),
    /// Two pieces of one split vertex share a branch.
    CoPiecesComparable(VertexId, VertexId),
    TooFewRoots(usize),
    NoPathRelatedRoots,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownVertex(v) => write!(f, "unknown vertex {v}"),
            Self::PathPairComparable(a, b) => write!(f, "path-related {a} and {b} share a branch"),
            Self::NonPathPairSeparated(a, b) => write!(f, "non-path {a} and {b} share no branch"),
            Self::CoPiecesComparable(a, b) => write!(f, "pieces {a} and {b} of one vertex share a branch"),
            Self::TooFewRoots(n) => write!(f, "{n} root(s), need at least 2"),
            Self::NoPathRelatedRoots => write!(f, "no two roots are path-related"),
        }
    }
}

/// Checks a published graph against the relation matrix it was built from.
///
/// Branch membership is recomputed from the edges (monotone edge chains), so
/// the check does not trust the construction's own bookkeeping.
pub fn check_rules(g: &LayeredGraph, pn: &ProcessedNetwork, r: &RelationMatrix) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    let mut owner = Vec::with_capacity(g.vertices().len());
    for &v in g.vertices() {
        match pn.index_of(g.lineage().owner(v)) {
            Some(i) if g.lineage().contains(v) => owner.push(i),
            _ => {
                out.push(RuleViolation::UnknownVertex(v));
                return out;
            }
        }
    }
    let reach = g.reachability();
    let comparable = |x: usize, y: usize| reach[x].contains(y) || reach[y].contains(x);
    let m = pn.vertex_count();
    let mut owner_cmp = vec![false; m * m];
    let n = g.vertices().len();
    for x in 0..n {
        for y in x + 1..n {
            if !comparable(x, y) {
                continue;
            }
            let (a, b) = (owner[x], owner[y]);
            let (vx, vy) = (g.vertices()[x], g.vertices()[y]);
            if a == b {
                out.push(RuleViolation::CoPiecesComparable(vx, vy));
            } else if r.get(a, b) != RelationMatrix::NON_PATH {
                out.push(RuleViolation::PathPairComparable(vx, vy));
            }
            owner_cmp[a * m + b] = true;
            owner_cmp[b * m + a] = true;
        }
    }
    for (a, b) in r.pairs() {
        if r.get(a, b) == RelationMatrix::NON_PATH && !owner_cmp[a * m + b] {
            let ids = pn.vertices();
            out.push(RuleViolation::NonPathPairSeparated(ids[a], ids[b]));
        }
    }
    let roots = g.root_indices();
    if roots.len() < 2 {
        out.push(RuleViolation::TooFewRoots(roots.len()));
    } else {
        let related = roots.iter().enumerate().any(|(i, &x)| {
            roots[i + 1..].iter().any(|&y| {
                owner[x] != owner[y] && r.get(owner[x], owner[y]) == RelationMatrix::PATH
            })
        });
        if !related {
            out.push(RuleViolation::NoPathRelatedRoots);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_comparability_cases() {
        assert!(is_comparability_graph(0, &[]));
        assert!(is_comparability_graph(3, &[(0, 1), (1, 2)]));
        assert!(is_comparability_graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]));
        // Odd holes are not comparability graphs.
        assert!(!is_comparability_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]));
        // 3-sun.
        let sun = [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (1, 4), (2, 4), (2, 5), (0, 5)];
        assert!(!is_comparability_graph(6, &sun));
        let k4: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        assert!(is_comparability_graph(4, &k4));
    }
}
