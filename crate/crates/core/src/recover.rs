//! Path recovery from a published graph.
//!
//! A participant knows the whole network. A network edge `u-v` lies on the
//! path exactly when some real visit of `u` and some real visit of `v` never
//! share a branch: path steps are kept apart, every other network edge is
//! forced onto a common branch. Chaining those steps over real visits gives
//! the path up to direction; the root/leaf layout then picks the direction.
//!
//! The adversary of [`adversary_infer`] knows every edge but one and tries
//! each possible missing edge in turn.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::graph::{Network, PathSeq, VertexId};
use crate::publish::LayeredGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecoverError {
    #[error("edge {0}-{1} is not in the network")]
    UnknownEdge(usize, usize),
    #[error("inconsistent adversary view: {0}")]
    InconsistentView(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStatus {
    InPath,
    NotInPath,
}

/// An edge status together with the number of graph vertices visited to
/// decide it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatusReport {
    pub status: EdgeStatus,
    pub touched: usize,
}

/// Branch structure of a published graph, with the pieces of each real
/// visit grouped by base vertex.
pub struct Branches<'g> {
    graph: &'g LayeredGraph,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    visits: BTreeMap<u32, BTreeMap<VertexId, Vec<usize>>>,
}

impl<'g> Branches<'g> {
    pub fn new(graph: &'g LayeredGraph) -> Self {
        let n = graph.vertices().len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (a, b) in graph.edges() {
            let (i, j) = (graph.index_of(a).unwrap(), graph.index_of(b).unwrap());
            children[i].push(j);
            parents[j].push(i);
        }
        let lin = graph.lineage();
        let mut visits: BTreeMap<u32, BTreeMap<VertexId, Vec<usize>>> = BTreeMap::new();
        for (i, &v) in graph.vertices().iter().enumerate() {
            if lin.is_real(v) {
                let o = lin.owner(v);
                visits.entry(o.base).or_default().entry(o).or_default().push(i);
            }
        }
        Self {
            graph,
            parents,
            children,
            visits,
        }
    }

    pub fn graph(&self) -> &LayeredGraph {
        self.graph
    }

    /// Real visits (owner sub-vertices) in ascending order.
    pub fn real_visits(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.visits.values().flat_map(|m| m.keys().copied())
    }

    fn pieces(&self, visit: VertexId) -> &[usize] {
        self.visits.get(&visit.base).and_then(|m| m.get(&visit)).map_or(&[], Vec::as_slice)
    }

    fn visits_of(&self, base: usize) -> Vec<VertexId> {
        self.visits
            .get(&(base as u32))
            .map_or_else(Vec::new, |m| m.keys().copied().collect())
    }

    /// Vertices sharing a branch with some piece of `visit`, and how many
    /// vertices the two walks (up and down) visited.
    fn comparable_to(&self, visit: VertexId) -> (FixedBitSet, usize) {
        let n = self.graph.vertices().len();
        let pieces = self.pieces(visit);
        let mut out = FixedBitSet::with_capacity(n);
        let mut touched = 0;
        for adj in [&self.children, &self.parents] {
            let mut mark = FixedBitSet::with_capacity(n);
            let mut stack = pieces.to_vec();
            mark.extend(pieces.iter().copied());
            while let Some(x) = stack.pop() {
                touched += 1;
                for &y in &adj[x] {
                    if !mark.put(y) {
                        stack.push(y);
                    }
                }
            }
            out.union_with(&mark);
        }
        for &p in pieces {
            out.set(p, false);
        }
        (out, touched)
    }

    fn separated(&self, near: &FixedBitSet, other: VertexId) -> bool {
        !self.pieces(other).iter().any(|&p| near.contains(p))
    }
}

/// Decides whether the network edge `edge` is a step of the published path.
pub fn participant_edge_status(
    branches: &Branches<'_>,
    network: &Network,
    edge: (usize, usize),
) -> Result<StatusReport, RecoverError> {
    let (u, v) = edge;
    if u >= network.vertex_count() || v >= network.vertex_count() || !network.has_edge(u, v) {
        return Err(RecoverError::UnknownEdge(u, v));
    }
    let (mut us, mut vs) = (branches.visits_of(u), branches.visits_of(v));
    if us.len() > vs.len() {
        std::mem::swap(&mut us, &mut vs);
    }
    let mut touched = 0;
    for &ui in &us {
        let (near, t) = branches.comparable_to(ui);
        touched += t;
        if vs.iter().any(|&vj| branches.separated(&near, vj)) {
            return Ok(StatusReport {
                status: EdgeStatus::InPath,
                touched,
            });
        }
    }
    Ok(StatusReport {
        status: EdgeStatus::NotInPath,
        touched,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Order {
    Confirmed(PathSeq),
    /// Both directions fit; the lexicographically smaller one comes first.
    Ambiguous(PathSeq, PathSeq),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    /// Path steps as normalized base pairs.
    pub edge_set: BTreeSet<(usize, usize)>,
    pub order: Order,
}

impl Reconstruction {
    /// `EDGES`, `ORDER` and one `SEQ` line per candidate sequence.
    pub fn report(&self) -> String {
        let mut out = String::from("EDGES");
        for (a, b) in &self.edge_set {
            write!(out, " {a}-{b}").unwrap();
        }
        out.push('\n');
        let (word, seqs): (_, Vec<&PathSeq>) = match &self.order {
            Order::Confirmed(s) => ("confirmed", vec![s]),
            Order::Ambiguous(a, b) => ("ambiguous", vec![a, b]),
            Order::Failed => ("failed", vec![]),
        };
        writeln!(out, "ORDER {word}").unwrap();
        for s in seqs {
            writeln!(out, "SEQ {s}").unwrap();
        }
        out
    }
}

// Path steps between real visits: pairs over a network edge that never share
// a branch.
fn chain_links(
    branches: &Branches<'_>,
    near: &BTreeMap<VertexId, FixedBitSet>,
    edges: impl Iterator<Item = (usize, usize)>,
) -> Vec<(VertexId, VertexId)> {
    let mut links = Vec::new();
    for (u, v) in edges {
        for ui in branches.visits_of(u) {
            for vj in branches.visits_of(v) {
                if branches.separated(&near[&ui], vj) {
                    links.push((ui, vj));
                }
            }
        }
    }
    links
}

fn neighbourhoods(branches: &Branches<'_>) -> BTreeMap<VertexId, FixedBitSet> {
    branches.real_visits().map(|v| (v, branches.comparable_to(v).0)).collect()
}

/// Orders the real visits along `links` when they form one simple chain
/// through all of `nodes`.
fn walk_chain(nodes: &BTreeSet<VertexId>, links: &[(VertexId, VertexId)]) -> Option<Vec<VertexId>> {
    if nodes.len() < 2 || links.len() != nodes.len() - 1 {
        return None;
    }
    let mut adj: BTreeMap<VertexId, Vec<VertexId>> = nodes.iter().map(|&v| (v, Vec::new())).collect();
    for &(a, b) in links {
        adj.get_mut(&a)?.push(b);
        adj.get_mut(&b)?.push(a);
    }
    if adj.values().any(|n| n.len() > 2) {
        return None;
    }
    let start = *adj.iter().find(|(_, n)| n.len() == 1)?.0;
    let mut seq = vec![start];
    let mut prev = None;
    let mut cur = start;
    while let Some(&next) = adj[&cur].iter().find(|&&x| Some(x) != prev) {
        seq.push(next);
        prev = Some(cur);
        cur = next;
    }
    (seq.len() == nodes.len()).then_some(seq)
}

// Whether walking from `seq[0]` matches the published orientation: the first
// vertex is not strictly nearer to a leaf than to a root.
fn fits_orientation(seq: &[VertexId], roots: &BTreeSet<VertexId>, leaves: &BTreeSet<VertexId>) -> bool {
    let d_root = seq.iter().position(|v| roots.contains(v));
    let d_leaf = seq.iter().position(|v| leaves.contains(v));
    !matches!((d_root, d_leaf), (Some(r), Some(l)) if l < r) && !matches!((d_root, d_leaf), (None, Some(_)))
}

fn fold(seq: &[VertexId]) -> PathSeq {
    PathSeq(seq.iter().map(|v| VertexId::base(v.base)).collect())
}

/// Recovers the path steps and, when possible, the visiting direction.
pub fn reconstruct_path(g: &LayeredGraph, network: &Network) -> Reconstruction {
    let branches = Branches::new(g);
    let near = neighbourhoods(&branches);
    let links = chain_links(&branches, &near, network.edges());
    let edge_set = links
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (a.base as usize, b.base as usize);
            (a.min(b), a.max(b))
        })
        .collect();
    let nodes: BTreeSet<VertexId> = branches.real_visits().collect();
    let Some(seq) = walk_chain(&nodes, &links) else {
        return Reconstruction {
            edge_set,
            order: Order::Failed,
        };
    };
    let lin = g.lineage();
    let roots = g.roots().into_iter().map(|v| lin.owner(v)).collect();
    let leaves = g.leaves().into_iter().map(|v| lin.owner(v)).collect();
    let rev: Vec<VertexId> = seq.iter().rev().copied().collect();
    let order = match (fits_orientation(&seq, &roots, &leaves), fits_orientation(&rev, &roots, &leaves)) {
        (true, false) => Order::Confirmed(fold(&seq)),
        (false, true) => Order::Confirmed(fold(&rev)),
        (true, true) => {
            let (a, b) = (fold(&seq), fold(&rev));
            if a.0 <= b.0 {
                Order::Ambiguous(a, b)
            } else {
                Order::Ambiguous(b, a)
            }
        }
        (false, false) => Order::Failed,
    };
    Reconstruction { edge_set, order }
}

/// 1 for the right confirmed order, 0.5 when the truth is one of two equally
/// likely orders, 0 otherwise.
pub fn score_good_output(rec: &Reconstruction, truth: &PathSeq) -> f64 {
    let truth = truth.bases();
    match &rec.order {
        Order::Confirmed(s) if s.bases() == truth => 1.0,
        Order::Ambiguous(a, b) if a.bases() == truth || b.bases() == truth => 0.5,
        _ => 0.0,
    }
}

/// What an adversary missing one network edge sees.
#[derive(Debug, Clone)]
pub struct AdversaryView {
    pub network: Network,
    pub path_vertices: BTreeSet<usize>,
    pub published: LayeredGraph,
}

impl AdversaryView {
    /// The view of `network` with `edge` withheld.
    pub fn withholding(
        network: &Network,
        path: &PathSeq,
        published: LayeredGraph,
        edge: (usize, usize),
    ) -> Result<Self, RecoverError> {
        let (a, b) = edge;
        if a >= network.vertex_count() || b >= network.vertex_count() || !network.has_edge(a, b) {
            return Err(RecoverError::UnknownEdge(a, b));
        }
        Ok(Self {
            network: network.without_edge(a, b),
            path_vertices: path.bases().into_iter().collect(),
            published,
        })
    }
}

/// Edges the adversary cannot rule out, each with the same weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Attack {
    pub candidates: Vec<(usize, usize)>,
}

impl Attack {
    pub fn weight(&self) -> f64 {
        1.0 / self.candidates.len() as f64
    }

    /// Worst-case rank of `edge` among equally weighted candidates.
    pub fn rank(&self, edge: (usize, usize)) -> Option<usize> {
        let e = (edge.0.min(edge.1), edge.0.max(edge.1));
        self.candidates.contains(&e).then_some(self.candidates.len())
    }
}

/// Tries every pair missing from the view's network as the withheld edge and
/// keeps those under which the publication decodes to one chain over the
/// known path vertices. Relations of non-edges are unconstrained, so this is
/// the only test a candidate has to pass.
pub fn adversary_infer(view: &AdversaryView) -> Result<Attack, RecoverError> {
    let branches = Branches::new(&view.published);
    let nodes: BTreeSet<VertexId> = branches.real_visits().collect();
    let bases: BTreeSet<usize> = nodes.iter().map(|v| v.base as usize).collect();
    if bases != view.path_vertices {
        return Err(RecoverError::InconsistentView(
            "published visits do not match the path vertices".into(),
        ));
    }
    let n = view.network.vertex_count();
    if let Some(&b) = bases.iter().find(|&&b| b >= n) {
        return Err(RecoverError::InconsistentView(format!("vertex {b} is not in the network")));
    }
    let near = neighbourhoods(&branches);
    let known = chain_links(&branches, &near, view.network.edges());
    let mut candidates = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if view.network.has_edge(a, b) {
                continue;
            }
            let mut links = known.clone();
            links.extend(chain_links(&branches, &near, std::iter::once((a, b))));
            if walk_chain(&nodes, &links).is_some() {
                candidates.push((a, b));
            }
        }
    }
    if candidates.is_empty() {
        return Err(RecoverError::InconsistentView("no missing edge explains the publication".into()));
    }
    Ok(Attack { candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Lineage, Origin};

    fn fig4_graph() -> (LayeredGraph, Network) {
        let (a, b, c, d, e, f) = (0, 1, 2, 3, 4, 5);
        let g = [(a, c), (a, f), (b, d), (b, e), (b, f), (c, e), (c, f), (d, f)];
        let p = [(a, b), (b, c), (c, d), (d, e), (e, f)];
        let n = Network::new(6, g.iter().chain(&p).copied()).unwrap();
        let mut lin = Lineage::new();
        for v in 0..6 {
            lin.insert(VertexId::base(v), Origin::RealRepeat);
        }
        let id = |v: usize| VertexId::base(v as u32);
        let layers = [(b, 0), (c, 0), (a, 1), (d, 1), (e, 1), (f, 2)].map(|(v, l)| (id(v), l));
        let edges = [(c, a), (b, d), (b, e), (c, e), (a, f), (d, f)].map(|(x, y)| (id(x), id(y)));
        (LayeredGraph::new(layers, edges, lin).unwrap(), n)
    }

    #[test]
    fn fig4_statuses() {
        let (g, n) = fig4_graph();
        let br = Branches::new(&g);
        let status = |e| participant_edge_status(&br, &n, e).unwrap().status;
        assert_eq!(status((1, 2)), EdgeStatus::InPath);
        assert_eq!(status((1, 3)), EdgeStatus::NotInPath);
        assert_eq!(participant_edge_status(&br, &n, (0, 4)), Err(RecoverError::UnknownEdge(0, 4)));
    }

    #[test]
    fn fig4_order_is_confirmed() {
        let (g, n) = fig4_graph();
        let rec = reconstruct_path(&g, &n);
        let truth = PathSeq::from_bases(0..6);
        assert_eq!(rec.order, Order::Confirmed(truth.clone()));
        assert_eq!(rec.edge_set, truth.base_edges());
        assert_eq!(score_good_output(&rec, &truth), 1.0);
        assert_eq!(score_good_output(&rec, &truth.reversed()), 0.0);
        assert_eq!(
            rec.report(),
            "EDGES 0-1 1-2 2-3 3-4 4-5\nORDER confirmed\nSEQ 0 1 2 3 4 5\n"
        );
    }

    #[test]
    fn isolated_vertices_leave_both_directions_open() {
        let n = Network::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut lin = Lineage::new();
        for v in 0..3 {
            lin.insert(VertexId::base(v), Origin::RealRepeat);
        }
        let g = LayeredGraph::new((0..3).map(|v| (VertexId::base(v), 0)), [], lin).unwrap();
        let rec = reconstruct_path(&g, &n);
        let truth = PathSeq::from_bases([2, 1, 0]);
        assert!(matches!(rec.order, Order::Ambiguous(..)));
        assert_eq!(score_good_output(&rec, &truth), 0.5);
    }

    #[test]
    fn fig4_attack_keeps_the_truth() {
        let (g, n) = fig4_graph();
        let path = PathSeq::from_bases(0..6);
        for e in n.edges().collect::<Vec<_>>() {
            let view = AdversaryView::withholding(&n, &path, g.clone(), e).unwrap();
            let attack = adversary_infer(&view).unwrap();
            assert!(attack.rank(e).is_some(), "{e:?}");
        }
    }
}
