//! Layered-graph construction.
//!
//! The published graph orders two vertices (one above the other in a branch)
//! exactly when their relation value is 2, and keeps path-related vertices
//! (value 1) in different branches. Construction inserts the processed path
//! vertex by vertex with backtracking; when no layering exists, vertices are
//! split into pieces that share the original links between them.

mod insert;
mod io;
mod rules;
mod split;

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use rand::Rng;
use thiserror::Error;

use crate::dp::PrivacyBudget;
use crate::graph::{Lineage, Network, Origin, PathSeq, RelationMatrix, VertexId};
use crate::preprocess::{preprocess_edges, preprocess_vertices, PreprocessError, ProcessedNetwork};

pub use insert::InsertionState;
pub use io::{read_published, write_published};
pub use rules::{check_rules, is_comparability_graph, RuleViolation};

use insert::{search, Pieces, Search};
use rules::ArcClasses;

/// Upper bound on search steps (placements plus backtracks) per publish.
pub const TRANSITION_CAP: u64 = 1_000_000;

// Step budget of one search round while splitting. Rounds on relations with
// no transitive orientation only need a deep partial placement.
const ROUND_BUDGET: u64 = 20_000;
const DOOMED_BUDGET: u64 = 30;

// Whether the search may open a fresh layer between two existing ones.
const GAP_SLOTS: bool = true;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PublishError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("no layered graph exists without splitting")]
    ConstructionFailed,
    #[error("construction did not finish within {0} steps")]
    InternalNontermination(u64),
    #[error("malformed layered graph: {0}")]
    Malformed(String),
}

/// Published graph: vertices on integer layers, parent-child edges, lineage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredGraph {
    vertices: Vec<VertexId>,
    layer: Vec<usize>,
    edges: BTreeSet<(usize, usize)>,
    lineage: Lineage,
}

impl LayeredGraph {
    /// Builds a graph from explicit layers and `(parent, child)` edges.
    pub fn new(
        layers: impl IntoIterator<Item = (VertexId, usize)>,
        edges: impl IntoIterator<Item = (VertexId, VertexId)>,
        lineage: Lineage,
    ) -> Result<Self, PublishError> {
        let mut placed: Vec<(VertexId, usize)> = layers.into_iter().collect();
        placed.sort_unstable();
        if let Some(w) = placed.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(PublishError::Malformed(format!("vertex {} placed twice", w[0].0)));
        }
        let vertices: Vec<VertexId> = placed.iter().map(|p| p.0).collect();
        let layer: Vec<usize> = placed.iter().map(|p| p.1).collect();
        let index = |v: VertexId| {
            vertices
                .binary_search(&v)
                .map_err(|_| PublishError::Malformed(format!("edge endpoint {v} has no layer")))
        };
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (i, j) = (index(a)?, index(b)?);
            if layer[i] >= layer[j] {
                return Err(PublishError::Malformed(format!("edge {a} -> {b} does not go down")));
            }
            set.insert((i, j));
        }
        Ok(Self {
            vertices,
            layer,
            edges: set,
            lineage,
        })
    }

    /// Builds the graph of a strict partial order given as `below[x]` = the
    /// set of `y` with `x < y` (must be transitive). Layers are longest-chain
    /// heights and edges are the covering pairs.
    pub(crate) fn from_order(ids: &[VertexId], below: &[FixedBitSet], lineage: Lineage) -> Self {
        let n = ids.len();
        let mut indegree: Vec<usize> = vec![0; n];
        for b in below {
            for y in b.ones() {
                indegree[y] += 1;
            }
        }
        let mut height = vec![0usize; n];
        let mut queue: Vec<usize> = (0..n).filter(|&x| indegree[x] == 0).collect();
        while let Some(x) = queue.pop() {
            for y in below[x].ones() {
                height[y] = height[y].max(height[x] + 1);
                indegree[y] -= 1;
                if indegree[y] == 0 {
                    queue.push(y);
                }
            }
        }
        let mut edges = Vec::new();
        for x in 0..n {
            let mut cover = below[x].clone();
            for z in below[x].ones() {
                cover.difference_with(&below[z]);
            }
            edges.extend(cover.ones().map(|y| (ids[x], ids[y])));
        }
        Self::new(ids.iter().copied().zip(height), edges, lineage).expect("order is acyclic")
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    pub fn layer(&self, v: VertexId) -> Option<usize> {
        self.index_of(v).map(|i| self.layer[i])
    }

    pub fn layer_count(&self) -> usize {
        self.layer.iter().max().map_or(0, |m| m + 1)
    }

    /// Vertices of each layer, top first.
    pub fn layers(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.layer_count()];
        for (i, &l) in self.layer.iter().enumerate() {
            out[l].push(self.vertices[i]);
        }
        out
    }

    /// `(parent, child)` edges.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.edges.iter().map(|&(a, b)| (self.vertices[a], self.vertices[b]))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub(crate) fn root_indices(&self) -> Vec<usize> {
        let mut has_parent = vec![false; self.vertices.len()];
        for &(_, b) in &self.edges {
            has_parent[b] = true;
        }
        (0..self.vertices.len()).filter(|&i| !has_parent[i]).collect()
    }

    pub fn roots(&self) -> Vec<VertexId> {
        self.root_indices().into_iter().map(|i| self.vertices[i]).collect()
    }

    pub fn leaves(&self) -> Vec<VertexId> {
        let mut has_child = vec![false; self.vertices.len()];
        for &(a, _) in &self.edges {
            has_child[a] = true;
        }
        (0..self.vertices.len())
            .filter(|&i| !has_child[i])
            .map(|i| self.vertices[i])
            .collect()
    }

    /// `reach[x]` = vertices reachable from `x` along downward edges.
    pub fn reachability(&self) -> Vec<FixedBitSet> {
        let n = self.vertices.len();
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            children[a].push(b);
        }
        let mut by_layer: Vec<usize> = (0..n).collect();
        by_layer.sort_by_key(|&i| std::cmp::Reverse(self.layer[i]));
        let mut reach = vec![FixedBitSet::with_capacity(n); n];
        for x in by_layer {
            let mut acc = FixedBitSet::with_capacity(n);
            for &c in &children[x] {
                acc.insert(c);
                acc.union_with(&reach[c]);
            }
            reach[x] = acc;
        }
        reach
    }

    /// Whether `a` and `b` lie on a common branch.
    pub fn comparable(&self, a: VertexId, b: VertexId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => {
                let r = self.reachability();
                r[i].contains(j) || r[j].contains(i)
            }
            _ => false,
        }
    }

    /// The same branches with every parent-child relation flipped.
    pub fn reversed(&self) -> Self {
        let reach = self.reachability();
        let n = self.vertices.len();
        let mut above = vec![FixedBitSet::with_capacity(n); n];
        for (x, r) in reach.iter().enumerate() {
            for y in r.ones() {
                above[y].insert(x);
            }
        }
        Self::from_order(&self.vertices, &above, self.lineage.clone())
    }
}

/// Which randomized steps run and whether splitting is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishConfig {
    pub eps_v: Option<PrivacyBudget>,
    pub eps_e: Option<PrivacyBudget>,
    pub splitting: bool,
}

impl PublishConfig {
    /// Total privacy budget `eps_v + eps_e + ln 2`, when both steps are on.
    pub fn total_budget(&self) -> Option<f64> {
        Some(self.eps_v?.epsilon() + self.eps_e?.epsilon() + std::f64::consts::LN_2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PublishStats {
    /// Search rounds (one more than the number of splits, unless the forest
    /// fallback was taken).
    pub rounds: u32,
    pub splits: u32,
    /// Search steps over all rounds.
    pub transitions: u64,
    /// Whether the one-tree-per-link fallback produced the graph.
    pub forest: bool,
}

impl PublishStats {
    pub fn used_splitting(&self) -> bool {
        self.splits > 0 || self.forest
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Construction {
    pub graph: LayeredGraph,
    pub stats: PublishStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Publication {
    pub graph: LayeredGraph,
    pub processed: ProcessedNetwork,
    pub matrix: RelationMatrix,
    pub stats: PublishStats,
}

/// Insertion order: the first path vertex, then the rest from the far end back.
fn insertion_order(path: &[usize]) -> Vec<usize> {
    let mut order = Vec::with_capacity(path.len());
    if let Some((&first, rest)) = path.split_first() {
        order.push(first);
        order.extend(rest.iter().rev());
    }
    order
}

/// Assigns ids to pieces: the first piece of a vertex keeps its id, later
/// pieces get fresh sub-vertex numbers recorded as splits.
fn piece_ids(pn: &ProcessedNetwork, owner: &[usize]) -> (Vec<VertexId>, Lineage) {
    let mut lineage = pn.lineage().clone();
    let ids = owner
        .iter()
        .enumerate()
        .map(|(p, &o)| {
            let id = pn.vertices()[o];
            if p == o {
                id
            } else {
                let piece = VertexId::new(id.base, lineage.next_sub(id.base));
                lineage.insert(piece, Origin::Split { of: id.sub });
                piece
            }
        })
        .collect();
    (ids, lineage)
}

fn graph_from_layers(pn: &ProcessedNetwork, pieces: &Pieces, layers: &[usize]) -> LayeredGraph {
    let n = pieces.len();
    let below: Vec<FixedBitSet> = (0..n)
        .map(|x| {
            let mut b = FixedBitSet::with_capacity(n);
            b.extend(pieces.link[x].ones().filter(|&y| layers[y] > layers[x]));
            b
        })
        .collect();
    let (ids, lineage) = piece_ids(pn, &pieces.owner);
    LayeredGraph::from_order(&ids, &below, lineage)
}

/// One tree per non-path link: the endpoint earlier on the path is the parent.
fn forest(pn: &ProcessedNetwork, r: &RelationMatrix) -> LayeredGraph {
    let m = pn.vertex_count();
    let mut pos = vec![0; m];
    for (i, &v) in pn.path_indices().iter().enumerate() {
        pos[v] = i;
    }
    let mut owner: Vec<usize> = (0..m).collect();
    let mut used = vec![false; m];
    let mut pairs = Vec::new();
    for (a, b) in r.pairs() {
        if r.get(a, b) != RelationMatrix::NON_PATH {
            continue;
        }
        let (top, bottom) = if pos[a] < pos[b] { (a, b) } else { (b, a) };
        let mut piece = |v: usize| {
            if std::mem::replace(&mut used[v], true) {
                owner.push(v);
                owner.len() - 1
            } else {
                v
            }
        };
        pairs.push((piece(top), piece(bottom)));
    }
    let n = owner.len();
    let mut below = vec![FixedBitSet::with_capacity(n); n];
    for (x, y) in pairs {
        below[x].insert(y);
    }
    let (ids, lineage) = piece_ids(pn, &owner);
    LayeredGraph::from_order(&ids, &below, lineage)
}

/// Builds an unoriented layered graph from the processed path and the
/// randomized relation matrix.
///
/// Without splitting, a relation whose non-path links admit no layering fails
/// with [`PublishError::ConstructionFailed`]. With splitting, construction
/// always succeeds.
pub fn insert_vertices(
    pn: &ProcessedNetwork,
    r: &RelationMatrix,
    splitting: bool,
) -> Result<Construction, PublishError> {
    let mut pieces = Pieces::from_matrix(r);
    let mut order = insertion_order(pn.path_indices());
    let mut stats = PublishStats::default();
    loop {
        stats.rounds += 1;
        let classes = ArcClasses::new(pieces.len(), &pieces.edges());
        let feasible = classes.is_transitive();
        if !splitting {
            if !feasible {
                return Err(PublishError::ConstructionFailed);
            }
            return match search(&pieces.link, &classes, &order, GAP_SLOTS, TRANSITION_CAP, &mut stats.transitions) {
                Search::Done(layers) => Ok(Construction {
                    graph: graph_from_layers(pn, &pieces, &layers),
                    stats,
                }),
                Search::Stuck { exhausted: true, .. } => Err(PublishError::ConstructionFailed),
                Search::Stuck { .. } => Err(PublishError::InternalNontermination(TRANSITION_CAP)),
            };
        }
        let left = (TRANSITION_CAP / 2).saturating_sub(stats.transitions);
        let budget = if feasible { ROUND_BUDGET } else { DOOMED_BUDGET }.min(left);
        if budget == 0 {
            stats.forest = true;
            return Ok(Construction {
                graph: forest(pn, r),
                stats,
            });
        }
        match search(&pieces.link, &classes, &order, GAP_SLOTS, budget, &mut stats.transitions) {
            Search::Done(layers) => {
                return Ok(Construction {
                    graph: graph_from_layers(pn, &pieces, &layers),
                    stats,
                })
            }
            Search::Stuck { backup, stuck, .. } => {
                if split::resolve_conflicts(&mut pieces, &mut order, &backup, stuck, GAP_SLOTS) == 0 {
                    stats.forest = true;
                    return Ok(Construction {
                        graph: forest(pn, r),
                        stats,
                    });
                }
                stats.splits += 1;
            }
        }
    }
}

/// Flips the graph when the first path vertex is strictly nearer (in path
/// positions over real visits) to a leaf than to a root.
pub fn orient(g: &LayeredGraph, path: &PathSeq) -> LayeredGraph {
    let lin = g.lineage();
    let real: Vec<VertexId> = path.0.iter().copied().filter(|&v| lin.is_real(v)).collect();
    let owners = |vs: Vec<VertexId>| -> BTreeSet<VertexId> { vs.into_iter().map(|v| lin.owner(v)).collect() };
    let (roots, leaves) = (owners(g.roots()), owners(g.leaves()));
    let d_root = real.iter().position(|v| roots.contains(v));
    let d_leaf = real.iter().position(|v| leaves.contains(v));
    match (d_root, d_leaf) {
        (Some(r), Some(l)) if l < r => g.reversed(),
        (None, Some(_)) => g.reversed(),
        _ => g.clone(),
    }
}

/// Adds a detached piece of a path neighbour of some root's owner when no two
/// roots are path-related. The piece shares no branch with anything, so every
/// relation is kept, and it is both a root and a leaf, so the orientation
/// test gives the same answer.
fn add_root_partner(g: &LayeredGraph, pn: &ProcessedNetwork, r: &RelationMatrix) -> Option<LayeredGraph> {
    let lin = g.lineage();
    let owner = |x: usize| pn.index_of(lin.owner(g.vertices()[x])).expect("published vertex has an owner");
    let roots: Vec<usize> = g.root_indices().into_iter().map(owner).collect();
    let related = roots.iter().enumerate().any(|(i, &a)| {
        roots[i + 1..]
            .iter()
            .any(|&b| a != b && r.get(a, b) == RelationMatrix::PATH)
    });
    if related {
        return None;
    }
    let partner = roots
        .iter()
        .find_map(|&a| (0..pn.vertex_count()).find(|&b| b != a && r.get(a, b) == RelationMatrix::PATH))?;
    let id = pn.vertices()[partner];
    let mut lineage = lin.clone();
    let piece = VertexId::new(id.base, lineage.next_sub(id.base));
    lineage.insert(piece, Origin::Split { of: id.sub });
    let layers = g
        .vertices()
        .iter()
        .map(|&v| (v, g.layer(v).expect("own vertex")))
        .chain([(piece, 0)]);
    Some(LayeredGraph::new(layers, g.edges(), lineage).expect("detached vertex keeps the graph valid"))
}

/// Full pipeline: ring removal, non-edge randomization, construction,
/// orientation.
pub fn publish<R: Rng + ?Sized>(
    network: &Network,
    path: &PathSeq,
    cfg: PublishConfig,
    rng: &mut R,
) -> Result<Publication, PublishError> {
    let processed = preprocess_vertices(network, path, cfg.eps_v, rng)?;
    let matrix = preprocess_edges(&processed, cfg.eps_e, rng)?;
    let mut built = insert_vertices(&processed, &matrix, cfg.splitting)?;
    let mut graph = orient(&built.graph, &processed.path());
    if cfg.splitting {
        if let Some(g) = add_root_partner(&graph, &processed, &matrix) {
            graph = g;
            built.stats.splits += 1;
        }
    }
    Ok(Publication {
        graph,
        processed,
        matrix,
        stats: built.stats,
    })
}

/// Owner (processed vertex) of every graph vertex, keyed by graph vertex.
pub fn owners(g: &LayeredGraph) -> BTreeMap<VertexId, VertexId> {
    g.vertices().iter().map(|&v| (v, g.lineage().owner(v))).collect()
}
