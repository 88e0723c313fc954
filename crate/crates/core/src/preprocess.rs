//! Differentially private ring removal (vertex step) and non-edge
//! randomization (edge step).
//!
//! The vertex step gives every base vertex a number of sub-vertices sampled
//! from `[appearances, max(max_appearances, 2)]`; the i-th visit of a vertex is
//! relabeled to sub-vertex `i`, and surplus duplicates are appended to the
//! end of the processed path. The edge step builds the relation matrix and
//! resamples every non-edge to `1` or `2`.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::dp::{self, DpError, PrivacyBudget};
use crate::graph::{norm, validate, Lineage, Network, Origin, PathSeq, RelationMatrix, VertexId, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("invalid input: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidInput(Vec<Violation>),
    #[error("processed path repeats vertex {0}")]
    CyclicPath(VertexId),
    #[error("instance too large for exact enumeration: {0}")]
    InstanceTooLarge(String),
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// Network after ring removal: every vertex of the processed path is distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedNetwork {
    vertices: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    edges: BTreeSet<(usize, usize)>,
    path: Vec<usize>,
    lineage: Lineage,
}

impl ProcessedNetwork {
    /// Processed vertices in `(base, sub)` order; positions are the dense
    /// indices used by [`RelationMatrix`].
    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, id: VertexId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Inherited edges over dense indices.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&norm(a, b))
    }

    /// Processed path as dense indices.
    pub fn path_indices(&self) -> &[usize] {
        &self.path
    }

    pub fn path(&self) -> PathSeq {
        PathSeq(self.path.iter().map(|&i| self.vertices[i]).collect())
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn injected_count(&self) -> usize {
        self.lineage
            .entries()
            .filter(|(_, o)| *o == Origin::Injected)
            .count()
    }
}

fn appearance_counts(n: usize, path: &PathSeq) -> Vec<usize> {
    let mut counts = vec![0; n];
    for v in &path.0 {
        counts[v.base as usize] += 1;
    }
    counts
}

/// Candidate sub-vertex counts and their qualities for one base vertex.
fn sub_count_candidates(
    appearances: usize,
    max_appearances: usize,
    degree: usize,
    max_degree: usize,
) -> Result<(Vec<usize>, Vec<f64>), DpError> {
    let top = max_appearances.max(2);
    let counts: Vec<usize> = (appearances..=top).collect();
    let qualities = counts
        .iter()
        .map(|&c| dp::quality_vertex(c, top, degree, max_degree))
        .collect::<Result<_, _>>()?;
    Ok((counts, qualities))
}

/// Builds the processed network from explicit per-base sub-vertex counts.
fn expand(network: &Network, path: &PathSeq, sub_counts: &[usize]) -> ProcessedNetwork {
    let n = network.vertex_count();
    let appearances = appearance_counts(n, path);
    let mut lineage = Lineage::new();
    let mut vertices = Vec::new();
    for base in 0..n {
        for sub in 0..sub_counts[base] {
            let id = VertexId::new(base as u32, sub as u32);
            let origin = if sub < appearances[base] {
                Origin::RealRepeat
            } else {
                Origin::Injected
            };
            lineage.insert(id, origin);
            vertices.push(id);
        }
    }
    let index: HashMap<VertexId, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut seen = vec![0u32; n];
    let mut hat_path = Vec::with_capacity(vertices.len());
    for v in &path.0 {
        let b = v.base as usize;
        hat_path.push(index[&VertexId::new(v.base, seen[b])]);
        seen[b] += 1;
    }
    for base in 0..n {
        for sub in appearances[base]..sub_counts[base] {
            hat_path.push(index[&VertexId::new(base as u32, sub as u32)]);
        }
    }

    let mut edges = BTreeSet::new();
    for (a, b) in network.edges() {
        for sa in 0..sub_counts[a] {
            for sb in 0..sub_counts[b] {
                let ia = index[&VertexId::new(a as u32, sa as u32)];
                let ib = index[&VertexId::new(b as u32, sb as u32)];
                edges.insert(norm(ia, ib));
            }
        }
    }
    ProcessedNetwork {
        vertices,
        index,
        edges,
        path: hat_path,
        lineage,
    }
}

/// Ring removal with optional DP duplicate injection.
///
/// With `eps_v == None` every base vertex gets exactly as many sub-vertices
/// as it has visits, which removes rings without injecting anything.
pub fn preprocess_vertices<R: Rng + ?Sized>(
    network: &Network,
    path: &PathSeq,
    eps_v: Option<PrivacyBudget>,
    rng: &mut R,
) -> Result<ProcessedNetwork, PreprocessError> {
    let violations = validate(network, path);
    if !violations.is_empty() {
        return Err(PreprocessError::InvalidInput(violations));
    }
    let n = network.vertex_count();
    let appearances = appearance_counts(n, path);
    let sub_counts = match eps_v {
        None => appearances.clone(),
        Some(eps) => {
            let max_app = appearances.iter().copied().max().unwrap_or(1);
            let max_degree = network.max_degree();
            let mut out = Vec::with_capacity(n);
            for v in 0..n {
                let (counts, qualities) =
                    sub_count_candidates(appearances[v], max_app, network.degree(v), max_degree)?;
                let pick = dp::sample_index(&qualities, eps, dp::VERTEX_SENSITIVITY, rng)?;
                out.push(counts[pick]);
            }
            out
        }
    };
    Ok(expand(network, path, &sub_counts))
}

/// Relation matrix before randomization: `1` for consecutive processed-path
/// vertices, `2` for other inherited edges, `0` elsewhere.
pub fn initial_matrix(pn: &ProcessedNetwork) -> RelationMatrix {
    let mut r = RelationMatrix::new(pn.vertex_count());
    for (a, b) in pn.edges() {
        r.set(a, b, RelationMatrix::NON_PATH);
    }
    for w in pn.path.windows(2) {
        r.set(w[0], w[1], RelationMatrix::PATH);
    }
    r
}

fn check_acyclic(pn: &ProcessedNetwork) -> Result<(), PreprocessError> {
    let mut seen = vec![false; pn.vertex_count()];
    for &i in &pn.path {
        if std::mem::replace(&mut seen[i], true) {
            return Err(PreprocessError::CyclicPath(pn.vertices[i]));
        }
    }
    Ok(())
}

/// Probability that a randomized non-edge becomes `2` (a non-path pair).
///
/// Networks with fewer than three edges use the three-edge quality values;
/// the result does not depend on the edge count anyway because the
/// sensitivity equals the quality gap.
pub fn non_path_probability(eps_e: PrivacyBudget, edge_count: usize) -> Result<f64, DpError> {
    let e = edge_count.max(3);
    let q = [dp::quality_edge(1, e)?, dp::quality_edge(2, e)?];
    Ok(dp::selection_probabilities(&q, eps_e, dp::edge_sensitivity(e)?)?[1])
}

/// Randomizes every non-edge of the processed network.
///
/// With `eps_e == None` non-edges are all assigned `1`, i.e. the non-path
/// graph is exactly the network's non-path edges.
pub fn preprocess_edges<R: Rng + ?Sized>(
    pn: &ProcessedNetwork,
    eps_e: Option<PrivacyBudget>,
    rng: &mut R,
) -> Result<RelationMatrix, PreprocessError> {
    check_acyclic(pn)?;
    let mut r = initial_matrix(pn);
    let e = pn.edge_count().max(3);
    let qualities = [dp::quality_edge(1, e)?, dp::quality_edge(2, e)?];
    let sensitivity = dp::edge_sensitivity(e)?;
    let open: Vec<(usize, usize)> = r
        .pairs()
        .filter(|&(i, j)| r.get(i, j) == RelationMatrix::NON_EDGE)
        .collect();
    for (i, j) in open {
        let value = match eps_e {
            None => RelationMatrix::PATH,
            Some(eps) => {
                if dp::sample_index(&qualities, eps, sensitivity, rng)? == 1 {
                    RelationMatrix::NON_PATH
                } else {
                    RelationMatrix::PATH
                }
            }
        };
        r.set(i, j, value);
    }
    Ok(r)
}

/// Which randomized step a privacy-ratio check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivacyStep {
    Vertex,
    Edge,
}

/// Two inputs that the mechanism must not tell apart: usually the full
/// network and the network with one path edge missing, over the same path.
#[derive(Debug, Clone)]
pub struct InstancePair {
    pub a: Network,
    pub b: Network,
    pub path: PathSeq,
}

impl InstancePair {
    pub fn identical(network: Network, path: PathSeq) -> Self {
        Self {
            b: network.clone(),
            a: network,
            path,
        }
    }

    pub fn missing_edge(network: Network, path: PathSeq, edge: (usize, usize)) -> Self {
        Self {
            b: network.without_edge(edge.0, edge.1),
            a: network,
            path,
        }
    }
}

pub const MAX_ENUM_BASES: usize = 5;
pub const MAX_ENUM_PAIRS: usize = 20;

/// Exact `max_out Pr[out | a] / Pr[out | b]` over every output of one step,
/// using analytic sampling probabilities. Outputs impossible under `b` but
/// possible under `a` give an infinite ratio.
pub fn empirical_privacy_ratio(
    step: PrivacyStep,
    pair: &InstancePair,
    eps: PrivacyBudget,
) -> Result<f64, PreprocessError> {
    let n = pair.a.vertex_count();
    if n > MAX_ENUM_BASES || pair.b.vertex_count() != n {
        return Err(PreprocessError::InstanceTooLarge(format!("{n} base vertices")));
    }
    match step {
        PrivacyStep::Vertex => vertex_ratio(pair, eps),
        PrivacyStep::Edge => edge_ratio(pair, eps),
    }
}

fn vertex_distribution(
    network: &Network,
    appearances: &[usize],
    eps: PrivacyBudget,
) -> Result<Vec<(Vec<usize>, Vec<f64>)>, PreprocessError> {
    let max_app = appearances.iter().copied().max().unwrap_or(1);
    (0..network.vertex_count())
        .map(|v| {
            let (counts, q) =
                sub_count_candidates(appearances[v], max_app, network.degree(v), network.max_degree())?;
            let p = dp::selection_probabilities(&q, eps, dp::VERTEX_SENSITIVITY)?;
            Ok((counts, p))
        })
        .collect()
}

fn vertex_ratio(pair: &InstancePair, eps: PrivacyBudget) -> Result<f64, PreprocessError> {
    let n = pair.a.vertex_count();
    let appearances = appearance_counts(n, &pair.path);
    let da = vertex_distribution(&pair.a, &appearances, eps)?;
    let db = vertex_distribution(&pair.b, &appearances, eps)?;
    // Odometer over every vector of sub-vertex counts.
    let mut digits = vec![0usize; n];
    let mut worst: f64 = 0.0;
    loop {
        let pa: f64 = (0..n).map(|v| da[v].1[digits[v]]).product();
        let pb: f64 = (0..n).map(|v| db[v].1[digits[v]]).product();
        if pa > 0.0 {
            worst = worst.max(if pb > 0.0 { pa / pb } else { f64::INFINITY });
        }
        let mut k = 0;
        loop {
            if k == n {
                return Ok(worst);
            }
            digits[k] += 1;
            if digits[k] < da[k].0.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

// Per-pair law of one processed instance: fixed value, or P(value == 2).
enum PairLaw {
    Fixed(i8),
    Random(f64),
}

fn edge_laws(network: &Network, path: &PathSeq, eps: PrivacyBudget) -> Result<Vec<PairLaw>, PreprocessError> {
    // Same processed vertex set on both sides: no duplicates injected.
    let counts = appearance_counts(network.vertex_count(), path);
    let pn = expand(network, path, &counts);
    let mut r = initial_matrix(&pn);
    // A path step that is not an edge of this network is just a non-edge here.
    for w in pn.path.windows(2) {
        let (a, b) = (pn.vertices[w[0]].base as usize, pn.vertices[w[1]].base as usize);
        if !network.has_edge(a, b) {
            r.set(w[0], w[1], RelationMatrix::NON_EDGE);
        }
    }
    let p2 = non_path_probability(eps, pn.edge_count())?;
    Ok(r.pairs()
        .map(|(i, j)| match r.get(i, j) {
            RelationMatrix::NON_EDGE => PairLaw::Random(p2),
            v => PairLaw::Fixed(v),
        })
        .collect())
}

fn edge_ratio(pair: &InstancePair, eps: PrivacyBudget) -> Result<f64, PreprocessError> {
    let la = edge_laws(&pair.a, &pair.path, eps)?;
    let lb = edge_laws(&pair.b, &pair.path, eps)?;
    let free: Vec<usize> = (0..la.len())
        .filter(|&k| matches!(la[k], PairLaw::Random(_)) || matches!(lb[k], PairLaw::Random(_)))
        .collect();
    if free.len() > MAX_ENUM_PAIRS {
        return Err(PreprocessError::InstanceTooLarge(format!("{} randomized pairs", free.len())));
    }
    let prob = |law: &PairLaw, value: i8| match *law {
        PairLaw::Fixed(v) => f64::from(u8::from(v == value)),
        PairLaw::Random(p2) => {
            if value == 2 {
                p2
            } else {
                1.0 - p2
            }
        }
    };
    // Pairs fixed on both sides either agree (factor 1) or make every
    // output impossible on one side.
    let clash = la
        .iter()
        .zip(&lb)
        .any(|p| matches!(p, (PairLaw::Fixed(x), PairLaw::Fixed(y)) if x != y));
    let fixed_b = if clash { 0.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for mask in 0u64..(1u64 << free.len()) {
        let mut pa = 1.0;
        let mut pb = fixed_b;
        for (bit, &k) in free.iter().enumerate() {
            let value = if mask >> bit & 1 == 1 { 2 } else { 1 };
            pa *= prob(&la[k], value);
            pb *= prob(&lb[k], value);
        }
        if pa > 0.0 {
            worst = worst.max(if pb > 0.0 { pa / pb } else { f64::INFINITY });
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    // Fig. 5 style network over a..f = 0..5 with the cyclic path a b c d e b c f.
    fn ring_map() -> (Network, PathSeq) {
        let n = Network::new(
            6,
            [(0, 1), (0, 4), (1, 4), (1, 2), (1, 5), (4, 5), (4, 3), (2, 3), (2, 5)],
        )
        .unwrap();
        (n, PathSeq::from_bases([0, 1, 2, 3, 4, 1, 2, 5]))
    }

    #[test]
    fn ring_removal_relabels_repeats() {
        let (n, p) = ring_map();
        let pn = preprocess_vertices(&n, &p, None, &mut seeded(0)).unwrap();
        let want: Vec<VertexId> = [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (1, 1), (2, 1), (5, 0)]
            .iter()
            .map(|&(b, s)| VertexId::new(b, s))
            .collect();
        assert_eq!(pn.path().0, want);
        assert_eq!(pn.injected_count(), 0);
        // b0-c0 is a path edge, b0-c1 only an inherited one.
        let r = initial_matrix(&pn);
        let ix = |b, s| pn.index_of(VertexId::new(b, s)).unwrap();
        assert_eq!(r.get(ix(1, 0), ix(2, 0)), 1);
        assert_eq!(r.get(ix(1, 0), ix(2, 1)), 2);
        assert_eq!(r.get(ix(1, 0), ix(1, 1)), 0);
    }

    #[test]
    fn dp_ring_removal_keeps_path_acyclic_and_appends_duplicates() {
        let (n, p) = ring_map();
        for seed in 0..40 {
            let pn = preprocess_vertices(&n, &p, Some(eps(0.5)), &mut seeded(seed)).unwrap();
            let path = pn.path();
            let distinct: BTreeSet<_> = path.0.iter().collect();
            assert_eq!(distinct.len(), path.len());
            assert_eq!(path.len(), pn.vertex_count());
            // Real prefix is the relabeled input path.
            let bases: Vec<u32> = path.0[..p.len()].iter().map(|v| v.base).collect();
            assert_eq!(bases, p.0.iter().map(|v| v.base).collect::<Vec<_>>());
            for v in &path.0[p.len()..] {
                assert_eq!(pn.lineage().origin(*v), Some(Origin::Injected));
            }
            // Range tops out at max(maxNum, 2) = 2 here.
            assert!(pn.vertices().iter().all(|v| v.sub < 2));
        }
    }

    #[test]
    fn three_vertex_path_range_is_one_or_two() {
        let n = Network::new(3, [(0, 1), (1, 2)]).unwrap();
        let p = PathSeq::from_bases([0, 1, 2]);
        let (counts, _) = sub_count_candidates(1, 1, 1, 2).unwrap();
        assert_eq!(counts, vec![1, 2]);
        let all = expand(&n, &p, &[2, 2, 2]);
        assert_eq!(all.vertex_count(), 6);
        assert_eq!(all.injected_count(), 3);
        let none = expand(&n, &p, &[1, 1, 1]);
        assert_eq!(none.vertex_count(), 3);
    }

    #[test]
    fn edge_inheritance() {
        let (n, p) = ring_map();
        let pn = preprocess_vertices(&n, &p, Some(eps(0.5)), &mut seeded(3)).unwrap();
        for (i, &v) in pn.vertices().iter().enumerate() {
            for &u in n.neighbors(v.base as usize) {
                let any = pn
                    .vertices()
                    .iter()
                    .enumerate()
                    .any(|(j, w)| w.base as usize == u && pn.has_edge(i, j));
                assert!(any);
            }
        }
    }

    #[test]
    fn complete_network_has_nothing_to_randomize() {
        let n = Network::new(4, (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j)))).unwrap();
        let p = PathSeq::from_bases([2, 0, 3, 1]);
        let pn = preprocess_vertices(&n, &p, None, &mut seeded(0)).unwrap();
        let r = preprocess_edges(&pn, Some(eps(0.5)), &mut seeded(0)).unwrap();
        assert_eq!(r, initial_matrix(&pn));
    }

    #[test]
    fn path_only_network_randomizes_three_pairs() {
        let n = Network::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let p = PathSeq::from_bases([0, 1, 2, 3]);
        let pn = preprocess_vertices(&n, &p, None, &mut seeded(0)).unwrap();
        let r = preprocess_edges(&pn, Some(eps(1.0)), &mut seeded(5)).unwrap();
        assert!(r.is_randomized() && r.is_symmetric());
        for (i, j) in [(0, 1), (1, 2), (2, 3)] {
            assert_eq!(r.get(i, j), 1);
        }
        // Two-candidate closed form: qualities differ by exactly the sensitivity.
        let sigma = (0.5f64).exp() / ((0.5f64).exp() + 1.0);
        assert!((non_path_probability(eps(1.0), 3).unwrap() - sigma).abs() < 1e-12);
        assert!((non_path_probability(eps(1.0), 40).unwrap() - sigma).abs() < 1e-12);
    }

    #[test]
    fn cyclic_processed_path_is_rejected() {
        let (n, p) = ring_map();
        let mut pn = preprocess_vertices(&n, &p, None, &mut seeded(0)).unwrap();
        let first = pn.path[0];
        pn.path.push(first);
        assert!(matches!(
            preprocess_edges(&pn, None, &mut seeded(0)),
            Err(PreprocessError::CyclicPath(_))
        ));
    }

    #[test]
    fn invalid_input_is_rejected() {
        let n = Network::new(3, [(0, 1), (1, 2)]).unwrap();
        let p = PathSeq::from_bases([0, 2]);
        assert!(matches!(
            preprocess_vertices(&n, &p, None, &mut seeded(0)),
            Err(PreprocessError::InvalidInput(_))
        ));
    }

    #[test]
    fn identical_inputs_have_unit_ratio() {
        let n = Network::new(4, [(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let pair = InstancePair::identical(n, PathSeq::from_bases([0, 1, 2, 3]));
        for step in [PrivacyStep::Vertex, PrivacyStep::Edge] {
            let r = empirical_privacy_ratio(step, &pair, eps(0.5)).unwrap();
            assert!((r - 1.0).abs() < 1e-12, "{step:?} {r}");
        }
    }

    #[test]
    fn enumeration_cap() {
        let n = Network::new(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let pair = InstancePair::identical(n, PathSeq::from_bases(0..6));
        assert!(matches!(
            empirical_privacy_ratio(PrivacyStep::Vertex, &pair, eps(1.0)),
            Err(PreprocessError::InstanceTooLarge(_))
        ));
    }
}
