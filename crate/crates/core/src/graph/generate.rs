use rand::seq::SliceRandom;
use rand::Rng;

use super::{norm, GraphError, Network, PathSeq};
use crate::rng::seeded;

/// Size of a synthetic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapSpec {
    pub vertices: usize,
    pub edges: usize,
    /// Extra revisits spliced into the path; 0 gives an acyclic path.
    pub revisits: usize,
}

impl MapSpec {
    pub fn acyclic(vertices: usize, edges: usize) -> Self {
        Self {
            vertices,
            edges,
            revisits: 0,
        }
    }

    pub fn edge_bounds(vertices: usize) -> (usize, usize) {
        (vertices.saturating_sub(1), vertices * vertices.saturating_sub(1) / 2)
    }

    pub fn check(&self) -> Result<(), GraphError> {
        if self.vertices < 2 {
            return Err(GraphError::TooFewVertices(self.vertices));
        }
        let (min, max) = Self::edge_bounds(self.vertices);
        if self.edges < min || self.edges > max {
            return Err(GraphError::OutOfRangeEdges {
                edges: self.edges,
                min,
                max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedMap {
    pub network: Network,
    pub path: PathSeq,
}

/// Random connected map whose path visits every vertex.
///
/// The path is a uniformly random vertex permutation; the remaining
/// `edges - (vertices - 1)` edges are drawn uniformly from the other pairs.
pub fn generate_map<R: Rng + ?Sized>(spec: MapSpec, rng: &mut R) -> Result<GeneratedMap, GraphError> {
    spec.check()?;
    let n = spec.vertices;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let path_edges: Vec<(usize, usize)> = order.windows(2).map(|w| norm(w[0], w[1])).collect();
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| !path_edges.contains(e))
        .collect();
    let extra = spec.edges - (n - 1);
    let (chosen, _) = rest.partial_shuffle(rng, extra);
    let network = Network::new(n, path_edges.iter().copied().chain(chosen.iter().copied()))?;

    for _ in 0..spec.revisits {
        splice_revisit(&network, &mut order, rng);
    }
    Ok(GeneratedMap {
        network,
        path: PathSeq::from_bases(order),
    })
}

pub fn generate_map_seeded(spec: MapSpec, seed: u64) -> Result<GeneratedMap, GraphError> {
    generate_map(spec, &mut seeded(seed))
}

// Inserts an already-visited vertex w between x = path[pos-1] and y = path[pos]
// when both (x, w) and (w, y) are edges. No legal w means the splice is skipped.
fn splice_revisit<R: Rng + ?Sized>(network: &Network, path: &mut Vec<usize>, rng: &mut R) {
    let pos = rng.gen_range(1..path.len());
    let (x, y) = (path[pos - 1], path[pos]);
    let mut legal: Vec<usize> = path[..pos]
        .iter()
        .copied()
        .filter(|&w| w != x && w != y && network.has_edge(x, w) && network.has_edge(w, y))
        .collect();
    legal.sort_unstable();
    legal.dedup();
    if let Some(&w) = legal.choose(rng) {
        path.insert(pos, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate;

    #[test]
    fn tree_map_is_exactly_the_path() {
        let m = generate_map_seeded(MapSpec::acyclic(4, 3), 9).unwrap();
        assert_eq!(m.network.edge_count(), 3);
        let net_edges: std::collections::BTreeSet<_> = m.network.edges().collect();
        assert_eq!(net_edges, m.path.base_edges());
    }

    #[test]
    fn complete_map() {
        let m = generate_map_seeded(MapSpec::acyclic(4, 6), 1).unwrap();
        assert_eq!(m.network.edge_count(), 6);
        assert!(validate(&m.network, &m.path).is_empty());
        assert_eq!(m.path.len(), 4);
    }

    #[test]
    fn too_few_edges() {
        assert_eq!(
            generate_map_seeded(MapSpec::acyclic(4, 2), 0),
            Err(GraphError::OutOfRangeEdges { edges: 2, min: 3, max: 6 })
        );
        assert_eq!(
            generate_map_seeded(MapSpec::acyclic(1, 0), 0),
            Err(GraphError::TooFewVertices(1))
        );
    }

    #[test]
    fn cyclic_paths_stay_valid() {
        for seed in 0..50 {
            let spec = MapSpec {
                vertices: 6,
                edges: 10,
                revisits: 3,
            };
            let m = generate_map_seeded(spec, seed).unwrap();
            assert!(validate(&m.network, &m.path).is_empty(), "seed {seed}");
            assert!(m.path.len() >= 6);
        }
    }
}
