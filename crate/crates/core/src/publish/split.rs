//! Conflict resolution by splitting a piece into several pieces whose links
//! together cover the original links.

use std::cmp::Reverse;

use fixedbitset::FixedBitSet;

use super::insert::{InsertionState, Pieces};

/// Placed pieces linked to `stuck` whose own comparables are not all linked
/// to `stuck`; these are what keep `stuck` from finding a layer.
pub(crate) fn conflicting(pieces: &Pieces, backup: &[(usize, usize)], stuck: usize, gaps: bool) -> Vec<usize> {
    let st = rebuild(pieces, backup, None, gaps);
    let link0 = &pieces.link[stuck];
    let bands = st.bands();
    backup
        .iter()
        .map(|&(p, _)| p)
        .filter(|&w| link0.contains(w))
        .filter(|&w| {
            let (up, down) = st.closure(w, &bands);
            !(up.is_subset(link0) && down.is_subset(link0))
        })
        .collect()
}

fn rebuild<'a>(
    pieces: &'a Pieces,
    backup: &[(usize, usize)],
    skip: Option<usize>,
    gaps: bool,
) -> InsertionState<'a> {
    let mut st = InsertionState::new(&pieces.link, gaps);
    for &(p, layer) in backup {
        if Some(p) != skip {
            st.push_at(p, layer);
        }
    }
    st.compact();
    st
}

/// Link sets for the pieces `u` should be split into, or `None` when `u`
/// has fewer than two links and cannot be split.
pub(crate) fn plan_split(
    pieces: &Pieces,
    backup: &[(usize, usize)],
    u: usize,
    gaps: bool,
) -> Option<Vec<FixedBitSet>> {
    let links = &pieces.link[u];
    if links.count_ones(..) < 2 {
        return None;
    }
    let st = rebuild(pieces, backup, Some(u), gaps);
    let mut placed = links.clone();
    for x in links.ones().filter(|&x| !st.is_placed(x)) {
        placed.set(x, false);
    }
    let mut unplaced = links.clone();
    unplaced.difference_with(&placed);

    let bands = st.bands();
    let options: Vec<FixedBitSet> = st
        .slot_list()
        .into_iter()
        .map(|slot| st.feasible_subset(links, slot, &bands))
        .collect();
    let mut uncovered = placed.clone();
    let mut sets: Vec<FixedBitSet> = Vec::new();
    while !uncovered.is_clear() {
        // Largest gain first; ties go to the smaller (higher) slot.
        let best = options
            .iter()
            .enumerate()
            .map(|(i, s)| (s.intersection_count(&uncovered), Reverse(i)))
            .max()
            .filter(|&(gain, _)| gain > 0);
        let Some((_, Reverse(i))) = best else { break };
        uncovered.difference_with(&options[i]);
        sets.push(options[i].clone());
    }
    for x in uncovered.ones() {
        let mut s = FixedBitSet::with_capacity(links.len());
        s.insert(x);
        sets.push(s);
    }
    match sets.first_mut() {
        Some(first) => first.union_with(&unplaced),
        None => sets.push(unplaced),
    }
    if sets.len() == 1 {
        // One feasible set already holds every link: break `u` up per link.
        sets = links
            .ones()
            .map(|x| {
                let mut s = FixedBitSet::with_capacity(links.len());
                s.insert(x);
                s
            })
            .collect();
    }
    Some(sets)
}

/// Replaces `u` by one piece per link set. The first piece keeps `u`'s index;
/// the others are appended and follow `u` directly in the insertion order.
/// Returns how many pieces were added.
pub(crate) fn apply_split(pieces: &mut Pieces, order: &mut Vec<usize>, u: usize, sets: Vec<FixedBitSet>) -> usize {
    let old = pieces.link[u].clone();
    let owner = pieces.owner[u];
    for x in old.ones() {
        pieces.link[x].set(u, false);
    }
    pieces.link[u].clear();
    let mut ids = Vec::with_capacity(sets.len());
    for (k, set) in sets.into_iter().enumerate() {
        let id = if k == 0 { u } else { pieces.add_piece(owner) };
        for x in set.ones() {
            pieces.link[x].insert(id);
            pieces.link[id].insert(x);
        }
        ids.push(id);
    }
    let pos = order.iter().position(|&p| p == u).expect("piece is in the order");
    order.splice(pos + 1..pos + 1, ids[1..].iter().copied());
    ids.len() - 1
}

/// One conflict-resolution step after a failed search. Splits the
/// highest-degree conflicting piece, else the stuck piece itself, else the
/// highest-degree piece overall. Returns the number of pieces added (0 only
/// when every piece has at most one link).
pub(crate) fn resolve_conflicts(
    pieces: &mut Pieces,
    order: &mut Vec<usize>,
    backup: &[(usize, usize)],
    stuck: usize,
    gaps: bool,
) -> usize {
    let mut targets = conflicting(pieces, backup, stuck, gaps);
    targets.sort_by_key(|&p| Reverse(pieces.degree(p)));
    targets.dedup();
    targets.push(stuck);
    for u in targets {
        if let Some(sets) = plan_split(pieces, backup, u, gaps) {
            return apply_split(pieces, order, u, sets);
        }
    }
    let Some(u) = (0..pieces.len())
        .filter(|&p| pieces.degree(p) > 1)
        .max_by_key(|&p| (pieces.degree(p), Reverse(p)))
    else {
        return 0;
    };
    let sets = plan_split(pieces, &[], u, gaps).expect("degree above one");
    apply_split(pieces, order, u, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationMatrix;

    fn pieces(n: usize, edges: &[(usize, usize)]) -> Pieces {
        let mut r = RelationMatrix::new(n);
        for (i, j) in r.pairs().collect::<Vec<_>>() {
            r.set(i, j, 1);
        }
        for &(a, b) in edges {
            r.set(a, b, 2);
        }
        Pieces::from_matrix(&r)
    }

    #[test]
    fn split_preserves_link_union_and_symmetry() {
        // C5 must be split somewhere.
        let mut p = pieces(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let mut order = vec![0, 4, 3, 2, 1];
        let backup = vec![(0, 0), (4, 1), (3, 0), (2, 1)];
        let before: Vec<_> = p.edges();
        let added = resolve_conflicts(&mut p, &mut order, &backup, 1, true);
        assert!(added >= 1);
        assert_eq!(order.len(), 5 + added);
        for a in 0..p.len() {
            for b in p.link[a].ones() {
                assert!(p.link[b].contains(a));
                assert_ne!(p.owner[a], p.owner[b]);
            }
        }
        let mut owner_edges: Vec<_> = p
            .edges()
            .into_iter()
            .map(|(a, b)| {
                let (x, y) = (p.owner[a], p.owner[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        owner_edges.sort();
        owner_edges.dedup();
        assert_eq!(owner_edges, before);
    }

    #[test]
    fn degree_one_pieces_are_not_split() {
        let p = pieces(2, &[(0, 1)]);
        assert!(plan_split(&p, &[], 0, false).is_none());
    }
}
