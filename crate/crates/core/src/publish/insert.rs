//! Backtracking layer assignment.
//!
//! Vertices ("pieces" once splitting has started) are inserted one at a time.
//! A piece may go on an existing layer, on a fresh layer above the top or below
//! the bottom, and, when gap slots are enabled, on a fresh layer between two
//! existing ones. Two placed pieces are ordered iff they are linked and sit on
//! different layers; a slot is accepted only if that order stays transitively
//! closed and no linked piece shares the layer.

use fixedbitset::FixedBitSet;

use super::rules::ArcClasses;
use crate::graph::RelationMatrix;

/// Piece-level relation: which processed vertex each piece stands for and
/// which pieces must end up comparable to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Pieces {
    pub owner: Vec<usize>,
    pub link: Vec<FixedBitSet>,
}

impl Pieces {
    pub fn from_matrix(r: &RelationMatrix) -> Self {
        let n = r.order();
        let mut link = vec![FixedBitSet::with_capacity(n); n];
        for (i, j) in r.pairs() {
            if r.get(i, j) == RelationMatrix::NON_PATH {
                link[i].insert(j);
                link[j].insert(i);
            }
        }
        Self {
            owner: (0..n).collect(),
            link,
        }
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn degree(&self, p: usize) -> usize {
        self.link[p].count_ones(..)
    }

    pub fn add_piece(&mut self, owner: usize) -> usize {
        let id = self.owner.len();
        self.owner.push(owner);
        for l in &mut self.link {
            l.grow(id + 1);
        }
        self.link.push(FixedBitSet::with_capacity(id + 1));
        id
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, l) in self.link.iter().enumerate() {
            out.extend(l.ones().filter(|&b| b > a).map(|b| (a, b)));
        }
        out
    }
}

/// `(x & y) & !z` is empty.
fn masked_subset(x: &[usize], y: &[usize], z: &[usize]) -> bool {
    x.iter().zip(y).zip(z).all(|((a, b), c)| a & b & !c == 0)
}

/// Set bits of `x & y`.
fn ones_and<'x>(x: &'x [usize], y: &'x [usize]) -> impl Iterator<Item = usize> + 'x {
    x.iter().zip(y).enumerate().flat_map(|(i, (a, b))| {
        let mut w = a & b;
        std::iter::from_fn(move || {
            (w != 0).then(|| {
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                i * usize::BITS as usize + t
            })
        })
    })
}

// A slot is `2k` for a fresh layer inserted before existing layer k, or
// `2k + 1` for existing layer k. Slots are ordered like the layers they
// produce, so the largest accepted slot is the deepest layer.
#[derive(Debug, Clone)]
struct Frame {
    piece: usize,
    slot: usize,
    rest: Vec<usize>,
}

/// Placement stack plus layer occupancy.
#[derive(Debug, Clone)]
pub struct InsertionState<'a> {
    link: &'a [FixedBitSet],
    placed: FixedBitSet,
    layers: Vec<FixedBitSet>,
    layer_of: Vec<usize>,
    stack: Vec<Frame>,
    gaps: bool,
    // With a transitive relation, placements that orient an arc against an
    // already oriented arc of the same implication class cannot be completed.
    classes: Option<&'a ArcClasses>,
    forbidden: Vec<u32>,
}

// Unions of layers strictly above / strictly below each layer index, stored
// as consecutive block runs of `words` blocks each.
pub(crate) struct Bands {
    words: usize,
    above: Vec<usize>,
    below: Vec<usize>,
}

impl Bands {
    fn above(&self, k: usize) -> &[usize] {
        &self.above[k * self.words..(k + 1) * self.words]
    }

    fn below(&self, k: usize) -> &[usize] {
        &self.below[k * self.words..(k + 1) * self.words]
    }
}

impl<'a> InsertionState<'a> {
    pub(crate) fn new(link: &'a [FixedBitSet], gaps: bool) -> Self {
        let n = link.len();
        Self {
            link,
            placed: FixedBitSet::with_capacity(n),
            layers: Vec::new(),
            layer_of: vec![0; n],
            stack: Vec::new(),
            gaps,
            classes: None,
            forbidden: Vec::new(),
        }
    }

    pub(crate) fn with_classes(mut self, classes: &'a ArcClasses) -> Self {
        if classes.is_transitive() {
            self.forbidden = vec![0; classes.count()];
            self.classes = Some(classes);
        }
        self
    }

    fn orient_links(&mut self, u: usize, delta: i32) {
        let Some(cl) = self.classes else { return };
        let lu = self.layer_of[u];
        for v in self.link[u].ones().filter(|&v| v != u && self.placed.contains(v)) {
            // Reverse of the arc this placement orients.
            let rev = if self.layer_of[v] < lu { cl.of(u, v) } else { cl.of(v, u) };
            self.forbidden[rev] = (self.forbidden[rev] as i32 + delta) as u32;
        }
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn is_placed(&self, p: usize) -> bool {
        self.placed.contains(p)
    }

    pub fn layer_of(&self, p: usize) -> Option<usize> {
        self.placed.contains(p).then(|| self.layer_of[p])
    }

    /// Placed pieces with their layers, in insertion order.
    pub fn placements(&self) -> Vec<(usize, usize)> {
        self.stack.iter().map(|f| (f.piece, self.layer_of[f.piece])).collect()
    }

    pub(crate) fn bands(&self) -> Bands {
        let words = self.placed.as_slice().len();
        let l = self.layers.len();
        let mut above = vec![0usize; (l + 1) * words];
        for (k, layer) in self.layers.iter().enumerate() {
            let (done, next) = above.split_at_mut((k + 1) * words);
            let prev = &done[k * words..];
            for ((n, p), x) in next[..words].iter_mut().zip(prev).zip(layer.as_slice()) {
                *n = p | x;
            }
        }
        let placed = self.placed.as_slice();
        let below = above
            .chunks(words.max(1))
            .flat_map(|a| a.iter().zip(placed).map(|(a, p)| p & !a))
            .collect();
        Bands { words, above, below }
    }

    fn band_set(&self, blocks: &[usize]) -> FixedBitSet {
        FixedBitSet::with_capacity_and_blocks(self.link.len(), blocks.iter().copied())
    }

    /// Placed pieces comparable to `p` and above it.
    fn up(&self, p: usize, bands: &Bands) -> FixedBitSet {
        let mut s = self.band_set(bands.above(self.layer_of[p]));
        s.intersect_with(&self.link[p]);
        s
    }

    fn down(&self, p: usize, bands: &Bands) -> FixedBitSet {
        let mut s = self.band_set(bands.below(self.layer_of[p] + 1));
        s.intersect_with(&self.link[p]);
        s
    }

    fn slot_ok(&self, u: usize, slot: usize, bands: &Bands) -> bool {
        let k = slot / 2;
        let link = self.link[u].as_slice();
        let (above, below) = if slot % 2 == 1 {
            if !self.link[u].is_disjoint(&self.layers[k]) {
                return false;
            }
            (bands.above(k), bands.below(k + 1))
        } else {
            (bands.above(k), bands.below(k))
        };
        if let Some(cl) = self.classes {
            if ones_and(link, above).any(|a| self.forbidden[cl.of(a, u)] > 0)
                || ones_and(link, below).any(|b| self.forbidden[cl.of(u, b)] > 0)
            {
                return false;
            }
        }
        for a in ones_and(link, above) {
            // Everything linked below must also be below `a`, and everything
            // above `a` must be linked to `u`.
            let la = self.link[a].as_slice();
            if !masked_subset(link, below, la) || !masked_subset(la, bands.above(self.layer_of[a]), link) {
                return false;
            }
        }
        ones_and(link, below).all(|b| masked_subset(self.link[b].as_slice(), bands.below(self.layer_of[b] + 1), link))
    }

    fn slots(&self) -> Vec<usize> {
        let l = self.layers.len();
        if l == 0 {
            return vec![0];
        }
        if self.gaps {
            (0..=2 * l).collect()
        } else {
            let mut s = vec![0];
            s.extend((0..l).map(|k| 2 * k + 1));
            s.push(2 * l);
            s
        }
    }

    /// Accepted slots for `u`, ascending.
    fn accepted(&self, u: usize) -> Vec<usize> {
        let bands = self.bands();
        self.slots()
            .into_iter()
            .filter(|&s| self.slot_ok(u, s, &bands))
            .collect()
    }

    /// Whether `u` may be placed on `layer`, where `layer` ranges over
    /// `-1..=layer_count()`; `-1` and `layer_count()` open a fresh layer above
    /// the top or below the bottom.
    pub fn accepts(&self, u: usize, layer: i64) -> bool {
        let l = self.layers.len() as i64;
        let slot = if l == 0 {
            0
        } else if layer < 0 {
            0
        } else if layer >= l {
            2 * l as usize
        } else {
            2 * layer as usize + 1
        };
        if l > 0 && (layer < -1 || layer > l) {
            return false;
        }
        self.slot_ok(u, slot, &self.bands())
    }

    /// Whether `u` fits in a fresh layer inserted right above existing
    /// layer `k` (`k == layer_count()` appends below the bottom).
    pub fn accepts_gap(&self, u: usize, k: usize) -> bool {
        k <= self.layers.len() && self.slot_ok(u, 2 * k, &self.bands())
    }

    fn place(&mut self, piece: usize, slot: usize, rest: Vec<usize>) {
        let k = slot / 2;
        if slot % 2 == 0 {
            self.layers.insert(k, FixedBitSet::with_capacity(self.link.len()));
            for p in self.placed.ones() {
                if self.layer_of[p] >= k {
                    self.layer_of[p] += 1;
                }
            }
        }
        self.layers[k].insert(piece);
        self.layer_of[piece] = k;
        self.placed.insert(piece);
        self.orient_links(piece, 1);
        self.stack.push(Frame { piece, slot, rest });
    }

    fn unplace(&mut self) -> Option<Frame> {
        let frame = self.stack.pop()?;
        self.orient_links(frame.piece, -1);
        let k = self.layer_of[frame.piece];
        self.placed.set(frame.piece, false);
        self.layers[k].set(frame.piece, false);
        if frame.slot % 2 == 0 {
            self.layers.remove(k);
            for p in self.placed.ones() {
                if self.layer_of[p] > k {
                    self.layer_of[p] -= 1;
                }
            }
        }
        Some(frame)
    }

    /// Places `u` on an existing layer or a fresh boundary layer if accepted;
    /// used to rebuild a state from explicit placements.
    pub(crate) fn push_at(&mut self, u: usize, layer: usize) {
        while self.layers.len() <= layer {
            self.layers.push(FixedBitSet::with_capacity(self.link.len()));
        }
        self.layers[layer].insert(u);
        self.layer_of[u] = layer;
        self.placed.insert(u);
        self.stack.push(Frame {
            piece: u,
            slot: 2 * layer + 1,
            rest: Vec::new(),
        });
    }

    /// Drops empty layers left over by [`push_at`](Self::push_at) or removals.
    pub(crate) fn compact(&mut self) {
        let mut map = Vec::with_capacity(self.layers.len());
        let mut next = 0;
        for l in &self.layers {
            map.push(next);
            if !l.is_clear() {
                next += 1;
            }
        }
        self.layers.retain(|l| !l.is_clear());
        for p in self.placed.ones() {
            self.layer_of[p] = map[self.layer_of[p]];
        }
    }

    /// Pieces linked to `p` that are placed strictly above / below it.
    pub(crate) fn closure(&self, p: usize, bands: &Bands) -> (FixedBitSet, FixedBitSet) {
        (self.up(p, bands), self.down(p, bands))
    }

    /// Largest set of placed pieces from `candidates` that a new piece on
    /// `slot` could be linked to without breaking transitivity.
    pub(crate) fn feasible_subset(&self, candidates: &FixedBitSet, slot: usize, bands: &Bands) -> FixedBitSet {
        let k = slot / 2;
        let mut s = candidates.clone();
        s.intersect_with(&self.placed);
        let (above, below) = if slot % 2 == 1 {
            s.difference_with(&self.layers[k]);
            (bands.above(k), bands.below(k + 1))
        } else {
            (bands.above(k), bands.below(k))
        };
        let below = self.band_set(below);
        loop {
            let mut drop = None;
            for x in s.ones() {
                let ok = if above[x / usize::BITS as usize] >> (x % usize::BITS as usize) & 1 == 1 {
                    self.up(x, bands).is_subset(&s) && s.intersection(&below).all(|b| self.link[x].contains(b))
                } else {
                    self.down(x, bands).is_subset(&s)
                };
                if !ok {
                    drop = Some(x);
                    break;
                }
            }
            match drop {
                Some(x) => s.set(x, false),
                None => return s,
            }
        }
    }

    pub(crate) fn slot_list(&self) -> Vec<usize> {
        self.slots()
    }
}

/// Result of one backtracking run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Search {
    /// Layer per piece (indexed by piece).
    Done(Vec<usize>),
    /// Deepest partial placement seen and the piece that could not be added
    /// to it; `exhausted` is false when the step budget ran out first.
    Stuck {
        backup: Vec<(usize, usize)>,
        stuck: usize,
        exhausted: bool,
    },
}

/// Depth-first insertion of `order` with a step budget. The first piece is
/// pinned to layer 0; every other piece tries its accepted slots deepest
/// first and, when none is left, the previous piece moves to its next slot.
pub(crate) fn search(
    link: &[FixedBitSet],
    classes: &ArcClasses,
    order: &[usize],
    gaps: bool,
    budget: u64,
    steps: &mut u64,
) -> Search {
    let mut st = InsertionState::new(link, gaps).with_classes(classes);
    let Some(&first) = order.first() else {
        return Search::Done(Vec::new());
    };
    st.place(first, 0, Vec::new());
    let mut best: Option<(Vec<(usize, usize)>, usize)> = None;
    let start = *steps;
    loop {
        if st.depth() == order.len() {
            let mut layers = vec![0; link.len()];
            for &p in order {
                layers[p] = st.layer_of[p];
            }
            return Search::Done(layers);
        }
        *steps += 1;
        let u = order[st.depth()];
        if *steps - start > budget {
            let (backup, stuck) = best.unwrap_or_else(|| (st.placements(), u));
            return Search::Stuck {
                backup,
                stuck,
                exhausted: false,
            };
        }
        let mut ok = st.accepted(u);
        if let Some(slot) = ok.pop() {
            st.place(u, slot, ok);
            continue;
        }
        if best.as_ref().map_or(true, |(b, _)| st.depth() > b.len()) {
            best = Some((st.placements(), u));
        }
        loop {
            *steps += 1;
            let mut frame = st.unplace().expect("stack holds the first piece");
            if st.depth() == 0 {
                let (backup, stuck) = best.expect("a failure was recorded");
                return Search::Stuck {
                    backup,
                    stuck,
                    exhausted: true,
                };
            }
            if let Some(slot) = frame.rest.pop() {
                st.place(frame.piece, slot, frame.rest);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn links(n: usize, edges: &[(usize, usize)]) -> Vec<FixedBitSet> {
        let mut l = vec![FixedBitSet::with_capacity(n); n];
        for &(a, b) in edges {
            l[a].insert(b);
            l[b].insert(a);
        }
        l
    }

    #[test]
    fn empty_state_accepts_anything() {
        let l = links(3, &[(0, 1)]);
        let st = InsertionState::new(&l, false);
        assert!(st.accepts(0, 0));
        assert!(st.accepts(2, 5));
    }

    #[test]
    fn linked_pieces_never_share_a_layer() {
        let l = links(2, &[(0, 1)]);
        let mut st = InsertionState::new(&l, false);
        st.push_at(0, 0);
        assert!(!st.accepts(1, 0));
        assert!(st.accepts(1, -1));
        assert!(st.accepts(1, 1));
    }

    #[test]
    fn only_a_gap_fits() {
        // a=0 and c=2 on layer 0, b=1 and d=3 on layer 1; a<b, c<b, a<d.
        // u=4 is linked to a and b only, so it must sit strictly between them.
        let l = links(5, &[(0, 1), (2, 1), (0, 3), (4, 0), (4, 1)]);
        let mut st = InsertionState::new(&l, true);
        for (p, layer) in [(0, 0), (2, 0), (1, 1), (3, 1)] {
            st.push_at(p, layer);
        }
        for layer in -1..=2 {
            assert!(!st.accepts(4, layer), "layer {layer}");
        }
        assert!(st.accepts_gap(4, 1));
        assert!(!st.accepts_gap(4, 0));
    }

    #[test]
    fn search_finds_triangle_chain() {
        let e = [(0, 1), (1, 2), (0, 2)];
        let l = links(3, &e);
        let mut steps = 0;
        let Search::Done(layers) = search(&l, &ArcClasses::new(3, &e), &[0, 2, 1], false, 1000, &mut steps) else {
            panic!("triangle is a chain");
        };
        let mut sorted = layers.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn search_reports_stuck_on_pentagon() {
        // C5 is not a comparability graph.
        let e = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)];
        let l = links(5, &e);
        let mut steps = 0;
        match search(&l, &ArcClasses::new(5, &e), &[0, 4, 3, 2, 1], true, 100_000, &mut steps) {
            Search::Stuck { exhausted, backup, .. } => {
                assert!(exhausted);
                assert!(!backup.is_empty());
            }
            Search::Done(_) => panic!("C5 has no transitive orientation"),
        }
    }
}
