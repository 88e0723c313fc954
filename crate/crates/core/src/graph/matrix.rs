use std::fmt;

use super::GraphError;

/// Symmetric vertex-relationship table.
///
/// `-1` on the diagonal, `2` for a non-path edge, `1` for a path edge and `0`
/// for a non-edge that still awaits randomization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl RelationMatrix {
    pub const SAME: i8 = -1;
    pub const NON_EDGE: i8 = 0;
    pub const PATH: i8 = 1;
    pub const NON_PATH: i8 = 2;

    /// All off-diagonal pairs start as non-edges.
    pub fn new(order: usize) -> Self {
        let mut entries = vec![Self::NON_EDGE; order * order];
        for i in 0..order {
            entries[i * order + i] = Self::SAME;
        }
        Self { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: i8) {
        debug_assert!(i != j, "diagonal is fixed");
        debug_assert!((0..=2).contains(&value));
        self.entries[i * self.order + j] = value;
        self.entries[j * self.order + i] = value;
    }

    /// Off-diagonal pairs `(i, j)`, `i < j`, in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.order;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    pub fn first_unrandomized(&self) -> Option<(usize, usize)> {
        self.pairs().find(|&(i, j)| self.get(i, j) == Self::NON_EDGE)
    }

    pub fn is_randomized(&self) -> bool {
        self.first_unrandomized().is_none()
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs().all(|(i, j)| self.get(i, j) == self.get(j, i))
            && (0..self.order).all(|i| self.get(i, i) == Self::SAME)
    }

    /// Parses the `R <n>` dump format.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let err = |line: usize, msg: &str| GraphError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| err(0, "missing header"))?;
        let order: usize = header
            .strip_prefix("R ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(hl, "expected `R <n>`"))?;
        let mut entries = Vec::with_capacity(order * order);
        for _ in 0..order {
            let (ln, row) = lines.next().ok_or_else(|| err(hl, "missing rows"))?;
            let vals: Result<Vec<i8>, _> = row.split(' ').map(str::parse::<i8>).collect();
            let vals = vals.map_err(|_| err(ln, "bad entry"))?;
            if vals.len() != order {
                return Err(err(ln, "wrong row length"));
            }
            entries.extend(vals);
        }
        let m = Self { order, entries };
        if !m.is_symmetric() || m.entries.iter().any(|v| !(-1..=2).contains(v)) {
            return Err(err(hl, "matrix is not a valid relation table"));
        }
        Ok(m)
    }
}

impl fmt::Display for RelationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "R {}", self.order)?;
        for i in 0..self.order {
            let row: Vec<String> = (0..self.order).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// The two edge sets a randomized matrix splits into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraphs {
    /// Pairs marked `2`: must share a branch.
    pub g: Vec<(usize, usize)>,
    /// Pairs marked `1`: must not share a branch.
    pub h: Vec<(usize, usize)>,
}

pub fn derive_subgraphs(r: &RelationMatrix) -> Result<Subgraphs, GraphError> {
    if let Some((i, j)) = r.first_unrandomized() {
        return Err(GraphError::UnrandomizedMatrix(i, j));
    }
    let (g, h) = r
        .pairs()
        .partition(|&(i, j)| r.get(i, j) == RelationMatrix::NON_PATH);
    Ok(Subgraphs { g, h })
}
