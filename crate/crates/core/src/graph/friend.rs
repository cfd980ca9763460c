use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::similarity::masked_cosine;
use crate::data::TabularDataset;
use crate::numerics::{streams, Rng, Tensor};
use crate::{Error, Result};

/// Undirected, loop-free friend network over `n` samples. Edges are stored
/// once as `(i, j)` with `i < j`, sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriendAdjacency {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl FriendAdjacency {
    /// Orders each pair, drops loops and duplicates.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfBounds { op: "friend edge", index: a.max(b), len: n });
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(Self { n, edges: set.into_iter().collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Neighbour lists, ascending.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            out[a].push(b);
            out[b].push(a);
        }
        for l in &mut out {
            l.sort_unstable();
        }
        out
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for &(a, b) in &self.edges {
            t.set(a, b, 1.0);
            t.set(b, a, 1.0);
        }
        t
    }
}

/// `n` distinct random pairs; every pair when there are no more than `n`.
pub fn init_random(n: usize, seed: u64) -> Result<FriendAdjacency> {
    if n < 2 {
        return Err(Error::InvalidParameter(alloc::format!("friend network needs at least 2 samples, got {n}")));
    }
    let total = n * (n - 1) / 2;
    if total <= n {
        return FriendAdjacency::from_pairs(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))));
    }
    let mut rng = Rng::with_stream(seed, streams::FRIEND_INIT);
    let mut set = BTreeSet::new();
    while set.len() < n {
        let a = rng.below(n);
        let b = rng.below(n - 1);
        let b = if b >= a { b + 1 } else { b };
        set.insert((a.min(b), a.max(b)));
    }
    Ok(FriendAdjacency { n, edges: set.into_iter().collect() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosineInit {
    pub adjacency: FriendAdjacency,
    /// How many edges short of `n` the result is, for lack of defined pairs.
    pub shortfall: usize,
}

/// The `n` pairs with the highest masked cosine; undefined pairs never count.
pub fn init_cos(ds: &TabularDataset) -> Result<CosineInit> {
    let n = ds.n_samples();
    let mut scored = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if let Some(s) = masked_cosine(ds, a, b) {
                scored.push((s, a, b));
            }
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    scored.truncate(n);
    let shortfall = n - scored.len();
    let adjacency = FriendAdjacency::from_pairs(n, scored.into_iter().map(|(_, a, b)| (a, b)))?;
    Ok(CosineInit { adjacency, shortfall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    #[test]
    fn random_has_budget_edges() {
        let a = init_random(1030, 7).unwrap();
        assert_eq!(a.edge_count(), 1030);
        assert!(a.edges().iter().all(|&(i, j)| i < j));
        let d = a.to_dense();
        for i in 0..40 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..40 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        assert_eq!(a, init_random(1030, 7).unwrap());
        assert_ne!(a, init_random(1030, 8).unwrap());
    }

    #[test]
    fn tiny_graphs_connect_everything() {
        assert_eq!(init_random(3, 0).unwrap().edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(init_random(2, 0).unwrap().edge_count(), 1);
        assert!(init_random(1, 0).is_err());
    }

    fn cols(m: usize) -> Vec<Column> {
        (0..m).map(|k| Column::continuous(alloc::format!("c{k}"))).collect()
    }

    #[test]
    fn identical_rows_come_first() {
        let ds = TabularDataset::from_complete_rows(cols(2), &[[1.0, 0.0], [0.3, 0.9], [0.5, 0.5], [0.3, 0.9]]).unwrap();
        let r = init_cos(&ds).unwrap();
        assert!(r.adjacency.contains(1, 3));
        assert_eq!(r.shortfall, 0);
    }

    #[test]
    fn no_overlap_gives_shortfall() {
        let ds = TabularDataset::from_complete_rows(cols(3), &[[1.0, 1.0, 1.0]; 3])
            .unwrap()
            .with_mask(&[true, false, false, false, true, false, false, false, true])
            .unwrap();
        let r = init_cos(&ds).unwrap();
        assert_eq!(r.adjacency.edge_count(), 0);
        assert_eq!(r.shortfall, 3);
    }

    #[test]
    fn matches_exhaustive_top_pairs() {
        let rows = [[1.0, 0.1, 0.0], [0.9, 0.2, 0.1], [0.0, 1.0, 0.3], [0.2, 0.1, 1.0]];
        let ds = TabularDataset::from_complete_rows(cols(3), &rows).unwrap();
        let mut all = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if a < b {
                    let s = crate::numerics::math::cosine(&rows[a], &rows[b]).unwrap();
                    all.push((s, a, b));
                }
            }
        }
        let mut want = Vec::new();
        for _ in 0..4 {
            let (k, _) = all.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, x)| if x.0 > acc.1 { (k, x.0) } else { acc });
            let (_, a, b) = all.remove(k);
            want.push((a, b));
        }
        want.sort();
        assert_eq!(init_cos(&ds).unwrap().adjacency.edges(), want.as_slice());
    }
}
