use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::numerics::Tensor;

/// Samples and features as two node sets, one edge per observed cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    pub n_samples: usize,
    pub n_features: usize,
    /// `(sample, feature)` per edge, in row-major cell order.
    pub edges: Vec<(usize, usize)>,
    /// One row of width `edge_dim` per edge.
    pub edge_attr: Tensor,
}

impl BipartiteGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_attr.cols()
    }

    /// All-ones sample node features, `n × m`.
    pub fn sample_features(&self) -> Tensor {
        Tensor::full(self.n_samples, self.n_features, 1.0)
    }

    /// One-hot feature node features, `m × m`.
    pub fn feature_features(&self) -> Tensor {
        Tensor::identity(self.n_features)
    }

    /// Subgraph keeping the edges whose positions are listed, in that order.
    pub fn select_edges(&self, keep: &[usize]) -> Self {
        let d = self.edge_dim();
        let mut attr = Vec::with_capacity(keep.len() * d);
        for &k in keep {
            attr.extend_from_slice(self.edge_attr.row(k));
        }
        Self {
            n_samples: self.n_samples,
            n_features: self.n_features,
            edges: keep.iter().map(|&k| self.edges[k]).collect(),
            edge_attr: Tensor::from_vec(keep.len(), d, attr).expect("row width matches"),
        }
    }
}

/// Edge width shared by every edge: the largest category count, at least 1.
pub fn edge_dim(ds: &TabularDataset) -> usize {
    ds.columns().iter().filter_map(|c| c.category_count()).max().unwrap_or(1).max(1)
}

/// Continuous cells give `[v, 0, ..]`, discrete cells a one-hot category.
pub fn build_bipartite(ds: &TabularDataset) -> BipartiteGraph {
    let d = edge_dim(ds);
    let (n, m) = (ds.n_samples(), ds.n_features());
    let mut edges = Vec::with_capacity(ds.observed_count());
    let mut attr = Vec::with_capacity(ds.observed_count() * d);
    for i in 0..n {
        for j in 0..m {
            if !ds.is_observed(i, j) {
                continue;
            }
            edges.push((i, j));
            let start = attr.len();
            attr.resize(start + d, 0.0);
            let v = ds.value(i, j);
            if ds.columns()[j].is_discrete() {
                attr[start + v as usize] = 1.0;
            } else {
                attr[start] = v;
            }
        }
    }
    let edge_attr = Tensor::from_vec(edges.len(), d, attr).expect("row width matches");
    BipartiteGraph { n_samples: n, n_features: m, edges, edge_attr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use alloc::vec;

    #[test]
    fn one_edge_per_observed_cell() {
        let ds = TabularDataset::from_complete_rows(vec![Column::continuous("a"), Column::continuous("b")], &[[0.1, 0.2], [0.3, 0.4]]).unwrap();
        assert_eq!(build_bipartite(&ds).edge_count(), 4);
        let masked = ds.with_mask(&[true, true, true, false]).unwrap();
        let g = build_bipartite(&masked);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.edges, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn attributes_are_padded() {
        let cats = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let ds = TabularDataset::from_complete_rows(vec![Column::discrete("d", &cats), Column::continuous("x")], &[[5.0, 0.25]]).unwrap();
        let g = build_bipartite(&ds);
        assert_eq!(g.edge_dim(), 8);
        assert_eq!(g.edge_attr.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.edge_attr.row(1), &[0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.sample_features().row(0), &[1.0, 1.0]);
        assert_eq!(g.feature_features().row(1), &[0.0, 1.0]);
    }
}
