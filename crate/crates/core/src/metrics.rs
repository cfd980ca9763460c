//! Imputation error, clustering quality and embedding-similarity deviation.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::numerics::{math, streams, Rng, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mae {
    /// In scaled space: continuous cells as absolute error, discrete cells as 0/1 mismatch.
    pub raw: f64,
    pub x10: f64,
    pub cells: usize,
}

/// Error over the cells that are missing in `ds` and have a known truth.
/// `imputed` is the completed table in the same (scaled) space as `ds`.
pub fn mae(ds: &TabularDataset, imputed: &[f64]) -> Result<Mae> {
    let m = ds.n_features();
    if imputed.len() != ds.values().len() {
        return Err(Error::DataLength { shape: [ds.n_samples(), m], len: imputed.len() });
    }
    let mut total = 0.0;
    let mut cells = 0usize;
    for i in 0..ds.n_samples() {
        for j in 0..m {
            if ds.is_observed(i, j) {
                continue;
            }
            let Some(truth) = ds.truth(i, j) else { continue };
            let pred = imputed[i * m + j];
            total += if ds.columns()[j].is_discrete() {
                if pred == truth { 0.0 } else { 1.0 }
            } else {
                math::abs(pred - truth)
            };
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let raw = total / cells as f64;
    Ok(Mae { raw, x10: raw * 10.0, cells })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(math::squared_distance(a, b))
}

/// Mean silhouette with Euclidean distances. Points alone in their cluster score 0.
pub fn silhouette(points: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::DataLength { shape: [n, 1], len: labels.len() });
    }
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    if clusters.len() < 2 {
        return Err(Error::SingleCluster);
    }
    let k = clusters.iter().max().map_or(0, |&c| c + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        if sizes[labels[i]] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for r in 0..n {
            if r != i {
                sums[labels[r]] += distance(points.row(i), points.row(r));
            }
        }
        let own = labels[i];
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Lloyd's k-means from a seeded k-means++ start. Returns one label per row.
pub fn kmeans(points: &Tensor, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(alloc::format!("k-means with k={k} on {n} points")));
    }
    let mut rng = Rng::with_stream(seed, streams::KMEANS);
    let mut centres: Vec<Vec<f64>> = vec![points.row(rng.below(n)).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| math::squared_distance(points.row(i), &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.below(n)
        };
        centres.push(points.row(pick).to_vec());
        let c = centres.last().expect("just pushed");
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(math::squared_distance(points.row(i), c));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (math::squared_distance(points.row(i), &centres[c]), c))
                .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
                .1;
            changed |= best != *l;
            *l = best;
        }
        let mut sums = vec![vec![0.0; points.cols()]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok(labels)
}

/// Ground-truth rows as vectors: continuous cells as stored, discrete cells
/// one-hot. Cells with no known truth contribute zeros.
pub fn truth_matrix(ds: &TabularDataset) -> Tensor {
    let width: usize = ds.columns().iter().map(|c| c.category_count().unwrap_or(1)).sum();
    let mut out = Tensor::zeros(ds.n_samples(), width);
    for i in 0..ds.n_samples() {
        let mut off = 0;
        for (j, col) in ds.columns().iter().enumerate() {
            let truth = ds.truth(i, j);
            match (col.category_count(), truth) {
                (Some(k), Some(t)) => {
                    out.set(i, off + t as usize, 1.0);
                    off += k;
                }
                (Some(k), None) => off += k,
                (None, t) => {
                    out.set(i, off, t.unwrap_or(0.0));
                    off += 1;
                }
            }
        }
    }
    out
}

pub const DEVIATION_BINS: usize = 20;
/// Pair budget: every pair among this many samples.
pub const DEVIATION_SAMPLE_ROWS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityDeviation {
    /// Counts over `[0, 1]` in bins of 0.05; the last bin is closed.
    pub histogram: Vec<usize>,
    pub mean: f64,
    pub pairs: usize,
}

/// `|cos(emb_i, emb_j) - cos(truth_i, truth_j)|` over all pairs, or over a
/// seeded sample of the same budget when there are too many rows. Pairs where
/// either cosine is undefined are skipped.
pub fn similarity_deviation(embeddings: &Tensor, truth: &Tensor, seed: u64) -> Result<SimilarityDeviation> {
    let n = embeddings.rows();
    if truth.rows() != n {
        return Err(Error::ShapeMismatch { op: "similarity_deviation", left: embeddings.shape(), right: truth.shape() });
    }
    let mut histogram = vec![0usize; DEVIATION_BINS];
    let mut total = 0.0;
    let mut pairs = 0usize;
    let mut visit = |a: usize, b: usize| {
        let (Some(e), Some(t)) = (math::cosine(embeddings.row(a), embeddings.row(b)), math::cosine(truth.row(a), truth.row(b))) else {
            return;
        };
        let d = math::abs(e - t);
        let bin = ((d * DEVIATION_BINS as f64) as usize).min(DEVIATION_BINS - 1);
        histogram[bin] += 1;
        total += d;
        pairs += 1;
    };
    if n <= DEVIATION_SAMPLE_ROWS {
        for a in 0..n {
            for b in a + 1..n {
                visit(a, b);
            }
        }
    } else {
        let budget = DEVIATION_SAMPLE_ROWS * (DEVIATION_SAMPLE_ROWS - 1) / 2;
        let mut rng = Rng::with_stream(seed, streams::PAIR_SAMPLE);
        for _ in 0..budget {
            let a = rng.below(n);
            let b = rng.below(n - 1);
            visit(a, if b >= a { b + 1 } else { b });
        }
    }
    let mean = if pairs > 0 { total / pairs as f64 } else { 0.0 };
    Ok(SimilarityDeviation { histogram, mean, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    #[test]
    fn mae_cases() {
        let cols = alloc::vec![Column::continuous("x"), Column::discrete("d", &["a", "b"])];
        let ds = TabularDataset::from_complete_rows(cols, &[[0.5, 1.0], [0.2, 0.0]]).unwrap();
        let masked = ds.with_mask(&[false, false, true, true]).unwrap();
        let perfect = mae(&masked, ds.values()).unwrap();
        assert_eq!(perfect.raw, 0.0);
        let r = mae(&masked, &[0.6, 0.0, 0.2, 0.0]).unwrap();
        assert!((r.raw - 0.55).abs() < 1e-12);
        assert!((r.x10 - 5.5).abs() < 1e-12);
        let single = ds.with_mask(&[false, true, true, true]).unwrap();
        let r = mae(&single, &[0.7, 1.0, 0.2, 0.0]).unwrap();
        assert!((r.raw - 0.2).abs() < 1e-12 && (r.x10 - 2.0).abs() < 1e-12);
        assert_eq!(mae(&ds, ds.values()), Err(Error::EmptyEvaluation));
    }

    #[test]
    fn truth_rows_one_hot_discrete() {
        let cols = alloc::vec![Column::continuous("x"), Column::discrete("d", &["a", "b", "c"])];
        let ds = TabularDataset::from_complete_rows(cols, &[[0.5, 2.0], [0.2, 0.0]]).unwrap();
        let masked = ds.with_mask(&[false, true, true, false]).unwrap();
        let t = truth_matrix(&masked);
        assert_eq!(t.shape(), [2, 4]);
        assert_eq!(t.data(), &[0.5, 0.0, 0.0, 1.0, 0.2, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn mae_ignores_observed_cells() {
        let cols = alloc::vec![Column::continuous("x")];
        let ds = TabularDataset::from_complete_rows(cols, &[[0.5], [0.2]]).unwrap().with_mask(&[true, false]).unwrap();
        assert_eq!(mae(&ds, &[100.0, 0.2]).unwrap().raw, 0.0);
    }

    #[test]
    fn separated_duplicates_score_one() {
        let p = Tensor::from_rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(silhouette(&p, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn identical_points_score_zero() {
        let p = Tensor::full(4, 2, 0.3);
        assert_eq!(silhouette(&p, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(silhouette(&p, &[0, 0, 0, 0]), Err(Error::SingleCluster));
    }

    /// Direct per-point computation from the definition.
    pub(crate) fn silhouette_oracle(p: &[Vec<f64>], labels: &[usize]) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let mut s = 0.0;
        for i in 0..p.len() {
            let same: Vec<usize> = (0..p.len()).filter(|&r| r != i && labels[r] == labels[i]).collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().map(|&r| d(&p[i], &p[r])).sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for c in labels.iter().copied().collect::<BTreeSet<_>>() {
                if c == labels[i] {
                    continue;
                }
                let other: Vec<usize> = (0..p.len()).filter(|&r| labels[r] == c).collect();
                b = b.min(other.iter().map(|&r| d(&p[i], &p[r])).sum::<f64>() / other.len() as f64);
            }
            if a.max(b) > 0.0 {
                s += (b - a) / a.max(b);
            }
        }
        s / p.len() as f64
    }

    #[test]
    fn six_points_match_oracle() {
        let pts = alloc::vec![
            alloc::vec![0.0, 0.0],
            alloc::vec![0.3, 0.1],
            alloc::vec![0.1, 0.4],
            alloc::vec![2.0, 2.0],
            alloc::vec![2.5, 1.7],
            alloc::vec![5.0, 0.0],
        ];
        let labels = [0, 0, 0, 1, 1, 2];
        let got = silhouette(&Tensor::from_rows(&pts).unwrap(), &labels).unwrap();
        assert!((got - silhouette_oracle(&pts, &labels)).abs() < 1e-12);
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let mut rows = Vec::new();
        for c in 0..3 {
            for i in 0..5 {
                rows.push([c as f64 * 10.0 + 0.1 * i as f64, 0.05 * i as f64]);
            }
        }
        let labels = kmeans(&Tensor::from_rows(&rows).unwrap(), 3, 1).unwrap();
        for c in 0..3 {
            assert!(labels[c * 5..c * 5 + 5].iter().all(|&l| l == labels[c * 5]));
        }
        assert_eq!(labels.iter().collect::<BTreeSet<_>>().len(), 3);
    }

    #[test]
    fn deviation_of_truth_is_zero() {
        let t = Tensor::from_rows(&[[1.0, 0.0], [0.5, 0.5], [0.2, 0.9]]).unwrap();
        let d = similarity_deviation(&t, &t, 0).unwrap();
        assert_eq!(d.histogram[0], 3);
        assert_eq!(d.pairs, 3);
        assert!(d.mean < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_of_identical_rows() {
        let e = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let t = Tensor::from_rows(&[[0.4, 0.4], [0.4, 0.4]]).unwrap();
        let d = similarity_deviation(&e, &t, 0).unwrap();
        assert!((d.mean - 1.0).abs() < 1e-12);
        assert_eq!(d.histogram[DEVIATION_BINS - 1], 1);
    }

    #[test]
    fn deviation_hand_case() {
        let e = Tensor::from_rows(&[[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let t = Tensor::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let d = similarity_deviation(&e, &t, 0).unwrap();
        let h = 1.0 - core::f64::consts::FRAC_1_SQRT_2;
        assert!((d.mean - (h + 1.0 + h) / 3.0).abs() < 1e-12);
        assert_eq!(d.histogram[5], 2);
        assert_eq!(d.histogram[19], 1);
    }
}
