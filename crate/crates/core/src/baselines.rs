//! Mean/mode and k-nearest-neighbour imputation.
//!
//! Both return the completed table as row-major values: observed cells are
//! copied through, missing cells are filled.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::numerics::math;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Mean of each continuous column and mode of each discrete one (lowest
/// category on ties), over observed cells.
pub fn column_fill_values(ds: &TabularDataset) -> Result<Vec<f64>> {
    let n = ds.n_samples();
    ds.columns()
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let observed = (0..n).filter(|&i| ds.is_observed(i, j)).map(|i| ds.value(i, j));
            match col.category_count() {
                Some(c) => mode(observed, c).ok_or_else(|| Error::EmptyColumn(col.name.clone())),
                None => {
                    let (sum, count) = observed.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                    if count == 0 {
                        Err(Error::EmptyColumn(col.name.clone()))
                    } else {
                        Ok(sum / count as f64)
                    }
                }
            }
        })
        .collect()
}

fn mode(values: impl Iterator<Item = f64>, categories: usize) -> Option<f64> {
    let mut counts = vec![0usize; categories];
    for v in values {
        counts[v as usize] += 1;
    }
    let (best, &count) = counts.iter().enumerate().rev().max_by_key(|&(_, c)| c)?;
    (count > 0).then_some(best as f64)
}

pub fn impute_mean(ds: &TabularDataset) -> Result<Vec<f64>> {
    let fill = column_fill_values(ds)?;
    let m = ds.n_features();
    Ok(ds
        .values()
        .iter()
        .zip(ds.mask())
        .enumerate()
        .map(|(k, (&v, &o))| if o { v } else { fill[k % m] })
        .collect())
}

/// Root mean squared difference over the coordinates both rows observe.
/// Discrete coordinates differ by 0 or 1. `None` without overlap.
pub fn masked_distance(ds: &TabularDataset, a: usize, b: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut overlap = 0usize;
    for (j, col) in ds.columns().iter().enumerate() {
        if ds.is_observed(a, j) && ds.is_observed(b, j) {
            let d = if col.is_discrete() {
                if ds.value(a, j) == ds.value(b, j) { 0.0 } else { 1.0 }
            } else {
                ds.value(a, j) - ds.value(b, j)
            };
            total += d * d;
            overlap += 1;
        }
    }
    (overlap > 0).then(|| math::sqrt(total / overlap as f64))
}

/// Fills cell `(i, j)` from the `k` nearest rows observing `j`, ties broken by
/// row index. Rows sharing no observed coordinate with `i` are skipped; with
/// no candidates at all the column mean or mode is used.
pub fn impute_knn(ds: &TabularDataset, config: KnnConfig) -> Result<Vec<f64>> {
    if config.k == 0 {
        return Err(Error::InvalidParameter("knn k must be at least 1".into()));
    }
    let fill = column_fill_values(ds)?;
    let (n, m) = (ds.n_samples(), ds.n_features());
    let mut out = ds.values().to_vec();
    for i in 0..n {
        if ds.row_mask(i).iter().all(|&o| o) {
            continue;
        }
        let mut ranked: Vec<(f64, usize)> = (0..n)
            .filter(|&r| r != i)
            .filter_map(|r| masked_distance(ds, i, r).map(|d| (d, r)))
            .collect();
        ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for j in 0..m {
            if ds.is_observed(i, j) {
                continue;
            }
            let neighbours = ranked.iter().filter(|&&(_, r)| ds.is_observed(r, j)).take(config.k).map(|&(_, r)| ds.value(r, j));
            let value = match ds.columns()[j].category_count() {
                Some(c) => mode(neighbours, c),
                None => {
                    let (s, c) = neighbours.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                    (c > 0).then(|| s / c as f64)
                }
            };
            out[i * m + j] = value.unwrap_or(fill[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mask::mask_mcar, Column};
    use proptest::prelude::*;

    fn cont(m: usize) -> Vec<Column> {
        (0..m).map(|k| Column::continuous(alloc::format!("c{k}"))).collect()
    }

    #[test]
    fn mean_fills_column_mean() {
        let ds = TabularDataset::from_complete_rows(cont(1), &[[1.0], [9.0], [3.0]]).unwrap().with_mask(&[true, false, true]).unwrap();
        assert_eq!(impute_mean(&ds).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mode_fills_discrete() {
        let cols = vec![Column::discrete("d", &["a", "b"])];
        let ds = TabularDataset::from_complete_rows(cols.clone(), &[[0.0], [0.0], [1.0], [1.0]]).unwrap().with_mask(&[true, true, true, false]).unwrap();
        assert_eq!(impute_mean(&ds).unwrap()[3], 0.0);
        let tie = TabularDataset::from_complete_rows(cols, &[[1.0], [0.0], [1.0]]).unwrap().with_mask(&[true, true, false]).unwrap();
        assert_eq!(impute_mean(&tie).unwrap()[2], 0.0);
    }

    #[test]
    fn fully_missing_column_errors() {
        let ds = TabularDataset::from_complete_rows(cont(2), &[[1.0, 2.0]]).unwrap().with_mask(&[true, false]).unwrap();
        assert!(matches!(impute_mean(&ds), Err(Error::EmptyColumn(_))));
        assert!(matches!(impute_knn(&ds, KnnConfig::default()), Err(Error::EmptyColumn(_))));
    }

    #[test]
    fn knn_copies_duplicate_row() {
        let rows = [[0.2, 0.4, 0.9], [0.8, 0.1, 0.3], [0.2, 0.4, 0.5], [0.7, 0.7, 0.1]];
        let ds = TabularDataset::from_complete_rows(cont(3), &rows).unwrap();
        let mut mask = vec![true; 12];
        mask[2] = false;
        let out = impute_knn(&ds.with_mask(&mask).unwrap(), KnnConfig { k: 1 }).unwrap();
        assert_eq!(out[2], 0.5);
    }

    #[test]
    fn knn_k_larger_than_candidates_uses_all() {
        let rows = [[0.0, 0.0], [1.0, 0.2], [0.5, 0.6]];
        let ds = TabularDataset::from_complete_rows(cont(2), &rows).unwrap().with_mask(&[true, false, true, true, true, true]).unwrap();
        let out = impute_knn(&ds, KnnConfig { k: 10 }).unwrap();
        assert!((out[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn knn_differs_from_mean_when_distances_differ() {
        let rows = [[0.0, 0.0], [0.1, 0.1], [1.0, 1.0], [0.05, 0.9]];
        let ds = TabularDataset::from_complete_rows(cont(2), &rows).unwrap();
        let mut mask = vec![true; 8];
        mask[7] = false;
        let ds = ds.with_mask(&mask).unwrap();
        let knn = impute_knn(&ds, KnnConfig { k: 3 }).unwrap();
        let mean = impute_mean(&ds).unwrap();
        assert_eq!(knn[7], mean[7]);
        let knn1 = impute_knn(&ds, KnnConfig { k: 1 }).unwrap();
        assert_eq!(knn1[7], 0.0);
        assert_ne!(knn1[7], mean[7]);
    }

    /// Scores every candidate row per missing cell and keeps the `k` best.
    fn knn_oracle(ds: &TabularDataset, k: usize) -> Vec<f64> {
        let (n, m) = (ds.n_samples(), ds.n_features());
        let mut out = ds.values().to_vec();
        for i in 0..n {
            for j in 0..m {
                if ds.is_observed(i, j) {
                    continue;
                }
                let mut picked: Vec<usize> = Vec::new();
                for _ in 0..k {
                    let mut best: Option<(f64, usize)> = None;
                    for r in 0..n {
                        if r == i || !ds.is_observed(r, j) || picked.contains(&r) {
                            continue;
                        }
                        let mut sq = 0.0;
                        let mut c = 0;
                        for t in 0..m {
                            if ds.is_observed(i, t) && ds.is_observed(r, t) {
                                sq += (ds.value(i, t) - ds.value(r, t)).powi(2);
                                c += 1;
                            }
                        }
                        if c == 0 {
                            continue;
                        }
                        let d = (sq / c as f64).sqrt();
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, r));
                        }
                    }
                    match best {
                        Some((_, r)) => picked.push(r),
                        None => break,
                    }
                }
                out[i * m + j] = if picked.is_empty() {
                    let obs: Vec<f64> = (0..n).filter(|&r| ds.is_observed(r, j)).map(|r| ds.value(r, j)).collect();
                    obs.iter().sum::<f64>() / obs.len() as f64
                } else {
                    picked.iter().map(|&r| ds.value(r, j)).sum::<f64>() / picked.len() as f64
                };
            }
        }
        out
    }

    pub(crate) fn random_table(n: usize, m: usize, seed: u64, ratio: f64) -> TabularDataset {
        let mut rng = crate::numerics::Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| (rng.uniform() * 4.0).floor() / 4.0).collect()).collect();
        let ds = TabularDataset::from_complete_rows(cont(m), &rows).unwrap();
        let mut mask = mask_mcar(&ds, ratio, seed).unwrap();
        for j in 0..m {
            mask[j] = true;
        }
        ds.with_mask(&mask).unwrap()
    }

    #[test]
    fn knn_matches_brute_force_on_toy() {
        let ds = random_table(5, 3, 11, 0.3);
        assert_eq!(impute_knn(&ds, KnnConfig { k: 2 }).unwrap(), knn_oracle(&ds, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn knn_matches_brute_force(n in 2usize..50, m in 1usize..10, k in 1usize..7, seed in any::<u64>(), ratio in 0.05f64..0.6) {
            let ds = random_table(n, m, seed, ratio);
            prop_assert_eq!(impute_knn(&ds, KnnConfig { k }).unwrap(), knn_oracle(&ds, k));
        }
    }
}
