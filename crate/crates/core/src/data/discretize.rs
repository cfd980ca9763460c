//! Cluster binning of a continuous column, with the bin count picked by the
//! Davies-Bouldin index.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::numerics::math;
use crate::{Error, Result};

pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 2..=10;
const KMEANS_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    /// Candidate `k` that won (1 when every value is identical).
    pub k: usize,
    /// Bin centres in ascending order; bins that ended up empty are dropped.
    pub centroids: Vec<f64>,
    /// Bin of each input value, indexing `centroids`.
    pub labels: Vec<usize>,
    pub db_index: f64,
}

impl Binning {
    pub fn bin_count(&self) -> usize {
        self.centroids.len()
    }
}

/// One-dimensional k-means for each candidate `k`, keeping the clustering
/// with the lowest Davies-Bouldin index (ties go to the smaller `k`).
pub fn discretize_db(values: &[f64], k_range: RangeInclusive<usize>) -> Result<Binning> {
    let k_min = (*k_range.start()).max(1);
    if values.len() < k_min {
        return Err(Error::TooFewValues { needed: k_min, found: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.first() == sorted.last() {
        return Ok(Binning { k: 1, centroids: vec![sorted[0]], labels: vec![0; values.len()], db_index: 0.0 });
    }

    let mut best: Option<Binning> = None;
    for k in k_range {
        if k < 2 || k > values.len() {
            continue;
        }
        let centroids = kmeans_1d(values, &sorted, k);
        let labels = assign(values, &centroids);
        let Some(db) = davies_bouldin_1d(values, &labels, &centroids) else { continue };
        let better = match &best {
            None => true,
            Some(b) => db < b.db_index - 1e-12 * b.db_index.abs().max(1.0),
        };
        if better {
            best = Some(Binning { k, centroids, labels, db_index: db });
        }
    }
    best.ok_or(Error::TooFewValues { needed: 2, found: 1 })
}

/// Lloyd iterations from centroids at evenly spaced quantiles. Clusters that
/// end up empty are removed and the rest are sorted ascending.
fn kmeans_1d(values: &[f64], sorted: &[f64], k: usize) -> Vec<f64> {
    let mut centroids: Vec<f64> = (0..k).map(|c| quantile(sorted, (c as f64 + 0.5) / k as f64)).collect();
    let mut counts = vec![0usize; k];
    for _ in 0..KMEANS_ITERATIONS {
        let labels = assign(values, &centroids);
        let mut sums = vec![0.0; k];
        counts.iter_mut().for_each(|c| *c = 0);
        for (&v, &l) in values.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1;
        }
        let mut moved = false;
        for c in 0..k {
            if counts[c] > 0 {
                let next = sums[c] / counts[c] as f64;
                moved |= next != centroids[c];
                centroids[c] = next;
            }
        }
        if !moved {
            break;
        }
    }
    let labels = assign(values, &centroids);
    let mut kept: Vec<f64> = (0..k).filter(|&c| labels.contains(&c)).map(|c| centroids[c]).collect();
    kept.sort_by(f64::total_cmp);
    kept.dedup();
    kept
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Nearest centroid, first one on ties.
fn assign(values: &[f64], centroids: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &mu) in centroids.iter().enumerate() {
                let d = math::abs(v - mu);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Davies-Bouldin index over non-empty clusters; `None` with fewer than two.
pub(crate) fn davies_bouldin_1d(values: &[f64], labels: &[usize], centroids: &[f64]) -> Option<f64> {
    let k = centroids.len();
    let mut scatter = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &l) in values.iter().zip(labels) {
        scatter[l] += math::abs(v - centroids[l]);
        counts[l] += 1;
    }
    let live: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    if live.len() < 2 {
        return None;
    }
    for &c in &live {
        scatter[c] /= counts[c] as f64;
    }
    let mut total = 0.0;
    for &a in &live {
        let worst = live
            .iter()
            .filter(|&&b| b != a)
            .map(|&b| {
                let sep = math::abs(centroids[a] - centroids[b]);
                if sep == 0.0 { f64::INFINITY } else { (scatter[a] + scatter[b]) / sep }
            })
            .fold(0.0, f64::max);
        total += worst;
    }
    Some(total / live.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs_pick_two_bins() {
        let b = discretize_db(&[0.0, 0.1, 0.9, 1.0], 2..=3).unwrap();
        assert_eq!(b.k, 2);
        assert_eq!(b.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn identical_values_single_bin() {
        let b = discretize_db(&[0.4; 6], DEFAULT_K_RANGE).unwrap();
        assert_eq!(b.bin_count(), 1);
        assert!(b.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn too_few_values() {
        assert_eq!(
            discretize_db(&[1.0], 2..=4).unwrap_err(),
            Error::TooFewValues { needed: 2, found: 1 }
        );
    }

    #[test]
    fn labels_follow_value_order() {
        let vals = [5.0, 0.0, 5.1, 0.2, 9.9, 10.0];
        let b = discretize_db(&vals, 2..=4).unwrap();
        for (i, &x) in vals.iter().enumerate() {
            for (j, &y) in vals.iter().enumerate() {
                if x < y {
                    assert!(b.labels[i] <= b.labels[j]);
                }
            }
        }
    }

    /// Lowest Davies-Bouldin index over every contiguous split of sorted values into `k` groups.
    fn best_contiguous_db(sorted: &[f64], k: usize) -> f64 {
        fn rec(sorted: &[f64], start: usize, k: usize, cuts: &mut Vec<usize>, best: &mut f64) {
            if k == 1 {
                cuts.push(sorted.len());
                let mut labels = Vec::new();
                let mut centroids = Vec::new();
                let mut lo = 0;
                for (c, &hi) in cuts.iter().enumerate() {
                    let seg = &sorted[lo..hi];
                    centroids.push(seg.iter().sum::<f64>() / seg.len() as f64);
                    labels.extend(core::iter::repeat(c).take(seg.len()));
                    lo = hi;
                }
                if let Some(db) = davies_bouldin_1d(sorted, &labels, &centroids) {
                    *best = best.min(db);
                }
                cuts.pop();
                return;
            }
            for cut in start + 1..=sorted.len() - (k - 1) {
                cuts.push(cut);
                rec(sorted, cut, k - 1, cuts, best);
                cuts.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(sorted, 0, k, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn three_separated_groups_match_exhaustive_oracle() {
        let mut vals = Vec::new();
        for (c, centre) in [0.0, 5.0, 10.0].iter().enumerate() {
            for i in 0..10 {
                vals.push(centre + 0.05 * i as f64 + 0.01 * c as f64);
            }
        }
        let b = discretize_db(&vals, 2..=4).unwrap();
        let oracle_k = (2..=4)
            .map(|k| (k, best_contiguous_db(&vals, k)))
            .fold((0, f64::INFINITY), |acc, (k, db)| if db < acc.1 { (k, db) } else { acc })
            .0;
        assert_eq!(b.k, 3);
        assert_eq!(oracle_k, 3);
        assert_eq!(b.bin_count(), 3);
        for (i, &l) in b.labels.iter().enumerate() {
            assert_eq!(l, i / 10);
        }
    }
}
