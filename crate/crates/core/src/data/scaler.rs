use alloc::vec::Vec;

use super::dataset::{GroundTruth, TabularDataset};
use crate::{Error, Result};

/// Per-column min/max fitted on observed cells of continuous columns.
/// Discrete columns carry `None` and pass through unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    ranges: Vec<Option<(f64, f64)>>,
}

impl MinMaxScaler {
    pub fn fit(ds: &TabularDataset) -> Result<Self> {
        let m = ds.n_features();
        let mut ranges = Vec::with_capacity(m);
        for (j, col) in ds.columns().iter().enumerate() {
            if col.is_discrete() {
                ranges.push(None);
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..ds.n_samples() {
                if ds.is_observed(i, j) {
                    let v = ds.value(i, j);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > hi {
                return Err(Error::EmptyColumn(col.name.clone()));
            }
            ranges.push(Some((lo, hi)));
        }
        Ok(Self { ranges })
    }

    pub fn range(&self, j: usize) -> Option<(f64, f64)> {
        self.ranges[j]
    }

    /// Maps a raw value of column `j` into `[0, 1]`. Constant columns map to 0.
    pub fn scale_value(&self, j: usize, x: f64) -> f64 {
        match self.ranges[j] {
            Some((lo, hi)) if hi > lo => (x - lo) / (hi - lo),
            Some(_) => 0.0,
            None => x,
        }
    }

    pub fn inverse_value(&self, j: usize, y: f64) -> f64 {
        match self.ranges[j] {
            Some((lo, hi)) if hi > lo => lo + y * (hi - lo),
            Some((lo, _)) => lo,
            None => y,
        }
    }

    fn map_table(&self, ds: &TabularDataset, f: impl Fn(&Self, usize, f64) -> f64) -> TabularDataset {
        let m = ds.n_features();
        let map = |vals: &[f64], known: &[bool]| -> Vec<f64> {
            vals.iter()
                .enumerate()
                .map(|(k, &v)| if known[k] { f(self, k % m, v) } else { v })
                .collect()
        };
        let values = map(ds.values(), ds.mask());
        let gt = ds.ground_truth().map(|gt| GroundTruth { values: map(&gt.values, &gt.known), known: gt.known.clone() });
        ds.with_values(values, gt)
    }

    /// Scales observed cells and known ground truth.
    pub fn transform(&self, ds: &TabularDataset) -> TabularDataset {
        self.map_table(ds, Self::scale_value)
    }

    pub fn inverse_transform(&self, ds: &TabularDataset) -> TabularDataset {
        self.map_table(ds, Self::inverse_value)
    }
}

/// Fits a scaler on `ds` and returns the scaled table with it.
pub fn scale(ds: &TabularDataset) -> Result<(TabularDataset, MinMaxScaler)> {
    let scaler = MinMaxScaler::fit(ds)?;
    Ok((scaler.transform(ds), scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use alloc::vec;

    fn one_col(vals: &[f64]) -> TabularDataset {
        let rows: Vec<[f64; 1]> = vals.iter().map(|&v| [v]).collect();
        TabularDataset::from_complete_rows(vec![Column::continuous("x")], &rows).unwrap()
    }

    #[test]
    fn linear_column() {
        let (s, _) = scale(&one_col(&[0.0, 5.0, 10.0])).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_round_trips() {
        let (s, sc) = scale(&one_col(&[7.0, 7.0, 7.0])).unwrap();
        assert_eq!(s.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(sc.inverse_transform(&s).values(), &[7.0, 7.0, 7.0]);
    }

    #[test]
    fn fully_missing_column_errors() {
        let ds = one_col(&[1.0, 2.0]).with_mask(&[false, false]).unwrap();
        assert_eq!(MinMaxScaler::fit(&ds).unwrap_err(), Error::EmptyColumn("x".into()));
    }

    #[test]
    fn discrete_untouched() {
        let ds = TabularDataset::from_complete_rows(
            vec![Column::discrete("d", &["a", "b", "c"]), Column::continuous("x")],
            &[[2.0, 4.0], [0.0, 8.0]],
        )
        .unwrap();
        let (s, _) = scale(&ds).unwrap();
        assert_eq!(s.values(), &[2.0, 0.0, 0.0, 1.0]);
    }
}
