use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    /// Cells store the index of the category in this ordered list.
    Discrete { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Continuous }
    }

    pub fn discrete<S: ToString>(name: impl Into<String>, categories: &[S]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Discrete { categories: categories.iter().map(ToString::to_string).collect() },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ColumnKind::Discrete { .. })
    }

    pub fn category_count(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Discrete { categories } => Some(categories.len()),
            ColumnKind::Continuous => None,
        }
    }

    fn parse(&self, row: usize, raw: &str) -> Result<f64> {
        let raw = raw.trim();
        match &self.kind {
            ColumnKind::Continuous => raw.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::ParseNumber {
                row,
                column: self.name.clone(),
                value: raw.to_string(),
            }),
            ColumnKind::Discrete { categories } => categories
                .iter()
                .position(|c| c == raw)
                .map(|i| i as f64)
                .ok_or_else(|| Error::UnknownCategory {
                    row,
                    column: self.name.clone(),
                    value: raw.to_string(),
                    known: categories.clone(),
                }),
        }
    }

    /// Text form of a stored cell value.
    pub fn format_value(&self, v: f64) -> String {
        match &self.kind {
            ColumnKind::Continuous => format!("{v}"),
            ColumnKind::Discrete { categories } => categories.get(v as usize).cloned().unwrap_or_default(),
        }
    }
}

/// Complete values kept aside when missingness is injected synthetically.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub values: Vec<f64>,
    /// `false` for cells that were already missing in the source data.
    pub known: Vec<bool>,
}

/// An `n × m` table with its observation mask (`true` = observed).
///
/// Missing cells hold `0.0` in `values`. Discrete cells hold category indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    columns: Vec<Column>,
    n_samples: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    ground_truth: Option<GroundTruth>,
}

impl TabularDataset {
    pub fn new(columns: Vec<Column>, n_samples: usize, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let m = columns.len();
        if values.len() != n_samples * m || mask.len() != values.len() {
            return Err(Error::DataLength { shape: [n_samples, m], len: values.len().min(mask.len()) });
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !mask[k] {
                *v = 0.0;
                continue;
            }
            let col = &columns[k % m];
            if let Some(count) = col.category_count() {
                if libm::trunc(*v) != *v || *v < 0.0 || *v as usize >= count {
                    return Err(Error::InvalidParameter(format!(
                        "row {}, column `{}`: category index {v} outside 0..{count}",
                        k / m,
                        col.name
                    )));
                }
            } else if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("row {}, column `{}`: non-finite value", k / m, col.name)));
            }
        }
        Ok(Self { columns, n_samples, values, mask, ground_truth: None })
    }

    /// Fully observed table from row slices.
    pub fn from_complete_rows<R: AsRef<[f64]>>(columns: Vec<Column>, rows: &[R]) -> Result<Self> {
        let m = columns.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::RowWidth { row: i, expected: m, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        let mask = vec![true; values.len()];
        Self::new(columns, rows.len(), values, mask)
    }

    /// Parses text cells; `None` or an empty string marks a missing cell.
    /// Row numbers in errors are 1-based data rows.
    pub fn from_text_rows<S: AsRef<str>>(columns: Vec<Column>, rows: &[Vec<Option<S>>]) -> Result<Self> {
        let m = columns.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        let mut mask = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::RowWidth { row: i + 1, expected: m, found: row.len() });
            }
            for (col, cell) in columns.iter().zip(row) {
                match cell.as_ref().map(|s| s.as_ref().trim()).filter(|s| !s.is_empty()) {
                    Some(raw) => {
                        values.push(col.parse(i + 1, raw)?);
                        mask.push(true);
                    }
                    None => {
                        values.push(0.0);
                        mask.push(false);
                    }
                }
            }
        }
        Self::new(columns, rows.len(), values, mask)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns.len() + j]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.columns.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.columns.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn row_mask(&self, i: usize) -> &[bool] {
        let m = self.columns.len();
        &self.mask[i * m..(i + 1) * m]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&o| o).count()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// Ground-truth value of a cell when known.
    pub fn truth(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.columns.len() + j;
        match &self.ground_truth {
            Some(gt) if gt.known[k] => Some(gt.values[k]),
            Some(_) => None,
            None if self.mask[k] => Some(self.values[k]),
            None => None,
        }
    }

    /// Hides every cell whose entry in `mask` is `false`. Cells already
    /// missing stay missing; the values visible before the call are kept as
    /// ground truth.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.mask.len() {
            return Err(Error::DataLength { shape: [self.n_samples, self.n_features()], len: mask.len() });
        }
        let ground_truth = self.ground_truth.clone().unwrap_or_else(|| GroundTruth {
            values: self.values.clone(),
            known: self.mask.clone(),
        });
        let new_mask: Vec<bool> = self.mask.iter().zip(mask).map(|(&a, &b)| a && b).collect();
        let values = self.values.iter().zip(&new_mask).map(|(&v, &o)| if o { v } else { 0.0 }).collect();
        Ok(Self {
            columns: self.columns.clone(),
            n_samples: self.n_samples,
            values,
            mask: new_mask,
            ground_truth: Some(ground_truth),
        })
    }

    /// Copy with `values` and ground truth replaced, keeping the mask.
    pub(crate) fn with_values(&self, values: Vec<f64>, ground_truth: Option<GroundTruth>) -> Self {
        Self {
            columns: self.columns.clone(),
            n_samples: self.n_samples,
            values,
            mask: self.mask.clone(),
            ground_truth,
        }
    }

    /// The same table with rows reordered: output row `k` is input row `order[k]`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let m = self.n_features();
        if order.len() != self.n_samples {
            return Err(Error::InvalidParameter("permutation length".into()));
        }
        let pick = |src: &[f64]| order.iter().flat_map(|&i| src[i * m..(i + 1) * m].iter().copied()).collect::<Vec<_>>();
        let pick_b = |src: &[bool]| order.iter().flat_map(|&i| src[i * m..(i + 1) * m].iter().copied()).collect::<Vec<_>>();
        Ok(Self {
            columns: self.columns.clone(),
            n_samples: self.n_samples,
            values: pick(&self.values),
            mask: pick_b(&self.mask),
            ground_truth: self.ground_truth.as_ref().map(|gt| GroundTruth { values: pick(&gt.values), known: pick_b(&gt.known) }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols2() -> Vec<Column> {
        vec![Column::continuous("a"), Column::continuous("b")]
    }

    #[test]
    fn parses_complete_text() {
        let rows = vec![vec![Some("1"), Some("2")], vec![Some("3"), Some("4")]];
        let ds = TabularDataset::from_text_rows(cols2(), &rows).unwrap();
        assert_eq!(ds.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(ds.mask().iter().all(|&o| o));
    }

    #[test]
    fn empty_cell_is_missing() {
        let rows = vec![vec![Some("1"), Some("2")], vec![Some("3"), Some("")]];
        let ds = TabularDataset::from_text_rows(cols2(), &rows).unwrap();
        assert!(!ds.is_observed(1, 1));
        assert_eq!(ds.truth(1, 1), None);
    }

    #[test]
    fn unknown_category_names_value() {
        let cols = vec![Column::discrete("ans", &["yes", "no"])];
        let rows = vec![vec![Some("yes")], vec![Some("maybe")]];
        let err = TabularDataset::from_text_rows(cols, &rows).unwrap_err();
        match err {
            Error::UnknownCategory { value, known, row, .. } => {
                assert_eq!(value, "maybe");
                assert_eq!(known, vec!["yes".to_string(), "no".to_string()]);
                assert_eq!(row, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_location() {
        let rows = vec![vec![Some("1"), Some("x")]];
        assert!(matches!(
            TabularDataset::from_text_rows(cols2(), &rows),
            Err(Error::ParseNumber { row: 1, .. })
        ));
    }

    #[test]
    fn with_mask_keeps_truth_and_only_shrinks() {
        let rows = vec![vec![Some("1"), None], vec![Some("3"), Some("4")]];
        let ds = TabularDataset::from_text_rows(cols2(), &rows).unwrap();
        let masked = ds.with_mask(&[true, true, false, true]).unwrap();
        assert_eq!(masked.mask(), &[true, false, false, true]);
        assert_eq!(masked.truth(1, 0), Some(3.0));
        assert_eq!(masked.truth(0, 1), None);
        assert_eq!(masked.value(1, 0), 0.0);
    }
}
