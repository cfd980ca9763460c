use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::numerics::math;

/// Cosine over the coordinates observed in both rows. `None` when the
/// overlap is empty or either restricted vector is all zero.
pub fn masked_cosine(ds: &TabularDataset, i: usize, j: usize) -> Option<f64> {
    let (ri, rj) = (ds.row(i), ds.row(j));
    let (mi, mj) = (ds.row_mask(i), ds.row_mask(j));
    let mut a = Vec::with_capacity(ri.len());
    let mut b = Vec::with_capacity(ri.len());
    for k in 0..ri.len() {
        if mi[k] && mj[k] {
            a.push(ri[k]);
            b.push(rj[k]);
        }
    }
    if a.is_empty() {
        return None;
    }
    math::cosine(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use alloc::vec;
    use proptest::prelude::*;

    fn table(rows: &[[f64; 3]], mask: &[bool]) -> TabularDataset {
        let cols = vec![Column::continuous("a"), Column::continuous("b"), Column::continuous("c")];
        TabularDataset::from_complete_rows(cols, rows).unwrap().with_mask(mask).unwrap()
    }

    #[test]
    fn uses_shared_coordinates_only() {
        let ds = table(&[[1.0, 2.0, 9.0], [1.0, 2.0, 3.0]], &[true, true, false, true, true, true]);
        assert!((masked_cosine(&ds, 0, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_patterns_are_undefined() {
        let ds = table(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], &[true, false, false, false, true, true]);
        assert_eq!(masked_cosine(&ds, 0, 1), None);
    }

    #[test]
    fn complete_rows_give_plain_cosine() {
        let ds = table(&[[1.0, 0.0, 2.0], [0.5, 3.0, 1.0]], &[true; 6]);
        let want = (0.5 + 2.0) / (5.0f64.sqrt() * 10.25f64.sqrt());
        assert_eq!(masked_cosine(&ds, 0, 1), math::cosine(&[1.0, 0.0, 2.0], &[0.5, 3.0, 1.0]));
        assert!((masked_cosine(&ds, 0, 1).unwrap() - want).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_self_one(vals in prop::collection::vec(0.0f64..1.0, 6), mask in prop::collection::vec(any::<bool>(), 6)) {
            let ds = table(&[[vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]]], &mask);
            prop_assert_eq!(masked_cosine(&ds, 0, 1), masked_cosine(&ds, 1, 0));
            if let Some(s) = masked_cosine(&ds, 0, 0) {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
