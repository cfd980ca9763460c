use igrm_core::data::{scale, Column, TabularDataset};
use impute::files::{imputed_csv, mask_csv};
use impute::schema::read_csv;
use impute::Schema;
use proptest::prelude::*;

fn table() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (1usize..12).prop_flat_map(|n| {
        let rows = prop::collection::vec((-1e6f64..1e6, 0usize..3, -1.0f64..1.0), n)
            .prop_map(|r| r.into_iter().map(|(a, d, b)| vec![a, d as f64, b]).collect::<Vec<_>>());
        (rows, prop::collection::vec(any::<bool>(), n * 3))
    })
}

proptest! {
    #[test]
    fn written_tables_read_back(((rows, mask), fill) in (table(), 0.0f64..1.0)) {
        let cols = vec![Column::continuous("a"), Column::discrete("d", &["p", "q", "r"]), Column::continuous("b")];
        let full = TabularDataset::from_complete_rows(cols.clone(), &rows).unwrap();
        let mut mask = mask;
        for j in 0..3 {
            mask[j] = true;
        }
        let masked = full.with_mask(&mask).unwrap();
        let (scaled, scaler) = scale(&masked).unwrap();
        let imputed: Vec<f64> = scaled.values().iter().enumerate().map(|(k, &v)| if k % 3 == 1 { v } else { fill }).collect();

        let back = read_csv(&imputed_csv(&masked, &scaler, &imputed)[..], &Schema::from_columns(&cols)).unwrap();
        prop_assert!(back.mask().iter().all(|&o| o));
        for (k, (&a, &b)) in masked.values().iter().zip(back.values()).enumerate() {
            if mask[k] {
                prop_assert_eq!(a, b);
            }
        }

        let mask_text = String::from_utf8(mask_csv(&masked)).unwrap();
        let flags: Vec<bool> = mask_text.lines().skip(1).flat_map(|l| l.split(',').map(|c| c == "1").collect::<Vec<_>>()).collect();
        prop_assert_eq!(flags, mask);
    }
}
