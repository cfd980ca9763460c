//! Tables, scaling, synthetic missingness and discretisation.

mod dataset;
pub mod discretize;
pub mod mask;
mod scaler;

pub use dataset::{Column, ColumnKind, GroundTruth, TabularDataset};
pub use discretize::{discretize_db, Binning};
pub use mask::{apply_mask, generate_mask, MaskSpec, Mechanism};
pub use scaler::{scale, MinMaxScaler};
