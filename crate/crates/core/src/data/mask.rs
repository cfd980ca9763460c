//! Missingness simulators.
//!
//! Every generator returns an observation mask (`true` = observed) that is the
//! conjunction of the dataset's current mask and the newly drawn one, so cells
//! that were missing stay missing.

use alloc::format;
use alloc::vec::Vec;

use super::dataset::TabularDataset;
use crate::numerics::{math, Rng, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSpec {
    pub mechanism: Mechanism,
    pub missing_ratio: f64,
    /// Fraction of columns that receive logistic-model missingness (MAR/MNAR).
    pub feature_fraction: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(mechanism: Mechanism, missing_ratio: f64, seed: u64) -> Self {
        Self { mechanism, missing_ratio, feature_fraction: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        check_ratio(self.missing_ratio)?;
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "feature fraction must lie in (0, 1], got {}",
                self.feature_fraction
            )));
        }
        Ok(())
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("missing ratio must lie in (0, 1), got {ratio}")))
    }
}

/// Draws the mask described by `spec` and applies it.
pub fn apply_mask(ds: &TabularDataset, spec: &MaskSpec) -> Result<TabularDataset> {
    let mask = generate_mask(ds, spec)?;
    ds.with_mask(&mask)
}

pub fn generate_mask(ds: &TabularDataset, spec: &MaskSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    match spec.mechanism {
        Mechanism::Mcar => mask_mcar(ds, spec.missing_ratio, spec.seed),
        Mechanism::Mar => mask_mar(ds, spec.missing_ratio, spec.feature_fraction, spec.seed),
        Mechanism::Mnar => mask_mnar(ds, spec.missing_ratio, spec.feature_fraction, spec.seed),
    }
}

/// Each cell goes missing independently with probability `ratio`.
pub fn mask_mcar(ds: &TabularDataset, ratio: f64, seed: u64) -> Result<Vec<bool>> {
    check_ratio(ratio)?;
    let mut rng = Rng::new(seed);
    Ok(ds.mask().iter().map(|&obs| !(rng.uniform() < ratio) && obs).collect())
}

/// Splits columns into `(maskable, inputs)`. The maskable count is
/// `round(fraction * m)` clamped to `1..=m-1`.
pub fn split_columns(m: usize, feature_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 2 {
        return Err(Error::InvalidParameter("MAR/MNAR masking needs at least two columns".into()));
    }
    let k = (libm::round(feature_fraction * m as f64) as usize).clamp(1, m - 1);
    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    let mut maskable = order[..k].to_vec();
    let mut inputs = order[k..].to_vec();
    maskable.sort_unstable();
    inputs.sort_unstable();
    Ok((maskable, inputs))
}

/// Standardised `n × inputs.len()` matrix of input columns; unobserved cells
/// sit at the column mean (zero after standardisation).
fn standardized_inputs(ds: &TabularDataset, inputs: &[usize]) -> Tensor {
    let n = ds.n_samples();
    let mut x = Tensor::zeros(n, inputs.len());
    for (c, &j) in inputs.iter().enumerate() {
        let obs: Vec<f64> = (0..n).filter(|&i| ds.is_observed(i, j)).map(|i| ds.value(i, j)).collect();
        if obs.is_empty() {
            continue;
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / obs.len() as f64;
        let sd = math::sqrt(var);
        for i in 0..n {
            if ds.is_observed(i, j) && sd > 0.0 {
                x.set(i, c, (ds.value(i, j) - mean) / sd);
            }
        }
    }
    x
}

/// Missingness probabilities of a logistic model.
///
/// For output column `c`, the score `x · coeffs[:, c]` is divided by its
/// standard deviation over rows (left alone when that is zero) and an
/// intercept is found by bisection so that the mean probability equals
/// `ratio`. Returns an `n × coeffs.cols()` matrix.
pub fn logistic_probabilities(inputs: &Tensor, coeffs: &Tensor, ratio: f64) -> Result<Tensor> {
    check_ratio(ratio)?;
    let scores = inputs.matmul(coeffs)?;
    let (n, k) = (scores.rows(), scores.cols());
    let mut probs = Tensor::zeros(n, k);
    for c in 0..k {
        let col: Vec<f64> = (0..n).map(|i| scores.get(i, c)).collect();
        let mean = col.iter().sum::<f64>() / n.max(1) as f64;
        let sd = math::sqrt(col.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n.max(1) as f64);
        let col: Vec<f64> = if sd > 1e-12 { col.iter().map(|s| s / sd).collect() } else { col };
        let intercept = calibrate_intercept(&col, ratio)?;
        for (i, s) in col.iter().enumerate() {
            probs.set(i, c, math::sigmoid(s + intercept));
        }
    }
    Ok(probs)
}

fn calibrate_intercept(scores: &[f64], target: f64) -> Result<f64> {
    let mean_prob = |b: f64| scores.iter().map(|s| math::sigmoid(s + b)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut bracketed = false;
    for _ in 0..64 {
        if mean_prob(lo) <= target && mean_prob(hi) >= target {
            bracketed = true;
            break;
        }
        lo *= 2.0;
        hi *= 2.0;
    }
    if !bracketed {
        return Err(Error::Calibration(target));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_prob(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn standard_normal_coeffs(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let mut w = Tensor::zeros(rows, cols);
    for x in w.data_mut() {
        *x = rng.normal();
    }
    w
}

fn draw_logistic(
    ds: &TabularDataset,
    mask: &mut [bool],
    maskable: &[usize],
    inputs: &[usize],
    ratio: f64,
    rng: &mut Rng,
) -> Result<()> {
    let x = standardized_inputs(ds, inputs);
    let w = standard_normal_coeffs(inputs.len(), maskable.len(), rng);
    let probs = logistic_probabilities(&x, &w, ratio)?;
    let m = ds.n_features();
    for i in 0..ds.n_samples() {
        for (c, &j) in maskable.iter().enumerate() {
            if rng.uniform() < probs.get(i, c) {
                mask[i * m + j] = false;
            }
        }
    }
    Ok(())
}

/// Missing-at-random: a random subset of columns is masked by a logistic
/// model of the remaining, always observed, columns.
pub fn mask_mar(ds: &TabularDataset, ratio: f64, feature_fraction: f64, seed: u64) -> Result<Vec<bool>> {
    check_ratio(ratio)?;
    let mut rng = Rng::new(seed);
    let (maskable, inputs) = split_columns(ds.n_features(), feature_fraction, &mut rng)?;
    let mut mask = ds.mask().to_vec();
    draw_logistic(ds, &mut mask, &maskable, &inputs, ratio, &mut rng)?;
    Ok(mask)
}

/// Missing-not-at-random: as [`mask_mar`], after which the input columns are
/// themselves masked completely at random with the same ratio.
pub fn mask_mnar(ds: &TabularDataset, ratio: f64, feature_fraction: f64, seed: u64) -> Result<Vec<bool>> {
    check_ratio(ratio)?;
    let mut rng = Rng::new(seed);
    let (maskable, inputs) = split_columns(ds.n_features(), feature_fraction, &mut rng)?;
    let mut mask = ds.mask().to_vec();
    draw_logistic(ds, &mut mask, &maskable, &inputs, ratio, &mut rng)?;
    let m = ds.n_features();
    for i in 0..ds.n_samples() {
        for &j in &inputs {
            if rng.uniform() < ratio {
                mask[i * m + j] = false;
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn random_table(n: usize, m: usize, seed: u64) -> TabularDataset {
        let mut rng = Rng::new(seed);
        let cols = (0..m).map(|j| Column::continuous(format!("c{j}"))).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.normal()).collect()).collect();
        TabularDataset::from_complete_rows(cols, &rows).unwrap()
    }

    fn missing_fraction(mask: &[bool]) -> f64 {
        mask.iter().filter(|&&o| !o).count() as f64 / mask.len() as f64
    }

    #[test]
    fn mcar_tiny_ratio_keeps_everything() {
        let ds = random_table(50, 4, 0);
        let mask = mask_mcar(&ds, 1e-12, 1).unwrap();
        assert!(mask.iter().all(|&o| o));
    }

    #[test]
    fn mcar_concrete_sized_rate() {
        let ds = random_table(1030, 8, 0);
        let mask = mask_mcar(&ds, 0.3, 9).unwrap();
        assert!((missing_fraction(&mask) - 0.3).abs() < 0.02);
        assert_eq!(mask, mask_mcar(&ds, 0.3, 9).unwrap());
    }

    #[test]
    fn ratio_bounds_rejected() {
        let ds = random_table(5, 2, 0);
        assert!(mask_mcar(&ds, 0.0, 1).is_err());
        assert!(mask_mcar(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn mar_half_of_eight_columns() {
        let ds = random_table(1200, 8, 1);
        let mask = mask_mar(&ds, 0.7, 0.5, 3).unwrap();
        let m = 8;
        let missing_cols: Vec<usize> = (0..m).filter(|&j| (0..1200).any(|i| !mask[i * m + j])).collect();
        assert_eq!(missing_cols.len(), 4);
        let cells = 1200 * 4;
        let missing = mask.iter().filter(|&&o| !o).count();
        assert!((missing as f64 / cells as f64 - 0.7).abs() < 0.02);
    }

    #[test]
    fn zero_weights_reduce_to_constant_rate() {
        let x = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0], [0.0, 1.0]]).unwrap();
        let w = Tensor::zeros(2, 3);
        let p = logistic_probabilities(&x, &w, 0.3).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.3).abs() < 1e-9));
    }

    #[test]
    fn mnar_masks_both_partitions() {
        let ds = random_table(1000, 8, 2);
        let mask = mask_mnar(&ds, 0.3, 0.5, 5).unwrap();
        let missing_cols = (0..8).filter(|&j| (0..1000).any(|i| !mask[i * 8 + j])).count();
        assert_eq!(missing_cols, 8);
        assert_eq!(mask, mask_mnar(&ds, 0.3, 0.5, 5).unwrap());
    }

    #[test]
    fn generators_never_reveal_cells() {
        let ds = random_table(40, 4, 3);
        let pre: Vec<bool> = (0..160).map(|k| k % 7 != 0).collect();
        let ds = ds.with_mask(&pre).unwrap();
        for mech in [Mechanism::Mcar, Mechanism::Mar, Mechanism::Mnar] {
            let mask = generate_mask(&ds, &MaskSpec::new(mech, 0.4, 11)).unwrap();
            assert!(mask.iter().zip(&pre).all(|(&m, &p)| p || !m));
        }
    }

    #[test]
    fn split_leaves_inputs() {
        let mut rng = Rng::new(0);
        let (a, b) = split_columns(8, 0.5, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (4, 4));
        let (a, b) = split_columns(3, 1.0, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (2, 1));
    }
}
