use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use igrm_core::data::{MaskSpec, Mechanism};
use igrm_core::graph::rules::{DEFAULT_MIN_CONFIDENCE, DEFAULT_MIN_SUPPORT};
use igrm_core::model::{Mode, TrainConfig};
use igrm_core::numerics::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MechanismName {
    Mcar,
    Mar,
    Mnar,
}

impl From<MechanismName> for Mechanism {
    fn from(m: MechanismName) -> Self {
        match m {
            MechanismName::Mcar => Mechanism::Mcar,
            MechanismName::Mar => Mechanism::Mar,
            MechanismName::Mnar => Mechanism::Mnar,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Igrm,
    Grape,
    #[serde(alias = "no_gae")]
    NoGae,
    #[serde(alias = "once_gae")]
    OnceGae,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Igrm => Mode::Igrm,
            ModeName::Grape => Mode::Grape,
            ModeName::NoGae => Mode::NoGae,
            ModeName::OnceGae => Mode::OnceGae,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Random,
    Cos,
    Rule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Mean,
    Knn,
}

/// One imputation method in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Model(Mode),
    Baseline(Baseline),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Model(m) => m.name(),
            Method::Baseline(Baseline::Mean) => "mean",
            Method::Baseline(Baseline::Knn) => "knn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub mechanism: MechanismName,
    pub ratio: f64,
    /// Share of columns given logistic missingness under MAR/MNAR.
    pub feature_fraction: f64,
    pub modes: Vec<ModeName>,
    pub init: InitMethod,
    pub baselines: Vec<Baseline>,
    pub knn_k: usize,
    pub epochs: usize,
    pub reconstruct_every: usize,
    pub lr: f64,
    pub tau: f64,
    pub hidden: usize,
    pub layers: usize,
    pub known_fraction: f64,
    pub edge_budget: Option<usize>,
    pub gae_aux_loss: bool,
    /// Test error goes into the trace every this many epochs.
    pub eval_every: usize,
    pub min_support: f64,
    pub min_confidence: f64,
    pub seeds: Vec<u64>,
    /// k-means cluster count for silhouette labels.
    pub clusters: usize,
    /// Epoch counts after which the similarity deviation is recorded.
    pub hist_epochs: Vec<usize>,
    pub checkpoint_every: Option<usize>,
    /// Continue from checkpoints found in `out`.
    pub resume: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data: PathBuf::new(),
            schema: PathBuf::new(),
            mechanism: MechanismName::Mcar,
            ratio: 0.3,
            feature_fraction: 0.5,
            modes: vec![ModeName::Igrm],
            init: InitMethod::Random,
            baselines: Vec::new(),
            knn_k: 5,
            epochs: train.epochs,
            reconstruct_every: train.reconstruct_every,
            lr: train.adam.lr,
            tau: train.tau,
            hidden: train.hidden,
            layers: train.layers,
            known_fraction: train.known_fraction,
            edge_budget: train.edge_budget,
            gae_aux_loss: train.gae_aux_loss,
            eval_every: train.eval_every,
            min_support: DEFAULT_MIN_SUPPORT,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            seeds: (0..5).collect(),
            clusters: 4,
            hist_epochs: vec![1, 1000, 5000],
            checkpoint_every: None,
            resume: false,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        let all = self.modes.iter().map(|&m| Method::Model(m.into())).chain(self.baselines.iter().map(|&b| Method::Baseline(b)));
        for m in all {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    pub fn mask_spec(&self, seed: u64) -> MaskSpec {
        MaskSpec { mechanism: self.mechanism.into(), missing_ratio: self.ratio, feature_fraction: self.feature_fraction, seed }
    }

    pub fn train_config(&self, mode: Mode, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            reconstruct_every: self.reconstruct_every,
            tau: self.tau,
            mode,
            edge_budget: self.edge_budget,
            seed,
            hidden: self.hidden,
            layers: self.layers,
            known_fraction: self.known_fraction,
            eval_every: self.eval_every,
            gae_aux_loss: self.gae_aux_loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.methods().is_empty() {
            return bad("select at least one model mode or baseline".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is needed".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.knn_k == 0 {
            return bad("knn_k must be at least 1".into());
        }
        if self.clusters < 2 {
            return bad("clusters must be at least 2".into());
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be at least 1".into());
        }
        if !(self.min_support > 0.0 && self.min_support <= 1.0) || !(self.min_confidence > 0.0 && self.min_confidence <= 1.0) {
            return bad("min_support and min_confidence must lie in (0, 1]".into());
        }
        self.mask_spec(0).validate()?;
        if !self.modes.is_empty() {
            self.train_config(Mode::Igrm, 0).validate()?;
        }
        Ok(())
    }

    /// Applies the keys of a JSON object on top of this config.
    pub fn with_overrides(&self, overrides: serde_json::Value, source: &Path) -> Result<Self> {
        let mut base = serde_json::to_value(self).map_err(Error::json(source))?;
        let serde_json::Value::Object(over) = overrides else {
            return Err(Error::Config(format!("{}: expected a JSON object", source.display())));
        };
        let target = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in over {
            target.insert(k, v);
        }
        serde_json::from_value(base).map_err(Error::json(source))
    }

    pub fn with_override_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let value = serde_json::from_str(&text).map_err(Error::json(path))?;
        self.with_overrides(value, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn needs_a_method_and_distinct_seeds() {
        let none = ExperimentConfig { modes: vec![], ..Default::default() };
        assert!(none.validate().is_err());
        let dup = ExperimentConfig { seeds: vec![1, 1], ..Default::default() };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn methods_keep_order_and_drop_repeats() {
        let cfg = ExperimentConfig {
            modes: vec![ModeName::Grape, ModeName::Igrm, ModeName::Grape],
            baselines: vec![Baseline::Knn, Baseline::Mean],
            ..Default::default()
        };
        let names: Vec<&str> = cfg.methods().iter().map(|m| m.name()).collect();
        assert_eq!(names, ["grape", "igrm", "knn", "mean"]);
    }

    #[test]
    fn json_overrides_win() {
        let cfg = ExperimentConfig { epochs: 10, ..Default::default() };
        let over = serde_json::json!({"epochs": 99, "modes": ["no-gae", "once_gae"], "mechanism": "mnar"});
        let merged = cfg.with_overrides(over, Path::new("x.json")).unwrap();
        assert_eq!(merged.epochs, 99);
        assert_eq!(merged.modes, vec![ModeName::NoGae, ModeName::OnceGae]);
        assert_eq!(merged.mechanism, MechanismName::Mnar);
        assert_eq!(merged.ratio, cfg.ratio);
    }

    #[test]
    fn unknown_override_key_is_rejected() {
        let err = ExperimentConfig::default().with_overrides(serde_json::json!({"epoch": 3}), Path::new("x.json"));
        assert!(err.is_err());
    }
}
