//! Trials, reports and their files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use igrm_core::baselines::{impute_knn, impute_mean, KnnConfig};
use igrm_core::data::{apply_mask, scale, MinMaxScaler, TabularDataset};
use igrm_core::graph::{init_cos, init_random, init_rule, FriendAdjacency};
use igrm_core::metrics::{kmeans, mae, silhouette, similarity_deviation, truth_matrix, Mae, DEVIATION_BINS};
use igrm_core::model::Trainer;
use igrm_core::numerics::Tensor;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Baseline, ExperimentConfig, InitMethod, Method};
use crate::error::{Error, Result};
use crate::files;
use crate::schema::{load_csv, Schema};

/// One masked, scaled copy of the data for a seed.
pub struct Prepared {
    pub seed: u64,
    /// Masked table in original units.
    pub masked: TabularDataset,
    pub scaled: TabularDataset,
    pub scaler: MinMaxScaler,
    /// Ground-truth rows for similarity deviation and cluster labels.
    pub truth: Tensor,
}

pub fn prepare(ds: &TabularDataset, cfg: &ExperimentConfig, seed: u64) -> igrm_core::Result<Prepared> {
    let masked = apply_mask(ds, &cfg.mask_spec(seed))?;
    let (scaled, scaler) = scale(&masked)?;
    let truth = truth_matrix(&scaled);
    Ok(Prepared { seed, masked, scaled, scaler, truth })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FriendInit {
    pub method: InitMethod,
    pub edges: usize,
    /// Pairs the cosine initializer could not form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortfall: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<usize>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub fell_back_to_random: bool,
}

pub fn init_friends(p: &Prepared, cfg: &ExperimentConfig) -> igrm_core::Result<(FriendAdjacency, FriendInit)> {
    let n = p.scaled.n_samples();
    let mut info = FriendInit { method: cfg.init, edges: 0, shortfall: None, rules: None, fell_back_to_random: false };
    let adj = match cfg.init {
        InitMethod::Random => init_random(n, p.seed)?,
        InitMethod::Cos => {
            let c = init_cos(&p.scaled)?;
            info.shortfall = Some(c.shortfall);
            c.adjacency
        }
        InitMethod::Rule => {
            let r = init_rule(&p.scaled, cfg.min_support, cfg.min_confidence, p.seed)?;
            info.rules = Some(r.rule_count);
            info.fell_back_to_random = r.fell_back;
            r.adjacency
        }
    };
    info.edges = adj.edge_count();
    Ok((adj, info))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub method: &'static str,
    pub epoch: usize,
    pub loss: f64,
    pub train_mae: f64,
    pub test_mae_x10: f64,
    pub reconstructions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deviation {
    pub epoch: usize,
    pub mean: f64,
    pub pairs: usize,
    #[serde(skip)]
    pub histogram: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTiming {
    pub method: &'static str,
    pub seed: u64,
    pub phase: &'static str,
    pub seconds: f64,
}

/// Everything one (method, seed) pair produced.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub method: Method,
    pub seed: u64,
    pub mae: Mae,
    pub imputed: Vec<f64>,
    pub silhouette: Option<f64>,
    pub deviation: Vec<Deviation>,
    pub reconstructions: Option<usize>,
    pub friend_init: Option<FriendInit>,
    pub friend_edges: Vec<(usize, usize)>,
    pub embeddings: Option<Tensor>,
    pub trace: Vec<TraceRow>,
    pub timings: Vec<PhaseTiming>,
}

impl TrialResult {
    pub fn seconds(&self, phase: &str) -> f64 {
        self.timings.iter().filter(|t| t.phase == phase).map(|t| t.seconds).sum()
    }
}

fn timed<T>(timings: &mut Vec<PhaseTiming>, method: &'static str, seed: u64, phase: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(PhaseTiming { method, seed, phase, seconds: start.elapsed().as_secs_f64() });
    out
}

/// Runs one method on one prepared copy. Checkpoints go under `checkpoints`
/// when the config asks for them.
pub fn run_trial(p: &Prepared, cfg: &ExperimentConfig, method: Method, checkpoints: Option<&Path>) -> igrm_core::Result<TrialResult> {
    let name = method.name();
    let mut timings = Vec::new();
    let mut result = TrialResult {
        method,
        seed: p.seed,
        mae: Mae { raw: 0.0, x10: 0.0, cells: 0 },
        imputed: Vec::new(),
        silhouette: None,
        deviation: Vec::new(),
        reconstructions: None,
        friend_init: None,
        friend_edges: Vec::new(),
        embeddings: None,
        trace: Vec::new(),
        timings: Vec::new(),
    };
    match method {
        Method::Baseline(b) => {
            result.imputed = timed(&mut timings, name, p.seed, "impute", || match b {
                Baseline::Mean => impute_mean(&p.scaled),
                Baseline::Knn => impute_knn(&p.scaled, KnnConfig { k: cfg.knn_k }),
            })?;
        }
        Method::Model(mode) => {
            let (friends, info) = timed(&mut timings, name, p.seed, "init", || init_friends(p, cfg))?;
            if mode.uses_friends() {
                result.friend_init = Some(info);
            }
            let ckpt = checkpoints.zip(cfg.checkpoint_every).map(|(dir, _)| checkpoint_path(dir, name, p.seed));
            let mut trainer = Trainer::new(&p.scaled, friends, cfg.train_config(mode, p.seed))?;
            if let Some(path) = ckpt.as_deref().filter(|path| cfg.resume && path.exists()) {
                files::load_checkpoint(path, &mut trainer).map_err(|e| igrm_core::Error::Checkpoint(e.to_string()))?;
            }
            train(&mut trainer, p, cfg, name, ckpt.as_deref(), &mut result, &mut timings)?;
            let imp = timed(&mut timings, name, p.seed, "impute", || trainer.impute())?;
            result.reconstructions = Some(trainer.reconstructions());
            if mode.uses_friends() {
                result.friend_edges = trainer.friend_edges().to_vec();
            }
            result.silhouette = timed(&mut timings, name, p.seed, "evaluate", || embedding_silhouette(p, cfg, &imp.embeddings));
            result.imputed = imp.values;
            result.embeddings = Some(imp.embeddings);
        }
    }
    result.mae = mae(&p.scaled, &result.imputed)?;
    result.timings = timings;
    Ok(result)
}

fn train(
    trainer: &mut Trainer,
    p: &Prepared,
    cfg: &ExperimentConfig,
    name: &'static str,
    ckpt: Option<&Path>,
    result: &mut TrialResult,
    timings: &mut Vec<PhaseTiming>,
) -> igrm_core::Result<()> {
    let mut train_secs = 0.0;
    let mut eval_secs = 0.0;
    while !trainer.is_done() {
        let start = Instant::now();
        let stats = trainer.step()?;
        train_secs += start.elapsed().as_secs_f64();
        let done = trainer.epoch();
        let wants_trace = done % cfg.eval_every == 0 || trainer.is_done();
        let wants_hist = cfg.hist_epochs.contains(&done);
        if wants_trace || wants_hist {
            let start = Instant::now();
            let imp = trainer.impute()?;
            if wants_trace {
                result.trace.push(TraceRow {
                    method: name,
                    epoch: done,
                    loss: stats.loss,
                    train_mae: stats.train_mae,
                    test_mae_x10: mae(&p.scaled, &imp.values)?.x10,
                    reconstructions: trainer.reconstructions(),
                });
            }
            if wants_hist {
                let d = similarity_deviation(&imp.embeddings, &p.truth, p.seed)?;
                result.deviation.push(Deviation { epoch: done, mean: d.mean, pairs: d.pairs, histogram: d.histogram });
            }
            eval_secs += start.elapsed().as_secs_f64();
        }
        if let (Some(path), Some(every)) = (ckpt, cfg.checkpoint_every) {
            if done % every == 0 || trainer.is_done() {
                files::save_checkpoint(path, trainer).map_err(|e| igrm_core::Error::Checkpoint(e.to_string()))?;
            }
        }
    }
    timings.push(PhaseTiming { method: name, seed: p.seed, phase: "train", seconds: train_secs });
    timings.push(PhaseTiming { method: name, seed: p.seed, phase: "trace", seconds: eval_secs });
    Ok(())
}

/// Silhouette of the sample embeddings under k-means labels of the ground truth.
/// `None` when the labels collapse to one cluster.
fn embedding_silhouette(p: &Prepared, cfg: &ExperimentConfig, emb: &Tensor) -> Option<f64> {
    let labels = kmeans(&p.truth, cfg.clusters.min(p.truth.rows()), p.seed).ok()?;
    silhouette(emb, &labels).ok()
}

pub fn checkpoint_path(dir: &Path, method: &str, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_{method}_{seed}.bin"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub mae_raw: f64,
    pub mae_x10: f64,
    pub cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstructions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friend_init: Option<FriendInit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub deviation: Vec<Deviation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    pub trials: Vec<TrialReport>,
    pub mae_raw: Summary,
    pub mae_x10: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<Summary>,
}

/// Deterministic summary of a run; wall-clock lives in [`Timings`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub dataset: String,
    pub samples: usize,
    pub features: usize,
    pub config: ExperimentConfig,
    /// MAE is taken in min-max scaled space over masked cells with known truth.
    pub mae_space: &'static str,
    pub discrete_error: &'static str,
    pub methods: Vec<MethodReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub phases: Vec<PhaseTiming>,
    pub total_seconds: f64,
}

pub struct Outcome {
    pub report: Report,
    pub timings: Timings,
    pub trials: Vec<TrialResult>,
    pub prepared: Vec<Prepared>,
}

impl Outcome {
    pub fn trials_of(&self, method: Method) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(move |t| t.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<Summary> {
        let xs: Vec<f64> = self.trials_of(method).map(|t| t.mae.x10).collect();
        (!xs.is_empty()).then(|| Summary::of(&xs))
    }
}

fn build_report(ds: &TabularDataset, cfg: &ExperimentConfig, trials: &[TrialResult]) -> Report {
    let methods = cfg
        .methods()
        .into_iter()
        .map(|method| {
            let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.method == method).collect();
            let raw: Vec<f64> = mine.iter().map(|t| t.mae.raw).collect();
            let x10: Vec<f64> = mine.iter().map(|t| t.mae.x10).collect();
            let sil: Vec<f64> = mine.iter().filter_map(|t| t.silhouette).collect();
            MethodReport {
                method: method.name(),
                trials: mine
                    .iter()
                    .map(|t| TrialReport {
                        seed: t.seed,
                        mae_raw: t.mae.raw,
                        mae_x10: t.mae.x10,
                        cells: t.mae.cells,
                        silhouette: t.silhouette,
                        reconstructions: t.reconstructions,
                        friend_init: t.friend_init.clone(),
                        deviation: t.deviation.clone(),
                    })
                    .collect(),
                mae_raw: Summary::of(&raw),
                mae_x10: Summary::of(&x10),
                silhouette: (!sil.is_empty()).then(|| Summary::of(&sil)),
            }
        })
        .collect();
    Report {
        dataset: cfg.data.display().to_string(),
        samples: ds.n_samples(),
        features: ds.n_features(),
        config: cfg.clone(),
        mae_space: "min-max scaled",
        discrete_error: "0/1 mismatch",
        methods,
    }
}

/// Runs every (seed, method) pair on an already loaded table. Pairs run in
/// parallel on the current rayon pool; results keep seed-major order.
pub fn run_on(ds: &TabularDataset, cfg: &ExperimentConfig, checkpoints: Option<&Path>) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let prepared: Vec<Prepared> = cfg
        .seeds
        .par_iter()
        .map(|&seed| prepare(ds, cfg, seed).map_err(|source| Error::Trial { method: "mask".into(), seed, source }))
        .collect::<Result<_>>()?;
    let units: Vec<(usize, Method)> = (0..prepared.len()).flat_map(|k| cfg.methods().into_iter().map(move |m| (k, m))).collect();
    let trials: Vec<TrialResult> = units
        .par_iter()
        .map(|&(k, method)| {
            run_trial(&prepared[k], cfg, method, checkpoints).map_err(|source| Error::Trial { method: method.name().into(), seed: prepared[k].seed, source })
        })
        .collect::<Result<_>>()?;
    let report = build_report(ds, cfg, &trials);
    let phases = trials.iter().flat_map(|t| t.timings.iter().cloned()).collect();
    let timings = Timings { phases, total_seconds: start.elapsed().as_secs_f64() };
    Ok(Outcome { report, timings, trials, prepared })
}

/// Loads the data named in `cfg`, runs it, and writes every output file.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let schema = Schema::load(&cfg.schema)?;
    let ds = load_csv(&cfg.data, &schema)?;
    std::fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;
    let outcome = run_on(&ds, cfg, Some(&cfg.out))?;
    write_outputs(&outcome, cfg, &cfg.out)?;
    Ok(outcome)
}

/// Writes the report, timings, imputed tables, traces, embeddings,
/// deviation histograms, masks and friend networks.
pub fn write_outputs(outcome: &Outcome, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    files::write_atomic(&dir.join("report.json"), &pretty_json(&outcome.report))?;
    files::write_atomic(&dir.join("timings.json"), &pretty_json(&outcome.timings))?;
    let primary = cfg.modes.first().map(|&m| Method::Model(m.into()));
    for p in &outcome.prepared {
        files::write_atomic(&dir.join(format!("mask_{}.csv", p.seed)), &files::mask_csv(&p.scaled))?;
        let mine: Vec<&TrialResult> = outcome.trials.iter().filter(|t| t.seed == p.seed).collect();
        for t in &mine {
            let name = t.method.name();
            files::write_atomic(&dir.join(format!("imputed_{name}_{}.csv", p.seed)), &files::imputed_csv(&p.masked, &p.scaler, &t.imputed))?;
            if matches!(t.method, Method::Model(m) if m.uses_friends()) {
                files::write_atomic(&dir.join(format!("friends_{name}_{}.csv", p.seed)), &files::edges_csv(&t.friend_edges, None))?;
            }
        }
        let trace: Vec<&TraceRow> = mine.iter().flat_map(|t| &t.trace).collect();
        if !trace.is_empty() {
            files::write_atomic(&dir.join(format!("trace_{}.jsonl", p.seed)), &files::jsonl(&trace))?;
        }
        if let Some(emb) = mine.iter().find(|t| Some(t.method) == primary).and_then(|t| t.embeddings.as_ref()) {
            files::write_atomic(&dir.join(format!("embeddings_{}.tsv", p.seed)), &files::embeddings_tsv(emb))?;
        }
    }
    for &epoch in &cfg.hist_epochs {
        let rows: Vec<&TrialResult> = outcome.trials.iter().filter(|t| t.deviation.iter().any(|d| d.epoch == epoch)).collect();
        if rows.is_empty() {
            continue;
        }
        files::write_atomic(&dir.join(format!("hist_epoch{epoch}.csv")), &histogram_csv(&rows, epoch))?;
    }
    Ok(())
}

/// `method,seed,bin_lo,bin_hi,count` rows for one recorded epoch.
fn histogram_csv(trials: &[&TrialResult], epoch: usize) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "seed", "bin_lo", "bin_hi", "count"]).expect("in-memory write");
    for t in trials {
        let Some(d) = t.deviation.iter().find(|d| d.epoch == epoch) else { continue };
        for (b, count) in d.histogram.iter().enumerate() {
            let lo = b as f64 / DEVIATION_BINS as f64;
            let hi = (b + 1) as f64 / DEVIATION_BINS as f64;
            w.write_record([t.method.name().to_string(), t.seed.to_string(), lo.to_string(), hi.to_string(), count.to_string()]).expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

fn pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}
