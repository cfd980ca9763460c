use alloc::sync::Arc;
use alloc::vec::Vec;

use super::config::{Mode, TrainConfig};
use super::layers::{
    batch_error, bipartite_encode, edge_probabilities, friend_aggregate, friend_encode, gae_embed, head_forward, imputation_loss,
    matmul_probabilities, normalized_adjacency, predictions, sample_structure, CellBatch, EdgeIndex, PROBABILITY_FLOOR,
};
use super::params::{build_architecture, Architecture, ColumnLayout, Dims, ParamStore};
use crate::data::TabularDataset;
use crate::graph::{build_bipartite, BipartiteGraph, FriendAdjacency};
use crate::numerics::{streams, Csr, OptimizerState, Rng, Tape, Tensor, Var};
use crate::{Error, Result};

/// What one training epoch did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Error on the observed cells, in scaled space.
    pub train_mae: f64,
    pub reconstructed: bool,
}

/// Completed table and the sample embeddings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    /// Row-major, scaled space; observed cells are copied from the input.
    pub values: Vec<f64>,
    /// Sample embeddings fed to the head (`n × hidden`).
    pub embeddings: Tensor,
}

/// Full-batch trainer, advanced one epoch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    ds: TabularDataset,
    graph: BipartiteGraph,
    index: EdgeIndex,
    train_cells: CellBatch,
    missing_cells: CellBatch,
    store: ParamStore,
    arch: Architecture<usize>,
    optimizer: OptimizerState,
    initial: FriendAdjacency,
    a_hat: Option<Arc<Csr>>,
    /// Friend edges in use, as `(row, chosen)` draws.
    held: Vec<(usize, usize)>,
    dropout_rng: Rng,
    gumbel_rng: Rng,
    epoch: usize,
    reconstructions: usize,
}

impl Trainer {
    /// `ds` must be scaled; `friend` is the initial friend network.
    pub fn new(ds: &TabularDataset, friend: FriendAdjacency, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if friend.n() != ds.n_samples() {
            return Err(Error::InvalidParameter(alloc::format!(
                "friend network has {} nodes for {} samples",
                friend.n(),
                ds.n_samples()
            )));
        }
        let graph = build_bipartite(ds);
        if graph.edge_count() == 0 {
            return Err(Error::NoObservedCells);
        }
        let layout = ColumnLayout::new(ds.columns());
        let dims = Dims { features: ds.n_features(), edge: graph.edge_dim(), hidden: config.hidden, layers: config.layers };
        let mut store = ParamStore::new();
        let mut rng = Rng::with_stream(config.seed, streams::WEIGHTS);
        let arch = build_architecture(&mut store, dims, &layout, config.mode.uses_gae(), config.mode.uses_friends(), &mut rng);
        let optimizer = OptimizerState::new(config.adam, store.values());
        let (n, m) = (ds.n_samples(), ds.n_features());
        let observed = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|&(i, j)| ds.is_observed(i, j));
        let train_cells = CellBatch::new(ds, &layout, observed);
        let missing = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|&(i, j)| !ds.is_observed(i, j));
        let missing_cells = CellBatch::new(ds, &layout, missing);
        let a_hat = if config.mode.uses_gae() { Some(Arc::new(normalized_adjacency(&friend)?)) } else { None };
        let held = if config.mode == Mode::NoGae { friend.edges().to_vec() } else { Vec::new() };
        Ok(Self {
            index: EdgeIndex::new(&graph),
            ds: ds.clone(),
            graph,
            train_cells,
            missing_cells,
            store,
            arch,
            optimizer,
            initial: friend,
            a_hat,
            held,
            dropout_rng: Rng::with_stream(config.seed, streams::EDGE_DROPOUT),
            gumbel_rng: Rng::with_stream(config.seed, streams::GUMBEL),
            config,
            epoch: 0,
            reconstructions: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn reconstructions(&self) -> usize {
        self.reconstructions
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// Friend edges currently aggregated over.
    pub fn friend_edges(&self) -> &[(usize, usize)] {
        &self.held
    }

    pub fn initial_friends(&self) -> &FriendAdjacency {
        &self.initial
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Sample and feature embeddings from the bipartite encoder over `idx`.
    fn encode(&self, tape: &mut Tape, arch: &Architecture<Var>, idx: &EdgeIndex, edge_attr: Tensor) -> Result<(Var, Var)> {
        let p0 = tape.constant(self.graph.sample_features());
        let q0 = tape.constant(self.graph.feature_features());
        let e0 = tape.constant(edge_attr);
        bipartite_encode(tape, &arch.layers, p0, q0, e0, idx)
    }

    /// Friend-network stage on top of the sample embeddings `p`. Returns the
    /// head input and, when a new network was drawn, its edges.
    fn friends(&mut self, tape: &mut Tape, arch: &Architecture<Var>, p: Var, resample: bool) -> Result<(Var, Option<Vec<(usize, usize)>>)> {
        let Some(friend) = arch.friend else { return Ok((p, None)) };
        let mut drawn = None;
        let agg = match (arch.gae, &self.a_hat) {
            (Some(gae), Some(a_hat)) => {
                let z = gae_embed(tape, &gae, a_hat, p)?;
                if resample || self.held.is_empty() {
                    let m = matmul_probabilities(tape, z)?;
                    let budget = self.config.edge_budget.unwrap_or(self.ds.n_samples());
                    let rng = &mut self.gumbel_rng;
                    let s = sample_structure(tape, m, self.config.tau, budget, &mut |row| row.iter_mut().for_each(|x| *x = rng.gumbel()))?;
                    let agg = friend_aggregate(tape, p, &s.draws, Some(s.weights))?;
                    drawn = Some(s.draws);
                    agg
                } else {
                    let w = edge_probabilities(tape, z, &self.held)?;
                    friend_aggregate(tape, p, &self.held, Some(w))?
                }
            }
            _ => friend_aggregate(tape, p, &self.held, None)?,
        };
        Ok((friend_encode(tape, &friend, p, agg)?, drawn))
    }

    /// Link-reconstruction term against the initial network, with as many
    /// random non-edges as edges.
    fn gae_aux_loss(&mut self, tape: &mut Tape, arch: &Architecture<Var>, p: Var) -> Result<Option<Var>> {
        let (Some(gae), Some(a_hat)) = (arch.gae, self.a_hat.clone()) else { return Ok(None) };
        let pos: Vec<(usize, usize)> = self.initial.edges().to_vec();
        if pos.is_empty() {
            return Ok(None);
        }
        let n = self.ds.n_samples();
        let mut neg = Vec::with_capacity(pos.len());
        while neg.len() < pos.len() {
            let a = self.dropout_rng.below(n);
            let b = self.dropout_rng.below(n);
            if a != b && !self.initial.contains(a, b) {
                neg.push((a, b));
            }
        }
        let z = gae_embed(tape, &gae, &a_hat, p)?;
        let mp = edge_probabilities(tape, z, &pos)?;
        let mn = edge_probabilities(tape, z, &neg)?;
        let one = tape.constant(Tensor::full(neg.len(), 1, 1.0));
        let mn = tape.sub(one, mn)?;
        let mut terms = Vec::new();
        for v in [mp, mn] {
            let c = tape.clamp(v, PROBABILITY_FLOOR, 1.0);
            let l = tape.log(c);
            let mean = tape.mean(l)?;
            terms.push(tape.scale(mean, -1.0));
        }
        Ok(Some(tape.add(terms[0], terms[1])?))
    }

    /// Runs one epoch: forward over a random share of the observed edges,
    /// loss on every observed cell, one Adam step on all parameters.
    pub fn step(&mut self) -> Result<EpochStats> {
        let epoch = self.epoch;
        let resample = self.config.mode.reconstructs_at(epoch, self.config.reconstruct_every);
        let mut tape = Tape::new();
        let vars = self.store.register(&mut tape, true);
        let arch = self.arch.bind(&vars);

        let (idx, attr) = if self.config.known_fraction < 1.0 {
            let keep: Vec<usize> = (0..self.graph.edge_count()).filter(|_| self.dropout_rng.uniform() < self.config.known_fraction).collect();
            let sub = self.graph.select_edges(&keep);
            (EdgeIndex::new(&sub), sub.edge_attr)
        } else {
            (self.index.clone(), self.graph.edge_attr.clone())
        };
        let (p, q) = self.encode(&mut tape, &arch, &idx, attr)?;
        let (p_hat, drawn) = self.friends(&mut tape, &arch, p, resample)?;
        let out = head_forward(&mut tape, &arch.head, &self.train_cells, p_hat, q)?;
        let mut loss = imputation_loss(&mut tape, &out, &self.train_cells)?;
        if self.config.gae_aux_loss {
            if let Some(aux) = self.gae_aux_loss(&mut tape, &arch, p)? {
                loss = tape.add(loss, aux)?;
            }
        }
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        let train_mae = batch_error(&self.train_cells, &predictions(&tape, &out, &self.train_cells));

        let grads = tape.backward(loss)?;
        let grad_refs: Vec<Option<&Tensor>> = vars.iter().map(|&v| grads.get(v)).collect();
        self.optimizer.step(self.store.values_mut(), &grad_refs)?;

        let reconstructed = drawn.is_some();
        if let Some(d) = drawn {
            self.held = d;
            self.reconstructions += 1;
        }
        self.epoch += 1;
        Ok(EpochStats { epoch, loss: loss_value, train_mae, reconstructed })
    }

    /// Predicts every missing cell with all observed edges and the current
    /// friend network. Nothing is resampled and no state changes.
    pub fn impute(&self) -> Result<Imputation> {
        let mut tape = Tape::new();
        let vars = self.store.register(&mut tape, false);
        let arch = self.arch.bind(&vars);
        let (p, q) = self.encode(&mut tape, &arch, &self.index, self.graph.edge_attr.clone())?;
        let p_hat = match arch.friend {
            None => p,
            Some(friend) => {
                let agg = match (arch.gae, &self.a_hat) {
                    (Some(gae), Some(a_hat)) if !self.held.is_empty() => {
                        let z = gae_embed(&mut tape, &gae, a_hat, p)?;
                        let w = edge_probabilities(&mut tape, z, &self.held)?;
                        friend_aggregate(&mut tape, p, &self.held, Some(w))?
                    }
                    (Some(_), _) => friend_aggregate(&mut tape, p, &[], None)?,
                    (None, _) => friend_aggregate(&mut tape, p, &self.held, None)?,
                };
                friend_encode(&mut tape, &friend, p, agg)?
            }
        };
        let mut values = self.ds.values().to_vec();
        if !self.missing_cells.is_empty() {
            let out = head_forward(&mut tape, &arch.head, &self.missing_cells, p_hat, q)?;
            let m = self.ds.n_features();
            for (&(i, j), v) in self.missing_cells.cells.iter().zip(predictions(&tape, &out, &self.missing_cells)) {
                values[i * m + j] = v;
            }
        }
        Ok(Imputation { values, embeddings: tape.value(p_hat).clone() })
    }

    /// Named tensors describing the full training state.
    pub fn state(&self) -> Vec<(alloc::string::String, Tensor)> {
        use alloc::format;
        let mut out = Vec::new();
        for (name, t) in self.store.names().iter().zip(self.store.values()) {
            out.push((format!("param/{name}"), t.clone()));
        }
        for (name, mom) in self.store.names().iter().zip(&self.optimizer.moments) {
            out.push((format!("adam.m/{name}"), mom.m.clone()));
            out.push((format!("adam.v/{name}"), mom.v.clone()));
            out.push((format!("adam.t/{name}"), Tensor::scalar(mom.t as f64)));
        }
        let held: Vec<f64> = self.held.iter().flat_map(|&(a, b)| [a as f64, b as f64]).collect();
        out.push(("friend.held".into(), Tensor::from_vec(self.held.len(), 2, held).expect("two per edge")));
        out.push(("trainer.epoch".into(), Tensor::scalar(self.epoch as f64)));
        out.push(("trainer.reconstructions".into(), Tensor::scalar(self.reconstructions as f64)));
        out.push(("rng.dropout".into(), position_tensor(&self.dropout_rng)));
        out.push(("rng.gumbel".into(), position_tensor(&self.gumbel_rng)));
        out
    }

    /// Restores a state written by [`Trainer::state`] for the same data and config.
    pub fn restore(&mut self, named: &[(alloc::string::String, Tensor)]) -> Result<()> {
        use alloc::format;
        let find = |key: &str| {
            named
                .iter()
                .find(|(n, _)| n == key)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))
        };
        let params: Vec<(alloc::string::String, Tensor)> = self
            .store
            .names()
            .iter()
            .map(|n| find(&format!("param/{n}")).map(|t| (n.clone(), t.clone())))
            .collect::<Result<_>>()?;
        let mut moments = self.optimizer.moments.clone();
        for (name, mom) in self.store.names().iter().zip(moments.iter_mut()) {
            let (m, v) = (find(&format!("adam.m/{name}"))?, find(&format!("adam.v/{name}"))?);
            if m.shape() != mom.m.shape() || v.shape() != mom.v.shape() {
                return Err(Error::Checkpoint(format!("moment shape mismatch for `{name}`")));
            }
            mom.m = m.clone();
            mom.v = v.clone();
            mom.t = find(&format!("adam.t/{name}"))?.item() as u64;
        }
        let held_t = find("friend.held")?;
        let n = self.ds.n_samples();
        let held: Vec<(usize, usize)> = (0..held_t.rows()).map(|r| (held_t.get(r, 0) as usize, held_t.get(r, 1) as usize)).collect();
        if held.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::Checkpoint("friend edge outside the sample range".into()));
        }
        let (dropout, gumbel) = (position_from(find("rng.dropout")?)?, position_from(find("rng.gumbel")?)?);
        self.store.load(&params)?;
        self.optimizer.moments = moments;
        self.held = held;
        self.epoch = find("trainer.epoch")?.item() as usize;
        self.reconstructions = find("trainer.reconstructions")?.item() as usize;
        self.dropout_rng.set_position(dropout);
        self.gumbel_rng.set_position(gumbel);
        Ok(())
    }
}

/// Stream position as four 32-bit limbs, most significant first, each exact in an f64.
fn position_tensor(rng: &Rng) -> Tensor {
    let pos = rng.position();
    let limbs = (0..4).rev().map(|k| ((pos >> (32 * k)) & 0xffff_ffff) as f64).collect();
    Tensor::from_vec(1, 4, limbs).expect("four limbs")
}

fn position_from(t: &Tensor) -> Result<u128> {
    if t.shape() != [1, 4] || t.data().iter().any(|&x| !(0.0..=u32::MAX as f64).contains(&x) || x.fract() != 0.0) {
        return Err(Error::Checkpoint("malformed random stream position".into()));
    }
    Ok(t.data().iter().fold(0u128, |acc, &x| acc << 32 | x as u128))
}
