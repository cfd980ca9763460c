//! Forward builders for each part of the network. Every function appends
//! operations to a tape, so gradients follow from `Tape::backward`.
//!
//! Linear maps over a concatenation `[a; b]` are evaluated as `a W_a + b W_b`
//! with `W_a`, `W_b` the matching row blocks of `W`, which is the same value
//! without materializing the concatenated input.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ColumnLayout, EgsageLayer, Gae, Head, Linear};
use crate::data::TabularDataset;
use crate::graph::{BipartiteGraph, FriendAdjacency};
use crate::numerics::{math, Csr, Tape, Tensor, Var};
use crate::{Error, Result};

/// Endpoint lists of the bipartite edges.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    pub samples: Arc<[usize]>,
    pub features: Arc<[usize]>,
    pub n_samples: usize,
    pub n_features: usize,
}

impl EdgeIndex {
    pub fn new(graph: &BipartiteGraph) -> Self {
        Self {
            samples: graph.edges.iter().map(|e| e.0).collect(),
            features: graph.edges.iter().map(|e| e.1).collect(),
            n_samples: graph.n_samples,
            n_features: graph.n_features,
        }
    }
}

/// `x [W_0; W_1; ..] = Σ x_k W_k` for inputs `xs` of the given widths.
fn split_matmul(tape: &mut Tape, w: Var, xs: &[(Var, usize)]) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut start = 0;
    for &(x, width) in xs {
        let block = tape.slice_rows(w, start, start + width)?;
        out.push(tape.matmul(x, block)?);
        start += width;
    }
    if start != tape.value(w).rows() {
        return Err(Error::ShapeMismatch { op: "split_matmul", left: tape.value(w).shape(), right: [start, 0] });
    }
    Ok(out)
}

/// Mean over each destination's edges of `ReLU(W [src; e] + b)`; destinations
/// without edges get zero. `src_proj` is `src W_src`, `edge_proj` is `e W_e + b`.
fn aggregate_messages(
    tape: &mut Tape,
    src_proj: Var,
    edge_proj: Var,
    src_idx: &Arc<[usize]>,
    dst_idx: &Arc<[usize]>,
    n_dst: usize,
) -> Result<Var> {
    let g = tape.gather_rows(src_proj, src_idx.clone())?;
    let s = tape.add(g, edge_proj)?;
    let r = tape.relu(s);
    tape.scatter_mean(r, dst_idx.clone(), n_dst)
}

/// Messages into the `n_dst` destination nodes from `src` embeddings along edges.
#[allow(clippy::too_many_arguments)]
pub fn egsage_message(
    tape: &mut Tape,
    lin: &Linear<Var>,
    src: Var,
    edge: Var,
    src_idx: &Arc<[usize]>,
    dst_idx: &Arc<[usize]>,
    n_dst: usize,
) -> Result<Var> {
    let (src_w, edge_w) = (tape.value(src).cols(), tape.value(edge).cols());
    let parts = split_matmul(tape, lin.w, &[(src, src_w), (edge, edge_w)])?;
    let edge_proj = tape.add_row(parts[1], lin.b)?;
    aggregate_messages(tape, parts[0], edge_proj, src_idx, dst_idx, n_dst)
}

/// `ReLU(U [prev; h] + b)`.
pub fn egsage_update(tape: &mut Tape, lin: &Linear<Var>, prev: Var, h: Var) -> Result<Var> {
    let (a, b) = (tape.value(prev).cols(), tape.value(h).cols());
    let parts = split_matmul(tape, lin.w, &[(prev, a), (h, b)])?;
    let s = tape.add(parts[0], parts[1])?;
    let s = tape.add_row(s, lin.b)?;
    Ok(tape.relu(s))
}

/// `ReLU(Q [e; p_i; q_j] + b)` for every edge `(i, j)`.
pub fn egsage_edge_update(tape: &mut Tape, lin: &Linear<Var>, edge: Var, p: Var, q: Var, idx: &EdgeIndex) -> Result<Var> {
    let widths = [tape.value(edge).cols(), tape.value(p).cols(), tape.value(q).cols()];
    let parts = split_matmul(tape, lin.w, &[(edge, widths[0]), (p, widths[1]), (q, widths[2])])?;
    let gp = tape.gather_rows(parts[1], idx.samples.clone())?;
    let gq = tape.gather_rows(parts[2], idx.features.clone())?;
    let s = tape.add(parts[0], gp)?;
    let s = tape.add(s, gq)?;
    let s = tape.add_row(s, lin.b)?;
    Ok(tape.relu(s))
}

/// One layer in both directions with shared weights. Returns updated sample
/// and feature embeddings and, if the layer has one, the updated edges.
pub fn egsage_layer(tape: &mut Tape, layer: &EgsageLayer<Var>, p: Var, q: Var, edge: Var, idx: &EdgeIndex) -> Result<(Var, Var, Option<Var>)> {
    let parts = split_matmul(tape, layer.message.w, &[(p, layer.node_in), (edge, layer.edge_in)])?;
    let p_proj = parts[0];
    let edge_proj = tape.add_row(parts[1], layer.message.b)?;
    let q_block = tape.slice_rows(layer.message.w, 0, layer.node_in)?;
    let q_proj = tape.matmul(q, q_block)?;
    let to_samples = aggregate_messages(tape, q_proj, edge_proj, &idx.features, &idx.samples, idx.n_samples)?;
    let to_features = aggregate_messages(tape, p_proj, edge_proj, &idx.samples, &idx.features, idx.n_features)?;
    let p_next = egsage_update(tape, &layer.update, p, to_samples)?;
    let q_next = egsage_update(tape, &layer.update, q, to_features)?;
    let e_next = match &layer.edge {
        Some(lin) => Some(egsage_edge_update(tape, lin, edge, p_next, q_next, idx)?),
        None => None,
    };
    Ok((p_next, q_next, e_next))
}

/// Runs every layer and returns the last sample and feature embeddings.
pub fn bipartite_encode(tape: &mut Tape, layers: &[EgsageLayer<Var>], p0: Var, q0: Var, e0: Var, idx: &EdgeIndex) -> Result<(Var, Var)> {
    let (mut p, mut q, mut e) = (p0, q0, e0);
    for (l, layer) in layers.iter().enumerate() {
        let (pn, qn, en) = egsage_layer(tape, layer, p, q, e, idx)?;
        p = pn;
        q = qn;
        if let Some(en) = en {
            e = en;
        } else if l + 1 < layers.len() {
            return Err(Error::InvalidParameter("only the last layer may omit the edge update".into()));
        }
    }
    Ok((p, q))
}

/// `D^-1/2 (A + I) D^-1/2`.
pub fn normalized_adjacency(adj: &FriendAdjacency) -> Result<Csr> {
    let n = adj.n();
    let mut degree = vec![1.0; n];
    for &(a, b) in adj.edges() {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let inv: Vec<f64> = degree.iter().map(|&d| 1.0 / math::sqrt(d)).collect();
    let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, inv[i] * inv[i])).collect();
    for &(a, b) in adj.edges() {
        let w = inv[a] * inv[b];
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    Csr::from_triplets(n, n, &triplets)
}

/// `Z = Â ReLU(Â X W_0 + b_0) W_1 + b_1`.
pub fn gae_embed(tape: &mut Tape, gae: &Gae<Var>, a_hat: &Arc<Csr>, x: Var) -> Result<Var> {
    let xw = tape.matmul(x, gae.gcn0.w)?;
    let h = tape.sparse_matmul(a_hat.clone(), xw)?;
    let h = tape.add_row(h, gae.gcn0.b)?;
    let h = tape.relu(h);
    let hw = tape.matmul(h, gae.gcn1.w)?;
    let z = tape.sparse_matmul(a_hat.clone(), hw)?;
    tape.add_row(z, gae.gcn1.b)
}

/// Link embeddings and the full edge-probability matrix `M = sigmoid(Z Zᵀ)`.
pub fn gae_forward(tape: &mut Tape, gae: &Gae<Var>, a_hat: &Arc<Csr>, x: Var) -> Result<(Var, Var)> {
    let z = gae_embed(tape, gae, a_hat, x)?;
    Ok((z, matmul_probabilities(tape, z)?))
}

/// `sigmoid(Z Zᵀ)` from link embeddings.
pub fn matmul_probabilities(tape: &mut Tape, z: Var) -> Result<Var> {
    let zz = tape.matmul_t(z, z)?;
    Ok(tape.sigmoid(zz))
}

/// `sigmoid(z_a · z_b)` for each pair, as a column.
pub fn edge_probabilities(tape: &mut Tape, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let a: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
    let b: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();
    let za = tape.gather_rows(z, a)?;
    let zb = tape.gather_rows(z, b)?;
    let prod = tape.mul(za, zb)?;
    let dot = tape.row_sum(prod);
    Ok(tape.sigmoid(dot))
}

pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Result of drawing a friend network from `M`.
#[derive(Clone, Debug)]
pub struct StructureSample {
    /// Accepted draws as `(row, chosen column)`; each is a distinct undirected edge.
    pub draws: Vec<(usize, usize)>,
    /// Relaxed one-hot rows, one per accepted draw (`k × n`).
    pub soft: Var,
    /// Forward value is the hard one-hot; gradients pass to `soft`.
    pub straight: Var,
    /// `M_ij` times the straight-through entry of each draw (`k × 1`).
    pub weights: Var,
}

/// Gumbel-softmax sampling of up to `budget` undirected edges from `M`.
///
/// Rows are visited round-robin. Each visit draws fresh noise, perturbs
/// `log M_i` (diagonal excluded), and takes the argmax. Draws that repeat an
/// existing undirected edge are discarded. `noise` fills one row of noise per
/// visit. The number of visits is capped at `20 · budget + n`.
pub fn sample_structure(tape: &mut Tape, m: Var, tau: f64, budget: usize, noise: &mut dyn FnMut(&mut [f64])) -> Result<StructureSample> {
    let mv = tape.value(m);
    let n = mv.rows();
    if mv.cols() != n || n < 2 {
        return Err(Error::InvalidParameter(alloc::format!("edge probabilities must be square with n ≥ 2, got {:?}", mv.shape())));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("temperature must be positive, got {tau}")));
    }
    let budget = budget.min(n * (n - 1) / 2).max(1);
    let log_m: Vec<f64> = mv.data().iter().map(|&x| math::ln(x.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR))).collect();

    let mut seen = BTreeSet::new();
    let mut draws = Vec::new();
    let mut noise_rows: Vec<f64> = Vec::new();
    let mut g = vec![0.0; n];
    let cap = 20 * budget + n;
    let mut visit = 0;
    while seen.len() < budget && visit < cap {
        let i = visit % n;
        visit += 1;
        noise(&mut g);
        g[i] = f64::NEG_INFINITY;
        let row = &log_m[i * n..(i + 1) * n];
        let mut best = usize::MAX;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..n {
            let v = row[j] + g[j];
            if j != i && (best == usize::MAX || v > best_v) {
                best = j;
                best_v = v;
            }
        }
        if seen.insert((i.min(best), i.max(best))) {
            draws.push((i, best));
            noise_rows.extend_from_slice(&g);
        }
    }

    let k = draws.len();
    let rows: Arc<[usize]> = draws.iter().map(|d| d.0).collect();
    let clamped = tape.clamp(m, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    let log_m = tape.log(clamped);
    let picked = tape.gather_rows(log_m, rows)?;
    let g = tape.constant(Tensor::from_vec(k, n, noise_rows)?);
    let logits = tape.add(picked, g)?;
    let soft = tape.row_softmax(logits, tau)?;
    let mut hard = Tensor::zeros(k, n);
    for (d, &(_, j)) in draws.iter().enumerate() {
        hard.set(d, j, 1.0);
    }
    let straight = tape.straight_through(soft, hard)?;
    let st_pick = tape.gather_elements(straight, draws.iter().enumerate().map(|(d, &(_, j))| (d, j)).collect())?;
    let m_pick = tape.gather_elements(m, draws.iter().copied().collect())?;
    let weights = tape.mul(m_pick, st_pick)?;
    Ok(StructureSample { draws, soft, straight, weights })
}

/// `Σ_{j ∈ N(i)} w_ij x_j` over undirected `pairs`; unit weights when `weights` is `None`.
pub fn friend_aggregate(tape: &mut Tape, x: Var, pairs: &[(usize, usize)], weights: Option<Var>) -> Result<Var> {
    let n = tape.value(x).rows();
    let k = pairs.len();
    let src: Arc<[usize]> = pairs.iter().map(|p| p.1).chain(pairs.iter().map(|p| p.0)).collect();
    let dst: Arc<[usize]> = pairs.iter().map(|p| p.0).chain(pairs.iter().map(|p| p.1)).collect();
    let mut g = tape.gather_rows(x, src)?;
    if let Some(w) = weights {
        let both: Arc<[usize]> = (0..k).chain(0..k).collect();
        let w2 = tape.gather_rows(w, both)?;
        g = tape.mul_col(g, w2)?;
    }
    tape.scatter_sum(g, dst, n)
}

/// `ReLU(O [p; agg] + b)`.
pub fn friend_encode(tape: &mut Tape, lin: &Linear<Var>, p: Var, agg: Var) -> Result<Var> {
    egsage_update(tape, lin, p, agg)
}

/// Cells handed to the head, ordered continuous first, then discrete
/// grouped by column.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBatch {
    pub cells: Vec<(usize, usize)>,
    samples: Arc<[usize]>,
    features: Arc<[usize]>,
    continuous: usize,
    cont_pick: Arc<[(usize, usize)]>,
    cont_targets: Tensor,
    discrete: Vec<DiscreteSegment>,
}

#[derive(Clone, Debug, PartialEq)]
struct DiscreteSegment {
    slot: usize,
    start: usize,
    end: usize,
    targets: Arc<[usize]>,
}

impl CellBatch {
    /// Targets are read from `ds` values for observed cells and from ground
    /// truth otherwise (0 when unknown).
    pub fn new(ds: &TabularDataset, layout: &ColumnLayout, cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let target = |i: usize, j: usize| if ds.is_observed(i, j) { ds.value(i, j) } else { ds.truth(i, j).unwrap_or(0.0) };
        let mut cont = Vec::new();
        let mut disc: Vec<Vec<(usize, usize)>> = vec![Vec::new(); layout.categories.len()];
        for (i, j) in cells {
            match layout.slots[j] {
                Ok(_) => cont.push((i, j)),
                Err(s) => disc[s].push((i, j)),
            }
        }
        let continuous = cont.len();
        let cont_pick: Arc<[(usize, usize)]> = cont.iter().enumerate().map(|(r, &(_, j))| (r, layout.slots[j].unwrap_or(0))).collect();
        let cont_targets = Tensor::from_vec(continuous, 1, cont.iter().map(|&(i, j)| target(i, j)).collect()).expect("one per cell");
        let mut cells = cont;
        let mut discrete = Vec::new();
        for (slot, seg) in disc.into_iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let start = cells.len();
            let targets = seg.iter().map(|&(i, j)| target(i, j) as usize).collect();
            cells.extend(seg);
            discrete.push(DiscreteSegment { slot, start, end: cells.len(), targets });
        }
        Self {
            samples: cells.iter().map(|c| c.0).collect(),
            features: cells.iter().map(|c| c.1).collect(),
            cells,
            continuous,
            cont_pick,
            cont_targets,
            discrete,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Head outputs for a batch: continuous predictions in `(0, 1)` and logits
/// per discrete segment, aligned with `CellBatch::cells`.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub continuous: Option<Var>,
    pub discrete: Vec<Var>,
}

pub fn head_forward(tape: &mut Tape, head: &Head<Var>, batch: &CellBatch, p_hat: Var, q: Var) -> Result<HeadOutput> {
    if batch.is_empty() {
        return Ok(HeadOutput { continuous: None, discrete: Vec::new() });
    }
    let ps = tape.matmul(p_hat, head.sample)?;
    let qs = tape.matmul(q, head.feature)?;
    let gp = tape.gather_rows(ps, batch.samples.clone())?;
    let gq = tape.gather_rows(qs, batch.features.clone())?;
    let t = tape.add(gp, gq)?;
    let t = tape.add_row(t, head.bias)?;
    let trunk = tape.relu(t);
    let continuous = if batch.continuous > 0 {
        let lin = head.continuous.ok_or(Error::InvalidParameter("continuous cells without a continuous head".into()))?;
        let rows = tape.slice_rows(trunk, 0, batch.continuous)?;
        let all = tape.matmul(rows, lin.w)?;
        let all = tape.add_row(all, lin.b)?;
        let picked = tape.gather_elements(all, batch.cont_pick.clone())?;
        Some(tape.sigmoid(picked))
    } else {
        None
    };
    let mut discrete = Vec::with_capacity(batch.discrete.len());
    for seg in &batch.discrete {
        let lin = head.discrete[seg.slot];
        let rows = tape.slice_rows(trunk, seg.start, seg.end)?;
        let logits = tape.matmul(rows, lin.w)?;
        discrete.push(tape.add_row(logits, lin.b)?);
    }
    Ok(HeadOutput { continuous, discrete })
}

/// Mean squared error over the continuous cells plus mean cross-entropy over
/// the discrete cells.
pub fn imputation_loss(tape: &mut Tape, out: &HeadOutput, batch: &CellBatch) -> Result<Var> {
    let mut terms = Vec::new();
    if let Some(pred) = out.continuous {
        let target = tape.constant(batch.cont_targets.clone());
        terms.push(tape.mse(pred, target)?);
    }
    let n_disc: usize = batch.discrete.iter().map(|s| s.end - s.start).sum();
    for (seg, &logits) in batch.discrete.iter().zip(&out.discrete) {
        let ce = tape.cross_entropy(logits, seg.targets.clone())?;
        terms.push(tape.scale(ce, (seg.end - seg.start) as f64 / n_disc as f64));
    }
    let mut total = *terms.first().ok_or(Error::NoObservedCells)?;
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// Point predictions per cell: continuous values in scaled space, discrete
/// as the category index (lowest index on ties).
pub fn predictions(tape: &Tape, out: &HeadOutput, batch: &CellBatch) -> Vec<f64> {
    let mut values = Vec::with_capacity(batch.len());
    if let Some(c) = out.continuous {
        values.extend_from_slice(tape.value(c).data());
    }
    for &logits in &out.discrete {
        let t = tape.value(logits);
        for r in 0..t.rows() {
            let row = t.row(r);
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            values.push(best as f64);
        }
    }
    values
}

/// Mean absolute error of `predictions` against the batch targets, with
/// discrete cells counted as 0/1 mismatches.
pub fn batch_error(batch: &CellBatch, predicted: &[f64]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (r, &p) in predicted.iter().enumerate().take(batch.continuous) {
        total += math::abs(p - batch.cont_targets.data()[r]);
    }
    for seg in &batch.discrete {
        for (k, &t) in seg.targets.iter().enumerate() {
            if predicted[seg.start + k] as usize != t {
                total += 1.0;
            }
        }
    }
    total / batch.len() as f64
}
