//! Central finite differences against the tape's reverse pass for every layer
//! of the network, on small random inputs. Shared by the gradient tests and
//! the acceptance suite.

use std::sync::Arc;

use igrm_core::data::{Column, TabularDataset};
use igrm_core::graph::{build_bipartite, FriendAdjacency};
use igrm_core::model::layers::*;
use igrm_core::model::params::{ColumnLayout, EgsageLayer, Gae, Head, Linear};
use igrm_core::numerics::{Rng, Tape, Tensor, Var};

const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Name and maximum relative error of one check.
pub type Check = (&'static str, f64);

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform() * 2.0 - 1.0).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Builds `Σ out ⊙ C` for a fixed random `C`, so every output entry matters.
fn contract(tape: &mut Tape, out: Var) -> Var {
    let t = tape.value(out);
    let c = random(t.rows(), t.cols(), &mut Rng::new(t.len() as u64 + 77));
    let c = tape.constant(c);
    let prod = tape.mul(out, c).unwrap();
    tape.sum(prod)
}

/// Largest relative error between analytic and central-difference gradients
/// over every entry of every input.
pub fn max_relative_error(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = build(&mut tape, &vars);
        let loss = contract(&mut tape, out);
        (tape.value(loss).item(), tape.backward(loss).unwrap(), vars)
    };
    let (_, grads, vars) = eval(inputs);
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).unwrap().clone();
        for e in 0..x.len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[e] += STEP;
            let plus = eval(&xs).0;
            xs[k].data_mut()[e] -= 2.0 * STEP;
            let minus = eval(&xs).0;
            let fd = (plus - minus) / (2.0 * STEP);
            let an = analytic.data()[e];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn measure(name: &'static str, inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var) -> Check {
    (name, max_relative_error(inputs, build))
}

/// Every check, in network order.
pub fn all() -> Vec<Check> {
    [message_passing, node_update, edge_update, full_layer_both_directions, graph_autoencoder, relaxed_structure_sample, friend_aggregation_and_encoder, prediction_head_and_loss]
        .iter()
        .flat_map(|f| f())
        .collect()
}

/// Sum of the contractions of several outputs, as a 1×1 output.
fn total(tape: &mut Tape, outs: &[Var]) -> Var {
    let mut acc = contract(tape, outs[0]);
    for &o in &outs[1..] {
        let c = contract(tape, o);
        acc = tape.add(acc, c).unwrap();
    }
    acc
}

fn lin(xs: &[Var], at: usize) -> Linear<Var> {
    Linear { w: xs[at], b: xs[at + 1] }
}

fn mixed_dataset() -> TabularDataset {
    let cols = vec![Column::continuous("a"), Column::discrete("d", &["x", "y", "z"]), Column::continuous("b")];
    let rows = [[0.2, 1.0, 0.7], [0.9, 2.0, 0.1], [0.5, 0.0, 0.4], [0.1, 1.0, 0.8], [0.6, 2.0, 0.3]];
    let mask = [true, true, false, true, false, true, true, true, true, false, true, true, true, true, true];
    TabularDataset::from_complete_rows(cols, &rows).unwrap().with_mask(&mask).unwrap()
}

fn edge_index(ds: &TabularDataset) -> (EdgeIndex, Tensor) {
    let g = build_bipartite(ds);
    let e = Tensor::from_vec(g.edge_count(), g.edge_dim(), g.edge_attr.data().to_vec()).unwrap();
    (EdgeIndex::new(&g), e)
}

pub fn message_passing() -> Vec<Check> {
    let mut rng = Rng::new(1);
    let ds = mixed_dataset();
    let (idx, e) = edge_index(&ds);
    let (node_in, h) = (4, 6);
    let inputs = [random(node_in + e.cols(), h, &mut rng), random(1, h, &mut rng), random(idx.n_features, node_in, &mut rng), e];
    vec![measure("message", &inputs, |tape, xs| {
        egsage_message(tape, &lin(xs, 0), xs[2], xs[3], &idx.features, &idx.samples, idx.n_samples).unwrap()
    })]
}

pub fn node_update() -> Vec<Check> {
    let mut rng = Rng::new(2);
    let (a, h) = (5, 6);
    let inputs = [random(a + h, h, &mut rng), random(1, h, &mut rng), random(4, a, &mut rng), random(4, h, &mut rng)];
    vec![measure("update", &inputs, |tape, xs| egsage_update(tape, &lin(xs, 0), xs[2], xs[3]).unwrap())]
}

pub fn edge_update() -> Vec<Check> {
    let mut rng = Rng::new(3);
    let ds = mixed_dataset();
    let (idx, e) = edge_index(&ds);
    let h = 5;
    let inputs = [
        random(e.cols() + 2 * h, h, &mut rng),
        random(1, h, &mut rng),
        e,
        random(idx.n_samples, h, &mut rng),
        random(idx.n_features, h, &mut rng),
    ];
    vec![measure("edge update", &inputs, |tape, xs| egsage_edge_update(tape, &lin(xs, 0), xs[2], xs[3], xs[4], &idx).unwrap())]
}

pub fn full_layer_both_directions() -> Vec<Check> {
    let mut rng = Rng::new(4);
    let ds = mixed_dataset();
    let (idx, e) = edge_index(&ds);
    let (node_in, h) = (3, 4);
    let edge_in = e.cols();
    let inputs = [
        random(node_in + edge_in, h, &mut rng),
        random(1, h, &mut rng),
        random(node_in + h, h, &mut rng),
        random(1, h, &mut rng),
        random(edge_in + 2 * h, h, &mut rng),
        random(1, h, &mut rng),
        random(idx.n_samples, node_in, &mut rng),
        random(idx.n_features, node_in, &mut rng),
        e,
    ];
    vec![measure("layer", &inputs, |tape, xs| {
        let layer = EgsageLayer { message: lin(xs, 0), update: lin(xs, 2), edge: Some(lin(xs, 4)), node_in, edge_in };
        let (p, q, e) = egsage_layer(tape, &layer, xs[6], xs[7], xs[8], &idx).unwrap();
        total(tape, &[p, q, e.unwrap()])
    })]
}

pub fn graph_autoencoder() -> Vec<Check> {
    let mut rng = Rng::new(5);
    let n = 6;
    let adj = FriendAdjacency::from_pairs(n, [(0, 1), (1, 2), (3, 4), (0, 5), (2, 5)]).unwrap();
    let a_hat = Arc::new(normalized_adjacency(&adj).unwrap());
    let (d, h) = (4, 5);
    let inputs = [random(d, h, &mut rng), random(1, h, &mut rng), random(h, h, &mut rng), random(1, h, &mut rng), random(n, d, &mut rng)];
    vec![measure("gae", &inputs, |tape, xs| {
        let gae = Gae { gcn0: lin(xs, 0), gcn1: lin(xs, 2) };
        gae_forward(tape, &gae, &a_hat, xs[4]).unwrap().1
    })]
}

pub fn relaxed_structure_sample() -> Vec<Check> {
    let mut rng = Rng::new(6);
    let n = 5;
    let mut m = random(n, n, &mut rng);
    m.data_mut().iter_mut().for_each(|x| *x = 0.2 + 0.3 * (*x + 1.0));
    let noise: Vec<f64> = (0..4 * n * n).map(|_| rng.gumbel()).collect();
    vec![measure("relaxed sample", &[m], |tape, xs| {
        let mut k = 0;
        let s = sample_structure(tape, xs[0], 0.7, 4, &mut |row| {
            for x in row.iter_mut() {
                *x = noise[k % noise.len()];
                k += 1;
            }
        })
        .unwrap();
        s.soft
    })]
}

pub fn friend_aggregation_and_encoder() -> Vec<Check> {
    let mut rng = Rng::new(7);
    let (n, h) = (6, 5);
    let pairs = [(0, 1), (1, 2), (3, 5), (0, 4)];
    let inputs = [random(2 * h, h, &mut rng), random(1, h, &mut rng), random(n, h, &mut rng), random(pairs.len(), 1, &mut rng)];
    vec![measure("friend", &inputs, |tape, xs| {
        let agg = friend_aggregate(tape, xs[2], &pairs, Some(xs[3])).unwrap();
        friend_encode(tape, &lin(xs, 0), xs[2], agg).unwrap()
    })]
}

pub fn prediction_head_and_loss() -> Vec<Check> {
    let mut rng = Rng::new(8);
    let ds = mixed_dataset();
    let layout = ColumnLayout::new(ds.columns());
    let cells: Vec<(usize, usize)> = (0..ds.n_samples()).flat_map(|i| (0..ds.n_features()).map(move |j| (i, j))).collect();
    let batch = CellBatch::new(&ds, &layout, cells);
    let h = 6;
    let inputs = [
        random(h, h, &mut rng),
        random(h, h, &mut rng),
        random(1, h, &mut rng),
        random(h, layout.continuous, &mut rng),
        random(1, layout.continuous, &mut rng),
        random(h, 3, &mut rng),
        random(1, 3, &mut rng),
        random(ds.n_samples(), h, &mut rng),
        random(ds.n_features(), h, &mut rng),
    ];
    let head = |xs: &[Var]| Head { sample: xs[0], feature: xs[1], bias: xs[2], continuous: Some(lin(xs, 3)), discrete: vec![lin(xs, 5)] };
    let head_check = measure("head", &inputs, |tape, xs| {
        let out = head_forward(tape, &head(xs), &batch, xs[7], xs[8]).unwrap();
        let mut parts = vec![out.continuous.unwrap()];
        parts.extend(out.discrete);
        total(tape, &parts)
    });
    let loss = measure("loss", &inputs, |tape, xs| {
        let out = head_forward(tape, &head(xs), &batch, xs[7], xs[8]).unwrap();
        imputation_loss(tape, &out, &batch).unwrap()
    });
    vec![head_check, loss]
}
