use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Column;
use crate::numerics::{math, Rng, Tape, Tensor, Var};
use crate::{Error, Result};

/// Named trainable tensors, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Uniform in `±sqrt(6 / (rows + cols))`.
    pub fn glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> usize {
        let a = math::sqrt(6.0 / (rows + cols) as f64);
        let mut t = Tensor::zeros(rows, cols);
        for x in t.data_mut() {
            *x = (2.0 * rng.uniform() - 1.0) * a;
        }
        self.push(name, t)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        self.push(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|k| &self.values[k])
    }

    /// Replaces every value from `(name, tensor)` pairs with matching names and shapes.
    pub fn load(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        for (k, name) in self.names.iter().enumerate() {
            let (_, t) = named
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != self.values[k].shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    self.values[k].shape()
                )));
            }
        }
        for (k, name) in self.names.iter().enumerate() {
            self.values[k] = named.iter().find(|(n, _)| n == name).expect("checked above").1.clone();
        }
        Ok(())
    }

    /// Puts every value on the tape, trainable or not.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.values.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }
}

/// `x W + b`, with `w` of shape `in × out` and `b` of shape `1 × out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}

impl Linear<usize> {
    fn new(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let w = store.glorot(format!("{name}.w"), rows, cols, rng);
        let b = store.zeros(format!("{name}.b"), 1, cols);
        Self { w, b }
    }

    pub fn bind(&self, vars: &[Var]) -> Linear<Var> {
        Linear { w: vars[self.w], b: vars[self.b] }
    }
}

/// One edge-aware message-passing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EgsageLayer<T> {
    /// Rows: source embedding width, then edge width.
    pub message: Linear<T>,
    /// Rows: previous node embedding width, then hidden width.
    pub update: Linear<T>,
    /// Rows: edge width, then two hidden widths. Absent on the last layer,
    /// whose edge output would not be used.
    pub edge: Option<Linear<T>>,
    pub node_in: usize,
    pub edge_in: usize,
}

impl EgsageLayer<usize> {
    pub fn bind(&self, vars: &[Var]) -> EgsageLayer<Var> {
        EgsageLayer {
            message: self.message.bind(vars),
            update: self.update.bind(vars),
            edge: self.edge.map(|l| l.bind(vars)),
            node_in: self.node_in,
            edge_in: self.edge_in,
        }
    }
}

/// Two graph convolutions producing the link embeddings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gae<T> {
    pub gcn0: Linear<T>,
    pub gcn1: Linear<T>,
}

impl Gae<usize> {
    pub fn bind(&self, vars: &[Var]) -> Gae<Var> {
        Gae { gcn0: self.gcn0.bind(vars), gcn1: self.gcn1.bind(vars) }
    }
}

/// Prediction head: a shared hidden layer over `[p̂_i; q_j]`, then one
/// output column per continuous feature and one logits block per discrete one.
#[derive(Clone, Debug, PartialEq)]
pub struct Head<T> {
    /// Trunk weights for the sample half and the feature half, and its bias.
    pub sample: T,
    pub feature: T,
    pub bias: T,
    pub continuous: Option<Linear<T>>,
    pub discrete: Vec<Linear<T>>,
}

impl Head<usize> {
    pub fn bind(&self, vars: &[Var]) -> Head<Var> {
        Head {
            sample: vars[self.sample],
            feature: vars[self.feature],
            bias: vars[self.bias],
            continuous: self.continuous.map(|l| l.bind(vars)),
            discrete: self.discrete.iter().map(|l| l.bind(vars)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture<T> {
    pub layers: Vec<EgsageLayer<T>>,
    pub gae: Option<Gae<T>>,
    /// Rows: sample embedding, then aggregated friend features.
    pub friend: Option<Linear<T>>,
    pub head: Head<T>,
}

impl Architecture<usize> {
    pub fn bind(&self, vars: &[Var]) -> Architecture<Var> {
        Architecture {
            layers: self.layers.iter().map(|l| l.bind(vars)).collect(),
            gae: self.gae.map(|g| g.bind(vars)),
            friend: self.friend.map(|l| l.bind(vars)),
            head: self.head.bind(vars),
        }
    }
}

/// Where each column's output lives in the head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnLayout {
    /// Per column: `Ok(slot)` into the continuous outputs or `Err(slot)` into the discrete heads.
    pub slots: Vec<core::result::Result<usize, usize>>,
    pub continuous: usize,
    pub categories: Vec<usize>,
}

impl ColumnLayout {
    pub fn new(columns: &[Column]) -> Self {
        let mut slots = Vec::with_capacity(columns.len());
        let mut continuous = 0;
        let mut categories = Vec::new();
        for c in columns {
            match c.category_count() {
                Some(k) => {
                    slots.push(Err(categories.len()));
                    categories.push(k);
                }
                None => {
                    slots.push(Ok(continuous));
                    continuous += 1;
                }
            }
        }
        Self { slots, continuous, categories }
    }
}

/// Widths the network is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub features: usize,
    pub edge: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Creates every parameter the given parts need, Glorot-initialized.
pub fn build_architecture(
    store: &mut ParamStore,
    dims: Dims,
    layout: &ColumnLayout,
    with_gae: bool,
    with_friend: bool,
    rng: &mut Rng,
) -> Architecture<usize> {
    let h = dims.hidden;
    let mut layers = Vec::with_capacity(dims.layers);
    for l in 0..dims.layers {
        let node_in = if l == 0 { dims.features } else { h };
        let edge_in = if l == 0 { dims.edge } else { h };
        let message = Linear::new(store, &format!("egsage.{l}.message"), node_in + edge_in, h, rng);
        let update = Linear::new(store, &format!("egsage.{l}.update"), node_in + h, h, rng);
        let edge = (l + 1 < dims.layers).then(|| Linear::new(store, &format!("egsage.{l}.edge"), edge_in + 2 * h, h, rng));
        layers.push(EgsageLayer { message, update, edge, node_in, edge_in });
    }
    let gae = with_gae.then(|| Gae {
        gcn0: Linear::new(store, "gae.0", h, h, rng),
        gcn1: Linear::new(store, "gae.1", h, h, rng),
    });
    let friend = with_friend.then(|| Linear::new(store, "friend", 2 * h, h, rng));
    let sample = store.glorot("head.sample", h, h, rng);
    let feature = store.glorot("head.feature", h, h, rng);
    let bias = store.zeros("head.bias", 1, h);
    let continuous = (layout.continuous > 0).then(|| Linear::new(store, "head.continuous", h, layout.continuous, rng));
    let discrete = layout
        .categories
        .iter()
        .enumerate()
        .map(|(k, &c)| Linear::new(store, &format!("head.discrete.{k}"), h, c, rng))
        .collect();
    Architecture { layers, gae, friend, head: Head { sample, feature, bias, continuous, discrete } }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shapes_follow_dims() {
        let layout = ColumnLayout::new(&[Column::continuous("a"), Column::discrete("d", &["x", "y", "z"]), Column::continuous("b")]);
        assert_eq!(layout.slots, vec![Ok(0), Err(0), Ok(1)]);
        let mut store = ParamStore::new();
        let dims = Dims { features: 3, edge: 3, hidden: 8, layers: 3 };
        let arch = build_architecture(&mut store, dims, &layout, true, true, &mut Rng::new(0));
        assert_eq!(store.values()[arch.layers[0].message.w].shape(), [6, 8]);
        assert_eq!(store.values()[arch.layers[1].edge.unwrap().w].shape(), [24, 8]);
        assert!(arch.layers[2].edge.is_none());
        assert_eq!(store.get("head.continuous.w").unwrap().shape(), [8, 2]);
        assert_eq!(store.get("head.discrete.0.w").unwrap().shape(), [8, 3]);
        let bound = 6.0f64.sqrt() / 14.0f64.sqrt();
        assert!(store.values()[arch.layers[0].message.w].data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn load_checks_names_and_shapes() {
        let mut store = ParamStore::new();
        store.zeros("a", 1, 2);
        assert!(store.load(&[("b".into(), Tensor::zeros(1, 2))]).is_err());
        assert!(store.load(&[("a".into(), Tensor::zeros(2, 1))]).is_err());
        store.load(&[("a".into(), Tensor::full(1, 2, 3.0))]).unwrap();
        assert_eq!(store.get("a").unwrap().data(), &[3.0, 3.0]);
    }
}
