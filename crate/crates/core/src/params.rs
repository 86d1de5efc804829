//! Named parameter storage and per-graph bindings.

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ConvLayer, Graph, Tensor, Var};

/// Ordered map from parameter name to value. Insertion order is the
/// checkpoint order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(tensors: IndexMap<String, Tensor>) -> Self {
        ParamStore { tensors }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn as_map(&self) -> &IndexMap<String, Tensor> {
        &self.tensors
    }

    /// Records every parameter accepted by `include` as a leaf of `graph`;
    /// those accepted by `trainable` will receive gradients.
    pub fn bind_where<'g>(
        &self,
        graph: &'g Graph,
        include: impl Fn(&str) -> bool,
        trainable: impl Fn(&str) -> bool,
    ) -> Bound<'g> {
        let vars = self
            .tensors
            .iter()
            .filter(|(name, _)| include(name))
            .map(|(name, t)| (name.clone(), graph.leaf(t.clone(), trainable(name))))
            .collect();
        Bound { vars }
    }

    pub fn bind<'g>(&self, graph: &'g Graph, trainable: impl Fn(&str) -> bool) -> Bound<'g> {
        self.bind_where(graph, |_| true, trainable)
    }
}

/// Parameters recorded on one graph.
pub struct Bound<'g> {
    vars: IndexMap<String, Var<'g>>,
}

impl<'g> FromIterator<(String, Var<'g>)> for Bound<'g> {
    fn from_iter<I: IntoIterator<Item = (String, Var<'g>)>>(iter: I) -> Self {
        Bound { vars: iter.into_iter().collect() }
    }
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.vars.get(name).copied().ok_or_else(|| Error::Contract(format!("parameter `{name}` not bound")))
    }

    /// Gradients of the trainable parameters after `backward` (zeros for
    /// trainable parameters the loss did not reach).
    pub fn grads(&self) -> IndexMap<String, Tensor> {
        self.vars
            .iter()
            .filter(|(_, v)| v.requires_grad())
            .map(|(name, v)| (name.clone(), v.grad().unwrap_or_else(|| Tensor::zeros(v.shape()))))
            .collect()
    }
}

/// Kaiming-uniform initialisation for ReLU stacks: `U(−b, b)` with `b = √(6 / fan_in)`.
pub fn kaiming_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// A stride-1, same-padded convolution whose weights live in a [`ParamStore`]
/// under `<name>.weight` and `<name>.bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl Conv {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Conv { name: name.into(), in_ch, out_ch, kernel }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn shapes(&self) -> [(String, Vec<usize>); 2] {
        [
            (self.weight_name(), vec![self.out_ch, self.in_ch, self.kernel, self.kernel]),
            (self.bias_name(), vec![self.out_ch]),
        ]
    }

    /// Kaiming-uniform weights, zero bias.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let [(w, wshape), (b, bshape)] = self.shapes();
        store.insert(w, kaiming_uniform(wshape, fan_in, rng));
        store.insert(b, Tensor::zeros(bshape));
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.conv2d(p.get(&self.weight_name())?, Some(p.get(&self.bias_name())?), 1, self.padding())
    }

    pub fn layer(&self, store: &ParamStore) -> Result<ConvLayer> {
        ConvLayer::new(
            store.get(&self.weight_name())?.clone(),
            store.get(&self.bias_name())?.clone(),
            1,
            self.padding(),
        )
    }
}
