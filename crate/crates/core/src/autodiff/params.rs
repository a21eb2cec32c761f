use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use super::{Array, Graph, Var};
use crate::{Error, Result};

/// Index of a parameter inside its [`ParameterStore`]. Ids stay valid for
/// every clone of the store, which is how target networks and old-policy
/// snapshots share network definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Array,
    pub grad: Array,
    /// Optimizer accumulators, same shape as `value`. Empty until the first
    /// optimizer step that needs them.
    pub state: Vec<Array>,
}

/// Named parameters plus their optimizer state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, ParamId>,
    /// Number of optimizer steps applied, used for Adam bias correction.
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let id = ParamId(self.params.len());
        let grad = Array::zeros(value.shape());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
            state: Vec::new(),
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Inserts a parameter drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Array::new(shape.to_vec(), data)?)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Parameters whose name starts with `prefix`, in insertion order.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.iter()
            .filter(move |(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
    }

    /// Total number of scalars across parameters with the given name prefix.
    pub fn num_scalars(&self, prefix: &str) -> usize {
        self.ids_with_prefix(prefix)
            .map(|id| self.params[id.0].value.len())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds a backward pass' parameter gradients into the stored gradients.
    pub fn accumulate(&mut self, grads: &super::Gradients) {
        for (id, g) in grads.params() {
            self.params[id.0].grad.add_assign(g);
        }
    }

    /// Overwrites every parameter value with the one in `other` (target
    /// network sync). Optimizer state and gradients are left alone.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Config("parameter stores have different layouts".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::UnknownParameter(src.name.clone()));
            }
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }

    /// Like [`copy_values_from`](Self::copy_values_from), but also takes the
    /// optimizer accumulators and step count. Gradients are cleared.
    pub fn copy_state_from(&mut self, other: &ParameterStore) -> Result<()> {
        self.copy_values_from(other)?;
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if let Some(bad) = src.state.iter().find(|a| a.shape() != src.value.shape()) {
                return Err(Error::shape("optimizer state", bad.shape(), src.value.shape()));
            }
            dst.state = src.state.clone();
            dst.grad.fill(0.0);
        }
        self.step = other.step;
        Ok(())
    }

    /// Values (not gradients or optimizer state) compare bit-for-bit.
    pub fn values_bit_eq(&self, other: &ParameterStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.bit_eq(&b.value))
    }

    /// Everything, including optimizer state, compares bit-for-bit.
    pub fn bit_eq(&self, other: &ParameterStore) -> bool {
        self.step == other.step
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.bit_eq(&b.value)
                    && a.grad.bit_eq(&b.grad)
                    && a.state.len() == b.state.len()
                    && a.state.iter().zip(&b.state).all(|(x, y)| x.bit_eq(y))
            })
    }
}

/// Fully connected layer `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.init_uniform(&alloc::format!("{name}/w"), &[inputs, outputs], inputs, rng)?;
        let bias = store.init_uniform(&alloc::format!("{name}/b"), &[1, outputs], inputs, rng)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }
}
