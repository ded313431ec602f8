use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Which tensor of an affine layer an address refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TensorRole {
    Weight,
    Bias,
}

/// Address of one parameter tensor inside an [`Mlp`](super::Mlp).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamAddr {
    pub layer: usize,
    pub role: TensorRole,
}

impl ParamAddr {
    pub fn weight(layer: usize) -> Self {
        Self {
            layer,
            role: TensorRole::Weight,
        }
    }

    pub fn bias(layer: usize) -> Self {
        Self {
            layer,
            role: TensorRole::Bias,
        }
    }

    fn index(self) -> usize {
        self.layer * 2
            + match self.role {
                TensorRole::Weight => 0,
                TensorRole::Bias => 1,
            }
    }

    fn from_index(i: usize) -> Self {
        Self {
            layer: i / 2,
            role: if i.is_multiple_of(2) {
                TensorRole::Weight
            } else {
                TensorRole::Bias
            },
        }
    }
}

impl fmt::Display for ParamAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            TensorRole::Weight => "weight",
            TensorRole::Bias => "bias",
        };
        write!(f, "layer{}/{}", self.layer, role)
    }
}

/// A parameter tensor together with its Adam state.
///
/// Biases are stored as `1 x n` matrices so every tensor shares one type.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Array2<f64>,
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub step: u64,
}

impl ParamEntry {
    pub fn new(value: Array2<f64>) -> Self {
        let m = Array2::zeros(value.raw_dim());
        let v = Array2::zeros(value.raw_dim());
        Self {
            value,
            m,
            v,
            step: 0,
        }
    }

    /// Zeroes both moments and the step counter.
    pub fn clear_moments(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.step = 0;
    }
}

/// Layer-addressable parameter storage for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTree {
    entries: Vec<ParamEntry>,
}

impl ParamTree {
    /// Builds a tree from `(weight, bias)` pairs in layer order.
    pub fn from_layers(layers: Vec<(Array2<f64>, Array2<f64>)>) -> Self {
        let entries = layers
            .into_iter()
            .flat_map(|(w, b)| [ParamEntry::new(w), ParamEntry::new(b)])
            .collect();
        Self { entries }
    }

    pub fn num_layers(&self) -> usize {
        self.entries.len() / 2
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, addr: ParamAddr) -> Option<&ParamEntry> {
        self.entries.get(addr.index())
    }

    pub fn get_mut(&mut self, addr: ParamAddr) -> Option<&mut ParamEntry> {
        self.entries.get_mut(addr.index())
    }

    pub(crate) fn entry(&self, addr: ParamAddr) -> &ParamEntry {
        &self.entries[addr.index()]
    }

    pub fn addresses(&self) -> impl Iterator<Item = ParamAddr> + '_ {
        (0..self.entries.len()).map(ParamAddr::from_index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamAddr, &ParamEntry)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamAddr::from_index(i), e))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamAddr, &mut ParamEntry)> {
        self.entries
            .iter_mut()
            .enumerate()
            .map(|(i, e)| (ParamAddr::from_index(i), e))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Copies values (not optimizer state) from `other`, which must share shapes.
    pub fn copy_values_from(&mut self, other: &ParamTree) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::config("parameter trees differ in layer count"));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.value.dim() != src.value.dim() {
                return Err(Error::config("parameter trees differ in shape"));
            }
            dst.value.assign(&src.value);
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to every address of a [`ParamTree`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub(crate) fn from_vec(grads: Vec<Array2<f64>>) -> Self {
        Self { grads }
    }

    pub fn zeros_like(tree: &ParamTree) -> Self {
        Self {
            grads: tree
                .entries
                .iter()
                .map(|e| Array2::zeros(e.value.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, addr: ParamAddr) -> Option<&Array2<f64>> {
        self.grads.get(addr.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamAddr, &Array2<f64>)> {
        self.grads
            .iter()
            .enumerate()
            .map(|(i, g)| (ParamAddr::from_index(i), g))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::config("gradient sets differ in length"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if a.dim() != b.dim() {
                return Err(Error::config("gradient shapes differ"));
            }
            *a += b;
        }
        Ok(())
    }

    pub fn is_all_zero(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|&x| x == 0.0))
    }
}
