//! Named parameter storage shared by the model, the optimiser and checkpoints.

use indexmap::IndexMap;

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// How the optimiser treats a stored tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Convolution kernels; subject to weight decay.
    Weight,
    /// Convolution biases; no weight decay.
    Bias,
    /// Batch-norm affine parameters; no weight decay.
    Norm,
    /// Running statistics; updated by the forward pass, never by gradients.
    Buffer,
}

impl ParamKind {
    pub fn is_trainable(self) -> bool {
        self != ParamKind::Buffer
    }

    pub fn tag(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::Norm => "norm",
            ParamKind::Buffer => "buffer",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "weight" => ParamKind::Weight,
            "bias" => ParamKind::Bias,
            "norm" => ParamKind::Norm,
            "buffer" => ParamKind::Buffer,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    /// SGD velocity, same shape as `value`.
    pub momentum: Tensor<T>,
    pub kind: ParamKind,
}

/// Insertion-ordered registry of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: IndexMap<String, Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, kind: ParamKind) {
        let momentum = Tensor::zeros(value.shape());
        self.params.insert(
            name.into(),
            Param {
                value,
                momentum,
                kind,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| invalid("params", format!("unknown parameter {name}")))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| invalid("params", format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(invalid(
                "params",
                format!(
                    "{name}: shape {:?} does not match stored {:?}",
                    value.shape(),
                    p.value.shape()
                ),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .values()
            .filter(|p| p.kind.is_trainable())
            .map(|p| p.value.numel())
            .sum()
    }

    /// Layout fingerprint: names, kinds and shapes in order.
    pub fn layout(&self) -> Vec<(String, ParamKind, Shape)> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.kind, p.value.shape()))
            .collect()
    }

    /// Converts all tensors to another scalar type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            momentum: p.momentum.cast(),
                            kind: p.kind,
                        },
                    )
                })
                .collect(),
        }
    }
}
