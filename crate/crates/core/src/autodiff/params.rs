use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t.requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Bind a parameter as a trainable leaf of `g`.
    pub fn bind(&self, g: &Graph, id: ParamId) -> Var {
        g.param(id.0, &self.tensors[id.0])
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Add gradients produced by [`Graph::param_grads`].
    pub fn accumulate(&mut self, grads: &[(usize, Vec<f64>)]) -> Result<()> {
        for (id, g) in grads {
            let t = self
                .tensors
                .get_mut(*id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter id {id}")))?;
            t.accumulate_grad(g)?;
        }
        Ok(())
    }

    /// Pull every bound-parameter gradient out of a graph after backward.
    pub fn absorb(&mut self, g: &Graph) -> Result<()> {
        self.accumulate(&g.param_grads())
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let f = max_norm / norm;
            for t in &mut self.tensors {
                if let Some(g) = t.grad() {
                    let scaled: Vec<f64> = g.iter().map(|v| v * f).collect();
                    t.zero_grad();
                    t.accumulate_grad(&scaled).expect("same length");
                }
            }
        }
        norm
    }

    /// Replace values from `(name, tensor)` entries; every name and shape must
    /// match this store exactly.
    pub fn load(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, model expects {}",
                entries.len(),
                self.tensors.len()
            )));
        }
        for ((name, t), (own_name, own)) in entries
            .into_iter()
            .zip(self.names.iter().zip(self.tensors.iter_mut()))
        {
            if &name != own_name || t.shape() != own.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {name} {:?} does not match {own_name} {:?}",
                    t.shape(),
                    own.shape()
                )));
            }
            own.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}
