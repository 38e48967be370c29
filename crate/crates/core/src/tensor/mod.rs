//! Minimal dense tensors and reverse-mode autodiff for 1-d convolutional nets.
//!
//! Everything is f64, channel-major, and single-threaded with a fixed
//! accumulation order, so repeated runs are bit-identical.

mod ops;
mod tape;

pub use ops::{
    add, avg_pool_full, conv1d, depthwise_conv1d, gelu, layer_norm, linear, sigmoid, MacCounter,
};
pub use tape::{Gradients, NodeId, Tape, PROB_FLOOR};
pub(crate) use tape::weighted_bce_value;

use crate::{Error, Result};

/// A rank-2 array: `channels` rows of `len` samples, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("tensor needs at least one channel".into()));
        }
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "expected {} values for {}x{}, got {}",
                channels * len,
                channels,
                len,
                data.len()
            )));
        }
        Ok(Self { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self { channels, len, data: vec![0.0; channels * len] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { channels: 1, len: 1, data: vec![value] }
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self { channels: 1, len: row.len(), data: row.to_vec() }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, channel: usize, t: usize) -> f64 {
        debug_assert!(channel < self.channels && t < self.len);
        self.data[channel * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, t: usize, value: f64) {
        debug_assert!(channel < self.channels && t < self.len);
        self.data[channel * self.len + t] = value;
    }

    #[inline]
    pub fn add_at(&mut self, channel: usize, t: usize, value: f64) {
        debug_assert!(channel < self.channels && t < self.len);
        self.data[channel * self.len + t] += value;
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.len == other.len
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> Result<f64> {
        if self.channels == 1 && self.len == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!(
                "expected a 1x1 tensor, got {}x{}",
                self.channels, self.len
            )))
        }
    }
}

/// Identifier of one named parameter array inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// One learnable array with its shape and weight-decay eligibility.
#[derive(Debug, Clone)]
pub struct ParamArray {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    decay: bool,
}

impl ParamArray {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Whether weight decay applies to this array (false for biases).
    pub fn decays(&self) -> bool {
        self.decay
    }
}

/// Ordered collection of named parameter arrays. Order is the registration
/// order and is part of the model's serialized identity.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    arrays: Vec<ParamArray>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: &str,
        shape: &[usize],
        values: Vec<f64>,
        decay: bool,
    ) -> Result<ParamId> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::Shape(format!(
                "parameter {name}: shape {shape:?} holds {count} values, got {}",
                values.len()
            )));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.arrays.push(ParamArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
            decay,
        });
        Ok(ParamId(self.arrays.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ParamArray {
        &self.arrays[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamArray {
        &mut self.arrays[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.arrays[id.0].values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.arrays.iter().position(|a| a.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamArray)> {
        self.arrays.iter().enumerate().map(|(i, a)| (ParamId(i), a))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut ParamArray)> {
        self.arrays.iter_mut().enumerate().map(|(i, a)| (ParamId(i), a))
    }

    /// Total number of scalar parameters across all arrays.
    pub fn total_values(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_checks() {
        assert!(Tensor::new(2, 3, vec![0.0; 6]).is_ok());
        assert!(Tensor::new(2, 3, vec![0.0; 5]).is_err());
        assert!(Tensor::new(0, 3, vec![]).is_err());
        let t = Tensor::new(2, 0, vec![]).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn tensor_indexing_is_row_major() {
        let t = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.get(0, 2), 3.0);
        assert_eq!(t.get(1, 0), 4.0);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn item_requires_scalar_shape() {
        assert_eq!(Tensor::scalar(0.5).item().unwrap(), 0.5);
        assert!(Tensor::zeros(1, 2).item().is_err());
    }

    #[test]
    fn param_store_round_trip() {
        let mut store = ParamStore::new();
        let w = store.push("w", &[2, 3], vec![0.0; 6], true).unwrap();
        let b = store.push("b", &[2], vec![0.0; 2], false).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.total_values(), 8);
        assert_eq!(store.get(w).name(), "w");
        assert!(!store.get(b).decays());
        assert_eq!(store.find("b"), Some(b));
        assert_eq!(store.find("missing"), None);
    }

    #[test]
    fn param_store_rejects_bad_shapes_and_duplicates() {
        let mut store = ParamStore::new();
        assert!(store.push("w", &[2, 3], vec![0.0; 5], true).is_err());
        store.push("w", &[1], vec![0.0], true).unwrap();
        assert!(store.push("w", &[1], vec![0.0], true).is_err());
    }
}
