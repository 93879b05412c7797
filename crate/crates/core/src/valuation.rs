//! Per-record value scores shared by every valuation method.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub method: String,
    /// One value per training record, indexed like the training samples.
    pub values: Vec<f64>,
    /// Values from each independent pass when the method averages several.
    pub per_pass: Vec<Vec<f64>>,
}

impl ValueReport {
    pub fn new(method: impl Into<String>, values: Vec<f64>) -> Self {
        ValueReport {
            method: method.into(),
            values,
            per_pass: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Records whose value exceeds `threshold`.
    pub fn select_above(&self, threshold: f64) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] > threshold).collect()
    }
}
