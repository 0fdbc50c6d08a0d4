use serde::{Deserialize, Serialize};

use super::MlError;

/// Exact quantile store: all values, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantileSketch {
    values: Vec<f64>,
}

impl QuantileSketch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut values: Vec<f64> = values.into_iter().collect();
        values.sort_by(f64::total_cmp);
        QuantileSketch { values }
    }

    pub fn insert(&mut self, v: f64) {
        let at = self.values.partition_point(|x| x.total_cmp(&v).is_le());
        self.values.insert(at, v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nearest-rank quantile: the value at 1-based rank `ceil(q * n)`, with
    /// `q = 0` mapping to rank 1.
    pub fn quantile(&self, q: f64) -> Result<f64, MlError> {
        if self.values.is_empty() {
            return Err(MlError::EmptySketch);
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(MlError::BadQuantile(q));
        }
        let n = self.values.len();
        // absorb representation error such as 0.7 * 10 = 7.000000000000001
        let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        Ok(self.values[rank - 1])
    }
}
