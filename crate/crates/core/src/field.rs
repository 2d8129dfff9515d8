use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Real values on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|node| {
                grid.fill_point(node, &mut p);
                f(&p)
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        same_grid(&self.grid, &other.grid)
    }

    pub fn ensure_grid(&self, grid: &Arc<Grid>) -> Result<()> {
        if same_grid(&self.grid, grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Euclidean (nodal) dot product.
    pub fn dot(&self, other: &Field) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm_l2_nodal(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const SUM_CHUNK: usize = 2048;

/// Σ_{i<n} f(i), parallel over fixed-size chunks so that the rounding does
/// not depend on the thread count.
pub(crate) fn chunked_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    let partial: Vec<f64> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| (c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n)).map(&f).sum())
        .collect();
    partial.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn chunked_sum_independent_of_pool(values in proptest::collection::vec(-1e6f64..1e6, 0..5000)) {
            let sum = |threads: usize| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
                pool.install(|| chunked_sum(values.len(), |i| values[i]))
            };
            let one = sum(1);
            prop_assert_eq!(one.to_bits(), sum(3).to_bits());
            let naive: f64 = values.iter().sum();
            let scale: f64 = values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!((one - naive).abs() <= 1e-12 * scale);
        }
    }
}
