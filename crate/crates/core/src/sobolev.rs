//! Discrete H^k spaces on a mask.
//!
//! D^β is the product of forward differences (order β_i along axis i). The
//! squared norm sums `q · (D^β f)²` over every multi-index |β| ≤ k and every
//! base node whose stencil box lies on masked nodes, with `q` the trapezoid
//! weight of the base node.

use std::sync::{Arc, OnceLock};

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{chunked_sum, Field};
use crate::mask::DomainMask;
use crate::sparse::RowMatrix;

pub fn sobolev_order(dim: usize) -> Result<usize> {
    if dim < 1 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 1".into(),
        ));
    }
    Ok(dim / 2 + 2)
}

/// Set of base nodes the differences are integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// All masked nodes.
    Full,
    /// Masked nodes with ℓ > θ + 2ε.
    Inner,
}

pub struct SobolevSpace {
    mask: Arc<DomainMask>,
    order: usize,
    region: Region,
    /// All difference monomials stacked; one row per (β, base node).
    diff: RowMatrix,
    row_weight: Vec<f64>,
    /// Row ranges of `diff` per total order |β|.
    order_rows: Vec<(usize, usize)>,
    free: Vec<usize>,
    free_index: Vec<usize>,
    gram: OnceLock<CsrMatrix<f64>>,
}

impl std::fmt::Debug for SobolevSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SobolevSpace")
            .field("order", &self.order)
            .field("region", &self.region)
            .field("rows", &self.diff.nrows())
            .field("free", &self.free.len())
            .finish()
    }
}

/// Multi-indices β ∈ ℕ^d with |β| ≤ k, grouped by increasing |β|.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for b in (0..=left).rev() {
            cur.push(b);
            rec(dim, left - b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=order {
        rec(dim, total, &mut Vec::new(), &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl SobolevSpace {
    pub fn new(mask: Arc<DomainMask>, order: usize, region: Region) -> Result<Self> {
        let grid = mask.grid().clone();
        let d = grid.dim();
        let h = grid.spacing().to_vec();
        let inner_cut = mask.theta() + 2.0 * mask.epsilon();
        let admissible = |node: usize| -> bool {
            mask.label(node).is_masked()
                && (region == Region::Full || mask.level()[node] > inner_cut)
        };
        let mut diff = RowMatrix::new(grid.len());
        let mut row_weight = Vec::new();
        let mut order_rows = vec![(0, 0); order + 1];
        let mut entries = Vec::new();
        for beta in multi_indices(d, order) {
            let total: usize = beta.iter().sum();
            // tensor-product stencil of forward differences
            let mut stencil: Vec<(Vec<isize>, f64)> = vec![(vec![0; d], 1.0)];
            for (axis, &b) in beta.iter().enumerate() {
                let scale = h[axis].powi(b as i32);
                let mut next = Vec::with_capacity(stencil.len() * (b + 1));
                for (off, c) in &stencil {
                    for j in 0..=b {
                        let sign = if (b - j) % 2 == 0 { 1.0 } else { -1.0 };
                        let mut o = off.clone();
                        o[axis] = j as isize;
                        next.push((o, c * sign * binomial(b, j) / scale));
                    }
                }
                stencil = next;
            }
            let start = diff.nrows();
            for base in 0..grid.len() {
                if !admissible(base) {
                    continue;
                }
                let mut ok = true;
                for (off, c) in &stencil {
                    match grid.offset(base, off) {
                        Some(nb) if admissible(nb) => entries.push((nb, *c)),
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    diff.push_row(&mut entries);
                    row_weight.push(mask.quad_weight()[base]);
                } else {
                    entries.clear();
                }
            }
            if order_rows[total].1 == 0 {
                order_rows[total].0 = start;
            }
            order_rows[total].1 = diff.nrows();
        }
        let mut free_index = vec![usize::MAX; grid.len()];
        let free: Vec<usize> = (0..grid.len()).filter(|&n| mask.is_free(n)).collect();
        for (i, &n) in free.iter().enumerate() {
            free_index[n] = i;
        }
        Ok(Self {
            mask,
            order,
            region,
            diff,
            row_weight,
            order_rows,
            free,
            free_index,
            gram: OnceLock::new(),
        })
    }

    /// H^k with the default order for the mask dimension, over all masked nodes.
    pub fn standard(mask: Arc<DomainMask>) -> Result<Self> {
        let k = sobolev_order(mask.grid().dim())?;
        Self::new(mask, k, Region::Full)
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        &self.mask
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn region(&self) -> Region {
        self.region
    }

    /// Free degrees of freedom: masked nodes off the two constrained layers.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        let i = self.free_index[node];
        (i != usize::MAX).then_some(i)
    }

    fn weighted_sum(&self, f: &[f64], g: &[f64], rows: (usize, usize)) -> f64 {
        chunked_sum(rows.1 - rows.0, |i| {
            let r = rows.0 + i;
            self.row_weight[r] * self.diff.row_dot(r, f) * self.diff.row_dot(r, g)
        })
    }

    pub fn inner_product_values(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weighted_sum(f, g, (0, self.diff.nrows()))
    }

    pub fn norm_sq_values(&self, f: &[f64]) -> f64 {
        self.inner_product_values(f, f)
    }

    /// Squared seminorm contribution of the monomials with |β| = `total`.
    pub fn order_norm_sq(&self, f: &[f64], total: usize) -> f64 {
        self.order_rows
            .get(total)
            .map_or(0.0, |&rows| self.weighted_sum(f, f, rows))
    }

    pub fn inner_product(&self, f: &Field, g: &Field) -> Result<f64> {
        f.ensure_grid(self.mask.grid())?;
        g.ensure_grid(self.mask.grid())?;
        Ok(self.inner_product_values(f.values(), g.values()))
    }

    pub fn norm(&self, f: &Field) -> Result<f64> {
        f.ensure_grid(self.mask.grid())?;
        Ok(self.norm_sq_values(f.values()).sqrt())
    }

    /// (G f) on every node, G the full Gram matrix Σ Dᵀ Q D.
    pub fn gram_apply_values(&self, f: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = (0..self.diff.nrows())
            .into_par_iter()
            .map(|r| self.row_weight[r] * self.diff.row_dot(r, f))
            .collect();
        let mut out = vec![0.0; f.len()];
        self.diff.apply_transpose_add(&y, &mut out);
        out
    }

    /// Gram map G with G[i][j] = [e_i, e_j], restricted to the free nodes.
    pub fn free_gram(&self) -> &CsrMatrix<f64> {
        self.gram.get_or_init(|| {
            let nf = self.free.len();
            let mut coo = CooMatrix::new(nf, nf);
            for r in 0..self.diff.nrows() {
                let q = self.row_weight[r];
                let row: Vec<(usize, f64)> = self
                    .diff
                    .row(r)
                    .filter_map(|(c, v)| self.free_index(c).map(|i| (i, v)))
                    .collect();
                for &(i, vi) in &row {
                    for &(j, vj) in &row {
                        coo.push(i, j, q * vi * vj);
                    }
                }
            }
            CsrMatrix::from(&coo)
        })
    }

    /// `out = G_ff x` on free-node vectors.
    pub fn apply_free_gram(&self, x: &[f64], out: &mut [f64]) {
        let g = self.free_gram();
        let (offsets, cols, vals) = g.csr_data();
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let (s, e) = (offsets[i], offsets[i + 1]);
            *o = cols[s..e]
                .iter()
                .zip(&vals[s..e])
                .map(|(&c, &v)| v * x[c])
                .sum();
        });
    }

    pub fn gather_free(&self, values: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&n| values[n]).collect()
    }

    pub fn scatter_free(&self, free_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mask.grid().len()];
        for (&n, &v) in self.free.iter().zip(free_values) {
            out[n] = v;
        }
        out
    }

    /// f with the two constrained layers zeroed.
    pub fn zero_trace_project(&self, f: &Field) -> Field {
        let mut g = f.clone();
        for &n in self.mask.layer0().iter().chain(self.mask.layer1()) {
            g.values_mut()[n] = 0.0;
        }
        g
    }

    /// Restricts to the free subspace: zero on the constrained layers and
    /// off the mask.
    pub fn free_project(&self, f: &Field) -> Field {
        let values = (0..f.values().len())
            .map(|n| {
                if self.mask.is_free(n) {
                    f.values()[n]
                } else {
                    0.0
                }
            })
            .collect();
        Field::from_values_unchecked(f.grid().clone(), values)
    }
}
