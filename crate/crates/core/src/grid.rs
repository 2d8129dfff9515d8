//! Uniform tensor-product lattices.
//!
//! Nodes are stored in row-major order: axis 0 varies slowest and the last
//! axis fastest. For space-time problems the last axis is time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

/// Side of a bounding-box face along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Low,
    High,
}

/// Builds a uniform grid with `resolution[i]` nodes along axis `i` spanning
/// `bounds[i] = (lo, hi)`.
pub fn build_grid(bounds: &[(f64, f64)], resolution: &[usize]) -> Result<Grid> {
    if bounds.is_empty() {
        return Err(Error::InvalidGrid("empty bounding box".into()));
    }
    if bounds.len() != resolution.len() {
        return Err(Error::InvalidGrid(format!(
            "{} bounds but {} resolution entries",
            bounds.len(),
            resolution.len()
        )));
    }
    let mut origin = Vec::with_capacity(bounds.len());
    let mut spacing = Vec::with_capacity(bounds.len());
    for (axis, (&(lo, hi), &n)) in bounds.iter().zip(resolution).enumerate() {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidGrid(format!(
                "degenerate extent [{lo}, {hi}] on axis {axis}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "resolution {n} on axis {axis} is below 3"
            )));
        }
        origin.push(lo);
        spacing.push((hi - lo) / (n - 1) as f64);
    }
    Grid::new(origin, spacing, resolution.to_vec())
}

impl Grid {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if origin.is_empty() || origin.len() != spacing.len() || origin.len() != shape.len() {
            return Err(Error::InvalidGrid(
                "origin/spacing/shape length mismatch".into(),
            ));
        }
        if let Some(h) = spacing.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::InvalidGrid(format!("spacing {h} is not positive")));
        }
        if let Some(n) = shape.iter().find(|n| **n < 3) {
            return Err(Error::InvalidGrid(format!("shape entry {n} is below 3")));
        }
        let mut strides = vec![1; shape.len()];
        for axis in (0..shape.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * shape[axis + 1];
        }
        Ok(Self {
            origin,
            spacing,
            shape,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + (self.shape[axis] - 1) as f64 * self.spacing[axis]
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn index_along(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.shape[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.index_along(node, a)).collect()
    }

    pub fn node(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.origin[axis] + self.index_along(node, axis) as f64 * self.spacing[axis]
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.fill_point(node, &mut p);
        p
    }

    pub fn fill_point(&self, node: usize, out: &mut [f64]) {
        for (axis, slot) in out.iter_mut().enumerate() {
            *slot = self.coord(node, axis);
        }
    }

    /// Neighbor `delta` steps along `axis`, or `None` when it falls off the grid.
    pub fn shift(&self, node: usize, axis: usize, delta: isize) -> Option<usize> {
        let i = self.index_along(node, axis) as isize + delta;
        if i < 0 || i >= self.shape[axis] as isize {
            return None;
        }
        Some((node as isize + delta * self.strides[axis] as isize) as usize)
    }

    /// Node displaced by a multi-axis offset, or `None` off-grid.
    pub fn offset(&self, node: usize, delta: &[isize]) -> Option<usize> {
        let mut out = node as isize;
        for (axis, &d) in delta.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let i = self.index_along(node, axis) as isize + d;
            if i < 0 || i >= self.shape[axis] as isize {
                return None;
            }
            out += d * self.strides[axis] as isize;
        }
        Some(out as usize)
    }

    pub fn on_face(&self, node: usize, axis: usize, side: Side) -> bool {
        let i = self.index_along(node, axis);
        match side {
            Side::Low => i == 0,
            Side::High => i + 1 == self.shape[axis],
        }
    }

    pub fn on_any_face(&self, node: usize) -> bool {
        (0..self.dim())
            .any(|a| self.on_face(node, a, Side::Low) || self.on_face(node, a, Side::High))
    }

    /// All offsets in the 3^d box around a node, excluding the zero offset.
    pub fn box_offsets(&self) -> Vec<Vec<isize>> {
        let d = self.dim();
        let total = 3usize.pow(d as u32);
        (0..total)
            .map(|mut code| {
                (0..d)
                    .map(|_| {
                        let v = (code % 3) as isize - 1;
                        code /= 3;
                        v
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|o| o.iter().any(|&v| v != 0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_five_by_five() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[5, 5]).unwrap();
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        assert_eq!(g.len(), 25);
    }

    #[test]
    fn rectangle_spacing() {
        let g = build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[11, 21]).unwrap();
        assert!((g.spacing()[0] - 0.1).abs() < 1e-15);
        assert!((g.spacing()[1] - 0.1).abs() < 1e-15);
        assert_eq!(g.upper(1), 1.0);
    }

    #[test]
    fn rejects_coarse_or_degenerate() {
        assert!(build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[2, 5]).is_err());
        assert!(build_grid(&[(0.0, 0.0), (0.0, 1.0)], &[5, 5]).is_err());
        assert!(build_grid(&[(1.0, 0.0)], &[5]).is_err());
        assert!(build_grid(&[], &[]).is_err());
    }

    #[test]
    fn coordinates_reproducible() {
        let g = build_grid(&[(0.0, 1.0), (-1.0, 1.0), (2.0, 3.0)], &[4, 5, 6]).unwrap();
        for node in 0..g.len() {
            let idx = g.multi_index(node);
            assert_eq!(g.node(&idx), node);
            for (a, &i) in idx.iter().enumerate() {
                let expected = g.origin()[a] + i as f64 * g.spacing()[a];
                assert_eq!(g.coord(node, a), expected);
            }
        }
    }

    #[test]
    fn shifts_stay_on_grid() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[3, 4]).unwrap();
        let corner = g.node(&[0, 0]);
        assert_eq!(g.shift(corner, 0, -1), None);
        assert_eq!(g.shift(corner, 1, 1), Some(g.node(&[0, 1])));
        assert_eq!(g.offset(corner, &[1, 1]), Some(g.node(&[1, 1])));
        assert_eq!(g.offset(corner, &[1, -1]), None);
        assert_eq!(g.box_offsets().len(), 8);
    }

    proptest::proptest! {
        #[test]
        fn node_index_round_trip(shape in proptest::collection::vec(3usize..7, 1..4), pick in 0usize..1000) {
            let bounds: Vec<(f64, f64)> = shape.iter().map(|_| (0.0, 1.0)).collect();
            let g = build_grid(&bounds, &shape).unwrap();
            let node = pick % g.len();
            let idx = g.multi_index(node);
            proptest::prop_assert_eq!(g.node(&idx), node);
            for a in 0..g.dim() {
                if let Some(up) = g.shift(node, a, 1) {
                    proptest::prop_assert_eq!(g.shift(up, a, -1), Some(node));
                    proptest::prop_assert!((g.coord(up, a) - g.coord(node, a) - g.spacing()[a]).abs() < 1e-14);
                } else {
                    proptest::prop_assert_eq!(idx[a], shape[a] - 1);
                }
            }
        }
    }
}
