//! Minimal row-compressed matrices for stencils. Rows are indexed by a
//! local row id; columns are grid node ids.

#[derive(Debug, Clone, Default)]
pub struct RowMatrix {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    ncols: usize,
}

impl RowMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            offsets: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            ncols,
        }
    }

    /// Appends a row, merging duplicate columns and dropping exact zeros.
    pub fn push_row(&mut self, entries: &mut Vec<(usize, f64)>) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in entries.iter() {
            debug_assert!(c < self.ncols);
            if last == Some(c) {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = Some(c);
            }
        }
        // drop zeros produced by cancellation
        let start = *self.offsets.last().unwrap();
        let mut write = start;
        for read in start..self.cols.len() {
            if self.vals[read] != 0.0 {
                self.cols[write] = self.cols[read];
                self.vals[write] = self.vals[read];
                write += 1;
            }
        }
        self.cols.truncate(write);
        self.vals.truncate(write);
        self.offsets.push(write);
        entries.clear();
    }

    pub fn nrows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.offsets[r], self.offsets[r + 1]);
        self.cols[s..e]
            .iter()
            .copied()
            .zip(self.vals[s..e].iter().copied())
    }

    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.offsets[r], self.offsets[r + 1]);
        self.cols[s..e]
            .iter()
            .zip(&self.vals[s..e])
            .map(|(&c, &v)| v * x[c])
            .sum()
    }

    /// `out[r] = Σ_c A[r,c] x[c]`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.nrows()) {
            *o = self.row_dot(r, x);
        }
    }

    /// `out[c] += Σ_r A[r,c] y[r]`
    pub fn apply_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate().take(self.nrows()) {
            if yr == 0.0 {
                continue;
            }
            let (s, e) = (self.offsets[r], self.offsets[r + 1]);
            for (&c, &v) in self.cols[s..e].iter().zip(&self.vals[s..e]) {
                out[c] += v * yr;
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_and_transpose() {
        let mut m = RowMatrix::new(3);
        m.push_row(&mut vec![(2, 1.0), (0, 2.0), (2, 3.0)]);
        m.push_row(&mut vec![(1, 1.0), (1, -1.0)]);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (2, 4.0)]);
        assert_eq!(m.row(1).count(), 0);
        let mut y = vec![0.0; 2];
        m.apply(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![6.0, 0.0]);
        let mut x = vec![0.0; 3];
        m.apply_transpose_add(&[1.0, 5.0], &mut x);
        assert_eq!(x, vec![2.0, 0.0, 4.0]);
    }
}
