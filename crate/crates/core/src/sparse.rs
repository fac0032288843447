//! Compressed-row sparse matrices acting on node-major interleaved fields.

#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// `y = A x` where `x` holds `dim` interleaved components per node.
    pub fn apply(&self, x: &[f64], dim: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n * dim);
        let mut y = vec![0.0; self.n * dim];
        for i in 0..self.n {
            let yi = &mut y[i * dim..(i + 1) * dim];
            for (c, v) in self.row(i) {
                let xc = &x[c * dim..(c + 1) * dim];
                for k in 0..dim {
                    yi[k] += v * xc[k];
                }
            }
        }
        y
    }

    /// Resets each diagonal entry to minus the sum of the off-diagonal entries
    /// of its row (rows annihilate constants exactly).
    pub fn with_zero_row_sums(mut self) -> Self {
        for i in 0..self.n {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let off: f64 = (a..b).filter(|&k| self.cols[k] != i).map(|k| self.vals[k]).sum();
            match (a..b).find(|&k| self.cols[k] == i) {
                Some(k) => self.vals[k] = -off,
                None => panic!("row {i} has no diagonal entry"),
            }
        }
        self
    }

    /// `y = A x` evaluated as `sum_j a_ij (x_j - x_i)`; valid for zero-sum
    /// rows and far less sensitive to a large common offset in `x`.
    pub fn apply_differences(&self, x: &[f64], dim: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n * dim);
        let mut y = vec![0.0; self.n * dim];
        for i in 0..self.n {
            let (yi, xi) = (i * dim, &x[i * dim..(i + 1) * dim]);
            for (c, v) in self.row(i) {
                if c == i {
                    continue;
                }
                let xc = &x[c * dim..(c + 1) * dim];
                for k in 0..dim {
                    y[yi + k] += v * (xc[k] - xi[k]);
                }
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n * dim];
        for i in 0..self.n {
            let xi = &x[i * dim..(i + 1) * dim];
            for (c, v) in self.row(i) {
                let yc = &mut y[c * dim..(c + 1) * dim];
                for k in 0..dim {
                    yc[k] += v * xi[k];
                }
            }
        }
        y
    }
}

/// Fixed-order pairwise summation; result independent of any scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_matches_dense() {
        let a = CsrMatrix::from_rows(vec![
            vec![(0, 1.0), (2, 2.0)],
            vec![(1, 3.0), (1, 1.0)],
            vec![(0, -1.0), (2, 0.5)],
        ]);
        let x = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0];
        let y = a.apply(&x, 2);
        assert_eq!(y, vec![7.0, 70.0, 8.0, 80.0, 0.5, 5.0]);
        let z = a.apply_transpose(&x, 2);
        assert_eq!(z, vec![-2.0, -20.0, 8.0, 80.0, 3.5, 35.0]);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
    }
}
