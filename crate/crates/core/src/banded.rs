//! Symmetric positive-definite banded matrices with an in-place Cholesky
//! factorization.

#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    /// Row-major lower band: `a[i * (bw + 1) + (bw - (i - j))] = A[i][j]`, `j <= i`.
    a: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            a: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`); entries above the
    /// diagonal are folded into the lower band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.a[self.idx(i, j)]
        }
    }

    /// Factors `A = L L^T` in place. Returns `false` on a non-positive pivot.
    pub fn factor(&mut self) -> bool {
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.a[self.idx(i, j)];
                for k in k0..j {
                    s -= self.a[self.idx(i, k)] * self.a[self.idx(j, k)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    let k = self.idx(i, i);
                    self.a[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.a[k] = s / self.a[self.idx(j, j)];
                }
            }
        }
        self.factored = true;
        true
    }

    /// Solves `A x = b` with a factored matrix.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "matrix not factored");
        let (n, bw) = (self.n, self.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.a[self.idx(i, k)] * y[k];
            }
            y[i] = s / self.a[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.a[self.idx(k, i)] * y[k];
            }
            y[i] = s / self.a[self.idx(i, i)];
        }
        y
    }
}
