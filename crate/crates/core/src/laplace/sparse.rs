use nalgebra::DMatrix;

/// Square sparse matrix in CSR layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order. Every diagonal entry is materialized (possibly zero).
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.extend((0..n).map(|i| (i, i, 0.0)));
        // Stable sort keeps duplicate summation order deterministic.
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_max_abs(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Sets each diagonal entry to minus the sum of the row's off-diagonals.
    pub(crate) fn set_diagonal_from_row_sums(&mut self) {
        for i in 0..self.n {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let mut off = 0.0;
            let mut diag_at = None;
            for k in r {
                if self.cols[k] == i {
                    diag_at = Some(k);
                } else {
                    off += self.vals[k];
                }
            }
            self.vals[diag_at.expect("diagonal is materialized")] = -off;
        }
    }

    /// Adds `shift[i]` to each diagonal entry.
    pub(crate) fn add_diagonal(&mut self, shift: &[f64]) {
        for i in 0..self.n {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let k = r.start + self.cols[r].binary_search(&i).expect("diagonal is materialized");
            self.vals[k] += shift[i];
        }
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *o = acc;
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}
