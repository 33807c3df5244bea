use rayon::prelude::*;

/// Rows above this many stored entries are applied in parallel.
const PAR_THRESHOLD: usize = 1 << 16;

/// Compressed sparse rows. Every row is reduced serially in column order,
/// so results do not depend on the number of worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<u32> = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            vals.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { cols, row_ptr, col_idx, vals }
    }

    /// Builds from per-row entry lists, keeping their order.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c as u32);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { cols, row_ptr, col_idx, vals }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            acc += self.vals[k] * x[self.col_idx[k] as usize];
        }
        acc
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows());
        if self.nnz() >= PAR_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(r, o)| *o = self.row_dot(r, x));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = self.row_dot(r, x);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn transpose(&self) -> Self {
        let t = (0..self.rows())
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        Self::from_triplets(self.cols, self.rows(), t)
    }

    /// Replaces each entry `a_rc` by `a_rc * scale[c]` and renormalizes every
    /// row to sum to one. Rows with zero sum are left at zero.
    pub fn reweight_columns_stochastic(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..out.rows() {
            let span = out.row_ptr[r]..out.row_ptr[r + 1];
            let mut sum = 0.0;
            for k in span.clone() {
                out.vals[k] *= scale[out.col_idx[k] as usize];
                sum += out.vals[k];
            }
            if sum > 0.0 {
                for k in span {
                    out.vals[k] /= sum;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_apply() {
        let a = SparseOperator::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (0, 1, -1.0)],
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.apply(&[1.0, 2.0, 4.0]), vec![0.0, 6.0]);
        let t = a.transpose();
        assert_eq!(t.apply(&[1.0, 1.0]), vec![2.0, -1.0, 1.5]);
        assert_eq!(a.row_sums(), vec![1.0, 1.5]);
    }

    #[test]
    fn column_reweighting_is_row_stochastic() {
        let a = SparseOperator::from_rows(2, vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]]);
        let b = a.reweight_columns_stochastic(&[1.0, 3.0]);
        assert_eq!(b.row(0).collect::<Vec<_>>(), vec![(0, 0.25), (1, 0.75)]);
        assert_eq!(b.row_sums(), vec![1.0, 1.0]);
    }
}
