//! Binary sparse incidence matrix with compressed row and column access.

use crate::{Error, Result};

/// Users x items incidence matrix. All stored entries have value 1.0
/// (implicit-feedback convention).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseIncidenceMatrix {
    num_rows: usize,
    num_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparseIncidenceMatrix {
    /// Build from an edge list. Edges must be in range; duplicates are rejected.
    pub fn from_edges(
        num_rows: usize,
        num_cols: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_rows];
        for &(r, c) in edges {
            if r >= num_rows || c >= num_cols {
                return Err(Error::Argument(format!(
                    "edge ({r},{c}) out of range for {num_rows}x{num_cols} matrix"
                )));
            }
            rows[r].push(c);
        }
        let mut row_ptr = Vec::with_capacity(num_rows + 1);
        let mut col_idx = Vec::with_capacity(edges.len());
        row_ptr.push(0);
        for cols in rows.iter_mut() {
            cols.sort_unstable();
            if cols.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Argument("duplicate edge in edge list".into()));
            }
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }

        // transpose for column access
        let mut col_counts = vec![0usize; num_cols];
        for &c in &col_idx {
            col_counts[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(num_cols + 1);
        col_ptr.push(0);
        for &n in &col_counts {
            col_ptr.push(col_ptr.last().unwrap() + n);
        }
        let mut cursor = col_ptr[..num_cols].to_vec();
        let mut row_idx = vec![0usize; col_idx.len()];
        for r in 0..num_rows {
            for &c in &col_idx[row_ptr[r]..row_ptr[r + 1]] {
                row_idx[cursor[c]] = r;
                cursor[c] += 1;
            }
        }

        Ok(Self {
            num_rows,
            num_cols,
            row_ptr,
            col_idx,
            col_ptr,
            row_idx,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices of the nonzeros in row `r`, sorted ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Row indices of the nonzeros in column `c`, sorted ascending.
    pub fn col(&self, c: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]]
    }

    pub fn row_degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn col_degree(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    pub fn density(&self) -> f64 {
        if self.num_rows == 0 || self.num_cols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.num_rows as f64 * self.num_cols as f64)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_edge_list_is_all_zero() {
        let m = SparseIncidenceMatrix::from_edges(3, 4, &[]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.density(), 0.0);
        for r in 0..3 {
            assert!(m.row(r).is_empty());
        }
    }

    #[test]
    fn identity_pattern() {
        let m = SparseIncidenceMatrix::from_edges(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(m.row(0), &[0]);
        assert_eq!(m.row(1), &[1]);
        assert_eq!(m.col(0), &[0]);
        assert_eq!(m.col(1), &[1]);
        assert_eq!(m.density(), 0.5);
    }

    #[test]
    fn row_col_transpose_consistent() {
        let edges = [(0, 2), (0, 0), (1, 1), (2, 2), (2, 0)];
        let m = SparseIncidenceMatrix::from_edges(3, 3, &edges).unwrap();
        assert_eq!(m.nnz(), 5);
        for (r, c) in edges {
            assert!(m.contains(r, c));
            assert!(m.col(c).contains(&r));
        }
        assert_eq!(m.row_degree(0), 2);
        assert_eq!(m.col_degree(2), 2);
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(SparseIncidenceMatrix::from_edges(2, 2, &[(2, 0)]).is_err());
        assert!(SparseIncidenceMatrix::from_edges(2, 2, &[(0, 0), (0, 0)]).is_err());
    }
}
