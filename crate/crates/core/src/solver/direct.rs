//! Sparse Cholesky preconditioner built on faer.
//!
//! The scalar upper triangle of the block matrix is copied into a fixed CSC
//! pattern. Rows and columns of fixed degrees of freedom are replaced by the
//! identity so the pattern never depends on the constraint set. The symbolic
//! analysis (AMD ordering, elimination tree) runs once per pattern; every
//! refactorization is numeric only and sequential, which keeps results
//! bit-reproducible.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use super::ConstraintSet;
use crate::sparse::BlockCsr;

pub(crate) struct Cholesky {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each CSC entry: `9 * block + 3 * r + c`.
    sources: Vec<usize>,
    values: Vec<f64>,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    factor_buffer: MemBuffer,
    solve_buffer: MemBuffer,
    valid: bool,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cholesky")
            .field("n", &self.n)
            .field("nnz", &self.row_idx.len())
            .field("valid", &self.valid)
            .finish()
    }
}

impl Cholesky {
    /// Symbolic analysis of the scalar pattern of `matrix`.
    pub(crate) fn analyze(matrix: &BlockCsr) -> Option<Self> {
        let nodes = matrix.node_count();
        let n = 3 * nodes;
        let (row_ptr, cols) = (matrix.row_ptr(), matrix.cols());
        // Upper triangle in CSC equals lower triangle in CSR; the block pattern
        // is symmetric, so walk block rows as block columns.
        let mut columns: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for bj in 0..nodes {
            for slot in row_ptr[bj]..row_ptr[bj + 1] {
                let bi = cols[slot];
                if bi > bj {
                    continue;
                }
                // Block (bi, bj) is stored in row bj at `slot` as block (bj, bi);
                // its transpose entry (r, c) of (bi, bj) is entry (c, r) there.
                for c in 0..3 {
                    for r in 0..3 {
                        let (row, col) = (3 * bi + r, 3 * bj + c);
                        if row <= col {
                            columns[col].push((row, 9 * slot + 3 * c + r));
                        }
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut sources = Vec::new();
        col_ptr.push(0);
        for mut list in columns {
            list.sort_unstable();
            for (row, src) in list {
                row_idx.push(row);
                sources.push(src);
            }
            col_ptr.push(row_idx.len());
        }
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic =
            factorize_symbolic_cholesky(pattern, Side::Upper, SymmetricOrdering::Amd, Default::default()).ok()?;
        let factor = vec![0.0; symbolic.len_val()];
        let factor_buffer = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
        let solve_buffer = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let values = vec![0.0; row_idx.len()];
        Some(Self {
            n,
            col_ptr,
            row_idx,
            sources,
            values,
            symbolic,
            factor,
            factor_buffer,
            solve_buffer,
            valid: false,
        })
    }

    /// Numeric factorization of `matrix` with fixed dofs replaced by identity.
    /// Returns `false` when the matrix is not numerically positive definite.
    pub(crate) fn factorize(&mut self, matrix: &BlockCsr, constraints: &ConstraintSet) -> bool {
        let blocks = matrix.blocks();
        for col in 0..self.n {
            let col_fixed = constraints.is_fixed(col / 3);
            for k in self.col_ptr[col]..self.col_ptr[col + 1] {
                let row = self.row_idx[k];
                self.values[k] = if col_fixed || constraints.is_fixed(row / 3) {
                    if row == col {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let src = self.sources[k];
                    let b = &blocks[src / 9];
                    b[((src % 9) / 3, src % 3)]
                };
            }
        }
        let pattern = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        let a = SparseColMatRef::new(pattern, &self.values);
        let result = self.symbolic.factorize_numeric_llt::<f64>(
            &mut self.factor,
            a,
            Side::Upper,
            LltRegularization::default(),
            Par::Seq,
            MemStack::new(&mut self.factor_buffer),
            Default::default(),
        );
        self.valid = result.is_ok() && self.factor.iter().all(|v| v.is_finite());
        self.valid
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.valid
    }

    /// `z = A^{-1} r`.
    pub(crate) fn solve(&mut self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        let rhs = MatMut::from_column_major_slice_mut(z, self.n, 1);
        LltRef::<'_, usize, f64>::new(&self.symbolic, &self.factor).solve_in_place_with_conj(
            Conj::No,
            rhs,
            Par::Seq,
            MemStack::new(&mut self.solve_buffer),
        );
    }
}
