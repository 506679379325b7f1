//! Block-compressed sparse rows with 3x3 blocks, sized for nodal FEM systems.

use rayon::prelude::*;

use crate::Mat3;

/// Symmetric-pattern 3x3 block CSR matrix over mesh nodes.
///
/// The sparsity pattern is fixed at construction from the tet connectivity;
/// `tet_slots` maps each of a tet's 16 node pairs to its block.
#[derive(Debug, Clone)]
pub struct BlockCsr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Mat3>,
    diagonal: Vec<usize>,
    tet_slots: Vec<[usize; 16]>,
}

impl BlockCsr {
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn blocks(&self) -> &[Mat3] {
        &self.blocks
    }

    pub fn from_tets(node_count: usize, tets: &[[usize; 4]]) -> Self {
        let mut neighbours: Vec<Vec<usize>> = (0..node_count).map(|i| vec![i]).collect();
        for tet in tets {
            for &a in tet {
                for &b in tet {
                    neighbours[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(node_count + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for list in &mut neighbours {
            list.sort_unstable();
            list.dedup();
            cols.extend_from_slice(list);
            row_ptr.push(cols.len());
        }
        let find = |row: usize, col: usize, cols: &[usize]| {
            let range = row_ptr[row]..row_ptr[row + 1];
            range.start + cols[range].binary_search(&col).expect("pattern contains pair")
        };
        let diagonal = (0..node_count).map(|i| find(i, i, &cols)).collect();
        let tet_slots = tets
            .iter()
            .map(|tet| {
                let mut slots = [0usize; 16];
                for a in 0..4 {
                    for b in 0..4 {
                        slots[4 * a + b] = find(tet[a], tet[b], &cols);
                    }
                }
                slots
            })
            .collect();
        let blocks = vec![Mat3::zeros(); cols.len()];
        Self {
            row_ptr,
            cols,
            blocks,
            diagonal,
            tet_slots,
        }
    }

    pub fn node_count(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn clear(&mut self) {
        self.blocks.iter_mut().for_each(|b| *b = Mat3::zeros());
    }

    /// Adds a 12x12 element matrix given as 4x4 blocks (row-major `a * 4 + b`).
    pub fn add_tet(&mut self, tet: usize, element: &[Mat3; 16]) {
        let slots = self.tet_slots[tet];
        for (slot, block) in slots.iter().zip(element) {
            self.blocks[*slot] += block;
        }
    }

    /// Adds `scale * d_i` to the diagonal of each node block.
    pub fn add_diagonal(&mut self, d: &[f64], scale: f64) {
        for (n, &slot) in self.diagonal.iter().enumerate() {
            for k in 0..3 {
                self.blocks[slot][(k, k)] += scale * d[3 * n + k];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().for_each(|b| *b *= s);
    }

    /// Scalar diagonal entries.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut out = vec![0.0; 3 * self.node_count()];
        for (n, &slot) in self.diagonal.iter().enumerate() {
            for k in 0..3 {
                out[3 * n + k] = self.blocks[slot][(k, k)];
            }
        }
        out
    }

    /// `y = A x`. Rows are independent, so the parallel product is deterministic.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(3).enumerate().for_each(|(row, out)| {
            let mut acc = [0.0; 3];
            for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                let c = self.cols[idx];
                let b = &self.blocks[idx];
                let (x0, x1, x2) = (x[3 * c], x[3 * c + 1], x[3 * c + 2]);
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += b[(k, 0)] * x0 + b[(k, 1)] * x1 + b[(k, 2)] * x2;
                }
            }
            out.copy_from_slice(&acc);
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.mul_into(x, &mut y);
        y
    }

    /// Entry `(i, j)` of the scalar matrix, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (row, col) = (i / 3, j / 3);
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.blocks[range.start + k][(i % 3, j % 3)],
            Err(_) => 0.0,
        }
    }
}
