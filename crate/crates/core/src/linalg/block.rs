use super::Matrix;
use std::collections::BTreeMap;

/// Block-partitioned matrix with implicit zero blocks.
///
/// Only structurally nonzero blocks are stored; the plant couplings and
/// the designed coupling gains are sparse by construction, and the absent
/// blocks never materialize.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
    blocks: BTreeMap<(usize, usize), Matrix>,
}

impl BlockMatrix {
    pub fn new(row_dims: Vec<usize>, col_dims: Vec<usize>) -> Self {
        assert!(row_dims.iter().all(|&d| d > 0), "row dims must be positive");
        assert!(col_dims.iter().all(|&d| d > 0), "col dims must be positive");
        BlockMatrix {
            row_dims,
            col_dims,
            blocks: BTreeMap::new(),
        }
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }

    pub fn total_rows(&self) -> usize {
        self.row_dims.iter().sum()
    }

    pub fn total_cols(&self) -> usize {
        self.col_dims.iter().sum()
    }

    pub fn row_offset(&self, i: usize) -> usize {
        self.row_dims[..i].iter().sum()
    }

    pub fn col_offset(&self, j: usize) -> usize {
        self.col_dims[..j].iter().sum()
    }

    /// Insert block (i, j); panics if the shape disagrees with the grid.
    pub fn set_block(&mut self, i: usize, j: usize, m: Matrix) {
        assert_eq!(
            (m.rows(), m.cols()),
            (self.row_dims[i], self.col_dims[j]),
            "block ({i},{j}) shape mismatch"
        );
        self.blocks.insert((i, j), m);
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Matrix> {
        self.blocks.get(&(i, j))
    }

    /// Iterate stored blocks in (row, col) order.
    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &Matrix)> {
        self.blocks.iter()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.total_rows(), self.total_cols());
        for (&(i, j), b) in &self.blocks {
            let r0 = self.row_offset(i);
            let c0 = self.col_offset(j);
            for r in 0..b.rows() {
                for c in 0..b.cols() {
                    out.set(r0 + r, c0 + c, b.get(r, c));
                }
            }
        }
        out
    }

    /// Re-block a dense matrix onto the given partition, storing only the
    /// blocks that contain a nonzero entry.
    pub fn from_dense(row_dims: Vec<usize>, col_dims: Vec<usize>, m: &Matrix) -> Self {
        let mut out = BlockMatrix::new(row_dims, col_dims);
        assert_eq!(m.rows(), out.total_rows());
        assert_eq!(m.cols(), out.total_cols());
        let nr = out.row_dims.len();
        let nc = out.col_dims.len();
        for i in 0..nr {
            for j in 0..nc {
                let r0 = out.row_offset(i);
                let c0 = out.col_offset(j);
                let mut blk = Matrix::zeros(out.row_dims[i], out.col_dims[j]);
                let mut nonzero = false;
                for r in 0..out.row_dims[i] {
                    for c in 0..out.col_dims[j] {
                        let v = m.get(r0 + r, c0 + c);
                        if v != 0.0 {
                            nonzero = true;
                        }
                        blk.set(r, c, v);
                    }
                }
                if nonzero {
                    out.blocks.insert((i, j), blk);
                }
            }
        }
        out
    }

    /// Block-diagonal grid from per-block square matrices.
    pub fn block_diag(blocks: Vec<Matrix>) -> Self {
        let dims: Vec<usize> = blocks.iter().map(|b| b.rows()).collect();
        let col_dims: Vec<usize> = blocks.iter().map(|b| b.cols()).collect();
        let mut out = BlockMatrix::new(dims, col_dims);
        for (i, b) in blocks.into_iter().enumerate() {
            out.set_block(i, i, b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn dense_roundtrip_identity() {
        let mut b = BlockMatrix::new(vec![2, 1], vec![1, 2]);
        b.set_block(0, 1, Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        b.set_block(1, 0, Matrix::from_rows(&[vec![5.0]]));
        let dense = b.to_dense();
        let back = BlockMatrix::from_dense(vec![2, 1], vec![1, 2], &dense);
        assert_eq!(b, back);
        assert_eq!(back.block_count(), 2);
    }

    #[test]
    fn offsets_and_dims() {
        let b = BlockMatrix::new(vec![4, 4, 4], vec![4, 4, 4]);
        assert_eq!(b.total_rows(), 12);
        assert_eq!(b.row_offset(2), 8);
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(seed in 0u64..500) {
            let mut rng = SplitMix64::new(seed);
            let nblocks = 1 + (seed as usize % 3);
            let row_dims: Vec<usize> = (0..nblocks).map(|_| 1 + (rng.next_u64() % 3) as usize).collect();
            let col_dims: Vec<usize> = (0..nblocks).map(|_| 1 + (rng.next_u64() % 3) as usize).collect();
            let mut b = BlockMatrix::new(row_dims.clone(), col_dims.clone());
            for i in 0..nblocks {
                for j in 0..nblocks {
                    if rng.next_u64() % 2 == 0 {
                        let mut m = Matrix::zeros(row_dims[i], col_dims[j]);
                        m.set(0, 0, rng.uniform(0.5, 2.0));
                        b.set_block(i, j, m);
                    }
                }
            }
            let back = BlockMatrix::from_dense(row_dims, col_dims, &b.to_dense());
            // blocks that were stored as all-zero vanish; dense views agree
            let lhs = back.to_dense();
            let rhs = b.to_dense();
            prop_assert_eq!(lhs.data(), rhs.data());
        }
    }
}
