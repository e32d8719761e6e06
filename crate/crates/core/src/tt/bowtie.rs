//! Block-matrix view of TT-matrix cores and the "bowtie" product.
//!
//! A block core is an `r_left x r_right` array of `n x m` blocks. The bowtie
//! product multiplies two block cores like ordinary matrices, except that
//! block products are Kronecker products:
//!
//! ```text
//! (K bowtie L)_{ac} = sum_b K_{ab} (x) L_{bc}
//! ```
//!
//! In a chain `J_1 bowtie ... bowtie J_d` the first core therefore carries the
//! most significant digit. [`TtMatrix::from_block_chain`] converts such a chain
//! into the least-significant-first core list used everywhere else.

use nalgebra::DMatrix;

use super::{Core, TtMatrix, TtVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCore {
    block_rows: usize,
    block_cols: usize,
    blocks: Vec<DMatrix<f64>>, // row-major over (block row, block col)
}

impl BlockCore {
    /// `blocks` is given row by row; all blocks must share one shape.
    pub fn new(blocks: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        let block_rows = blocks.len();
        if block_rows == 0 || blocks[0].is_empty() {
            return Err(Error::Shape("block core needs at least one block".into()));
        }
        let block_cols = blocks[0].len();
        let shape = blocks[0][0].shape();
        let mut flat = Vec::with_capacity(block_rows * block_cols);
        for row in blocks {
            if row.len() != block_cols {
                return Err(Error::Shape("ragged block core".into()));
            }
            for b in row {
                if b.shape() != shape {
                    return Err(Error::Shape(format!(
                        "block of shape {:?} in a core of {:?} blocks",
                        b.shape(),
                        shape
                    )));
                }
                flat.push(b);
            }
        }
        Ok(Self {
            block_rows,
            block_cols,
            blocks: flat,
        })
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn block_shape(&self) -> (usize, usize) {
        self.blocks[0].shape()
    }

    pub fn block(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.blocks[a * self.block_cols + b]
    }

    /// `self bowtie other`.
    pub fn bowtie(&self, other: &Self) -> Result<Self> {
        if self.block_cols != other.block_rows {
            return Err(Error::Shape(format!(
                "bowtie of {}x{} and {}x{} block cores",
                self.block_rows, self.block_cols, other.block_rows, other.block_cols
            )));
        }
        let (n1, m1) = self.block_shape();
        let (n2, m2) = other.block_shape();
        let mut blocks = Vec::with_capacity(self.block_rows);
        for a in 0..self.block_rows {
            let mut row = Vec::with_capacity(other.block_cols);
            for c in 0..other.block_cols {
                let mut acc = DMatrix::zeros(n1 * n2, m1 * m2);
                for b in 0..self.block_cols {
                    acc += self.block(a, b).kronecker(other.block(b, c));
                }
                row.push(acc);
            }
            blocks.push(row);
        }
        Self::new(blocks)
    }

    /// The single block of a `1 x 1` block core.
    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.block_rows != 1 || self.block_cols != 1 {
            return Err(Error::Shape(format!(
                "only a 1x1 block core is a matrix, got {}x{}",
                self.block_rows, self.block_cols
            )));
        }
        Ok(self.blocks.into_iter().next().expect("one block"))
    }

    /// Folds a chain `J_1 bowtie ... bowtie J_d` into a dense matrix.
    pub fn chain(cores: &[BlockCore]) -> Result<DMatrix<f64>> {
        let (first, rest) = cores
            .split_first()
            .ok_or_else(|| Error::Shape("empty bowtie chain".into()))?;
        let mut acc = first.clone();
        for c in rest {
            acc = acc.bowtie(c)?;
        }
        acc.into_matrix()
    }
}

impl TtMatrix {
    /// TT matrix whose materialization equals `J_1 bowtie ... bowtie J_d`.
    pub fn from_block_chain(chain: &[BlockCore]) -> Result<Self> {
        if chain.is_empty() {
            return Err(Error::Shape("empty bowtie chain".into()));
        }
        for pair in chain.windows(2) {
            if pair[0].block_cols != pair[1].block_rows {
                return Err(Error::Shape("bowtie chain rank mismatch".into()));
            }
        }
        let d = chain.len();
        let mut cores = Vec::with_capacity(d);
        let mut rows = Vec::with_capacity(d);
        let mut cols = Vec::with_capacity(d);
        for k in 0..d {
            let j = &chain[d - 1 - k];
            let (n, m) = j.block_shape();
            // Reversing the chain transposes the rank structure.
            cores.push(Core::from_fn(j.block_cols, n * m, j.block_rows, |a, mu, b| {
                j.block(b, a)[(mu % n, mu / n)]
            }));
            rows.push(n);
            cols.push(m);
        }
        Self::from_tt(TtVector::new(cores)?, rows, cols)
    }

    /// Inverse of [`TtMatrix::from_block_chain`].
    pub fn to_block_chain(&self) -> Vec<BlockCore> {
        let d = self.order();
        (0..d)
            .rev()
            .map(|k| {
                let core = &self.cores()[k];
                let (n, m) = (self.row_modes()[k], self.col_modes()[k]);
                let blocks = (0..core.right())
                    .map(|b| {
                        (0..core.left())
                            .map(|a| DMatrix::from_fn(n, m, |i, j| core.get(a, i + n * j, b)))
                            .collect()
                    })
                    .collect();
                BlockCore::new(blocks).expect("cores are well formed")
            })
            .collect()
    }
}
