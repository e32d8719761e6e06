//! Small dense tensors with column-major storage, used for the interface
//! contractions of the alternating solver.

use nalgebra::DMatrix;

use crate::tt::Core;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn ones(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self::new(dims, vec![1.0; n])
    }

    /// A vector core as `[left, mode, right]`.
    pub fn from_core(core: &Core) -> Self {
        Self::new(vec![core.left(), core.mode(), core.right()], core.data().to_vec())
    }

    /// A matrix core as `[left, row, col, right]`.
    pub fn from_matrix_core(core: &Core, rows: usize, cols: usize) -> Self {
        debug_assert_eq!(rows * cols, core.mode());
        Self::new(vec![core.left(), rows, cols, core.right()], core.data().to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    fn strides(dims: &[usize]) -> Vec<usize> {
        let mut s = Vec::with_capacity(dims.len());
        let mut acc = 1;
        for &d in dims {
            s.push(acc);
            acc *= d;
        }
        s
    }

    /// Axis `k` of the result is axis `order[k]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Self {
        debug_assert_eq!(order.len(), self.dims.len());
        if order.iter().enumerate().all(|(k, &o)| k == o) {
            return self.clone();
        }
        let in_strides = Self::strides(&self.dims);
        let dims: Vec<usize> = order.iter().map(|&o| self.dims[o]).collect();
        let strides: Vec<usize> = order.iter().map(|&o| in_strides[o]).collect();
        let n = self.len();
        let mut data = Vec::with_capacity(n);
        let mut counter = vec![0usize; dims.len()];
        let mut offset = 0usize;
        for _ in 0..n {
            data.push(self.data[offset]);
            for k in 0..dims.len() {
                counter[k] += 1;
                offset += strides[k];
                if counter[k] < dims[k] {
                    break;
                }
                offset -= strides[k] * dims[k];
                counter[k] = 0;
            }
        }
        Self::new(dims, data)
    }

    /// Sums over the paired axes. The result carries the free axes of `self`
    /// followed by the free axes of `other`, each in their original order.
    pub fn contract(&self, axes_a: &[usize], other: &Tensor, axes_b: &[usize]) -> Tensor {
        debug_assert_eq!(axes_a.len(), axes_b.len());
        for (&a, &b) in axes_a.iter().zip(axes_b) {
            debug_assert_eq!(self.dims[a], other.dims[b]);
        }
        let free_a: Vec<usize> = (0..self.dims.len()).filter(|k| !axes_a.contains(k)).collect();
        let free_b: Vec<usize> = (0..other.dims.len()).filter(|k| !axes_b.contains(k)).collect();
        let order_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
        let order_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
        let pa = self.permute(&order_a);
        let pb = other.permute(&order_b);
        let m: usize = free_a.iter().map(|&k| self.dims[k]).product();
        let k: usize = axes_a.iter().map(|&k| self.dims[k]).product();
        let n: usize = free_b.iter().map(|&k| other.dims[k]).product();
        let ma = DMatrix::from_column_slice(m, k, &pa.data);
        let mb = DMatrix::from_column_slice(k, n, &pb.data);
        let prod = ma * mb;
        let dims = free_a
            .iter()
            .map(|&k| self.dims[k])
            .chain(free_b.iter().map(|&k| other.dims[k]))
            .collect();
        Tensor::new(dims, prod.as_slice().to_vec())
    }

    /// Column-major matrix view with the first `split` axes as rows.
    pub fn into_matrix(self, split: usize) -> DMatrix<f64> {
        let rows: usize = self.dims[..split].iter().product();
        let cols: usize = self.dims[split..].iter().product();
        DMatrix::from_vec(rows, cols, self.data)
    }
}
