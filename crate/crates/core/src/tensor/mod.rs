//! Dense and sparse `f64` matrices with a reverse-mode tape.

mod gradcheck;
mod matrix;
mod sparse;
mod tape;

pub use gradcheck::finite_diff_check;
pub use matrix::Matrix;
pub use sparse::SparseMatrix;
pub use tape::{ln_sigmoid, sigmoid, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: empty input list")]
    EmptyInput { op: &'static str },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("loss must be 1x1, got {}x{}", shape.0, shape.1)]
    NotScalar { shape: (usize, usize) },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        TensorError::Shape { op, lhs, rhs }
    }
}

/// Mean-pooling operator: output row `r` is the mean of the input rows
/// listed in segment `r`, or a zero row when the segment is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPool {
    input_rows: usize,
    segments: Vec<Vec<usize>>,
}

impl SegmentPool {
    pub fn new(input_rows: usize, segments: Vec<Vec<usize>>) -> Result<Self, TensorError> {
        for seg in &segments {
            if let Some(&bad) = seg.iter().find(|&&i| i >= input_rows) {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_mean",
                    index: bad,
                    len: input_rows,
                });
            }
        }
        Ok(Self {
            input_rows,
            segments,
        })
    }

    pub fn input_rows(&self) -> usize {
        self.input_rows
    }

    pub fn output_rows(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Vec<usize>] {
        &self.segments
    }

    pub fn apply(&self, input: &Matrix) -> Result<Matrix, TensorError> {
        if input.rows() != self.input_rows {
            return Err(TensorError::shape(
                "segment_mean",
                (self.segments.len(), self.input_rows),
                input.shape(),
            ));
        }
        let mut out = Matrix::zeros(self.segments.len(), input.cols());
        for (r, seg) in self.segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let w = 1.0 / seg.len() as f64;
            let dst = out.row_mut(r);
            for &i in seg {
                for (o, x) in dst.iter_mut().zip(input.row(i)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`SegmentPool::apply`].
    pub fn apply_transpose(&self, grad: &Matrix) -> Result<Matrix, TensorError> {
        if grad.rows() != self.segments.len() {
            return Err(TensorError::shape(
                "segment_mean_t",
                (self.segments.len(), self.input_rows),
                grad.shape(),
            ));
        }
        let mut out = Matrix::zeros(self.input_rows, grad.cols());
        for (r, seg) in self.segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let w = 1.0 / seg.len() as f64;
            for &i in seg {
                for (o, x) in out.row_mut(i).iter_mut().zip(grad.row(r)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// The pooling operator as an explicit sparse matrix.
    pub fn to_sparse(&self) -> SparseMatrix {
        let triplets = self
            .segments
            .iter()
            .enumerate()
            .flat_map(|(r, seg)| {
                let w = 1.0 / seg.len() as f64;
                seg.iter().map(move |&i| (r, i, w))
            })
            .collect();
        SparseMatrix::from_triplets(self.segments.len(), self.input_rows, triplets)
            .expect("indices validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_segment_yields_zero_row() {
        let pool = SegmentPool::new(2, vec![vec![], vec![0, 1]]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let y = pool.apply(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn pooling_matches_its_sparse_form() {
        let pool = SegmentPool::new(4, vec![vec![0, 2, 3], vec![], vec![1]]).unwrap();
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![4.0, 4.0],
            vec![0.0, 3.0],
        ])
        .unwrap();
        let dense = pool.to_sparse().to_dense();
        let want = dense.matmul(&x).unwrap();
        assert!(pool.apply(&x).unwrap().max_abs_diff(&want).unwrap() < 1e-15);
        let g = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let want_t = dense.t_matmul(&g).unwrap();
        assert!(pool.apply_transpose(&g).unwrap().max_abs_diff(&want_t).unwrap() < 1e-15);
    }

    #[test]
    fn out_of_range_segment_is_rejected() {
        assert!(SegmentPool::new(2, vec![vec![2]]).is_err());
    }
}
