//! Shift-register layout of the NNARX state.
//!
//! The state stacks `N` blocks `z_1 .. z_N` (oldest first). Block `z_i` holds
//! `[y_{k-N+i}; u_{k-N-1+i}]`, so the newest block is `[y_k; u_{k-1}]` and the
//! output matrix `C` selects its y-part.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Error, Result};
use crate::scalar::Real;

/// Dimensions of an NNARX state: regression horizon, input and output sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub horizon: usize,
    pub inputs: usize,
    pub outputs: usize,
}

/// Fixed 0/1 matrices `(A, B_u, B_x, C)` of the state-space form.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftMatrices<T: Real> {
    pub a: DMatrix<T>,
    pub b_u: DMatrix<T>,
    pub b_x: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl StateLayout {
    pub fn new(horizon: usize, inputs: usize, outputs: usize) -> Result<Self> {
        if horizon == 0 || inputs == 0 {
            return Err(Error::Dimension(format!(
                "regression horizon and input size must be positive (N={horizon}, m={inputs})"
            )));
        }
        if inputs != outputs {
            return Err(Error::Dimension(format!(
                "square systems only: m={inputs}, p={outputs}"
            )));
        }
        Ok(Self {
            horizon,
            inputs,
            outputs,
        })
    }

    pub fn block_len(&self) -> usize {
        self.inputs + self.outputs
    }

    /// State dimension `n = N (m + p)`.
    pub fn state_dim(&self) -> usize {
        self.horizon * self.block_len()
    }

    /// Offset of the y-part of block `i` (0-based, 0 = oldest).
    pub fn y_offset(&self, block: usize) -> usize {
        block * self.block_len()
    }

    /// Offset of the u-part of block `i` (0-based, 0 = oldest).
    pub fn u_offset(&self, block: usize) -> usize {
        block * self.block_len() + self.outputs
    }

    /// Offset of the newest output, i.e. the rows selected by `C`.
    pub fn output_offset(&self) -> usize {
        self.y_offset(self.horizon - 1)
    }

    pub fn check_state<T: Real>(&self, x: &DVector<T>) -> Result<()> {
        dim_check(x.len() == self.state_dim(), || {
            format!("state has length {}, expected {}", x.len(), self.state_dim())
        })
    }

    pub fn check_input<T: Real>(&self, u: &DVector<T>) -> Result<()> {
        dim_check(u.len() == self.inputs, || {
            format!("input has length {}, expected {}", u.len(), self.inputs)
        })
    }

    /// `C x`: the newest output stored in the state.
    pub fn output<T: Real>(&self, x: &DVector<T>) -> DVector<T> {
        x.rows(self.output_offset(), self.outputs).into_owned()
    }

    /// `A x + B_u u + B_x y_new` without forming the matrices.
    pub fn shift<T: Real>(&self, x: &DVector<T>, u: &DVector<T>, y_new: &DVector<T>) -> DVector<T> {
        let b = self.block_len();
        let n = self.state_dim();
        let mut next = DVector::zeros(n);
        next.rows_mut(0, n - b).copy_from(&x.rows(b, n - b));
        next.rows_mut(self.output_offset(), self.outputs).copy_from(y_new);
        next.rows_mut(self.u_offset(self.horizon - 1), self.inputs).copy_from(u);
        next
    }

    /// `A' a`: the adjoint of the block shift.
    pub fn shift_transpose<T: Real>(&self, adj: &DVector<T>) -> DVector<T> {
        let b = self.block_len();
        let n = self.state_dim();
        let mut out = DVector::zeros(n);
        out.rows_mut(b, n - b).copy_from(&adj.rows(0, n - b));
        out
    }

    /// The state whose every block equals `[y; u]`, i.e. the equilibrium
    /// state of a constant input/output pair.
    pub fn repeated_state<T: Real>(&self, y: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut x = DVector::zeros(self.state_dim());
        for i in 0..self.horizon {
            x.rows_mut(self.y_offset(i), self.outputs).copy_from(y);
            x.rows_mut(self.u_offset(i), self.inputs).copy_from(u);
        }
        x
    }

    /// Builds `x_k` from the last `N` outputs `y_{k-N+1..=k}` and the last `N`
    /// inputs `u_{k-N..k}` (both oldest first).
    pub fn state_from_history<T: Real>(
        &self,
        outputs: &[DVector<T>],
        inputs: &[DVector<T>],
    ) -> Result<DVector<T>> {
        dim_check(
            outputs.len() == self.horizon && inputs.len() == self.horizon,
            || {
                format!(
                    "history needs {} outputs and {} inputs, got {} and {}",
                    self.horizon,
                    self.horizon,
                    outputs.len(),
                    inputs.len()
                )
            },
        )?;
        let mut x = DVector::zeros(self.state_dim());
        for i in 0..self.horizon {
            x.rows_mut(self.y_offset(i), self.outputs).copy_from(&outputs[i]);
            x.rows_mut(self.u_offset(i), self.inputs).copy_from(&inputs[i]);
        }
        Ok(x)
    }

    /// `n x m` selector summing the u-slots of every block: `d x / d u` for
    /// the repeated state and the direction along which a matched input
    /// offset shifts the stored inputs.
    pub fn input_slots<T: Real>(&self) -> DMatrix<T> {
        let mut p = DMatrix::zeros(self.state_dim(), self.inputs);
        for i in 0..self.horizon {
            for j in 0..self.inputs {
                p[(self.u_offset(i) + j, j)] = T::one();
            }
        }
        p
    }

    /// `n x p` selector of the y-slots of every block.
    pub fn output_slots<T: Real>(&self) -> DMatrix<T> {
        let mut p = DMatrix::zeros(self.state_dim(), self.outputs);
        for i in 0..self.horizon {
            for j in 0..self.outputs {
                p[(self.y_offset(i) + j, j)] = T::one();
            }
        }
        p
    }

    pub fn shift_matrices<T: Real>(&self) -> ShiftMatrices<T> {
        let n = self.state_dim();
        let b = self.block_len();
        let mut a = DMatrix::zeros(n, n);
        for r in 0..n - b {
            a[(r, r + b)] = T::one();
        }
        let mut b_u = DMatrix::zeros(n, self.inputs);
        for j in 0..self.inputs {
            b_u[(self.u_offset(self.horizon - 1) + j, j)] = T::one();
        }
        let mut b_x = DMatrix::zeros(n, self.outputs);
        let mut c = DMatrix::zeros(self.outputs, n);
        for j in 0..self.outputs {
            b_x[(self.output_offset() + j, j)] = T::one();
            c[(j, self.output_offset() + j)] = T::one();
        }
        ShiftMatrices { a, b_u, b_x, c }
    }
}

/// Builds the fixed shift matrices for horizon `N` and sizes `m = p`.
pub fn build_shift_matrices<T: Real>(
    horizon: usize,
    inputs: usize,
    outputs: usize,
) -> Result<ShiftMatrices<T>> {
    Ok(StateLayout::new(horizon, inputs, outputs)?.shift_matrices())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn horizon_one_siso() {
        let s = build_shift_matrices::<f64>(1, 1, 1).unwrap();
        assert_eq!(s.a, DMatrix::zeros(2, 2));
        assert_eq!(s.b_u, m(2, 1, &[0.0, 1.0]));
        assert_eq!(s.b_x, m(2, 1, &[1.0, 0.0]));
        assert_eq!(s.c, m(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn horizon_two_moves_newest_block_down() {
        let s = build_shift_matrices::<f64>(2, 1, 1).unwrap();
        let expected = m(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0,
            ],
        );
        assert_eq!(s.a, expected);
    }

    #[test]
    fn benchmark_dimension() {
        let s = build_shift_matrices::<f64>(5, 1, 1).unwrap();
        assert_eq!(s.a.nrows(), 10);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(matches!(build_shift_matrices::<f64>(0, 1, 1), Err(Error::Dimension(_))));
        assert!(matches!(build_shift_matrices::<f64>(2, 0, 0), Err(Error::Dimension(_))));
        assert!(matches!(build_shift_matrices::<f64>(2, 1, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn shift_is_nilpotent_of_order_horizon() {
        for n in 1..6 {
            let s = build_shift_matrices::<f64>(n, 2, 2).unwrap();
            let mut p = DMatrix::identity(s.a.nrows(), s.a.ncols());
            for _ in 0..n - 1 {
                p = &p * &s.a;
            }
            assert!(p.iter().any(|&v| v != 0.0), "A^(N-1) must not vanish");
            p = &p * &s.a;
            assert!(p.iter().all(|&v| v == 0.0), "A^N must vanish");
        }
    }

    #[test]
    fn matrix_free_shift_matches_matrices() {
        let layout = StateLayout::new(3, 2, 2).unwrap();
        let s = layout.shift_matrices::<f64>();
        let x = DVector::from_fn(12, |i, _| i as f64 * 0.7 - 2.0);
        let u = DVector::from_vec(vec![0.3, -0.4]);
        let y = DVector::from_vec(vec![5.0, 6.0]);
        let expected = &s.a * &x + &s.b_u * &u + &s.b_x * &y;
        assert_eq!(layout.shift(&x, &u, &y), expected);
        let adj = DVector::from_fn(12, |i, _| (i as f64).sin());
        assert_eq!(layout.shift_transpose(&adj), s.a.transpose() * &adj);
        assert_eq!(layout.output(&x), &s.c * &x);
    }
}
