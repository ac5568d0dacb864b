//! Dense linear solve for the small augmented kriging systems and the
//! variance-model normal equations.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Solves `a x = b` by LU decomposition with partial pivoting. `a` and `b`
/// are consumed as scratch space.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n, "dimension mismatch");
    if n == 0 {
        return Err(Error::EmptyInput("solve on empty system".into()));
    }
    let scale = a
        .data
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        // pivot search
        let mut pivot_row = col;
        let mut pivot_val = a.get(col, col).abs();
        for row in col + 1..n {
            let v = a.get(row, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val <= 1e-13 * scale {
            return Err(Error::SingularSystem(format!(
                "pivot {pivot_val:.3e} at column {col} of {n}"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot_row, j));
                a.set(pivot_row, j, tmp);
            }
            b.swap(col, pivot_row);
        }
        let inv = 1.0 / a.get(col, col);
        for row in col + 1..n {
            let factor = a.get(row, col) * inv;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a.get(row, j) - factor * a.get(col, j);
                a.set(row, j, v);
            }
            b[row] -= factor * b[col];
        }
    }
    // back substitution
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a.get(row, j) * x[j];
        }
        x[row] = acc / a.get(row, row);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite solution".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_identity() {
        let mut a = Matrix::zeros(3);
        for i in 0..3 {
            a.set(i, i, 1.0);
        }
        let x = solve(a, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solves_small_system() {
        // [[2,1],[1,3]] x = [3,5] -> x = [4/5, 7/5]
        let mut a = Matrix::zeros(2);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 3.0);
        let x = solve(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let mut a = Matrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(matches!(
            solve(a, vec![1.0, 2.0]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn pivots_on_zero_diagonal() {
        let mut a = Matrix::zeros(2);
        a.set(0, 0, 0.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 0.0);
        let x = solve(a, vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }
}
