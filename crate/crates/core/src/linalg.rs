//! Row-major auxiliary matrices and small dense solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, invalid, Error, Result};

/// Systems whose condition estimate exceeds this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// An `n x q` matrix of auxiliary variables stored by rows; row `i` is the
/// vector `x_i` attached to unit `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxMatrix {
    q: usize,
    data: Vec<f64>,
}

impl AuxMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let q = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if q == 0 {
            return Err(invalid("aux", "at least one row and one column required"));
        }
        let mut data = Vec::with_capacity(rows.len() * q);
        for row in rows {
            check_len("aux row", row.as_ref().len(), q)?;
            data.extend_from_slice(row.as_ref());
        }
        Ok(Self { q, data })
    }

    pub fn from_row_major(q: usize, data: Vec<f64>) -> Result<Self> {
        if q == 0 || !data.len().is_multiple_of(q) {
            return Err(invalid("aux", format!("{} values do not fill rows of width {q}", data.len())));
        }
        Ok(Self { q, data })
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.q
    }

    pub fn ncols(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.q..(i + 1) * self.q]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.q)
    }

    /// Rows `idx` in order, as a new matrix.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.q);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { q: self.q, data }
    }

    /// Column sums.
    pub fn column_totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.q];
        for row in self.rows() {
            for (acc, v) in t.iter_mut().zip(row) {
                *acc += v;
            }
        }
        t
    }

    /// Replace column `j` by `a * x_j + b`.
    pub fn map_column(&mut self, j: usize, a: f64, b: f64) {
        let q = self.q;
        for row in self.data.chunks_exact_mut(q) {
            row[j] = a * row[j] + b;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// 2-norm condition number from the singular values. `q` is tiny so the SVD
/// cost is irrelevant.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `m * x = b` by LU, refusing when the condition estimate exceeds
/// [`CONDITION_LIMIT`]. Returns the solution and the condition estimate.
pub fn solve_checked(m: &DMatrix<f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_len("right-hand side", b.len(), m.nrows())?;
    let cond = condition_estimate(m);
    if cond > CONDITION_LIMIT {
        return Err(Error::Singular(cond));
    }
    let rhs = DVector::from_column_slice(b);
    let x = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular(cond))?;
    Ok((x.iter().copied().collect(), cond))
}

/// Solve the weighted normal equations
/// `(sum_i g_i x_i x_i^T) gamma = sum_i h_i x_i y_i` over the rows of `x`.
pub fn weighted_normal_equations(
    x: &AuxMatrix,
    lhs_weight: &[f64],
    rhs_weight: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let n = x.nrows();
    check_len("lhs weights", lhs_weight.len(), n)?;
    check_len("rhs weights", rhs_weight.len(), n)?;
    check_len("y", y.len(), n)?;
    let q = x.ncols();
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut b = vec![0.0; q];
    for (i, row) in x.rows().enumerate() {
        let g = lhs_weight[i];
        let h = rhs_weight[i] * y[i];
        for j in 0..q {
            b[j] += h * row[j];
            for k in 0..q {
                a[(j, k)] += g * row[j] * row[k];
            }
        }
    }
    solve_checked(&a, &b).map(|(x, _)| x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_totals() {
        let m = AuxMatrix::from_rows(&[[1.0, 2.0], [1.0, 3.0], [1.0, 5.0]]).unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m.column_totals(), vec![3.0, 10.0]);
        let s = m.select(&[2, 0]);
        assert_eq!(s.row(0), &[1.0, 5.0]);
        assert_eq!(s.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(AuxMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn singular_system_refused() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve_checked(&m, &[1.0, 2.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn weighted_least_squares_recovers_exact_line() {
        let x = AuxMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 4.0]]).unwrap();
        let y: Vec<f64> = x.rows().map(|r| 2.0 - 0.5 * r[1]).collect();
        let w = [1.0, 2.0, 0.5, 3.0];
        let g = weighted_normal_equations(&x, &w, &w, &y).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[1] + 0.5).abs() < 1e-12);
    }
}
