//! Small dense solvers for the econometric baseline.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Solves `a x = b` (square `a`, `b` with any number of columns) by Gaussian
/// elimination with partial pivoting.
pub(crate) fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Shape {
            op: "solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu.get(i, col).abs().total_cmp(&lu.get(j, col).abs()))
            .expect("non-empty range");
        if lu.get(pivot, col).abs() < 1e-300 {
            return Err(Error::Estimation(format!("singular system at column {col}")));
        }
        if pivot != col {
            for c in 0..n {
                let t = lu.get(col, c);
                lu.set(col, c, lu.get(pivot, c));
                lu.set(pivot, c, t);
            }
            for c in 0..m {
                let t = x.get(col, c);
                x.set(col, c, x.get(pivot, c));
                x.set(pivot, c, t);
            }
        }
        let p = lu.get(col, col);
        for r in col + 1..n {
            let f = lu.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                lu.set(r, c, lu.get(r, c) - f * lu.get(col, c));
            }
            for c in 0..m {
                x.set(r, c, x.get(r, c) - f * x.get(col, c));
            }
        }
    }
    for r in (0..n).rev() {
        for c in 0..m {
            let mut s = x.get(r, c);
            for k in r + 1..n {
                s -= lu.get(r, k) * x.get(k, c);
            }
            x.set(r, c, s / lu.get(r, r));
        }
    }
    Ok(x)
}

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, found by modified Gram-Schmidt on unit-normalized columns.
pub(crate) fn dependent_columns(columns: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for (k, col) in columns.iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            out.push(k);
            continue;
        }
        let mut v: Vec<f64> = col.iter().map(|x| x / norm).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= d * qi;
            }
        }
        let rest = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rest < tol {
            out.push(k);
        } else {
            basis.push(v.into_iter().map(|x| x / rest).collect());
        }
    }
    out
}
