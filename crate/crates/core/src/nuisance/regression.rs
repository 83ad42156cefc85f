//! Ridge least squares shared by the outcome model and the density regressors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-11;

/// Solves `min ||X b - y||^2 + lambda * ||b[penalize_from..]||^2`.
///
/// With `lambda == 0` the design must have full column rank.
pub fn ridge_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    penalize_from: usize,
) -> Result<DVector<f64>> {
    let pinv = ridge_pseudo_inverse(x, lambda, penalize_from)?;
    Ok(pinv * y)
}

/// The `p x n` linear map `y -> b` of [`ridge_solve`], for reuse across many responses.
pub fn ridge_pseudo_inverse(
    x: &DMatrix<f64>,
    lambda: f64,
    penalize_from: usize,
) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig("ridge penalty must be non-negative".into()));
    }
    let (n, p) = x.shape();
    let aug = if lambda > 0.0 {
        let extra = p.saturating_sub(penalize_from);
        let mut a = DMatrix::zeros(n + extra, p);
        a.rows_mut(0, n).copy_from(x);
        let root = lambda.sqrt();
        for k in 0..extra {
            a[(n + k, penalize_from + k)] = root;
        }
        a
    } else {
        x.clone()
    };
    let rows = aug.nrows();
    // SVD needs at least as many rows as columns to expose rank deficiency.
    if rows < p {
        return Err(Error::SingularFit {
            rank: rows,
            columns: p,
        });
    }
    let svd = aug.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * RANK_TOL * rows.max(p) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < p || smax == 0.0 {
        return Err(Error::SingularFit { rank, columns: p });
    }
    let full = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(full.columns(0, n).into_owned())
}

/// Per-coordinate polynomial features `1, s_j, s_j^2, ..., s_j^degree`.
pub fn covariate_poly_features(s: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for k in 1..=degree {
        out.extend(s.iter().map(|v| v.powi(k as i32)));
    }
}

pub fn covariate_poly_width(d: usize, degree: usize) -> usize {
    1 + d * degree
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = ridge_solve(&x, &y, 0.0, 1).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_without_penalty_is_singular() {
        let x = DMatrix::from_fn(3, 10, |i, j| ((i + 1) as f64).powi(j as i32));
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            ridge_solve(&x, &y, 0.0, 1),
            Err(Error::SingularFit { .. })
        ));
        assert!(ridge_solve(&x, &y, 1e-3, 0).is_ok());
    }
}
