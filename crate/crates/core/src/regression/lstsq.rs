use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one are dropped.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// Number of singular values kept.
    pub effective_rank: usize,
    /// Smallest kept singular value of the column-equilibrated design.
    pub smallest_singular_value: f64,
    pub residual_rms: f64,
}

/// Least-squares fit of `target` on the columns of `design`.
///
/// Columns are equilibrated to unit norm, the scaled design is reduced by a
/// Householder QR and the triangular factor is solved through its SVD with
/// truncation at `RANK_TOL * sigma_max`. For rank-deficient designs this
/// returns the minimum-norm solution in the equilibrated coordinates, which
/// coincides with the ordinary minimum-norm solution whenever the dependent
/// columns share a scale (e.g. duplicated columns).
pub fn solve_least_squares(design: &DMatrix<f64>, target: &[f64]) -> Result<FitResult> {
    let (rows, cols) = design.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::param(
            "design must have at least one row and one column",
        ));
    }
    if target.len() != rows {
        return Err(Error::param("target length differs from design rows"));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression target"));
    }

    let scales: Vec<f64> = design
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = design.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= scales[j];
    }
    let b = DVector::from_column_slice(target);

    let (core, rhs) = if rows >= cols {
        let qr = scaled.qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, cols).into_owned())
    } else {
        (scaled, b.clone())
    };

    let svd = SVD::new(core, true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let s_max = svd.singular_values.max();
    let cutoff = RANK_TOL * s_max;
    let mut solution = DVector::zeros(cols);
    let mut rank = 0;
    let mut smallest = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            smallest = smallest.min(s);
            let coef = u.column(i).dot(&rhs) / s;
            solution += v_t.row(i).transpose() * coef;
        }
    }
    if rank == 0 {
        smallest = 0.0;
    }
    let coefficients: Vec<f64> = solution.iter().zip(&scales).map(|(c, s)| c / s).collect();

    let fitted = design * DVector::from_column_slice(&coefficients);
    let sse: f64 = fitted
        .iter()
        .zip(target)
        .map(|(f, t)| (f - t) * (f - t))
        .sum();
    Ok(FitResult {
        coefficients,
        effective_rank: rank,
        smallest_singular_value: smallest,
        residual_rms: (sse / rows as f64).sqrt(),
    })
}
