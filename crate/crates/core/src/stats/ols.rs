use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which a column's component orthogonal to the
/// preceding columns counts as zero.
const RANK_TOL: f64 = 1e-7;

/// Least-squares solution from a Householder QR of the design.
pub(crate) struct LeastSquares {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// R⁻¹, so that (XᵀX)⁻¹ = R⁻¹R⁻ᵀ.
    pub r_inv: DMatrix<f64>,
}

impl LeastSquares {
    /// (XᵀX)⁻¹ scaled by `factor`, symmetrized.
    pub fn scaled_cov(&self, factor: f64) -> DMatrix<f64> {
        let unscaled = &self.r_inv * self.r_inv.transpose();
        let sym = (&unscaled + unscaled.transpose()) * 0.5;
        sym * factor
    }
}

pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let (n, p) = x.shape();
    if p >= n {
        return Err(Error::InsufficientData(format!("{n} rows for {p} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::RankDeficient {
                column: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
            });
        }
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { column: names.last().cloned().unwrap_or_default() })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient { column: names.last().cloned().unwrap_or_default() })?;
    let fitted = x * &beta;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();
    Ok(LeastSquares {
        beta,
        fitted,
        residuals,
        rss,
        r_inv,
    })
}
