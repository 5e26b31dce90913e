//! Least squares via Householder QR, shared by the unit-root and ARCH-LM
//! tests.

use nalgebra::{DMatrix, DVector};

/// Relative pivot size below which a design column is treated as collinear.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub std_err: Vec<f64>,
    pub rss: f64,
    /// Total sum of squares about the mean of `y`.
    pub tss: f64,
    pub nobs: usize,
    /// Residual sum of squares of the model using only the first `m`
    /// columns, for `m = 1..=k` (`nested_rss[m - 1]`).
    pub nested_rss: Vec<f64>,
}

impl OlsFit {
    pub fn r_squared(&self) -> f64 {
        if self.tss > 0.0 {
            1.0 - self.rss / self.tss
        } else {
            0.0
        }
    }
}

/// Fit `y = X b + e`. Fails when a column is (numerically) a linear
/// combination of the preceding ones or there are no residual degrees of
/// freedom.
pub fn ols(x: DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, Singular> {
    let (n, k) = x.shape();
    if n <= k || k == 0 {
        return Err(Singular);
    }
    let col_norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let qr = x.qr();
    let r = qr.r();
    for j in 0..k {
        if !(r[(j, j)].abs() > RANK_TOL * col_norms[j]) {
            return Err(Singular);
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, k).into_owned();
    let coef = r.solve_upper_triangular(&head).ok_or(Singular)?;
    let rss: f64 = qty.rows(k, n - k).iter().map(|v| v * v).sum();
    let mut nested_rss = vec![0.0; k];
    let mut acc = rss;
    for m in (1..=k).rev() {
        nested_rss[m - 1] = acc;
        acc += qty[m - 1] * qty[m - 1];
    }
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Singular)?;
    let sigma2 = rss / (n - k) as f64;
    let std_err = (0..k)
        .map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coef: coef.iter().copied().collect(),
        std_err,
        rss,
        tss,
        nobs: n,
        nested_rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovers_coefficients() {
        let n = 20;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(n, |i, _| {
            3.0 - 0.5 * i as f64 + if i % 2 == 0 { 0.1 } else { -0.1 }
        });
        let fit = ols(x, &y).unwrap();
        assert!((fit.coef[1] + 0.5).abs() < 5e-3);
        assert!(fit.r_squared() > 0.99);
        // intercept-only model: rss equals tss
        assert!((fit.nested_rss[0] - fit.tss).abs() < 1e-9 * fit.tss);
        assert!((fit.nested_rss[1] - fit.rss).abs() < 1e-12);
    }

    #[test]
    fn standard_errors_match_textbook_formula() {
        // Simple regression: se(b1) = sqrt(s² / Sxx)
        let xs = [1.0, 2.0, 4.0, 7.0, 8.0, 10.0];
        let ys = [2.1, 2.9, 5.2, 7.8, 8.1, 10.4];
        let n = xs.len();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = ols(x, &DVector::from_row_slice(&ys)).unwrap();
        let xm = xs.iter().sum::<f64>() / n as f64;
        let sxx: f64 = xs.iter().map(|v| (v - xm).powi(2)).sum();
        let s2 = fit.rss / (n - 2) as f64;
        assert!((fit.std_err[1] - (s2 / sxx).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn collinear_design_is_singular() {
        let x = DMatrix::from_fn(10, 2, |_, j| if j == 0 { 1.0 } else { 7.0 });
        let y = DVector::from_element(10, 1.0);
        assert!(ols(x, &y).is_err());
    }
}
