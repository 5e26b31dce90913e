//! Pre-estimation specification tests: augmented Dickey–Fuller unit-root
//! test (intercept only), Engle's ARCH-LM test and sample moments.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::regression::ols;
use crate::special::chi_square_sf;

/// Asymptotic Dickey–Fuller critical values for the regression with a
/// constant and no trend (MacKinnon 1991/2010 response surfaces at T = ∞).
pub const ADF_CRITICAL_VALUES: [(f64, f64); 3] = [(0.01, -3.43), (0.05, -2.86), (0.10, -2.57)];

pub const DEFAULT_LM_LAGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("series too short: {len} points, need more than {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("regression is singular")]
    SingularRegression,
    #[error("zero variance")]
    ZeroVariance,
    #[error("significance level {0} has no tabulated critical value (use 0.01, 0.05 or 0.10)")]
    UnsupportedAlpha(f64),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Reject,
    FailToReject,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Reject => "reject",
            Verdict::FailToReject => "fail_to_reject",
        })
    }
}

/// Where a statistic sits relative to the tabulated critical values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence {
    PValue(f64),
    /// `p` lies in `(lower, upper]`; bounds come from the critical table.
    Band {
        lower: f64,
        upper: f64,
    },
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Evidence::PValue(p) => write!(f, "p={p:.6}"),
            Evidence::Band { lower: 0.0, upper } => write!(f, "p<{upper}"),
            Evidence::Band { lower, upper } if upper >= 1.0 => write!(f, "p>{lower}"),
            Evidence::Band { lower, upper } => write!(f, "{lower}<p<{upper}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub test_name: &'static str,
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
    pub evidence: Evidence,
    pub verdict: Verdict,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdfLags {
    Fixed(usize),
    /// AIC over `0..=floor(12 (n/100)^{1/4})` on a common sample.
    Auto,
}

impl std::str::FromStr for AdfLags {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(AdfLags::Auto);
        }
        s.parse()
            .map(AdfLags::Fixed)
            .map_err(|_| format!("expected a lag count or `auto`, got `{s}`"))
    }
}

fn check_finite(x: &[f64]) -> Result<(), DiagnosticError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DiagnosticError::NonFinite(i)),
        None => Ok(()),
    }
}

fn adf_critical(alpha: f64) -> Result<f64, DiagnosticError> {
    ADF_CRITICAL_VALUES
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or(DiagnosticError::UnsupportedAlpha(alpha))
}

fn adf_band(statistic: f64) -> Evidence {
    let mut lower = 0.0;
    for &(level, crit) in &ADF_CRITICAL_VALUES {
        if statistic < crit {
            return Evidence::Band {
                lower,
                upper: level,
            };
        }
        lower = level;
    }
    Evidence::Band { lower, upper: 1.0 }
}

/// Design for `Δy_t = c + γ y_{t-1} + Σ φ_i Δy_{t-i}` with `lags` lagged
/// differences, using observations `t = first..n-1`.
fn adf_design(y: &[f64], lags: usize, first: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = y.len() - first;
    let x = DMatrix::from_fn(rows, lags + 2, |i, j| {
        let t = first + i;
        match j {
            0 => 1.0,
            1 => y[t - 1],
            _ => {
                let l = j - 1;
                y[t - l] - y[t - l - 1]
            }
        }
    });
    let dy = DVector::from_fn(rows, |i, _| y[first + i] - y[first + i - 1]);
    (x, dy)
}

pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn adf_test(series: &[f64], lags: AdfLags, alpha: f64) -> Result<TestReport, DiagnosticError> {
    check_finite(series)?;
    let critical = adf_critical(alpha)?;
    let n = series.len();
    let lags = match lags {
        AdfLags::Fixed(k) => k,
        AdfLags::Auto => {
            let max_lag = schwert_max_lag(n).min(n.saturating_sub(12));
            if n <= max_lag + 10 {
                return Err(DiagnosticError::TooShort {
                    len: n,
                    needed: max_lag + 10,
                });
            }
            let (x, dy) = adf_design(series, max_lag, max_lag + 1);
            let fit = ols(x, &dy).map_err(|_| DiagnosticError::SingularRegression)?;
            let nobs = fit.nobs as f64;
            (0..=max_lag)
                .map(|k| {
                    let rss = fit.nested_rss[k + 1];
                    (k, nobs * (rss / nobs).ln() + 2.0 * (k + 2) as f64)
                })
                .fold(
                    (0, f64::INFINITY),
                    |best, cur| if cur.1 < best.1 { cur } else { best },
                )
                .0
        }
    };
    if n <= lags + 10 {
        return Err(DiagnosticError::TooShort {
            len: n,
            needed: lags + 10,
        });
    }
    let (x, dy) = adf_design(series, lags, lags + 1);
    let fit = ols(x, &dy).map_err(|_| DiagnosticError::SingularRegression)?;
    let statistic = fit.coef[1] / fit.std_err[1];
    Ok(TestReport {
        test_name: "ADF",
        statistic,
        lags,
        nobs: fit.nobs,
        evidence: adf_band(statistic),
        verdict: if statistic < critical {
            Verdict::Reject
        } else {
            Verdict::FailToReject
        },
        alpha,
    })
}

/// Engle's LM test: regress `e²_t` on a constant and `q` of its lags;
/// `n·R² ~ χ²(q)` under no ARCH.
pub fn arch_lm_test(
    residuals: &[f64],
    q: usize,
    alpha: f64,
) -> Result<TestReport, DiagnosticError> {
    check_finite(residuals)?;
    let n = residuals.len();
    if q == 0 || n <= q + 10 {
        return Err(DiagnosticError::TooShort {
            len: n,
            needed: q + 10,
        });
    }
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let rows = n - q;
    let x = DMatrix::from_fn(rows, q + 1, |i, j| if j == 0 { 1.0 } else { sq[q + i - j] });
    let y = DVector::from_fn(rows, |i, _| sq[q + i]);
    let fit = ols(x, &y).map_err(|_| DiagnosticError::SingularRegression)?;
    let statistic = (rows as f64 * fit.r_squared()).max(0.0);
    let p = chi_square_sf(statistic, q);
    Ok(TestReport {
        test_name: "ARCH-LM",
        statistic,
        lags: q,
        nobs: rows,
        evidence: Evidence::PValue(p),
        verdict: if p < alpha {
            Verdict::Reject
        } else {
            Verdict::FailToReject
        },
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(series: &[f64]) -> Result<MomentSummary, DiagnosticError> {
    check_finite(series)?;
    let n = series.len();
    if n < 4 {
        return Err(DiagnosticError::TooShort { len: n, needed: 3 });
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in series {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    if m2 <= (mean.abs() * 1e-14).powi(2) {
        return Err(DiagnosticError::ZeroVariance);
    }
    Ok(MomentSummary {
        n,
        mean,
        variance: m2 * nf / (nf - 1.0),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Small deterministic generator so these unit tests do not depend on the
    // simulation module.
    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        (0..n)
            .map(|_| {
                let (u, v) = (next(), next());
                (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
            })
            .collect()
    }

    #[test]
    fn adf_detects_stationarity_and_unit_root() {
        let e = normals(1, 2000);
        let r = adf_test(&e, AdfLags::Fixed(2), 0.05).unwrap();
        assert_eq!(r.verdict, Verdict::Reject);
        assert_eq!(
            r.evidence,
            Evidence::Band {
                lower: 0.0,
                upper: 0.01
            }
        );

        let walk: Vec<f64> = e
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let r = adf_test(&walk, AdfLags::Auto, 0.05).unwrap();
        assert!(r.lags <= schwert_max_lag(walk.len()));
        assert_eq!(r.nobs, walk.len() - r.lags - 1);
    }

    #[test]
    fn adf_errors() {
        assert_eq!(
            adf_test(&[3.0; 50], AdfLags::Fixed(1), 0.05),
            Err(DiagnosticError::SingularRegression)
        );
        assert!(matches!(
            adf_test(&[1.0; 11], AdfLags::Fixed(1), 0.05),
            Err(DiagnosticError::TooShort { .. })
        ));
        assert_eq!(
            adf_test(&normals(2, 100), AdfLags::Fixed(1), 0.2),
            Err(DiagnosticError::UnsupportedAlpha(0.2))
        );
    }

    #[test]
    fn adf_band_brackets() {
        assert_eq!(
            adf_band(-2.9),
            Evidence::Band {
                lower: 0.01,
                upper: 0.05
            }
        );
        assert_eq!(
            adf_band(-1.0),
            Evidence::Band {
                lower: 0.10,
                upper: 1.0
            }
        );
    }

    #[test]
    fn arch_lm_on_constant_is_singular() {
        assert_eq!(
            arch_lm_test(&[0.5; 100], 5, 0.05),
            Err(DiagnosticError::SingularRegression)
        );
        assert!(matches!(
            arch_lm_test(&normals(3, 12), 5, 0.05),
            Err(DiagnosticError::TooShort { .. })
        ));
    }

    #[test]
    fn arch_lm_statistic_is_bounded() {
        let r = arch_lm_test(&normals(4, 500), 5, 0.05).unwrap();
        assert!(r.statistic >= 0.0);
        match r.evidence {
            Evidence::PValue(p) => assert!((0.0..=1.0).contains(&p)),
            _ => panic!("expected a p-value"),
        }
    }

    #[test]
    fn moment_examples() {
        let alt: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let m = moments(&alt).unwrap();
        assert_eq!(m.skewness, 0.0);
        assert!((m.excess_kurtosis + 2.0).abs() < 1e-12);
        assert_eq!(moments(&[2.0; 10]), Err(DiagnosticError::ZeroVariance));
        assert_eq!(moments(&[0.1; 10]), Err(DiagnosticError::ZeroVariance));
        assert!(moments(&[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn adf_shift_invariant(seed in any::<u64>(), c in -1e3f64..1e3) {
            let y: Vec<f64> = normals(seed, 300).iter().scan(0.0, |a, v| { *a = 0.9 * *a + v; Some(*a) }).collect();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let a = adf_test(&y, AdfLags::Fixed(3), 0.05).unwrap().statistic;
            let b = adf_test(&shifted, AdfLags::Fixed(3), 0.05).unwrap().statistic;
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }

        #[test]
        fn arch_lm_scale_invariant(seed in any::<u64>(), s in 1e-3f64..1e3) {
            let e = normals(seed, 400);
            let scaled: Vec<f64> = e.iter().map(|v| v * s).collect();
            let a = arch_lm_test(&e, 5, 0.05).unwrap().statistic;
            let b = arch_lm_test(&scaled, 5, 0.05).unwrap().statistic;
            prop_assert!((a - b).abs() < 1e-8);
        }

        #[test]
        fn moments_affine_invariant(seed in any::<u64>(), a in 1e-2f64..1e2, b in -1e3f64..1e3) {
            let x = normals(seed, 200);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let mx = moments(&x).unwrap();
            let my = moments(&y).unwrap();
            prop_assert!((mx.skewness - my.skewness).abs() < 1e-8);
            prop_assert!((mx.excess_kurtosis - my.excess_kurtosis).abs() < 1e-8);
        }
    }
}
