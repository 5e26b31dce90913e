//! Conditional-variance recursion, Gaussian log-likelihood and information
//! criteria. The single-step function is shared with the simulator so that
//! simulated and filtered variances agree bit for bit.

use super::{EngineError, ParamVector};

/// Lower bound applied to every conditional variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `Σ δ_k z_{k,t}` accumulated in column order.
#[inline]
pub fn exog_term(delta: &[f64], exog: &[Vec<f64>], t: usize) -> f64 {
    delta.iter().zip(exog).map(|(d, z)| d * z[t]).sum()
}

/// Variance at time `t` given squared residuals and variances for times
/// `< t` (slices may be longer; only indices below `t` are read). Indices
/// before the sample use `init`. Returns the floored value and whether the
/// floor was hit.
#[inline]
pub fn variance_step(
    params: &ParamVector,
    sq_resid: &[f64],
    variances: &[f64],
    exog: f64,
    init: f64,
    t: usize,
) -> (f64, bool) {
    let mut s = params.omega;
    for (i, a) in params.alpha.iter().enumerate() {
        let lag = i + 1;
        s += a * if t >= lag { sq_resid[t - lag] } else { init };
    }
    for (j, b) in params.beta.iter().enumerate() {
        let lag = j + 1;
        s += b * if t >= lag { variances[t - lag] } else { init };
    }
    s += exog;
    // NaN also falls through to the floor so the likelihood stays finite.
    if s >= VARIANCE_FLOOR {
        (s, false)
    } else {
        (VARIANCE_FLOOR, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    pub variances: Vec<f64>,
    /// Number of steps where the floor replaced the recursion value.
    pub clamp_events: usize,
}

/// Filter conditional variances. `exog[k][t]` is variance regressor `k`
/// already aligned with observation `t` (that is, lagged).
pub fn variance_recursion(
    residuals: &[f64],
    exog: &[Vec<f64>],
    params: &ParamVector,
    init: f64,
) -> Result<VariancePath, EngineError> {
    if !(init > 0.0) || !init.is_finite() {
        return Err(EngineError::NonPositiveInit);
    }
    let n = residuals.len();
    if exog.len() != params.delta.len() || exog.iter().any(|z| z.len() != n) {
        return Err(EngineError::LengthMismatch);
    }
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let mut variances = Vec::with_capacity(n);
    let mut clamp_events = 0;
    for t in 0..n {
        let x = exog_term(&params.delta, exog, t);
        let (v, clamped) = variance_step(params, &sq, &variances, x, init, t);
        clamp_events += usize::from(clamped);
        variances.push(v);
    }
    Ok(VariancePath {
        variances,
        clamp_events,
    })
}

/// Gaussian quasi log-likelihood `Σ −½ln2π − ½lnσ² − ε²/(2σ²)`.
pub fn log_likelihood(residuals: &[f64], variances: &[f64]) -> Result<f64, EngineError> {
    if residuals.len() != variances.len() {
        return Err(EngineError::LengthMismatch);
    }
    let mut ll = 0.0;
    for (t, (e, v)) in residuals.iter().zip(variances).enumerate() {
        if !(*v > 0.0) {
            return Err(EngineError::NonPositiveVariance(t));
        }
        ll -= HALF_LN_2PI + 0.5 * v.ln() + e * e / (2.0 * v);
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
}

/// `aic = 2k − 2LL`, `bic = k ln n − 2LL`; requires `1 ≤ k < n`.
pub fn information_criteria(
    log_likelihood: f64,
    k: usize,
    n: f64,
) -> Result<InformationCriteria, EngineError> {
    if k == 0 || !(n > k as f64) {
        return Err(EngineError::BadCounts { k, n });
    }
    let k = k as f64;
    Ok(InformationCriteria {
        aic: 2.0 * k - 2.0 * log_likelihood,
        bic: k * n.ln() - 2.0 * log_likelihood,
    })
}

/// Sample variance (divisor n) about the mean; the recursion's pre-sample
/// value.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn garch11(omega: f64, alpha: f64, beta: f64, delta: Vec<f64>) -> ParamVector {
        ParamVector {
            beta0: 0.0,
            beta1: 0.0,
            gamma: vec![],
            omega,
            alpha: vec![alpha],
            beta: vec![beta],
            delta,
        }
    }

    #[test]
    fn unit_fixed_point() {
        let p = garch11(0.1, 0.2, 0.7, vec![]);
        let path = variance_recursion(&[1.0, -1.0, 1.0, -1.0], &[], &p, 1.0).unwrap();
        for v in path.variances {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(path.clamp_events, 0);
    }

    #[test]
    fn one_step_from_history() {
        let p = garch11(0.1, 0.2, 0.7, vec![]);
        let (v, clamped) = variance_step(&p, &[4.0], &[2.0], 0.0, 1.0, 1);
        // independent one-step evaluation
        let reference = 0.1 + 0.2 * 4.0 + 0.7 * 2.0;
        assert!((v - 2.3).abs() < 1e-12 && (v - reference).abs() < 1e-15);
        assert!(!clamped);
    }

    /// Iterate with ε²_t = σ²_t, i.e. no surprise in the squared residual.
    fn surprise_free_path(p: &ParamVector, init: f64, n: usize) -> Vec<f64> {
        let mut sq = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for t in 0..n {
            let (v, _) = variance_step(p, &sq, &var, 0.0, init, t);
            sq.push(v);
            var.push(v);
        }
        var
    }

    #[test]
    fn long_run_level_is_a_fixed_point() {
        let p = garch11(0.05, 0.10, 0.85, vec![]);
        assert!((p.omega / (1.0 - p.persistence()) - 1.0).abs() < 1e-12);
        for v in surprise_free_path(&p, 1.0, 500) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn surprise_free_path_approaches_limit_monotonically() {
        let p = garch11(0.05, 0.10, 0.85, vec![]);
        let limit = p.omega / (1.0 - p.persistence());
        for init in [0.01, 7.0] {
            let gaps: Vec<f64> = surprise_free_path(&p, init, 10_000)
                .iter()
                .map(|v| (v - limit).abs())
                .collect();
            assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
            assert!(*gaps.last().unwrap() < 1e-8);
        }
    }

    #[test]
    fn hand_computed_two_steps() {
        let p = garch11(0.2, 0.3, 0.5, vec![0.5]);
        let z = vec![vec![1.0, -2.0]];
        let path = variance_recursion(&[2.0, 0.0], &z, &p, 1.5).unwrap();
        let v0 = 0.2 + 0.3 * 1.5 + 0.5 * 1.5 + 0.5;
        let v1 = 0.2 + 0.3 * 4.0 + 0.5 * v0 - 1.0;
        assert!((path.variances[0] - v0).abs() < 1e-15);
        assert!((path.variances[1] - v1).abs() < 1e-15);
    }

    #[test]
    fn floor_is_counted() {
        let p = garch11(0.01, 0.05, 0.9, vec![1.0]);
        let z = vec![vec![0.0, -10.0, 0.0]];
        let path = variance_recursion(&[0.1, 0.1, 0.1], &z, &p, 0.1).unwrap();
        assert_eq!(path.variances[1], VARIANCE_FLOOR);
        assert_eq!(path.clamp_events, 1);
        assert!(path.variances[2] > VARIANCE_FLOOR);
    }

    #[test]
    fn rejects_bad_init_and_shapes() {
        let p = garch11(0.1, 0.1, 0.8, vec![]);
        assert!(matches!(
            variance_recursion(&[1.0], &[], &p, 0.0),
            Err(EngineError::NonPositiveInit)
        ));
        assert!(matches!(
            variance_recursion(&[1.0], &[vec![1.0]], &p, 1.0),
            Err(EngineError::LengthMismatch)
        ));
    }

    #[test]
    fn log_likelihood_unit_case() {
        // ε = 0, σ² = 1 ⇒ −½ ln 2π per observation
        let ll = log_likelihood(&[0.0], &[1.0]).unwrap();
        assert!((ll + 0.91893853).abs() < 1e-8);
        // ε² = σ²: each point contributes −½ln2π − ½lnσ² − ½
        let v = [0.5, 2.0, 3.0];
        let e: Vec<f64> = v.iter().map(|x: &f64| x.sqrt()).collect();
        let expected: f64 = v.iter().map(|x| -HALF_LN_2PI - 0.5 * x.ln() - 0.5).sum();
        assert!((log_likelihood(&e, &v).unwrap() - expected).abs() < 1e-14);
        assert!(matches!(
            log_likelihood(&[0.0], &[0.0]),
            Err(EngineError::NonPositiveVariance(0))
        ));
    }

    #[test]
    fn criteria_examples() {
        let ic = information_criteria(100.0, 5, std::f64::consts::E.powi(2)).unwrap();
        assert!((ic.aic + 190.0).abs() < 1e-12);
        assert!((ic.bic + 190.0).abs() < 1e-12);
        let wider = information_criteria(100.0, 6, 50.0).unwrap();
        let base = information_criteria(100.0, 5, 50.0).unwrap();
        assert_eq!(wider.aic - base.aic, 2.0);
        assert!(information_criteria(1.0, 5, 5.0).is_err());
        assert!(information_criteria(1.0, 0, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn variances_respect_floor(
            resid in prop::collection::vec(-5.0f64..5.0, 1..60),
            omega in 1e-6f64..1.0,
            alpha in 0.0f64..0.5,
            beta in 0.0f64..0.49,
            delta in -3.0f64..3.0,
            init in 1e-6f64..10.0,
        ) {
            let n = resid.len();
            let z: Vec<f64> = (0..n).map(|t| ((t * 7919) % 13) as f64 - 6.0).collect();
            let p = garch11(omega, alpha, beta, vec![delta]);
            let path = variance_recursion(&resid, &[z], &p, init).unwrap();
            prop_assert!(path.variances.iter().all(|&v| v >= VARIANCE_FLOOR && v.is_finite()));
            let ll = log_likelihood(&resid, &path.variances).unwrap();
            prop_assert!(ll.is_finite());
            let plain = variance_recursion(&resid, &[], &garch11(omega, alpha, beta, vec![]), init).unwrap();
            prop_assert!(plain.variances.iter().all(|&v| v >= omega));
        }

        #[test]
        fn criteria_penalty_increases_with_k(ll in -1e4f64..1e4, k in 1usize..20) {
            let a = information_criteria(ll, k, 1000.0).unwrap();
            let b = information_criteria(ll, k + 1, 1000.0).unwrap();
            prop_assert!(b.aic > a.aic && b.bic > a.bic);
        }
    }
}
