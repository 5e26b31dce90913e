//! Model description, parameter vector and the map between constrained
//! parameters and the unconstrained vector the optimizer searches over.
//!
//! Unconstrained layout, in order:
//!
//! | block          | constrained          | map                                  |
//! |----------------|----------------------|--------------------------------------|
//! | mean intercept | β0 ∈ ℝ               | identity                             |
//! | AR(1)          | β1 ∈ (−1, 1)         | tanh                                 |
//! | mean exog      | γ ∈ ℝᵐ               | identity                             |
//! | variance level | ω > 0                | exp                                  |
//! | persistence    | s = Σα + Σβ ∈ (0, 1) | logistic                             |
//! | allocation     | α, β > 0             | softmax of p+q−1 logits (last = 0)   |
//! | variance exog  | δ ∈ ℝᵏ               | identity                             |

use super::EngineError;

/// Bounds that keep every image of the map strictly feasible in floating
/// point.
const PERSISTENCE_MARGIN: f64 = 1e-12;
const MIN_SHARE: f64 = 1e-15;
const AR_MARGIN: f64 = 1e-12;
const LOG_OMEGA_BOUND: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GarchSpec {
    /// Panel columns entering the mean equation, lagged one hour.
    pub mean_regressors: Vec<String>,
    /// Panel columns entering the variance equation, lagged one hour.
    pub variance_regressors: Vec<String>,
    /// ARCH order.
    pub p: usize,
    /// GARCH order.
    pub q: usize,
    pub include_ar1: bool,
}

impl GarchSpec {
    /// AR(1) mean, GARCH(1,1) variance, no exogenous terms.
    pub fn garch11() -> Self {
        Self {
            mean_regressors: Vec::new(),
            variance_regressors: Vec::new(),
            p: 1,
            q: 1,
            include_ar1: true,
        }
    }

    /// GARCH(1,1)-X with the same regressors in both equations.
    pub fn with_regressors<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        Self {
            mean_regressors: names.clone(),
            variance_regressors: names,
            ..Self::garch11()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.p == 0 || self.q == 0 {
            return Err(EngineError::InvalidSpec(format!(
                "orders must be at least 1 (p={}, q={})",
                self.p, self.q
            )));
        }
        for list in [&self.mean_regressors, &self.variance_regressors] {
            for (i, name) in list.iter().enumerate() {
                if list[..i].contains(name) {
                    return Err(EngineError::InvalidSpec(format!(
                        "regressor `{name}` listed twice"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            include_ar1: self.include_ar1,
            n_gamma: self.mean_regressors.len(),
            p: self.p,
            q: self.q,
            n_delta: self.variance_regressors.len(),
        }
    }
}

/// Block sizes of the flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub include_ar1: bool,
    pub n_gamma: usize,
    pub p: usize,
    pub q: usize,
    pub n_delta: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        1 + usize::from(self.include_ar1) + self.n_gamma + 1 + self.p + self.q + self.n_delta
    }

    fn offsets(&self) -> Offsets {
        let ar = 1;
        let gamma = ar + usize::from(self.include_ar1);
        let omega = gamma + self.n_gamma;
        let persistence = omega + 1;
        let shares = persistence + 1;
        let delta = shares + self.p + self.q - 1;
        Offsets {
            ar,
            gamma,
            omega,
            persistence,
            shares,
            delta,
        }
    }
}

struct Offsets {
    ar: usize,
    gamma: usize,
    omega: usize,
    persistence: usize,
    shares: usize,
    delta: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub beta0: f64,
    /// AR(1) coefficient; zero when the model has no AR term.
    pub beta1: f64,
    pub gamma: Vec<f64>,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
}

impl ParamVector {
    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    /// Check positivity, stationarity and the AR(1) bound.
    pub fn validate(&self, layout: &Layout) -> Result<(), EngineError> {
        let fail = |m: String| Err(EngineError::InvariantViolation(m));
        if self.gamma.len() != layout.n_gamma
            || self.alpha.len() != layout.p
            || self.beta.len() != layout.q
            || self.delta.len() != layout.n_delta
        {
            return fail("parameter blocks do not match the layout".into());
        }
        if !self.flatten(layout).iter().all(|v| v.is_finite()) {
            return fail("non-finite parameter".into());
        }
        if !(self.omega > 0.0) {
            return fail(format!("omega = {} must be positive", self.omega));
        }
        if let Some(a) = self.alpha.iter().chain(&self.beta).find(|&&a| !(a > 0.0)) {
            return fail(format!("ARCH/GARCH coefficient {a} must be positive"));
        }
        if !(self.persistence() < 1.0) {
            return fail(format!(
                "persistence {} must be below 1",
                self.persistence()
            ));
        }
        if layout.include_ar1 && !(self.beta1.abs() < 1.0) {
            return fail(format!("|beta1| = {} must be below 1", self.beta1.abs()));
        }
        if !layout.include_ar1 && self.beta1 != 0.0 {
            return fail("beta1 set without an AR(1) term".into());
        }
        Ok(())
    }

    /// Flatten in layout order: β0, [β1], γ, ω, α, β, δ.
    pub fn flatten(&self, layout: &Layout) -> Vec<f64> {
        let mut v = Vec::with_capacity(layout.dim());
        v.push(self.beta0);
        if layout.include_ar1 {
            v.push(self.beta1);
        }
        v.extend(&self.gamma);
        v.push(self.omega);
        v.extend(&self.alpha);
        v.extend(&self.beta);
        v.extend(&self.delta);
        v
    }

    pub fn unflatten(flat: &[f64], layout: &Layout) -> ParamVector {
        let mut it = flat.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let beta0 = take(1)[0];
        let beta1 = if layout.include_ar1 { take(1)[0] } else { 0.0 };
        let gamma = take(layout.n_gamma);
        let omega = take(1)[0];
        let alpha = take(layout.p);
        let beta = take(layout.q);
        let delta = take(layout.n_delta);
        ParamVector {
            beta0,
            beta1,
            gamma,
            omega,
            alpha,
            beta,
            delta,
        }
    }
}

/// Parameter names in flattened order, using the regressor names of `spec`.
pub fn param_names(spec: &GarchSpec) -> Vec<String> {
    let mut names = vec!["const".to_string()];
    if spec.include_ar1 {
        names.push("ar1".into());
    }
    names.extend(spec.mean_regressors.iter().cloned());
    names.push("omega".into());
    names.extend((1..=spec.p).map(|i| format!("arch{i}")));
    names.extend((1..=spec.q).map(|j| format!("garch{j}")));
    names.extend(spec.variance_regressors.iter().cloned());
    names
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Map any finite θ to a parameter vector satisfying every invariant.
pub fn from_unconstrained(theta: &[f64], layout: &Layout) -> ParamVector {
    debug_assert_eq!(theta.len(), layout.dim());
    let o = layout.offsets();
    let beta1 = if layout.include_ar1 {
        theta[o.ar].tanh().clamp(-1.0 + AR_MARGIN, 1.0 - AR_MARGIN)
    } else {
        0.0
    };
    let omega = theta[o.omega]
        .clamp(-LOG_OMEGA_BOUND, LOG_OMEGA_BOUND)
        .exp();
    let s = logistic(theta[o.persistence]).clamp(PERSISTENCE_MARGIN, 1.0 - PERSISTENCE_MARGIN);

    let k = layout.p + layout.q;
    let logits: Vec<f64> = (0..k)
        .map(|i| if i + 1 < k { theta[o.shares + i] } else { 0.0 })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let coefs: Vec<f64> = weights
        .iter()
        .map(|w| s * (w / total).max(MIN_SHARE))
        .collect();

    ParamVector {
        beta0: theta[0],
        beta1,
        gamma: theta[o.gamma..o.gamma + layout.n_gamma].to_vec(),
        omega,
        alpha: coefs[..layout.p].to_vec(),
        beta: coefs[layout.p..].to_vec(),
        delta: theta[o.delta..o.delta + layout.n_delta].to_vec(),
    }
}

/// Inverse of [`from_unconstrained`] on the feasible set.
pub fn to_unconstrained(params: &ParamVector, layout: &Layout) -> Result<Vec<f64>, EngineError> {
    params.validate(layout)?;
    let mut theta = Vec::with_capacity(layout.dim());
    theta.push(params.beta0);
    if layout.include_ar1 {
        theta.push(params.beta1.atanh());
    }
    theta.extend(&params.gamma);
    theta.push(params.omega.ln());
    let s = params.persistence();
    theta.push((s / (1.0 - s)).ln());
    let coefs: Vec<f64> = params.alpha.iter().chain(&params.beta).copied().collect();
    let last = coefs[coefs.len() - 1];
    theta.extend(coefs[..coefs.len() - 1].iter().map(|c| (c / last).ln()));
    theta.extend(&params.delta);
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(p: usize, q: usize, ar: bool, m: usize, k: usize) -> Layout {
        Layout {
            include_ar1: ar,
            n_gamma: m,
            p,
            q,
            n_delta: k,
        }
    }

    #[test]
    fn zero_theta_maps_to_equal_split() {
        let l = layout(1, 1, true, 0, 0);
        let p = from_unconstrained(&vec![0.0; l.dim()], &l);
        assert_eq!(p.omega, 1.0);
        assert_eq!(p.persistence(), 0.5);
        assert_eq!(p.alpha, vec![0.25]);
        assert_eq!(p.beta, vec![0.25]);
        assert_eq!(p.beta1, 0.0);
    }

    #[test]
    fn extreme_theta_stays_feasible() {
        let l = layout(2, 1, true, 1, 1);
        for x in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            for y in [-1e6, 0.0, 1e6] {
                let theta: Vec<f64> = (0..l.dim())
                    .map(|i| if i % 2 == 0 { x } else { y })
                    .collect();
                from_unconstrained(&theta, &l).validate(&l).unwrap();
            }
        }
    }

    #[test]
    fn inverse_rejects_infeasible() {
        let l = layout(1, 1, false, 0, 0);
        let bad = ParamVector {
            beta0: 0.0,
            beta1: 0.0,
            gamma: vec![],
            omega: 0.1,
            alpha: vec![0.5],
            beta: vec![0.5],
            delta: vec![],
        };
        assert!(matches!(
            to_unconstrained(&bad, &l),
            Err(EngineError::InvariantViolation(_))
        ));
    }

    #[test]
    fn names_follow_layout() {
        let spec = GarchSpec::with_regressors(&["x", "z"]);
        let names = param_names(&spec);
        assert_eq!(
            names,
            ["const", "ar1", "x", "z", "omega", "arch1", "garch1", "x", "z"]
        );
        assert_eq!(names.len(), spec.layout().dim());
        assert!(GarchSpec::with_regressors(&["x", "x"]).validate().is_err());
    }

    fn valid_params() -> impl Strategy<Value = (Layout, ParamVector)> {
        (1usize..3, 1usize..3, any::<bool>(), 0usize..3, 0usize..3).prop_flat_map(
            |(p, q, ar, m, k)| {
                let l = layout(p, q, ar, m, k);
                (
                    -1.0f64..1.0,
                    -0.99f64..0.99,
                    prop::collection::vec(-2.0f64..2.0, m),
                    1e-4f64..10.0,
                    0.01f64..0.99,
                    prop::collection::vec(0.05f64..1.0, p + q),
                    prop::collection::vec(-2.0f64..2.0, k),
                )
                    .prop_map(move |(b0, b1, gamma, omega, s, w, delta)| {
                        let total: f64 = w.iter().sum();
                        let coefs: Vec<f64> = w.iter().map(|x| s * x / total).collect();
                        (
                            l,
                            ParamVector {
                                beta0: b0,
                                beta1: if ar { b1 } else { 0.0 },
                                gamma,
                                omega,
                                alpha: coefs[..p].to_vec(),
                                beta: coefs[p..].to_vec(),
                                delta,
                            },
                        )
                    })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn round_trip_is_identity((l, params) in valid_params()) {
            let theta = to_unconstrained(&params, &l).unwrap();
            let back = from_unconstrained(&theta, &l);
            for (a, b) in params.flatten(&l).iter().zip(back.flatten(&l)) {
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }

        #[test]
        fn image_is_feasible(theta in prop::collection::vec(-50.0f64..50.0, 9)) {
            let l = layout(1, 1, true, 2, 2);
            let p = from_unconstrained(&theta, &l);
            prop_assert!(p.validate(&l).is_ok());
            prop_assert!(p.persistence() < 1.0);
        }

        #[test]
        fn flatten_round_trip((l, params) in valid_params()) {
            prop_assert_eq!(ParamVector::unflatten(&params.flatten(&l), &l), params);
        }
    }
}
