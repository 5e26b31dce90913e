//! Estimation sample extraction, regressor standardization and the
//! likelihood objective over unconstrained parameters.

use super::params::{from_unconstrained, GarchSpec, Layout, ParamVector};
use super::recursion::{exog_term, sample_variance, variance_step};
use super::EngineError;
use crate::ingest::COL_RETURN;
use crate::panel::HourlyPanel;

/// Fewest estimation points accepted by [`mean_residuals`].
pub const MIN_RESIDUAL_POINTS: usize = 100;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean and standard deviation (divisor n) of one regressor over the
/// estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Standardization applied to the mean and variance regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorScaling {
    pub mean: Vec<ColumnScale>,
    pub variance: Vec<ColumnScale>,
}

impl RegressorScaling {
    pub fn from_panel(panel: &HourlyPanel, spec: &GarchSpec) -> Result<Self, EngineError> {
        Ok(Sample::extract(panel, spec, 0)?.scaling)
    }

    /// Coefficients on raw regressors. Intercepts absorb the centering, so
    /// the result need not satisfy the positivity invariants.
    pub fn to_raw(&self, p: &ParamVector) -> ParamVector {
        let mut out = p.clone();
        for (g, c) in out.gamma.iter_mut().zip(&self.mean) {
            *g /= c.sd;
            out.beta0 -= *g * c.mean;
        }
        for (d, c) in out.delta.iter_mut().zip(&self.variance) {
            *d /= c.sd;
            out.omega -= *d * c.mean;
        }
        out
    }

    /// Inverse of [`RegressorScaling::to_raw`].
    pub fn to_standardized(&self, raw: &ParamVector) -> ParamVector {
        let mut out = raw.clone();
        for (g, c) in out.gamma.iter_mut().zip(&self.mean) {
            out.beta0 += *g * c.mean;
            *g *= c.sd;
        }
        for (d, c) in out.delta.iter_mut().zip(&self.variance) {
            out.omega += *d * c.mean;
            *d *= c.sd;
        }
        out
    }
}

/// Masked hours compressed into one sample, regressors standardized.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    /// Grid index of each estimation point.
    pub rows: Vec<usize>,
    pub returns: Vec<f64>,
    pub lagged_returns: Vec<f64>,
    pub mean_x: Vec<Vec<f64>>,
    pub var_z: Vec<Vec<f64>>,
    pub scaling: RegressorScaling,
}

impl Sample {
    pub fn extract(
        panel: &HourlyPanel,
        spec: &GarchSpec,
        min_points: usize,
    ) -> Result<Self, EngineError> {
        spec.validate()?;
        let column = |name: &str| {
            panel
                .column(name)
                .map_err(|_| EngineError::UnknownColumn(name.to_string()))
        };
        let r = column(COL_RETURN)?;
        let mean_cols = spec
            .mean_regressors
            .iter()
            .map(|n| column(n))
            .collect::<Result<Vec<_>, _>>()?;
        let var_cols = spec
            .variance_regressors
            .iter()
            .map(|n| column(n))
            .collect::<Result<Vec<_>, _>>()?;

        let mask = panel.estimation_mask();
        let rows: Vec<usize> = (1..mask.len())
            .filter(|&t| {
                mask[t]
                    && r.value(t).is_some()
                    && (!spec.include_ar1 || r.value(t - 1).is_some())
                    && mean_cols
                        .iter()
                        .chain(&var_cols)
                        .all(|c| c.value(t - 1).is_some())
            })
            .collect();
        if rows.len() < min_points.max(2) {
            return Err(EngineError::InsufficientData {
                n: rows.len(),
                needed: min_points.max(2),
            });
        }

        let lagged = |c: &crate::series::HourlySeries| -> Vec<f64> {
            rows.iter().map(|&t| c.values()[t - 1]).collect()
        };
        let returns: Vec<f64> = rows.iter().map(|&t| r.values()[t]).collect();
        let lagged_returns = if spec.include_ar1 {
            lagged(r)
        } else {
            vec![0.0; rows.len()]
        };
        let standardize = |cols: &[&crate::series::HourlySeries]| {
            let mut scales = Vec::with_capacity(cols.len());
            let mut data = Vec::with_capacity(cols.len());
            for c in cols {
                let mut v = lagged(c);
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
                if !(sd > 1e-12 * mean.abs().max(1.0)) {
                    return Err(EngineError::ConstantRegressor(c.name().to_string()));
                }
                for x in &mut v {
                    *x = (*x - mean) / sd;
                }
                scales.push(ColumnScale {
                    name: c.name().to_string(),
                    mean,
                    sd,
                });
                data.push(v);
            }
            Ok((scales, data))
        };
        let (mean_scale, mean_x) = standardize(&mean_cols)?;
        let (var_scale, var_z) = standardize(&var_cols)?;
        Ok(Self {
            rows,
            returns,
            lagged_returns,
            mean_x,
            var_z,
            scaling: RegressorScaling {
                mean: mean_scale,
                variance: var_scale,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// `ε_t = y_t − β0 − β1·y_{t−1} − γ'x_{t−1}` written into `out`.
pub(crate) fn residuals_into(
    y: &[f64],
    y_lag: &[f64],
    x: &[Vec<f64>],
    p: &ParamVector,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend(
        y.iter()
            .zip(y_lag)
            .map(|(yt, yl)| yt - p.beta0 - p.beta1 * yl),
    );
    for (g, col) in p.gamma.iter().zip(x) {
        for (e, xv) in out.iter_mut().zip(col) {
            *e -= g * xv;
        }
    }
}

/// Mean-equation residuals over the panel's estimation sample, with `γ`
/// applied to standardized regressors (see [`RegressorScaling`]).
pub fn mean_residuals(
    panel: &HourlyPanel,
    spec: &GarchSpec,
    params: &ParamVector,
) -> Result<Vec<f64>, EngineError> {
    let sample = Sample::extract(panel, spec, MIN_RESIDUAL_POINTS)?;
    if params.gamma.len() != spec.mean_regressors.len() {
        return Err(EngineError::LengthMismatch);
    }
    let mut out = Vec::new();
    residuals_into(
        &sample.returns,
        &sample.lagged_returns,
        &sample.mean_x,
        params,
        &mut out,
    );
    Ok(out)
}

/// Log-likelihood as a function of the unconstrained vector, evaluated on
/// returns divided by their standard deviation so that θ stays of order one.
/// Parameters reported by the fit are on the original return scale.
#[derive(Debug, Clone)]
pub struct Objective {
    layout: Layout,
    y: Vec<f64>,
    y_lag: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    scale: f64,
}

/// Everything computed along one likelihood evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub params: ParamVector,
    pub log_likelihood: f64,
}

impl Objective {
    /// Objective over the estimation sample of `panel`.
    pub fn new(panel: &HourlyPanel, spec: &GarchSpec) -> Result<Self, EngineError> {
        Self::from_sample(&Sample::extract(panel, spec, 2)?, spec.layout())
    }

    pub(crate) fn from_sample(sample: &Sample, layout: Layout) -> Result<Self, EngineError> {
        let scale = sample_variance(&sample.returns).sqrt();
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(EngineError::DegenerateReturns);
        }
        Ok(Self {
            layout,
            y: sample.returns.iter().map(|v| v / scale).collect(),
            y_lag: sample.lagged_returns.iter().map(|v| v / scale).collect(),
            x: sample.mean_x.clone(),
            z: sample.var_z.clone(),
            scale,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Standard deviation the returns were divided by.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Parameters on the scaled returns implied by θ.
    pub fn scaled_params(&self, theta: &[f64]) -> ParamVector {
        from_unconstrained(theta, &self.layout)
    }

    /// Map parameters of the scaled problem to the original return scale.
    pub fn unscale(&self, p: &ParamVector) -> ParamVector {
        let s = self.scale;
        let s2 = s * s;
        ParamVector {
            beta0: p.beta0 * s,
            beta1: p.beta1,
            gamma: p.gamma.iter().map(|g| g * s).collect(),
            omega: p.omega * s2,
            alpha: p.alpha.clone(),
            beta: p.beta.clone(),
            delta: p.delta.iter().map(|d| d * s2).collect(),
        }
    }

    /// Inverse of [`Objective::unscale`].
    pub fn rescale(&self, p: &ParamVector) -> ParamVector {
        let s = self.scale;
        let s2 = s * s;
        ParamVector {
            beta0: p.beta0 / s,
            beta1: p.beta1,
            gamma: p.gamma.iter().map(|g| g / s).collect(),
            omega: p.omega / s2,
            alpha: p.alpha.clone(),
            beta: p.beta.clone(),
            delta: p.delta.iter().map(|d| d / s2).collect(),
        }
    }

    /// Per-observation log-likelihood contributions on the scaled returns,
    /// accumulated into `contrib` when given. Returns the total.
    fn evaluate_into(&self, params: &ParamVector, mut contrib: Option<&mut Vec<f64>>) -> f64 {
        let mut resid = Vec::with_capacity(self.y.len());
        residuals_into(&self.y, &self.y_lag, &self.x, params, &mut resid);
        let init = sample_variance(&resid);
        if !(init > 0.0) || !init.is_finite() {
            return f64::NEG_INFINITY;
        }
        let sq: Vec<f64> = resid.iter().map(|e| e * e).collect();
        let mut var = Vec::with_capacity(sq.len());
        if let Some(c) = contrib.as_deref_mut() {
            c.clear();
        }
        let mut ll = 0.0;
        for (t, e2) in sq.iter().enumerate() {
            let x = exog_term(&params.delta, &self.z, t);
            let (v, _) = variance_step(params, &sq, &var, x, init, t);
            var.push(v);
            let l = -HALF_LN_2PI - 0.5 * v.ln() - e2 / (2.0 * v);
            if let Some(c) = contrib.as_deref_mut() {
                c.push(l);
            }
            ll += l;
        }
        if ll.is_finite() {
            ll
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Log-likelihood of the scaled returns at θ; `-inf` where the model is
    /// numerically degenerate.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.evaluate_into(&self.scaled_params(theta), None)
    }

    pub(crate) fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let params = self.scaled_params(theta);
        let log_likelihood = self.evaluate_into(&params, None);
        Evaluation {
            params,
            log_likelihood,
        }
    }

    pub(crate) fn contributions(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.y.len());
        self.evaluate_into(&self.scaled_params(theta), Some(&mut c));
        c
    }

    /// Gradient of [`Objective::log_likelihood`] as used by the optimizer.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        super::optimize::central_gradient(|t| self.log_likelihood(t), theta)
    }
}
