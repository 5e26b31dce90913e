use nalgebra::DMatrix;

use super::design::{residuals_into, Objective, RegressorScaling, Sample};
use super::optimize::{
    bfgs, gradient_step, hessian, nelder_mead, QuasiNewtonOptions, SimplexOptions,
};
use super::params::{param_names, to_unconstrained, GarchSpec, Layout, ParamVector};
use super::recursion::{information_criteria, log_likelihood, sample_variance, variance_recursion};
use super::EngineError;
use crate::panel::HourlyPanel;
use crate::series::{HourlySeries, PointFlag};
use crate::special::normal_two_sided_p;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceKind {
    /// Inverse of the negative log-likelihood Hessian.
    #[default]
    Hessian,
    /// `H⁻¹ B H⁻¹` with `B` the outer product of per-observation scores.
    Sandwich,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Convergence threshold on successive log-likelihoods.
    pub tol: f64,
    /// Convergence threshold on the gradient max-norm.
    pub grad_tol: f64,
    pub max_iterations: usize,
    /// Simplex budget; defaults to `60·(k+1)` evaluations for `k` parameters.
    pub simplex_max_evaluations: Option<usize>,
    pub min_obs: usize,
    /// Relative Hessian step: `h_i = hessian_step·(1+|θ_i|)`.
    pub hessian_step: f64,
    pub covariance: CovarianceKind,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            grad_tol: 1e-4,
            max_iterations: 500,
            simplex_max_evaluations: None,
            min_obs: 500,
            hessian_step: 1e-4,
            covariance: CovarianceKind::Hessian,
        }
    }
}

/// Standard errors and tests, aligned with [`FitResult::names`].
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub std_errors: Vec<f64>,
    pub z_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Standard errors of the raw-regressor coefficients.
    pub raw_std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: GarchSpec,
    /// Parameter names in flattened order.
    pub names: Vec<String>,
    /// Estimates with regressors standardized over the estimation sample.
    pub params: ParamVector,
    /// Estimates on raw regressors (intercepts absorb the centering).
    pub raw_params: ParamVector,
    pub scaling: RegressorScaling,
    /// `None` when the Hessian is not positive definite.
    pub inference: Option<Inference>,
    pub covariance: CovarianceKind,
    pub log_likelihood: f64,
    /// Log-likelihood at the starting point.
    pub start_log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub nobs: usize,
    pub conditional_variance: HourlySeries,
    pub residuals: HourlySeries,
    /// Pre-sample value used by the variance recursion.
    pub init_variance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub clamp_events: usize,
    /// Optimum in the unconstrained parameterization of the scaled problem.
    pub theta: Vec<f64>,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn std_errors(&self) -> Option<&[f64]> {
        self.inference.as_ref().map(|i| i.std_errors.as_slice())
    }

    pub fn p_values(&self) -> Option<&[f64]> {
        self.inference.as_ref().map(|i| i.p_values.as_slice())
    }

    /// Index of a parameter in flattened order; regressor names resolve to
    /// the variance equation when `variance` is set.
    pub fn index_of(&self, name: &str, variance: bool) -> Option<usize> {
        let layout = self.spec.layout();
        let first_delta = layout.dim() - layout.n_delta;
        let range = if variance {
            first_delta..layout.dim()
        } else {
            0..first_delta
        };
        range.into_iter().find(|&i| self.names[i] == name)
    }

    pub fn ensure_converged(&self) -> Result<&Self, EngineError> {
        if self.converged {
            Ok(self)
        } else {
            Err(EngineError::NoConvergence {
                iterations: self.iterations,
            })
        }
    }
}

/// Fit by quasi maximum likelihood.
pub fn fit(
    panel: &HourlyPanel,
    spec: &GarchSpec,
    options: &FitOptions,
) -> Result<FitResult, EngineError> {
    fit_with_observer(panel, spec, options, &|_| {})
}

/// [`fit`], calling `observer` with the parameters of every likelihood
/// evaluation (on the scaled returns).
pub fn fit_with_observer(
    panel: &HourlyPanel,
    spec: &GarchSpec,
    options: &FitOptions,
    observer: &(dyn Fn(&ParamVector) + Sync),
) -> Result<FitResult, EngineError> {
    let sample = Sample::extract(panel, spec, options.min_obs)?;
    let layout = spec.layout();
    let objective = Objective::from_sample(&sample, layout)?;
    let negative = |theta: &[f64]| {
        let ev = objective.evaluate(theta);
        observer(&ev.params);
        -ev.log_likelihood
    };

    let theta0 = to_unconstrained(&starting_point(&layout), &layout)?;
    let f0 = negative(&theta0);
    let simplex = nelder_mead(
        negative,
        &theta0,
        &SimplexOptions {
            initial_step: 0.5,
            max_evaluations: options
                .simplex_max_evaluations
                .unwrap_or(60 * (layout.dim() + 1)),
            f_spread: 1e-6 * (1.0 + f0.abs()),
        },
    );
    let polish = bfgs(
        negative,
        |theta| super::optimize::central_gradient(negative, theta),
        &simplex.x,
        &QuasiNewtonOptions {
            max_iterations: options.max_iterations,
            f_tol: options.tol,
            grad_tol: options.grad_tol,
            max_step: 2.0,
        },
    );
    debug_assert!(polish.f <= simplex.f && simplex.f <= f0);
    let theta = polish.x;

    let start = filter(&sample, &objective, &theta0)?;
    let end = filter(&sample, &objective, &theta)?;
    let inference = infer(
        &objective,
        &sample.scaling,
        &theta,
        &end.params,
        options,
        &negative,
    );

    let n = sample.len();
    let ic = information_criteria(end.log_likelihood, layout.dim(), n as f64)?;
    let grid = panel.grid();
    let place = |name: &str, values: &[f64]| {
        let mut v = vec![f64::NAN; grid.len()];
        let mut flags = vec![PointFlag::Missing; grid.len()];
        for (&row, &x) in sample.rows.iter().zip(values) {
            v[row] = x;
            flags[row] = PointFlag::Observed;
        }
        HourlySeries::new(name, grid.start(), v, flags).expect("panel grid is hour aligned")
    };
    Ok(FitResult {
        spec: spec.clone(),
        names: param_names(spec),
        raw_params: sample.scaling.to_raw(&end.params),
        params: end.params,
        scaling: sample.scaling.clone(),
        inference,
        covariance: options.covariance,
        log_likelihood: end.log_likelihood,
        start_log_likelihood: start.log_likelihood,
        aic: ic.aic,
        bic: ic.bic,
        nobs: n,
        conditional_variance: place("conditional_variance", &end.variances),
        residuals: place("residual", &end.residuals),
        init_variance: end.init,
        converged: polish.converged,
        iterations: simplex.iterations + polish.iterations,
        evaluations: simplex.evaluations + polish.evaluations,
        clamp_events: end.clamp_events,
        theta,
    })
}

/// ω = 0.1·var(r), ARCH and GARCH mass 0.05 and 0.80 split evenly, all
/// regression coefficients zero (scaled returns have unit variance).
fn starting_point(layout: &Layout) -> ParamVector {
    ParamVector {
        beta0: 0.0,
        beta1: 0.0,
        gamma: vec![0.0; layout.n_gamma],
        omega: 0.1,
        alpha: vec![0.05 / layout.p as f64; layout.p],
        beta: vec![0.80 / layout.q as f64; layout.q],
        delta: vec![0.0; layout.n_delta],
    }
}

struct Filtered {
    params: ParamVector,
    residuals: Vec<f64>,
    variances: Vec<f64>,
    init: f64,
    clamp_events: usize,
    log_likelihood: f64,
}

/// Residuals, variances and log-likelihood on the original return scale.
fn filter(sample: &Sample, objective: &Objective, theta: &[f64]) -> Result<Filtered, EngineError> {
    let params = objective.unscale(&objective.scaled_params(theta));
    let mut residuals = Vec::with_capacity(sample.len());
    residuals_into(
        &sample.returns,
        &sample.lagged_returns,
        &sample.mean_x,
        &params,
        &mut residuals,
    );
    let init = sample_variance(&residuals);
    let path = variance_recursion(&residuals, &sample.var_z, &params, init)?;
    let log_likelihood = log_likelihood(&residuals, &path.variances)?;
    Ok(Filtered {
        params,
        residuals,
        variances: path.variances,
        init,
        clamp_events: path.clamp_events,
        log_likelihood,
    })
}

fn jacobian(map: impl Fn(&[f64]) -> Vec<f64>, theta: &[f64]) -> DMatrix<f64> {
    let k = theta.len();
    let rows = map(theta).len();
    let mut j = DMatrix::zeros(rows, k);
    let mut probe = theta.to_vec();
    for c in 0..k {
        let h = gradient_step(theta[c]);
        probe[c] = theta[c] + h;
        let up = map(&probe);
        probe[c] = theta[c] - h;
        let down = map(&probe);
        probe[c] = theta[c];
        for r in 0..rows {
            j[(r, c)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    j
}

fn infer(
    objective: &Objective,
    scaling: &RegressorScaling,
    theta: &[f64],
    params: &ParamVector,
    options: &FitOptions,
    negative: &(impl Fn(&[f64]) -> f64 + Sync),
) -> Option<Inference> {
    let layout = objective.layout();
    let k = layout.dim();
    let h = hessian(negative, theta, options.hessian_step);
    let h = DMatrix::from_fn(k, k, |i, j| h[i][j]);
    let h_inv = h.cholesky()?.inverse();
    let cov_theta = match options.covariance {
        CovarianceKind::Hessian => h_inv,
        CovarianceKind::Sandwich => {
            let n = objective.len();
            let mut scores = DMatrix::zeros(n, k);
            let mut probe = theta.to_vec();
            for c in 0..k {
                let step = gradient_step(theta[c]);
                probe[c] = theta[c] + step;
                let up = objective.contributions(&probe);
                probe[c] = theta[c] - step;
                let down = objective.contributions(&probe);
                probe[c] = theta[c];
                for t in 0..n {
                    scores[(t, c)] = (up[t] - down[t]) / (2.0 * step);
                }
            }
            let meat = scores.transpose() * &scores;
            &h_inv * meat * &h_inv
        }
    };
    let natural = |t: &[f64]| {
        objective
            .unscale(&objective.scaled_params(t))
            .flatten(&layout)
    };
    let raw = |t: &[f64]| {
        scaling
            .to_raw(&objective.unscale(&objective.scaled_params(t)))
            .flatten(&layout)
    };
    let std_errors_for = |j: DMatrix<f64>| -> Vec<f64> {
        let cov = &j * &cov_theta * j.transpose();
        (0..cov.nrows())
            .map(|i| {
                let v = cov[(i, i)];
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect()
    };
    let std_errors = std_errors_for(jacobian(natural, theta));
    let raw_std_errors = std_errors_for(jacobian(raw, theta));
    let z_stats: Vec<f64> = params
        .flatten(&layout)
        .iter()
        .zip(&std_errors)
        .map(|(e, s)| e / s)
        .collect();
    let p_values = z_stats.iter().map(|&z| normal_two_sided_p(z)).collect();
    Some(Inference {
        std_errors,
        z_stats,
        p_values,
        raw_std_errors,
    })
}
