use serde::{Deserialize, Serialize};

use super::rng::NormalStream;
use super::SimError;
use crate::engine::{exog_term, variance_step, GarchSpec, Layout, ParamVector};
use crate::ingest::COL_RETURN;
use crate::panel::HourlyPanel;
use crate::series::{Grid, HourlySeries, TimePoint};

/// Exogenous series `x_t = level + d_t`, `d_t = φ d_{t−1} + scale·η_t`,
/// started from its stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub name: String,
    pub level: f64,
    pub persistence: f64,
    pub scale: f64,
}

impl RegressorModel {
    pub fn ar1(name: impl Into<String>, persistence: f64, scale: f64) -> Self {
        Self {
            name: name.into(),
            level: 0.0,
            persistence,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    /// `gamma` and `delta` are each empty or one entry per regressor.
    pub true_params: ParamVector,
    pub seed: u64,
    pub regressors: Vec<RegressorModel>,
    pub burn_in: usize,
    pub include_ar1: bool,
    /// Multiplies every innovation; zero gives a noiseless mean equation.
    pub innovation_scale: f64,
}

impl SimConfig {
    /// GARCH(1,1) with AR(1) mean and no regressors.
    pub fn garch11(n: usize, omega: f64, alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            n,
            true_params: ParamVector {
                beta0: 0.0,
                beta1: 0.0,
                gamma: vec![],
                omega,
                alpha: vec![alpha],
                beta: vec![beta],
                delta: vec![],
            },
            seed,
            regressors: vec![],
            burn_in: 500,
            include_ar1: true,
            innovation_scale: 1.0,
        }
    }

    /// Model specification matching the data-generating process.
    pub fn spec(&self) -> GarchSpec {
        let names: Vec<String> = self.regressors.iter().map(|r| r.name.clone()).collect();
        let pick = |len: usize| if len == 0 { vec![] } else { names.clone() };
        GarchSpec {
            mean_regressors: pick(self.true_params.gamma.len()),
            variance_regressors: pick(self.true_params.delta.len()),
            p: self.true_params.alpha.len(),
            q: self.true_params.beta.len(),
            include_ar1: self.include_ar1,
        }
    }

    pub fn layout(&self) -> Layout {
        self.spec().layout()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidConfig(m));
        if self.n == 0 {
            return invalid("n must be positive".into());
        }
        let k = self.regressors.len();
        for (label, len) in [
            ("gamma", self.true_params.gamma.len()),
            ("delta", self.true_params.delta.len()),
        ] {
            if len != 0 && len != k {
                return invalid(format!("{label} has {len} entries for {k} regressors"));
            }
        }
        for r in &self.regressors {
            if !(r.persistence.abs() < 1.0) || !(r.scale >= 0.0) || !r.level.is_finite() {
                return invalid(format!("regressor `{}` is not a stationary AR(1)", r.name));
            }
        }
        if !(self.innovation_scale >= 0.0) {
            return invalid("innovation scale must be nonnegative".into());
        }
        self.spec()
            .validate()
            .and_then(|_| self.true_params.validate(&self.layout()))
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if !(self.init_variance() > 0.0) {
            return invalid("regressor levels make the long-run variance nonpositive".into());
        }
        Ok(())
    }

    /// Long-run variance at the regressor levels; the pre-sample value of
    /// the recursion.
    pub fn init_variance(&self) -> f64 {
        let p = &self.true_params;
        let shift: f64 = p
            .delta
            .iter()
            .zip(&self.regressors)
            .map(|(d, r)| d * r.level)
            .sum();
        (p.omega + shift) / (1.0 - p.persistence())
    }
}

/// Simulated sample after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub returns: Vec<f64>,
    pub innovations: Vec<f64>,
    pub variances: Vec<f64>,
    /// `regressors[k][t]`: regressor `k` at time `t`.
    pub regressors: Vec<Vec<f64>>,
    /// `lagged_regressors[k][t]`: regressor `k` at time `t − 1`, the value
    /// entering both equations at `t`.
    pub lagged_regressors: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub init_variance: f64,
    pub clamp_events: usize,
}

impl SimOutput {
    /// Panel with column `r` and one column per regressor on an hourly grid
    /// starting at `start`.
    pub fn to_panel(&self, start: TimePoint) -> Result<HourlyPanel, SimError> {
        let grid = Grid::new(start, self.returns.len())?;
        let mut cols = vec![HourlySeries::observed(
            COL_RETURN,
            start,
            self.returns.clone(),
        )?];
        for (name, values) in self.names.iter().zip(&self.regressors) {
            cols.push(HourlySeries::observed(name.clone(), start, values.clone())?);
        }
        Ok(HourlyPanel::assemble(grid, None, cols, 1)?)
    }
}

/// Stream indices: 0 for return innovations, `1 + k` for regressor `k`.
pub fn simulate_garch(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let p = &config.true_params;
    let total = config.burn_in + config.n;

    // xs[k][t + 1] = x_{k,t}; xs[k][0] is the pre-sample value.
    let xs: Vec<Vec<f64>> = config
        .regressors
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut rng = NormalStream::new(config.seed, 1 + k as u64);
            let sd0 = m.scale / (1.0 - m.persistence * m.persistence).sqrt();
            let mut d = sd0 * rng.normal();
            let mut path = Vec::with_capacity(total + 1);
            path.push(m.level + d);
            for _ in 0..total {
                d = m.persistence * d + m.scale * rng.normal();
                path.push(m.level + d);
            }
            path
        })
        .collect();
    let lagged: Vec<Vec<f64>> = xs.iter().map(|x| x[..total].to_vec()).collect();
    let var_exog: &[Vec<f64>] = if p.delta.is_empty() { &[] } else { &lagged };

    let init = config.init_variance();
    let mean_level = {
        let shift: f64 = p
            .gamma
            .iter()
            .zip(&config.regressors)
            .map(|(g, r)| g * r.level)
            .sum();
        (p.beta0 + shift) / (1.0 - p.beta1)
    };
    let mut rng = NormalStream::new(config.seed, 0);
    let mut sq = Vec::with_capacity(total);
    let mut variances = Vec::with_capacity(total);
    let mut innovations = Vec::with_capacity(total);
    let mut returns = Vec::with_capacity(total);
    let mut clamp_events = 0;
    let mut prev = mean_level;
    for t in 0..total {
        let x = exog_term(&p.delta, var_exog, t);
        let (v, clamped) = variance_step(p, &sq, &variances, x, init, t);
        clamp_events += usize::from(clamped);
        let e = config.innovation_scale * v.sqrt() * rng.normal();
        let mean = p.beta0
            + p.beta1 * prev
            + p.gamma
                .iter()
                .zip(&lagged)
                .map(|(g, x)| g * x[t])
                .sum::<f64>();
        let r = mean + e;
        variances.push(v);
        sq.push(e * e);
        innovations.push(e);
        returns.push(r);
        prev = r;
    }
    let b = config.burn_in;
    Ok(SimOutput {
        returns: returns[b..].to_vec(),
        innovations: innovations[b..].to_vec(),
        variances: variances[b..].to_vec(),
        regressors: xs.iter().map(|x| x[b + 1..].to_vec()).collect(),
        lagged_regressors: lagged.iter().map(|x| x[b..].to_vec()).collect(),
        names: config.regressors.iter().map(|r| r.name.clone()).collect(),
        init_variance: init,
        clamp_events,
    })
}
