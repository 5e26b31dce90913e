use std::path::{Path, PathBuf};

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::registry::{family_ids, registry_with, select, SpecEntry};
use super::ReportError;
use crate::diagnostics::{AdfLags, DEFAULT_LM_LAGS};
use crate::engine::{CovarianceKind, FitOptions};
use crate::ingest::{PanelSettings, VelocityVariant};
use crate::series::TimePoint;
use crate::simulation::PricePanelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sources {
    pub trades: PathBuf,
    pub chain: PathBuf,
    pub daily: PathBuf,
}

impl Default for Sources {
    fn default() -> Self {
        Self {
            trades: "trades.csv".into(),
            chain: "chain.csv".into(),
            daily: "daily.csv".into(),
        }
    }
}

/// First and last hour of the analysis, RFC 3339 or Unix seconds. Either
/// bound defaults to the extent of the trade records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Window {
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelOptions {
    /// `v1` or `v2`; picks the model family for bare spec numbers.
    pub velocity: String,
    pub log_floor: f64,
    pub rate_shift: f64,
    pub max_gap_hours: usize,
}

impl Default for PanelOptions {
    fn default() -> Self {
        let d = PanelSettings::new(
            TimePoint::new(0).expect("epoch is hour aligned"),
            TimePoint::new(3600).expect("aligned"),
        );
        Self {
            velocity: "v1".into(),
            log_floor: d.log_floor,
            rate_shift: d.rate_shift,
            max_gap_hours: d.max_gap_hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticOptions {
    /// Lag count or `auto`.
    pub adf_lags: String,
    pub lm_lags: usize,
    /// 0.01, 0.05 or 0.10.
    pub alpha: f64,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self {
            adf_lags: "auto".into(),
            lm_lags: DEFAULT_LM_LAGS,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Registry ids; empty means the five models of the velocity family.
    pub specs: Vec<String>,
    pub p: usize,
    pub q: usize,
    pub include_ar1: bool,
    pub tol: f64,
    pub grad_tol: f64,
    pub max_iterations: usize,
    pub min_obs: usize,
    pub hessian_step: f64,
    /// `hessian` or `sandwich`.
    pub covariance: String,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            specs: vec![],
            p: 1,
            q: 1,
            include_ar1: true,
            tol: d.tol,
            grad_tol: d.grad_tol,
            max_iterations: d.max_iterations,
            min_obs: d.min_obs,
            hessian_step: d.hessian_step,
            covariance: "hessian".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub seed: u64,
    pub fixture: PricePanelConfig,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            seed: 20_140_101,
            fixture: PricePanelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sources: Sources,
    pub window: Window,
    pub panel: PanelOptions,
    pub diagnostics: DiagnosticOptions,
    pub fit: FitSection,
    pub output: OutputSection,
    pub simulate: SimulateSection,
    /// Entries replacing built-in models of the same id or adding new ones.
    pub registry: Vec<SpecEntry>,
}

fn parse_time(label: &str, s: &str) -> Result<TimePoint, ReportError> {
    let secs = match s.trim().parse::<i64>() {
        Ok(v) => v,
        Err(_) => DateTime::parse_from_rfc3339(s.trim())
            .map_err(|e| ReportError::Config(format!("window {label} `{s}`: {e}")))?
            .timestamp(),
    };
    TimePoint::new(secs).map_err(|e| ReportError::Config(format!("window {label}: {e}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ReportError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`; relative source and output paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ReportError::Config(m) => ReportError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.sources.trades,
            &mut cfg.sources.chain,
            &mut cfg.sources.daily,
            &mut cfg.output.dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        self.velocity()?;
        self.adf_lags()?;
        self.fit_options()?;
        self.window_bounds()?;
        if self.diagnostics.lm_lags == 0 {
            return Err(ReportError::Config("lm_lags must be positive".into()));
        }
        if self.fit.p == 0 || self.fit.q == 0 {
            return Err(ReportError::Config("p and q must be positive".into()));
        }
        self.selected_specs()?;
        Ok(())
    }

    pub fn velocity(&self) -> Result<VelocityVariant, ReportError> {
        self.panel.velocity.parse().map_err(ReportError::Config)
    }

    pub fn adf_lags(&self) -> Result<AdfLags, ReportError> {
        self.diagnostics
            .adf_lags
            .parse()
            .map_err(ReportError::Config)
    }

    pub fn fit_options(&self) -> Result<FitOptions, ReportError> {
        let covariance = match self.fit.covariance.as_str() {
            "hessian" => CovarianceKind::Hessian,
            "sandwich" => CovarianceKind::Sandwich,
            other => {
                return Err(ReportError::Config(format!(
                    "unknown covariance `{other}` (expected hessian or sandwich)"
                )))
            }
        };
        let f = &self.fit;
        if !(f.tol > 0.0 && f.grad_tol > 0.0 && f.hessian_step > 0.0) || f.max_iterations == 0 {
            return Err(ReportError::Config(
                "optimizer tolerances and budgets must be positive".into(),
            ));
        }
        Ok(FitOptions {
            tol: f.tol,
            grad_tol: f.grad_tol,
            max_iterations: f.max_iterations,
            min_obs: f.min_obs,
            hessian_step: f.hessian_step,
            covariance,
            ..FitOptions::default()
        })
    }

    pub fn window_bounds(&self) -> Result<(Option<TimePoint>, Option<TimePoint>), ReportError> {
        let start = self
            .window
            .start
            .as_deref()
            .map(|s| parse_time("start", s))
            .transpose()?;
        let end = self
            .window
            .end
            .as_deref()
            .map(|s| parse_time("end", s))
            .transpose()?;
        if let (Some(a), Some(b)) = (start, end) {
            if b <= a {
                return Err(ReportError::Config(
                    "window end must follow its start".into(),
                ));
            }
        }
        Ok((start, end))
    }

    pub fn specs(&self) -> Result<Vec<SpecEntry>, ReportError> {
        registry_with(&self.registry)
    }

    /// Requested models in request order.
    pub fn selected_specs(&self) -> Result<Vec<SpecEntry>, ReportError> {
        let velocity = self.velocity()?;
        let ids = if self.fit.specs.is_empty() {
            family_ids(velocity)
        } else {
            self.fit.specs.clone()
        };
        select(&self.specs()?, &ids, velocity)
    }

    pub fn panel_settings(
        &self,
        start: TimePoint,
        end: TimePoint,
    ) -> Result<PanelSettings, ReportError> {
        let mut s = PanelSettings::new(start, end);
        s.velocity_variant = self.velocity()?;
        s.log_floor = self.panel.log_floor;
        s.rate_shift = self.panel.rate_shift;
        s.max_gap_hours = self.panel.max_gap_hours;
        Ok(s)
    }
}
