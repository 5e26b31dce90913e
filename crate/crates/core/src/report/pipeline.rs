use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::RunConfig;
use super::plot::emit_plot_data;
use super::registry::SpecEntry;
use super::table::{
    render_report, sort_by_spec_id, DiagnosticRow, FitStatus, FitSummary, ReportBundle,
    SpecOutcome, DIAGNOSTICS_FILE, REPORT_FILE,
};
use super::{engine_status, ExitStatus, ReportError};
use crate::diagnostics::{adf_test, arch_lm_test, DiagnosticError};
use crate::engine::{fit, EngineError, FitResult};
use crate::ingest::{assemble_panel, read_sources, PanelBuild, PanelSummary, COL_RETURN};
use crate::panel::HourlyPanel;
use crate::regression::ols;
use crate::simulation::{simulate_price_panel, PriceFixture};

pub const PANEL_FILE: &str = "panel.csv";
/// Present in an output directory exactly when the run that produced it
/// did not succeed; lists the reasons.
pub const FAILED_MARKER: &str = "FAILED";

/// Exit status of a run with one human-readable line per problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub problems: Vec<String>,
}

impl RunOutcome {
    fn success() -> Self {
        Self {
            status: ExitStatus::Success,
            problems: vec![],
        }
    }

    fn add(&mut self, status: ExitStatus, problem: String) {
        self.status = self.status.worst(status);
        self.problems.push(problem);
    }
}

fn create_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|e| ReportError::io(path, e))
}

/// Build the panel described by `config`. Without an explicit window the
/// panel spans the trade records.
pub fn build_run_panel(config: &RunConfig) -> Result<PanelBuild, ReportError> {
    let s = &config.sources;
    let sources = read_sources(&s.trades, &s.chain, &s.daily)?;
    let (first, last) = match config.window_bounds()? {
        (Some(a), Some(b)) => (a, b),
        (start, end) => {
            let (a, b) = sources.trade_extent().ok_or_else(|| {
                ReportError::Config(format!("{} has no usable trades", s.trades.display()))
            })?;
            (start.unwrap_or(a), end.unwrap_or(b))
        }
    };
    let settings = config.panel_settings(first, last)?;
    Ok(assemble_panel(
        &sources.trades,
        &sources.chain,
        &sources.daily,
        &settings,
    )?)
}

pub fn read_panel(path: &Path) -> Result<HourlyPanel, ReportError> {
    let file = fs::File::open(path).map_err(|e| ReportError::io(path, e))?;
    HourlyPanel::read_csv(file).map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))
}

fn write_panel(panel: &HourlyPanel, dir: &Path) -> Result<(), ReportError> {
    let path = dir.join(PANEL_FILE);
    let file = fs::File::create(&path).map_err(|e| ReportError::io(&path, e))?;
    panel
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| ReportError::csv(&path, e))
}

fn panel_notes(summary: &PanelSummary) -> Vec<(String, String)> {
    let mut notes = vec![
        (
            "return_points".to_string(),
            summary.return_points.to_string(),
        ),
        (
            "estimation_hours".to_string(),
            summary.mask_count.to_string(),
        ),
        (
            "trade_rejects".to_string(),
            summary.trade_rejects.len().to_string(),
        ),
        (
            "chain_rejects".to_string(),
            summary.chain_rejects.len().to_string(),
        ),
        (
            "daily_rejects".to_string(),
            summary.daily_rejects.len().to_string(),
        ),
        ("rate_shift".to_string(), summary.rate_shift.to_string()),
        ("log_floor".to_string(), summary.log_floor.to_string()),
        (
            "velocity2_warmup_hours".to_string(),
            summary.velocity2_warmup_hours.to_string(),
        ),
    ];
    for (col, n) in &summary.clamp_counts {
        notes.push((format!("log_floor_hits_{col}"), n.to_string()));
    }
    notes
}

/// Residuals of the least-squares AR(1) mean over consecutive observed
/// returns.
pub fn ar1_residuals(panel: &HourlyPanel) -> Result<Vec<f64>, ReportError> {
    let r = panel.column(COL_RETURN)?;
    let pairs: Vec<(f64, f64)> = (1..r.len())
        .filter_map(|t| Some((r.value(t)?, r.value(t - 1)?)))
        .collect();
    if pairs.len() < 3 {
        return Err(DiagnosticError::TooShort {
            len: pairs.len(),
            needed: 3,
        }
        .into());
    }
    let x = DMatrix::from_fn(pairs.len(), 2, |i, j| if j == 0 { 1.0 } else { pairs[i].1 });
    let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.0));
    let fit = ols(x, &y).map_err(|_| DiagnosticError::SingularRegression)?;
    Ok(pairs
        .iter()
        .map(|&(y, x)| y - fit.coef[0] - fit.coef[1] * x)
        .collect())
}

/// ADF on observed returns and ARCH-LM on AR(1) mean residuals.
pub fn run_diagnostics(
    panel: &HourlyPanel,
    config: &RunConfig,
) -> Result<Vec<DiagnosticRow>, ReportError> {
    let d = &config.diagnostics;
    let r = panel.column(COL_RETURN)?;
    let returns: Vec<f64> = (0..r.len()).filter_map(|t| r.value(t)).collect();
    let adf = adf_test(&returns, config.adf_lags()?, d.alpha)?;
    let lm = arch_lm_test(&ar1_residuals(panel)?, d.lm_lags, d.alpha)?;
    Ok(vec![
        DiagnosticRow::from_report("returns", &adf),
        DiagnosticRow::from_report("ar1_residuals", &lm),
    ])
}

/// Fit every model concurrently; results come back ordered by spec id.
/// One registry entry with its fit.
pub type SpecFit = (SpecEntry, Result<FitResult, EngineError>);

pub fn fit_specs(
    panel: &HourlyPanel,
    specs: &[SpecEntry],
    config: &RunConfig,
) -> Result<Vec<SpecFit>, ReportError> {
    let options = config.fit_options()?;
    let (p, q, ar1) = (config.fit.p, config.fit.q, config.fit.include_ar1);
    let mut results: Vec<SpecFit> = specs
        .par_iter()
        .map(|e| (e.clone(), fit(panel, &e.garch_spec(p, q, ar1), &options)))
        .collect();
    sort_by_spec_id(&mut results, |r| &r.0.id);
    Ok(results)
}

fn outcomes(results: &[SpecFit], run: &mut RunOutcome) -> Vec<SpecOutcome> {
    results
        .iter()
        .map(|(entry, result)| match result {
            Ok(f) => {
                let o = SpecOutcome::from_fit(&entry.id, f);
                if o.summary.status == FitStatus::NotConverged {
                    run.add(
                        ExitStatus::ConvergenceFailure,
                        format!("model {}: optimizer did not converge", entry.id),
                    );
                }
                o
            }
            Err(e) => {
                run.add(engine_status(e), format!("model {}: {e}", entry.id));
                SpecOutcome {
                    summary: FitSummary::failed(&entry.id, &e.to_string()),
                    coefficients: vec![],
                }
            }
        })
        .collect()
}

/// Write the bundle's CSV files, then render `report.txt` from what was
/// written so that `report` on the directory reproduces it.
pub fn write_fit_outputs(bundle: &ReportBundle, dir: &Path) -> Result<String, ReportError> {
    create_dir(dir)?;
    bundle.write(dir)?;
    run_report(dir)
}

/// Render `report.txt` from the CSV files in `dir`.
pub fn run_report(dir: &Path) -> Result<String, ReportError> {
    let text = render_report(&ReportBundle::load(dir)?);
    write_text(&dir.join(REPORT_FILE), &text)?;
    Ok(text)
}

fn finish(dir: &Path, result: Result<RunOutcome, ReportError>) -> Result<RunOutcome, ReportError> {
    let marker = dir.join(FAILED_MARKER);
    match &result {
        Ok(run) if run.status == ExitStatus::Success => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| ReportError::io(&marker, e))?;
            }
        }
        Ok(run) => write_text(&marker, &(run.problems.join("\n") + "\n"))?,
        Err(e) => {
            if dir.is_dir() {
                // The original error matters more than a failure to mark.
                let _ = fs::write(&marker, format!("{e}\n"));
            }
        }
    }
    result
}

/// Panel → diagnostics → fits → coefficient tables, report and plot data.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome, ReportError> {
    let dir = config.output.dir.clone();
    let specs = config.selected_specs()?;
    let result = (|| {
        let build = build_run_panel(config)?;
        create_dir(&dir)?;
        write_panel(&build.panel, &dir)?;
        emit_plot_data(&build.panel, &dir)?;
        let diagnostics = run_diagnostics(&build.panel, config)?;
        let mut run = RunOutcome::success();
        let results = fit_specs(&build.panel, &specs, config)?;
        let bundle = ReportBundle {
            outcomes: outcomes(&results, &mut run),
            diagnostics,
            panel_notes: panel_notes(&build.summary),
        };
        write_fit_outputs(&bundle, &dir)?;
        Ok(run)
    })();
    finish(&dir, result)
}

/// Sources → `panel.csv` and its construction notes.
pub fn run_ingest(config: &RunConfig) -> Result<PanelBuild, ReportError> {
    let build = build_run_panel(config)?;
    let dir = &config.output.dir;
    create_dir(dir)?;
    write_panel(&build.panel, dir)?;
    super::table::write_panel_notes(dir, &panel_notes(&build.summary))?;
    Ok(build)
}

/// Diagnostics on a saved panel, written to `diagnostics.csv`.
pub fn run_tests(
    panel: &HourlyPanel,
    config: &RunConfig,
) -> Result<Vec<DiagnosticRow>, ReportError> {
    let rows = run_diagnostics(panel, config)?;
    create_dir(&config.output.dir)?;
    super::table::write_rows(&config.output.dir.join(DIAGNOSTICS_FILE), &rows)?;
    Ok(rows)
}

/// Fit the configured models on a saved panel and write the bundle.
pub fn run_fit(panel: &HourlyPanel, config: &RunConfig) -> Result<RunOutcome, ReportError> {
    let dir = config.output.dir.clone();
    let specs = config.selected_specs()?;
    let result = (|| {
        let mut run = RunOutcome::success();
        let results = fit_specs(panel, &specs, config)?;
        let diagnostics_path = dir.join(DIAGNOSTICS_FILE);
        let diagnostics = if diagnostics_path.exists() {
            super::table::read_rows(&diagnostics_path)?
        } else {
            vec![]
        };
        let bundle = ReportBundle {
            outcomes: outcomes(&results, &mut run),
            diagnostics,
            panel_notes: vec![],
        };
        write_fit_outputs(&bundle, &dir)?;
        Ok(run)
    })();
    finish(&dir, result)
}

/// Synthetic source files with known ground truth, written to the output
/// directory.
pub fn run_simulate(config: &RunConfig) -> Result<PriceFixture, ReportError> {
    let mut fixture = config.simulate.fixture.clone();
    fixture.seed = config.simulate.seed;
    let fx = simulate_price_panel(&fixture)?;
    fx.write(&config.output.dir)?;
    Ok(fx)
}
