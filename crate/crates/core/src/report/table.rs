use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::diagnostics::TestReport;
use crate::engine::{EngineError, FitResult};
use crate::special::normal_two_sided_p;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const PANEL_SUMMARY_FILE: &str = "panel_summary.csv";
pub const REPORT_FILE: &str = "report.txt";

pub fn coefficient_file(spec_id: &str) -> String {
    format!("coefficients_{spec_id}.csv")
}

/// `***` below 1%, `**` below 5%, `*` below 10%; nothing otherwise or when
/// `p` is unavailable.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Six significant digits; scientific notation outside `[1e-4, 1e10)`.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so that 9.999996 counts as magnitude 10.
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let exponent = rounded.abs().log10().floor() as i32;
    if !(-4..10).contains(&exponent) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// One coefficient. Headline columns refer to raw regressors; the `_std`
/// columns to regressors standardized over the estimation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    /// `mean` or `variance`.
    pub section: String,
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: String,
    pub estimate_std: f64,
    pub std_error_std: f64,
}

impl CoefficientRow {
    pub fn from_fit(fit: &FitResult) -> Vec<CoefficientRow> {
        let layout = fit.spec.layout();
        let raw = fit.raw_params.flatten(&layout);
        let std = fit.params.flatten(&layout);
        let first_variance = 1 + usize::from(layout.include_ar1) + layout.n_gamma;
        let nan = vec![f64::NAN; raw.len()];
        let (raw_se, std_se) = match &fit.inference {
            Some(inf) => (inf.raw_std_errors.clone(), inf.std_errors.clone()),
            None => (nan.clone(), nan),
        };
        (0..raw.len())
            .map(|i| {
                let z = raw[i] / raw_se[i];
                let p = if z.is_nan() {
                    f64::NAN
                } else {
                    normal_two_sided_p(z)
                };
                CoefficientRow {
                    section: if i < first_variance {
                        "mean"
                    } else {
                        "variance"
                    }
                    .into(),
                    term: fit.names[i].clone(),
                    estimate: raw[i],
                    std_error: raw_se[i],
                    z,
                    p_value: p,
                    stars: stars(p).into(),
                    estimate_std: std[i],
                    std_error_std: std_se[i],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    NotConverged,
    Failed,
}

/// Scalar outcome of one model, a row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub spec_id: String,
    pub status: FitStatus,
    pub nobs: usize,
    pub n_params: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub clamp_events: usize,
    /// `hessian`, `sandwich` or `unavailable`.
    pub std_errors: String,
    pub message: String,
}

impl FitSummary {
    pub fn from_fit(spec_id: &str, fit: &FitResult) -> Self {
        let std_errors = match (&fit.inference, fit.covariance) {
            (None, _) => "unavailable",
            (Some(_), crate::engine::CovarianceKind::Hessian) => "hessian",
            (Some(_), crate::engine::CovarianceKind::Sandwich) => "sandwich",
        };
        Self {
            spec_id: spec_id.into(),
            status: if fit.converged {
                FitStatus::Converged
            } else {
                FitStatus::NotConverged
            },
            nobs: fit.nobs,
            n_params: fit.n_params(),
            log_likelihood: fit.log_likelihood,
            aic: fit.aic,
            bic: fit.bic,
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            clamp_events: fit.clamp_events,
            std_errors: std_errors.into(),
            message: if fit.inference.is_none() {
                EngineError::HessianNotPD.to_string()
            } else {
                String::new()
            },
        }
    }

    pub fn failed(spec_id: &str, reason: &str) -> Self {
        Self {
            spec_id: spec_id.into(),
            status: FitStatus::Failed,
            nobs: 0,
            n_params: 0,
            log_likelihood: f64::NAN,
            aic: f64::NAN,
            bic: f64::NAN,
            iterations: 0,
            evaluations: 0,
            clamp_events: 0,
            std_errors: "unavailable".into(),
            message: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecOutcome {
    pub summary: FitSummary,
    /// Empty for failed fits.
    pub coefficients: Vec<CoefficientRow>,
}

impl SpecOutcome {
    pub fn from_fit(spec_id: &str, fit: &FitResult) -> Self {
        Self {
            summary: FitSummary::from_fit(spec_id, fit),
            coefficients: CoefficientRow::from_fit(fit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub test: String,
    pub series: String,
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
    pub evidence: String,
    pub verdict: String,
    pub alpha: f64,
}

impl DiagnosticRow {
    pub fn from_report(series: &str, r: &TestReport) -> Self {
        Self {
            test: r.test_name.into(),
            series: series.into(),
            statistic: r.statistic,
            lags: r.lags,
            nobs: r.nobs,
            evidence: r.evidence.to_string(),
            verdict: r.verdict.to_string(),
            alpha: r.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PanelNote {
    item: String,
    value: String,
}

/// Order by the numeric components of dotted ids (`1.2` < `1.10` < `2.1`),
/// then lexically.
pub fn sort_by_spec_id<T>(items: &mut [T], id: impl Fn(&T) -> &str) {
    let key = |s: &str| -> (Vec<u64>, String) {
        let nums = s
            .split('.')
            .map(|p| p.parse().unwrap_or(u64::MAX))
            .collect();
        (nums, s.to_string())
    };
    items.sort_by_key(|a| key(id(a)));
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ReportError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| ReportError::csv(path, e))?;
    }
    w.flush().map_err(|e| ReportError::io(path, e))
}

pub(crate) fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let file = fs::File::open(path).map_err(|e| ReportError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| ReportError::csv(path, e))
}

pub(crate) fn write_panel_notes(dir: &Path, notes: &[(String, String)]) -> Result<(), ReportError> {
    let rows: Vec<PanelNote> = notes
        .iter()
        .map(|(item, value)| PanelNote {
            item: item.clone(),
            value: value.clone(),
        })
        .collect();
    write_rows(&dir.join(PANEL_SUMMARY_FILE), &rows)
}

/// Everything the combined report is rendered from; the on-disk form is the
/// set of CSV files in one directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub outcomes: Vec<SpecOutcome>,
    pub diagnostics: Vec<DiagnosticRow>,
    /// `(item, value)` notes on panel construction.
    pub panel_notes: Vec<(String, String)>,
}

impl ReportBundle {
    /// Write `summary.csv`, one coefficient table per fitted model and, when
    /// present, the diagnostics and panel notes.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        let summaries: Vec<&FitSummary> = self.outcomes.iter().map(|o| &o.summary).collect();
        write_rows(&dir.join(SUMMARY_FILE), &summaries)?;
        for o in &self.outcomes {
            if o.summary.status != FitStatus::Failed {
                write_rows(
                    &dir.join(coefficient_file(&o.summary.spec_id)),
                    &o.coefficients,
                )?;
            }
        }
        if !self.diagnostics.is_empty() {
            write_rows(&dir.join(DIAGNOSTICS_FILE), &self.diagnostics)?;
        }
        if !self.panel_notes.is_empty() {
            write_panel_notes(dir, &self.panel_notes)?;
        }
        Ok(())
    }

    /// Inverse of [`ReportBundle::write`]; outcomes come back ordered by
    /// spec id.
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let summaries: Vec<FitSummary> = read_rows(&dir.join(SUMMARY_FILE))?;
        let mut outcomes = summaries
            .into_iter()
            .map(|summary| {
                let coefficients = if summary.status == FitStatus::Failed {
                    vec![]
                } else {
                    read_rows(&dir.join(coefficient_file(&summary.spec_id)))?
                };
                Ok(SpecOutcome {
                    summary,
                    coefficients,
                })
            })
            .collect::<Result<Vec<_>, ReportError>>()?;
        sort_by_spec_id(&mut outcomes, |o| &o.summary.spec_id);
        let optional = |name: &str| dir.join(name).exists().then(|| dir.join(name));
        let diagnostics = match optional(DIAGNOSTICS_FILE) {
            Some(p) => read_rows(&p)?,
            None => vec![],
        };
        let panel_notes = match optional(PANEL_SUMMARY_FILE) {
            Some(p) => read_rows::<PanelNote>(&p)?
                .into_iter()
                .map(|n| (n.item, n.value))
                .collect(),
            None => vec![],
        };
        Ok(Self {
            outcomes,
            diagnostics,
            panel_notes,
        })
    }
}

fn term_label(term: &str) -> String {
    if let Some(i) = term.strip_prefix("arch") {
        format!("ARCH({i})")
    } else if let Some(j) = term.strip_prefix("garch") {
        format!("GARCH({j})")
    } else {
        term.to_string()
    }
}

fn is_dynamic(term: &str) -> bool {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    term.strip_prefix("arch").is_some_and(digits) || term.strip_prefix("garch").is_some_and(digits)
}

/// Terms of one block in order of first appearance across models.
fn block_terms(
    outcomes: &[SpecOutcome],
    keep: impl Fn(&CoefficientRow) -> bool,
) -> Vec<(String, String)> {
    let mut terms: Vec<(String, String)> = Vec::new();
    for o in outcomes {
        for r in o.coefficients.iter().filter(|r| keep(r)) {
            if !terms.iter().any(|(s, t)| *s == r.section && *t == r.term) {
                terms.push((r.section.clone(), r.term.clone()));
            }
        }
    }
    terms
}

/// Combined table: one column per model, estimate with stars over the
/// standard error in parentheses, then the likelihood footer, diagnostics
/// and panel notes.
pub fn render_report(bundle: &ReportBundle) -> String {
    let outcomes = &bundle.outcomes;
    let mut lines: Vec<(String, Vec<String>)> = Vec::new();
    let header: Vec<String> = outcomes
        .iter()
        .map(|o| format!("Model {}", o.summary.spec_id))
        .collect();

    let cells = |section: &str, term: &str| -> (Vec<String>, Vec<String>) {
        outcomes
            .iter()
            .map(|o| {
                if o.summary.status == FitStatus::Failed {
                    return ("FAILED".to_string(), String::new());
                }
                match o
                    .coefficients
                    .iter()
                    .find(|r| r.section == section && r.term == term)
                {
                    Some(r) => (
                        format!("{}{}", format_sig6(r.estimate), r.stars),
                        format!("({})", format_sig6(r.std_error)),
                    ),
                    None => (String::new(), String::new()),
                }
            })
            .unzip()
    };
    let block =
        |title: &str, terms: Vec<(String, String)>, lines: &mut Vec<(String, Vec<String>)>| {
            if terms.is_empty() {
                return;
            }
            lines.push((title.to_string(), vec![String::new(); outcomes.len()]));
            for (section, term) in terms {
                let (est, se) = cells(&section, &term);
                lines.push((format!("  {}", term_label(&term)), est));
                lines.push((String::new(), se));
            }
        };
    block(
        "Mean equation",
        block_terms(outcomes, |r| r.section == "mean"),
        &mut lines,
    );
    block(
        "Variance equation",
        block_terms(outcomes, |r| {
            r.section == "variance" && !is_dynamic(&r.term)
        }),
        &mut lines,
    );
    block(
        "Volatility dynamics",
        block_terms(outcomes, |r| r.section == "variance" && is_dynamic(&r.term)),
        &mut lines,
    );

    let footer = |f: &dyn Fn(&FitSummary) -> String| -> Vec<String> {
        outcomes
            .iter()
            .map(|o| {
                if o.summary.status == FitStatus::Failed {
                    "FAILED".into()
                } else {
                    f(&o.summary)
                }
            })
            .collect()
    };
    let rule_at = lines.len();
    lines.push((
        "Log-likelihood".into(),
        footer(&|s| format_sig6(s.log_likelihood)),
    ));
    lines.push(("AIC".into(), footer(&|s| format_sig6(s.aic))));
    lines.push(("BIC".into(), footer(&|s| format_sig6(s.bic))));
    lines.push(("Observations".into(), footer(&|s| s.nobs.to_string())));
    lines.push(("Parameters".into(), footer(&|s| s.n_params.to_string())));
    lines.push((
        "Converged".into(),
        footer(&|s| {
            if s.status == FitStatus::Converged {
                "yes".into()
            } else {
                "no".into()
            }
        }),
    ));

    let label_width = lines
        .iter()
        .map(|l| l.0.chars().count())
        .max()
        .unwrap_or(0)
        .max(20);
    let widths: Vec<usize> = (0..outcomes.len())
        .map(|c| {
            lines
                .iter()
                .map(|l| l.1[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let total = label_width + widths.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(total);
    let row = |label: &str, cols: &[String]| -> String {
        let mut s = format!("{label:<label_width$}");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.trim_end().to_string()
    };

    let mut out = String::new();
    out.push_str(
        "Hourly returns: AR(1)-X mean and GARCH-X variance, Gaussian quasi-maximum likelihood\n",
    );
    out.push_str(&"=".repeat(total));
    out.push('\n');
    out.push_str(&row("", &header));
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for (i, (label, cols)) in lines.iter().enumerate() {
        if i == rule_at {
            out.push_str(&rule);
            out.push('\n');
        }
        out.push_str(&row(label, cols));
        out.push('\n');
    }
    out.push_str(&rule);
    out.push('\n');
    out.push_str(
        "Standard errors in parentheses. *, **, *** denote significance at 10%, 5%, 1%.\n",
    );
    out.push_str(
        "Coefficients refer to raw regressors, lagged one hour; coefficient files also give\n",
    );
    out.push_str(
        "estimates on regressors standardized over the estimation sample. With raw regressors\n",
    );
    out.push_str("the constant and omega absorb the regressor means.\n");
    for o in outcomes {
        let s = &o.summary;
        if !s.message.is_empty() {
            let _ = writeln!(out, "Model {}: {}", s.spec_id, s.message);
        } else if s.status == FitStatus::NotConverged {
            let _ = writeln!(out, "Model {}: optimizer did not converge", s.spec_id);
        }
        if s.clamp_events > 0 {
            let _ = writeln!(
                out,
                "Model {}: variance floor reached {} times",
                s.spec_id, s.clamp_events
            );
        }
    }

    if !bundle.diagnostics.is_empty() {
        out.push_str("\nDiagnostics\n");
        out.push_str(&"-".repeat(11));
        out.push('\n');
        for d in &bundle.diagnostics {
            let _ = writeln!(
                out,
                "{} on {}: statistic {}, lags {}, n {}, {}, {} at {}%",
                d.test,
                d.series,
                format_sig6(d.statistic),
                d.lags,
                d.nobs,
                d.evidence,
                d.verdict.replace('_', " "),
                (d.alpha * 1e4).round() / 1e2
            );
        }
    }
    if !bundle.panel_notes.is_empty() {
        out.push_str("\nPanel\n-----\n");
        for (item, value) in &bundle.panel_notes {
            let _ = writeln!(out, "{item}: {value}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::information_criteria;

    #[test]
    fn stars_follow_thresholds() {
        assert_eq!(stars(0.0), "***");
        assert_eq!(stars(0.0099), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.05), "*");
        assert_eq!(stars(0.0999), "*");
        assert_eq!(stars(0.10), "");
        assert_eq!(stars(f64::NAN), "");
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(-0.123456789), "-0.123457");
        assert_eq!(format_sig6(12345.678), "12345.7");
        assert_eq!(format_sig6(9.9999996), "10.0000");
        assert_eq!(format_sig6(123456789.0), "123456789");
        assert_eq!(format_sig6(3.2e-7), "3.20000e-7");
        assert_eq!(format_sig6(f64::NAN), "NaN");
    }

    fn outcome(id: &str, ll: f64) -> SpecOutcome {
        let k = 4;
        let ic = information_criteria(ll, k, 1000.0).unwrap();
        let row = |section: &str, term: &str, est: f64, se: f64| {
            let z = est / se;
            let p = normal_two_sided_p(z);
            CoefficientRow {
                section: section.into(),
                term: term.into(),
                estimate: est,
                std_error: se,
                z,
                p_value: p,
                stars: stars(p).into(),
                estimate_std: est,
                std_error_std: se,
            }
        };
        SpecOutcome {
            summary: FitSummary {
                spec_id: id.into(),
                status: FitStatus::Converged,
                nobs: 1000,
                n_params: k,
                log_likelihood: ll,
                aic: ic.aic,
                bic: ic.bic,
                iterations: 10,
                evaluations: 20,
                clamp_events: 0,
                std_errors: "hessian".into(),
                message: String::new(),
            },
            coefficients: vec![
                row("mean", "const", 0.01, 0.02),
                row("variance", "omega", 0.05, 0.01),
                row("variance", "arch1", 0.1, 0.02),
                row("variance", "garch1", 0.85, 0.03),
            ],
        }
    }

    #[test]
    fn bundle_round_trips_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = ReportBundle {
            outcomes: vec![outcome("1.10", -5.0), outcome("1.2", 3.25), {
                let mut f = outcome("2.1", 0.0);
                f.summary = FitSummary::failed("2.1", "too short");
                f.coefficients.clear();
                f
            }],
            diagnostics: vec![DiagnosticRow {
                test: "ADF".into(),
                series: "r".into(),
                statistic: -30.5,
                lags: 2,
                nobs: 990,
                evidence: "p<0.01".into(),
                verdict: "reject".into(),
                alpha: 0.05,
            }],
            panel_notes: vec![("return_points".into(), "999".into())],
        };
        bundle.write(dir.path()).unwrap();
        let back = ReportBundle::load(dir.path()).unwrap();
        let ids: Vec<_> = back
            .outcomes
            .iter()
            .map(|o| o.summary.spec_id.as_str())
            .collect();
        assert_eq!(ids, ["1.2", "1.10", "2.1"]);
        assert_eq!(back.outcomes[0], bundle.outcomes[1]);
        assert!(back.outcomes[2].summary.log_likelihood.is_nan());
        assert_eq!(back.diagnostics, bundle.diagnostics);
        let s = &back.outcomes[1].summary;
        let ic = information_criteria(s.log_likelihood, s.n_params, s.nobs as f64).unwrap();
        assert_eq!((s.aic, s.bic), (ic.aic, ic.bic));

        let text = render_report(&back);
        assert!(text.contains("Model 1.2"));
        assert!(text.contains("ARCH(1)") && text.contains("GARCH(1)"));
        assert!(text.contains("0.850000***"));
        assert!(text.contains("(0.0300000)"));
        assert!(text.contains("FAILED"));
        assert!(text.contains("Model 2.1: too short"));
        assert!(text.contains("ADF on r: statistic -30.5000"));
        assert!(text.contains("return_points: 999"));
        assert_eq!(
            text,
            render_report(&ReportBundle::load(dir.path()).unwrap())
        );
    }
}
