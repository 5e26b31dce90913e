use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use btc_garch::report::{
    read_panel, run_fit, run_ingest, run_pipeline, run_report, run_simulate, run_tests, ExitStatus,
    ReportError, RunConfig, RunOutcome, PANEL_FILE,
};

#[derive(Parser)]
#[command(
    name = "btc-garch",
    version,
    about = "Hourly BitCoin returns: diagnostics and AR(1)-X / GARCH-X fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the hourly panel from the source files.
    Ingest(Common),
    /// ADF on returns and ARCH-LM on AR(1) residuals of a saved panel.
    Test(Common),
    /// Fit models on a saved panel and write coefficient tables and report.
    Fit(Common),
    /// Write synthetic source files with known ground truth.
    Simulate(Common),
    /// Re-render the combined report from the files in the output directory.
    Report(Common),
    /// Ingest, test, fit and report in one run.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; relative paths inside resolve against it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated model ids such as `1.1,1.3`; a bare number picks
    /// from the family selected by `--velocity`.
    #[arg(long, value_delimiter = ',')]
    spec: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `v1` or `v2`.
    #[arg(long)]
    velocity: Option<String>,
    #[arg(long = "lm-lags")]
    lm_lags: Option<usize>,
    /// Lag count or `auto`.
    #[arg(long = "adf-lags")]
    adf_lags: Option<String>,
    /// Saved panel for `test` and `fit`; defaults to `panel.csv` in the
    /// output directory.
    #[arg(long)]
    panel: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, ReportError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if !self.spec.is_empty() {
            cfg.fit.specs = self.spec.clone();
        }
        if let Some(seed) = self.seed {
            cfg.simulate.seed = seed;
        }
        if let Some(v) = &self.velocity {
            cfg.panel.velocity = v.clone();
        }
        if let Some(q) = self.lm_lags {
            cfg.diagnostics.lm_lags = q;
        }
        if let Some(k) = &self.adf_lags {
            cfg.diagnostics.adf_lags = k.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn panel_path(&self, cfg: &RunConfig) -> PathBuf {
        self.panel
            .clone()
            .unwrap_or_else(|| cfg.output.dir.join(PANEL_FILE))
    }
}

fn report_outcome(run: RunOutcome) -> ExitStatus {
    for p in &run.problems {
        eprintln!("error: {p}");
    }
    run.status
}

fn execute(command: Command) -> Result<ExitStatus, ReportError> {
    match command {
        Command::Ingest(c) => {
            let cfg = c.config()?;
            let build = run_ingest(&cfg)?;
            println!(
                "{}: {} hours, {} return points, {} estimation hours",
                cfg.output.dir.join(PANEL_FILE).display(),
                build.panel.grid().len(),
                build.summary.return_points,
                build.summary.mask_count
            );
            Ok(ExitStatus::Success)
        }
        Command::Test(c) => {
            let cfg = c.config()?;
            let panel = read_panel(&c.panel_path(&cfg))?;
            for d in run_tests(&panel, &cfg)? {
                println!(
                    "{} on {}: statistic {:.6}, lags {}, n {}, {}, {}",
                    d.test, d.series, d.statistic, d.lags, d.nobs, d.evidence, d.verdict
                );
            }
            Ok(ExitStatus::Success)
        }
        Command::Fit(c) => {
            let cfg = c.config()?;
            let panel = read_panel(&c.panel_path(&cfg))?;
            Ok(report_outcome(run_fit(&panel, &cfg)?))
        }
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let fx = run_simulate(&cfg)?;
            println!(
                "{}: {} trades, {} chain records, {} days, seed {}",
                cfg.output.dir.display(),
                fx.trades.len(),
                fx.chain.len(),
                fx.daily.len(),
                fx.manifest.seed
            );
            Ok(ExitStatus::Success)
        }
        Command::Report(c) => {
            let dir = match &c.out {
                Some(out) => out.clone(),
                None => c.config()?.output.dir,
            };
            print!("{}", run_report(&dir)?);
            Ok(ExitStatus::Success)
        }
        Command::Pipeline(c) => {
            let cfg = c.config()?;
            let run = run_pipeline(&cfg)?;
            println!("{}", cfg.output.dir.display());
            Ok(report_outcome(run))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = execute(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_status()
    });
    ExitCode::from(status.code() as u8)
}
