use std::path::{Path, PathBuf};

use super::ReportError;
use crate::ingest::COL_RETURN;
use crate::panel::HourlyPanel;

pub const PRICE_PLOT_FILE: &str = "price.csv";
pub const RETURNS_PLOT_FILE: &str = "returns.csv";

/// `price.csv` with one row per grid hour and `returns.csv` with one row
/// per hour after the first; missing values are empty fields.
pub fn emit_plot_data(panel: &HourlyPanel, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let price = panel
        .price()
        .ok_or_else(|| ReportError::Config("panel has no price column to plot".into()))?;
    let returns = panel.column(COL_RETURN)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    let write =
        |name: &str, header: [&str; 2], rows: Vec<[String; 2]>| -> Result<PathBuf, ReportError> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(|e| ReportError::csv(&path, e))?;
            w.write_record(header)
                .map_err(|e| ReportError::csv(&path, e))?;
            for r in rows {
                w.write_record(&r).map_err(|e| ReportError::csv(&path, e))?;
            }
            w.flush().map_err(|e| ReportError::io(&path, e))?;
            Ok(path)
        };
    let price_rows = (0..price.len())
        .map(|i| {
            [
                price.time(i).epoch_seconds().to_string(),
                cell(price.value(i)),
            ]
        })
        .collect();
    let return_rows = (1..returns.len())
        .map(|i| {
            [
                returns.time(i).epoch_seconds().to_string(),
                cell(returns.value(i)),
            ]
        })
        .collect();
    Ok(vec![
        write(PRICE_PLOT_FILE, ["hour_ts", "price_usd"], price_rows)?,
        write(RETURNS_PLOT_FILE, ["hour_ts", "log_return"], return_rows)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_trades;
    use crate::series::{log_returns, resample_last, Grid, HourlySeries, TimePoint};

    const H0: i64 = 1_388_534_400;

    fn panel_from_prices(prices: Vec<f64>) -> HourlyPanel {
        let start = TimePoint::new(H0).unwrap();
        let grid = Grid::new(start, prices.len()).unwrap();
        let price = HourlySeries::observed(crate::panel::PRICE_COLUMN, start, prices).unwrap();
        let r = log_returns(&price)
            .unwrap()
            .reindex(grid)
            .with_name(COL_RETURN);
        HourlyPanel::assemble(grid, Some(price), vec![r], 1).unwrap()
    }

    fn read(path: &Path) -> Vec<Vec<String>> {
        csv::Reader::from_path(path)
            .unwrap()
            .records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn row_counts_follow_grid() {
        let dir = tempfile::tempdir().unwrap();
        let prices: Vec<f64> = (0..1000).map(|i| 100.0 + (i as f64 * 0.1).sin()).collect();
        emit_plot_data(&panel_from_prices(prices), dir.path()).unwrap();
        assert_eq!(read(&dir.path().join(PRICE_PLOT_FILE)).len(), 1000);
        let returns = read(&dir.path().join(RETURNS_PLOT_FILE));
        assert_eq!(returns.len(), 999);
        assert_eq!(returns[0][0], (H0 + 3600).to_string());
    }

    #[test]
    fn constant_price_gives_zero_returns() {
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&panel_from_prices(vec![250.0; 48]), dir.path()).unwrap();
        assert!(read(&dir.path().join(RETURNS_PLOT_FILE))
            .iter()
            .all(|r| r[1] == "0"));
    }

    #[test]
    fn price_file_reingests_to_same_returns() {
        let dir = tempfile::tempdir().unwrap();
        let prices: Vec<f64> = (0..200)
            .map(|i| 500.0 * (1.0 + 0.01 * ((i * 7 % 13) as f64 - 6.0)))
            .collect();
        let panel = panel_from_prices(prices);
        emit_plot_data(&panel, dir.path()).unwrap();
        let mut trades = String::from("unix_ts,price_usd,volume_btc\n");
        for row in read(&dir.path().join(PRICE_PLOT_FILE)) {
            trades.push_str(&format!("{},{},1\n", row[0], row[1]));
        }
        let parsed = parse_trades(trades.as_bytes()).unwrap();
        assert!(parsed.rejects.is_empty());
        let ticks: Vec<_> = parsed
            .records
            .iter()
            .map(|t| (t.time, t.price_usd))
            .collect();
        let price = resample_last(&ticks).unwrap();
        let again = log_returns(&price).unwrap().reindex(price.grid());
        let original = panel.column(COL_RETURN).unwrap();
        for i in 1..200 {
            assert_eq!(again.value(i), original.value(i));
        }
    }
}
