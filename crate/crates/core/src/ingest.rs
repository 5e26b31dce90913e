//! Source parsing and regressor construction.
//!
//! Three CSV shapes feed the panel: exchange trades, blockchain statistics
//! and daily macro/stock series. From them we derive the hourly price and
//! its log returns, traded volume, active addresses, the per-minute total
//! coin stock, two velocity proxies and the (shifted) real interest rate.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::panel::{HourlyPanel, PanelError, PRICE_COLUMN};
use crate::series::{
    log_returns, resample_ticks, safe_log, Aggregation, Grid, HourlySeries, PointFlag, SeriesError,
    TimePoint,
};

pub const TRADES_HEADER: [&str; 3] = ["unix_ts", "price_usd", "volume_btc"];
pub const CHAIN_HEADER: [&str; 5] = [
    "unix_ts",
    "tx_volume_btc",
    "tx_count",
    "unique_addresses",
    "avg_block_time_minutes",
];
pub const DAILY_HEADER: [&str; 3] = ["date", "total_btc", "tips_rate"];

pub const COL_RETURN: &str = "r";
pub const COL_LOGVOLUME: &str = "logvolume";
pub const COL_LOGNO: &str = "logno";
pub const COL_LOGVELOCITY: &str = "logvelocity";
pub const COL_LOGVELOCITY2: &str = "logvelocity2";
pub const COL_LOGTOT_BTC: &str = "logtot_btc";
pub const COL_LOGR_RATE: &str = "logr_rate";

/// Panel column order, as serialized.
pub const PANEL_COLUMNS: [&str; 7] = [
    COL_RETURN,
    COL_LOGVOLUME,
    COL_LOGNO,
    COL_LOGVELOCITY,
    COL_LOGVELOCITY2,
    COL_LOGTOT_BTC,
    COL_LOGR_RATE,
];

const DAY: i64 = 86_400;
/// Trailing window for the smoothed coin base, in hours (30 days).
pub const VELOCITY2_WINDOW: usize = 720;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("no valid rows")]
    NoValidRows,
    #[error("no total_btc anchor for day {0}")]
    MissingAnchor(String),
    #[error("non-positive block time at hour index {0}")]
    NonPositiveBlockTime(usize),
    #[error("series `{a}` and `{b}` are on different grids")]
    GridMismatch { a: String, b: String },
    #[error("non-positive coin stock at hour index {0}")]
    NonPositiveStock(usize),
    #[error("no daily value at or before the window start")]
    NoAnchorBeforeWindow,
    #[error("window {start}..{end} is not covered by the sources")]
    WindowUncovered { start: i64, end: i64 },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Source {
        path: PathBuf,
        source: Box<IngestError>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeRecord {
    pub time: TimePoint,
    pub price_usd: f64,
    pub volume_btc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRecord {
    pub time: TimePoint,
    pub tx_volume_btc: f64,
    pub tx_count: u64,
    pub unique_addresses: u64,
    pub avg_block_time_minutes: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub total_btc: Option<f64>,
    pub tips_rate: Option<f64>,
}

impl DailyRecord {
    pub fn day_start(&self) -> TimePoint {
        day_start(self.date)
    }
}

fn day_start(date: NaiveDate) -> TimePoint {
    let secs = date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp();
    TimePoint::new(secs.max(0)).expect("nonnegative")
}

fn date_of(t: TimePoint) -> NaiveDate {
    chrono::DateTime::from_timestamp(t.epoch_seconds(), 0)
        .expect("timestamp in range")
        .date_naive()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    FieldCount(usize),
    BadNumber(&'static str),
    NegativeTime,
    NonPositivePrice,
    NegativeVolume,
    NegativeCount,
    NonPositiveBlockTime,
    BadDate,
    AllFieldsMissing,
    NonPositiveStock,
    NonMonotoneStock,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::FieldCount(n) => write!(f, "FieldCount({n})"),
            RejectReason::BadNumber(field) => write!(f, "BadNumber({field})"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// A malformed source row, kept for the rejects report.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

fn is_missing_marker(s: &str) -> bool {
    s.is_empty() || s == "."
}

/// Rows paired with their 1-based line numbers, plus rejects.
type LinedRows<T> = (Vec<(usize, T)>, Vec<Reject>);

fn parse_rows<R: Read, T>(
    input: R,
    expected: &[&str],
    mut row: impl FnMut(&csv::StringRecord) -> Result<T, RejectReason>,
) -> Result<LinedRows<T>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != expected.len() {
            rejects.push(Reject {
                line,
                reason: RejectReason::FieldCount(rec.len()),
            });
            continue;
        }
        match row(&rec) {
            Ok(r) => records.push((line, r)),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    if records.is_empty() {
        return Err(IngestError::NoValidRows);
    }
    Ok((records, rejects))
}

fn sorted_by_time<T>(
    (mut rows, rejects): LinedRows<T>,
    key: impl Fn(&T) -> TimePoint,
) -> Parsed<T> {
    rows.sort_by_key(|(_, r)| key(r));
    Parsed {
        records: rows.into_iter().map(|(_, r)| r).collect(),
        rejects,
    }
}

fn num(s: &str, field: &'static str) -> Result<f64, RejectReason> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or(RejectReason::BadNumber(field))
}

fn time(s: &str) -> Result<TimePoint, RejectReason> {
    let secs: i64 = s.parse().map_err(|_| RejectReason::BadNumber("unix_ts"))?;
    TimePoint::new(secs).map_err(|_| RejectReason::NegativeTime)
}

fn count(s: &str, field: &'static str) -> Result<u64, RejectReason> {
    let v = num(s, field)?;
    if v < 0.0 {
        return Err(RejectReason::NegativeCount);
    }
    if v.fract() != 0.0 {
        return Err(RejectReason::BadNumber(field));
    }
    Ok(v as u64)
}

/// Parse `unix_ts,price_usd,volume_btc`. Output is sorted by time.
pub fn parse_trades<R: Read>(input: R) -> Result<Parsed<TradeRecord>, IngestError> {
    let rows = parse_rows(input, &TRADES_HEADER, |rec| {
        let time = time(&rec[0])?;
        let price_usd = num(&rec[1], "price_usd")?;
        let volume_btc = num(&rec[2], "volume_btc")?;
        if price_usd <= 0.0 {
            return Err(RejectReason::NonPositivePrice);
        }
        if volume_btc < 0.0 {
            return Err(RejectReason::NegativeVolume);
        }
        Ok(TradeRecord {
            time,
            price_usd,
            volume_btc,
        })
    })?;
    Ok(sorted_by_time(rows, |r| r.time))
}

/// Parse the blockchain statistics file. Output is sorted by time.
pub fn parse_chain<R: Read>(input: R) -> Result<Parsed<ChainRecord>, IngestError> {
    let rows = parse_rows(input, &CHAIN_HEADER, |rec| {
        let time = time(&rec[0])?;
        let tx_volume_btc = num(&rec[1], "tx_volume_btc")?;
        if tx_volume_btc < 0.0 {
            return Err(RejectReason::NegativeVolume);
        }
        let tx_count = count(&rec[2], "tx_count")?;
        let unique_addresses = count(&rec[3], "unique_addresses")?;
        let avg_block_time_minutes = num(&rec[4], "avg_block_time_minutes")?;
        if avg_block_time_minutes <= 0.0 {
            return Err(RejectReason::NonPositiveBlockTime);
        }
        Ok(ChainRecord {
            time,
            tx_volume_btc,
            tx_count,
            unique_addresses,
            avg_block_time_minutes,
        })
    })?;
    Ok(sorted_by_time(rows, |r| r.time))
}

/// Parse `date,total_btc,tips_rate`; `.` or empty marks a missing value.
/// Rows whose stock falls below an earlier row are rejected.
pub fn parse_daily<R: Read>(input: R) -> Result<Parsed<DailyRecord>, IngestError> {
    let (mut rows, mut rejects) = parse_rows(input, &DAILY_HEADER, |rec| {
        let date =
            NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| RejectReason::BadDate)?;
        let opt = |s: &str, field| -> Result<Option<f64>, RejectReason> {
            if is_missing_marker(s) {
                Ok(None)
            } else {
                num(s, field).map(Some)
            }
        };
        let total_btc = opt(&rec[1], "total_btc")?;
        let tips_rate = opt(&rec[2], "tips_rate")?;
        if total_btc.is_none() && tips_rate.is_none() {
            return Err(RejectReason::AllFieldsMissing);
        }
        if total_btc.is_some_and(|v| v <= 0.0) {
            return Err(RejectReason::NonPositiveStock);
        }
        Ok(DailyRecord {
            date,
            total_btc,
            tips_rate,
        })
    })?;
    rows.sort_by_key(|(_, r)| r.date);
    let mut records = Vec::with_capacity(rows.len());
    let mut last_total = f64::NEG_INFINITY;
    for (line, r) in rows {
        if let Some(total) = r.total_btc {
            if total < last_total {
                rejects.push(Reject {
                    line,
                    reason: RejectReason::NonMonotoneStock,
                });
                continue;
            }
            last_total = total;
        }
        records.push(r);
    }
    rejects.sort_by_key(|r| r.line);
    Ok(Parsed { records, rejects })
}

/// Block reward as a function of the coins already issued: the initial
/// reward halves every `halving_interval` blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSchedule {
    pub initial_reward: f64,
    pub halving_interval: u64,
}

impl Default for RewardSchedule {
    fn default() -> Self {
        Self {
            initial_reward: 50.0,
            halving_interval: 210_000,
        }
    }
}

impl RewardSchedule {
    /// Reward per block once `stock` coins exist.
    pub fn reward_at_stock(&self, stock: f64) -> f64 {
        if self.initial_reward <= 0.0 || self.halving_interval == 0 {
            return 0.0;
        }
        let mut issued = 0.0;
        let mut reward = self.initial_reward;
        for _ in 0..64 {
            issued += reward * self.halving_interval as f64;
            if stock < issued {
                return reward;
            }
            reward /= 2.0;
        }
        0.0
    }
}

/// Total coin stock at the end of each hour of `block_time`'s grid.
///
/// The stock is anchored to the daily total at the start of each day that
/// has one and advanced minute by minute at `reward / block_time`. An
/// anchor below the running stock never pulls it down, so the result is
/// nondecreasing.
pub fn total_stock_hourly(
    daily: &[DailyRecord],
    block_time: &HourlySeries,
    schedule: &RewardSchedule,
) -> Result<HourlySeries, IngestError> {
    let grid = block_time.grid();
    if grid.is_empty() {
        return Err(SeriesError::EmptyInput.into());
    }
    let anchor_for = |day: NaiveDate| {
        daily
            .iter()
            .find(|r| r.date == day)
            .and_then(|r| r.total_btc)
    };
    let first_hour = grid.start();
    let first_day = date_of(first_hour);
    let mut stock =
        anchor_for(first_day).ok_or_else(|| IngestError::MissingAnchor(first_day.to_string()))?;

    let mut last_bt: Option<f64> = None;
    let mut bt_at = |t: usize| -> Result<(f64, bool), IngestError> {
        match block_time.value(t) {
            Some(v) if v <= 0.0 => Err(IngestError::NonPositiveBlockTime(t)),
            Some(v) => {
                last_bt = Some(v);
                Ok((v, block_time.flags()[t] == PointFlag::ForwardFilled))
            }
            None => match last_bt {
                Some(v) => Ok((v, true)),
                None => {
                    // Before any observation: borrow the first one available.
                    let first = (t..grid.len())
                        .find_map(|s| block_time.value(s))
                        .ok_or(IngestError::NonPositiveBlockTime(t))?;
                    if first <= 0.0 {
                        return Err(IngestError::NonPositiveBlockTime(t));
                    }
                    Ok((first, true))
                }
            },
        }
    };
    // One step per hour unless a halving falls inside it.
    let advance_hour = |stock: &mut f64, bt: f64| {
        let reward = schedule.reward_at_stock(*stock);
        let hourly = 60.0 * reward / bt;
        if schedule.reward_at_stock(*stock + hourly) == reward {
            *stock += hourly;
        } else {
            for _ in 0..60 {
                *stock += schedule.reward_at_stock(*stock) / bt;
            }
        }
    };

    // Hours of the first day that precede the grid.
    let pre = day_start(first_day).hours_until(first_hour);
    if pre > 0 {
        let (bt, _) = bt_at(0)?;
        for _ in 0..pre {
            advance_hour(&mut stock, bt);
        }
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for t in 0..grid.len() {
        let hour = grid.hour(t);
        if t > 0 && hour.epoch_seconds() % DAY == 0 {
            if let Some(anchor) = anchor_for(date_of(hour)) {
                stock = stock.max(anchor);
            }
        }
        let (bt, filled) = bt_at(t)?;
        advance_hour(&mut stock, bt);
        values.push(stock);
        flags.push(if filled {
            PointFlag::ForwardFilled
        } else {
            PointFlag::Observed
        });
    }
    Ok(HourlySeries::new("tot_btc", grid.start(), values, flags)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityVariant {
    /// Hourly on-chain volume over the end-of-hour stock.
    #[default]
    V1,
    /// Hourly on-chain volume over the trailing 30-day mean stock.
    V2,
}

impl std::str::FromStr for VelocityVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            other => Err(format!(
                "unknown velocity variant `{other}` (expected v1 or v2)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub series: HourlySeries,
    /// Leading hours computed from an expanding rather than full window.
    pub warmup_hours: usize,
}

pub fn velocity(
    tx_volume: &HourlySeries,
    stock: &HourlySeries,
    variant: VelocityVariant,
) -> Result<Velocity, IngestError> {
    if tx_volume.grid() != stock.grid() {
        return Err(IngestError::GridMismatch {
            a: tx_volume.name().into(),
            b: stock.name().into(),
        });
    }
    for (i, (&s, f)) in stock.values().iter().zip(stock.flags()).enumerate() {
        if !f.is_missing() && s <= 0.0 {
            return Err(IngestError::NonPositiveStock(i));
        }
    }
    let n = stock.len();
    let base: Vec<Option<f64>> = match variant {
        VelocityVariant::V1 => (0..n).map(|t| stock.value(t)).collect(),
        VelocityVariant::V2 => (0..n)
            .map(|t| {
                let lo = (t + 1).saturating_sub(VELOCITY2_WINDOW);
                let window: Option<Vec<f64>> = (lo..=t).map(|s| stock.value(s)).collect();
                window.map(|w| w.iter().sum::<f64>() / w.len() as f64)
            })
            .collect(),
    };
    let mut values = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for (t, b) in base.into_iter().enumerate() {
        match (tx_volume.value(t), b) {
            (Some(v), Some(b)) => {
                values.push(v / b);
                let filled = tx_volume.flags()[t] == PointFlag::ForwardFilled
                    || stock.flags()[t] == PointFlag::ForwardFilled;
                flags.push(if filled {
                    PointFlag::ForwardFilled
                } else {
                    PointFlag::Observed
                });
            }
            _ => {
                values.push(f64::NAN);
                flags.push(PointFlag::Missing);
            }
        }
    }
    let warmup_hours = match variant {
        VelocityVariant::V1 => 0,
        VelocityVariant::V2 => n.min(VELOCITY2_WINDOW - 1),
    };
    let name = match variant {
        VelocityVariant::V1 => "velocity",
        VelocityVariant::V2 => "velocity2",
    };
    Ok(Velocity {
        series: HourlySeries::new(name, stock.start(), values, flags)?,
        warmup_hours,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DailyField {
    TotalBtc,
    TipsRate,
}

impl DailyField {
    fn get(self, r: &DailyRecord) -> Option<f64> {
        match self {
            DailyField::TotalBtc => r.total_btc,
            DailyField::TipsRate => r.tips_rate,
        }
    }
}

/// Spread a daily series over `grid`: each hour carries the most recent
/// daily value; hours on later days than the observation are forward-filled.
pub fn forward_fill_daily(
    daily: &[DailyRecord],
    field: DailyField,
    grid: Grid,
) -> Result<HourlySeries, IngestError> {
    let obs: Vec<(TimePoint, f64)> = daily
        .iter()
        .filter_map(|r| field.get(r).map(|v| (r.day_start(), v)))
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    let mut k = 0usize;
    let mut current: Option<(TimePoint, f64)> = None;
    for t in 0..grid.len() {
        let hour = grid.hour(t);
        while k < obs.len() && obs[k].0 <= hour {
            current = Some(obs[k]);
            k += 1;
        }
        let (day, v) = current.ok_or(IngestError::NoAnchorBeforeWindow)?;
        values.push(v);
        flags.push(if hour.epoch_seconds() - day.epoch_seconds() < DAY {
            PointFlag::Observed
        } else {
            PointFlag::ForwardFilled
        });
    }
    let name = match field {
        DailyField::TotalBtc => "total_btc",
        DailyField::TipsRate => "tips_rate",
    };
    Ok(HourlySeries::new(name, grid.start(), values, flags)?)
}

/// Everything [`assemble_panel`] needs besides the source records.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSettings {
    pub window_start: TimePoint,
    pub window_end: TimePoint,
    pub velocity_variant: VelocityVariant,
    pub log_floor: f64,
    /// Percentage points added to the interest rate before taking logs.
    pub rate_shift: f64,
    /// Longest run of empty hours that is filled rather than marked missing.
    pub max_gap_hours: usize,
    pub reward_schedule: RewardSchedule,
}

impl PanelSettings {
    pub fn new(window_start: TimePoint, window_end: TimePoint) -> Self {
        Self {
            window_start,
            window_end,
            velocity_variant: VelocityVariant::V1,
            log_floor: 1e-8,
            rate_shift: 5.0,
            max_gap_hours: 24,
            reward_schedule: RewardSchedule::default(),
        }
    }

    pub fn grid(&self) -> Result<Grid, IngestError> {
        let start = self.window_start.hour_bucket();
        let end = self.window_end.hour_bucket();
        if end <= start {
            return Err(IngestError::InvalidRecipe(format!(
                "window start {} must precede end {}",
                self.window_start, self.window_end
            )));
        }
        Ok(Grid::spanning(start, end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecipe {
    pub settings: PanelSettings,
    pub trades_path: PathBuf,
    pub chain_path: PathBuf,
    pub daily_path: PathBuf,
}

/// Side information from panel construction, surfaced in reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelSummary {
    pub trade_rejects: Vec<Reject>,
    pub chain_rejects: Vec<Reject>,
    pub daily_rejects: Vec<Reject>,
    /// `(column, clamped points)` for every logged column.
    pub clamp_counts: Vec<(String, usize)>,
    pub velocity2_warmup_hours: usize,
    pub rate_shift: f64,
    pub log_floor: f64,
    pub mask_count: usize,
    pub return_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelBuild {
    pub panel: HourlyPanel,
    pub summary: PanelSummary,
}

fn check_coverage<T>(
    records: &[T],
    at: impl Fn(&T) -> TimePoint,
    grid: Grid,
) -> Result<(), IngestError> {
    let uncovered = || IngestError::WindowUncovered {
        start: grid.start().epoch_seconds(),
        end: grid.end().epoch_seconds(),
    };
    let first = records.first().map(&at).ok_or_else(uncovered)?;
    let last = records.last().map(&at).ok_or_else(uncovered)?;
    if first.hour_bucket() > grid.start() || last.hour_bucket() < grid.start() {
        return Err(uncovered());
    }
    Ok(())
}

/// Join parsed sources into the regression panel.
pub fn assemble_panel(
    trades: &Parsed<TradeRecord>,
    chain: &Parsed<ChainRecord>,
    daily: &Parsed<DailyRecord>,
    settings: &PanelSettings,
) -> Result<PanelBuild, IngestError> {
    let grid = settings.grid()?;
    check_coverage(&trades.records, |r| r.time, grid)?;
    check_coverage(&chain.records, |r| r.time, grid)?;
    let gap = Some(settings.max_gap_hours);

    let ticks = |f: &dyn Fn(&TradeRecord) -> f64| -> Vec<(TimePoint, f64)> {
        trades.records.iter().map(|r| (r.time, f(r))).collect()
    };
    let chain_ticks = |f: &dyn Fn(&ChainRecord) -> f64| -> Vec<(TimePoint, f64)> {
        chain.records.iter().map(|r| (r.time, f(r))).collect()
    };

    let price = resample_ticks(
        PRICE_COLUMN,
        &ticks(&|r| r.price_usd),
        grid,
        Aggregation::Last,
        gap,
    )?;
    let volume = resample_ticks(
        "volume",
        &ticks(&|r| r.volume_btc),
        grid,
        Aggregation::Sum,
        gap,
    )?;
    let tx_volume = resample_ticks(
        "tx_volume",
        &chain_ticks(&|r| r.tx_volume_btc),
        grid,
        Aggregation::Sum,
        gap,
    )?;
    let addresses = resample_ticks(
        "unique_addresses",
        &chain_ticks(&|r| r.unique_addresses as f64),
        grid,
        Aggregation::Sum,
        gap,
    )?;
    let block_time = resample_ticks(
        "block_time",
        &chain_ticks(&|r| r.avg_block_time_minutes),
        grid,
        Aggregation::Last,
        gap,
    )?;

    let stock = total_stock_hourly(&daily.records, &block_time, &settings.reward_schedule)?;
    let v1 = velocity(&tx_volume, &stock, VelocityVariant::V1)?;
    let v2 = velocity(&tx_volume, &stock, VelocityVariant::V2)?;
    let rate = forward_fill_daily(&daily.records, DailyField::TipsRate, grid)?;
    let shifted_rate = rate.map_values("rate_shifted", |v| v + settings.rate_shift);

    let returns = log_returns(&price)?;
    let returns = returns.reindex(grid).with_name(COL_RETURN);

    let mut clamp_counts = Vec::new();
    let mut logged = |s: &HourlySeries, name: &str| -> Result<HourlySeries, IngestError> {
        let out = safe_log(s, settings.log_floor)?;
        clamp_counts.push((name.to_string(), out.clamped));
        Ok(out.series.with_name(name))
    };
    let columns = vec![
        returns,
        logged(&volume, COL_LOGVOLUME)?,
        logged(&addresses, COL_LOGNO)?,
        logged(&v1.series, COL_LOGVELOCITY)?,
        logged(&v2.series, COL_LOGVELOCITY2)?,
        logged(&stock, COL_LOGTOT_BTC)?,
        logged(&shifted_rate, COL_LOGR_RATE)?,
    ];
    let return_points = columns[0].len() - columns[0].count_flag(PointFlag::Missing);
    let panel = HourlyPanel::assemble(grid, Some(price), columns, 1)?;
    Ok(PanelBuild {
        summary: PanelSummary {
            trade_rejects: trades.rejects.clone(),
            chain_rejects: chain.rejects.clone(),
            daily_rejects: daily.rejects.clone(),
            clamp_counts,
            velocity2_warmup_hours: v2.warmup_hours,
            rate_shift: settings.rate_shift,
            log_floor: settings.log_floor,
            mask_count: panel.mask_count(),
            return_points,
        },
        panel,
    })
}

fn parse_file<T>(
    path: &Path,
    parse: impl Fn(File) -> Result<Parsed<T>, IngestError>,
) -> Result<Parsed<T>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(file).map_err(|e| IngestError::Source {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Parsed contents of the three source files.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecords {
    pub trades: Parsed<TradeRecord>,
    pub chain: Parsed<ChainRecord>,
    pub daily: Parsed<DailyRecord>,
}

impl SourceRecords {
    /// First and last trade hour, the default analysis window.
    pub fn trade_extent(&self) -> Option<(TimePoint, TimePoint)> {
        let first = self.trades.records.first()?.time.hour_bucket();
        let last = self.trades.records.last()?.time.hour_bucket();
        Some((first, last))
    }
}

/// Parse the three files concurrently; errors name the offending path.
pub fn read_sources(
    trades: &Path,
    chain: &Path,
    daily: &Path,
) -> Result<SourceRecords, IngestError> {
    let (trades, (chain, daily)) = rayon::join(
        || parse_file(trades, parse_trades),
        || {
            rayon::join(
                || parse_file(chain, parse_chain),
                || parse_file(daily, parse_daily),
            )
        },
    );
    Ok(SourceRecords {
        trades: trades?,
        chain: chain?,
        daily: daily?,
    })
}

/// Read the three source files and assemble the panel.
pub fn build_panel(recipe: &PanelRecipe) -> Result<PanelBuild, IngestError> {
    let s = read_sources(&recipe.trades_path, &recipe.chain_path, &recipe.daily_path)?;
    assemble_panel(&s.trades, &s.chain, &s.daily, &recipe.settings)
}
