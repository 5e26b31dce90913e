//! Hour-indexed series containers and the transforms every other module
//! consumes: resampling ticks onto the hourly grid, log returns, floored
//! logs and lags.
//!
//! All series live on a dense UTC grid. A gap is a flagged point, never an
//! absent index, so `start + i * 3600` reconstructs every timestamp.

use std::fmt;

use thiserror::Error;

/// Seconds per hour bucket.
pub const HOUR: i64 = 3600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("non-positive price at index {0}")]
    NonPositivePrice(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("lag {k} is not smaller than series length {len}")]
    LagTooLarge { k: usize, len: usize },
    #[error("negative timestamp {0}")]
    NegativeTime(i64),
    #[error("start time {0} is not aligned to an hour")]
    Misaligned(i64),
    #[error("values ({values}) and flags ({flags}) differ in length")]
    LengthMismatch { values: usize, flags: usize },
    #[error("ticks are not sorted by time at position {0}")]
    Unsorted(usize),
    #[error("non-finite tick value at position {0}")]
    NonFinite(usize),
    #[error("log floor must be positive, got {0}")]
    InvalidFloor(f64),
}

/// Seconds since the Unix epoch, UTC. Always nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimePoint(i64);

impl TimePoint {
    pub fn new(epoch_seconds: i64) -> Result<Self, SeriesError> {
        if epoch_seconds < 0 {
            return Err(SeriesError::NegativeTime(epoch_seconds));
        }
        Ok(Self(epoch_seconds))
    }

    pub fn epoch_seconds(self) -> i64 {
        self.0
    }

    /// Start of the hour containing this instant.
    pub fn hour_bucket(self) -> TimePoint {
        TimePoint(self.0 - self.0.rem_euclid(HOUR))
    }

    pub fn is_hour_aligned(self) -> bool {
        self.0 % HOUR == 0
    }

    pub fn plus_hours(self, hours: i64) -> TimePoint {
        TimePoint(self.0 + hours * HOUR)
    }

    /// Whole hours from `self` to `later` (negative if `later` is earlier).
    pub fn hours_until(self, later: TimePoint) -> i64 {
        (later.0 - self.0).div_euclid(HOUR)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Provenance of a single grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointFlag {
    Observed,
    ForwardFilled,
    Clamped,
    Missing,
}

impl PointFlag {
    pub fn is_missing(self) -> bool {
        self == PointFlag::Missing
    }
}

/// A dense hourly grid: an aligned start hour and a length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    start: TimePoint,
    len: usize,
}

impl Grid {
    pub fn new(start: TimePoint, len: usize) -> Result<Self, SeriesError> {
        if !start.is_hour_aligned() {
            return Err(SeriesError::Misaligned(start.epoch_seconds()));
        }
        Ok(Self { start, len })
    }

    /// Grid covering `first..=last` hour buckets.
    pub fn spanning(first: TimePoint, last: TimePoint) -> Self {
        let start = first.hour_bucket();
        let len = start.hours_until(last.hour_bucket()).max(0) as usize + 1;
        Self { start, len }
    }

    pub fn start(&self) -> TimePoint {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hour(&self, index: usize) -> TimePoint {
        self.start.plus_hours(index as i64)
    }

    /// Last hour on the grid. Panics on an empty grid.
    pub fn end(&self) -> TimePoint {
        self.hour(self.len - 1)
    }

    pub fn index_of(&self, t: TimePoint) -> Option<usize> {
        let h = self.start.hours_until(t.hour_bucket());
        (h >= 0 && (h as usize) < self.len).then_some(h as usize)
    }
}

/// One named variable on a dense hourly grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    name: String,
    start: TimePoint,
    values: Vec<f64>,
    flags: Vec<PointFlag>,
}

impl HourlySeries {
    pub fn new(
        name: impl Into<String>,
        start: TimePoint,
        values: Vec<f64>,
        flags: Vec<PointFlag>,
    ) -> Result<Self, SeriesError> {
        if !start.is_hour_aligned() {
            return Err(SeriesError::Misaligned(start.epoch_seconds()));
        }
        if values.len() != flags.len() {
            return Err(SeriesError::LengthMismatch {
                values: values.len(),
                flags: flags.len(),
            });
        }
        let mut values = values;
        for (v, f) in values.iter_mut().zip(&flags) {
            if f.is_missing() {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            name: name.into(),
            start,
            values,
            flags,
        })
    }

    /// Every point flagged observed.
    pub fn observed(
        name: impl Into<String>,
        start: TimePoint,
        values: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let flags = vec![PointFlag::Observed; values.len()];
        Self::new(name, start, values, flags)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn start(&self) -> TimePoint {
        self.start
    }

    pub fn grid(&self) -> Grid {
        Grid {
            start: self.start,
            len: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw values; missing points hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flags(&self) -> &[PointFlag] {
        &self.flags
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        match self.flags.get(i) {
            Some(f) if !f.is_missing() => Some(self.values[i]),
            _ => None,
        }
    }

    pub fn time(&self, i: usize) -> TimePoint {
        self.start.plus_hours(i as i64)
    }

    pub fn count_flag(&self, flag: PointFlag) -> usize {
        self.flags.iter().filter(|&&f| f == flag).count()
    }

    /// Restrict or extend the series onto `grid`. Hours outside the
    /// original coverage come back missing.
    pub fn reindex(&self, grid: Grid) -> HourlySeries {
        let mut values = vec![f64::NAN; grid.len()];
        let mut flags = vec![PointFlag::Missing; grid.len()];
        let offset = self.start.hours_until(grid.start());
        for (i, (v, f)) in values.iter_mut().zip(flags.iter_mut()).enumerate() {
            let src = offset + i as i64;
            if src >= 0 && (src as usize) < self.len() {
                *v = self.values[src as usize];
                *f = self.flags[src as usize];
            }
        }
        HourlySeries {
            name: self.name.clone(),
            start: grid.start(),
            values,
            flags,
        }
    }

    pub fn map_values(&self, name: impl Into<String>, f: impl Fn(f64) -> f64) -> HourlySeries {
        let values = self
            .values
            .iter()
            .zip(&self.flags)
            .map(|(&v, flag)| if flag.is_missing() { f64::NAN } else { f(v) })
            .collect();
        HourlySeries {
            name: name.into(),
            start: self.start,
            values,
            flags: self.flags.clone(),
        }
    }
}

/// Within-hour aggregation rule for [`resample_ticks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Last tick wins; empty hours carry the previous hour forward.
    Last,
    /// Ticks are summed; empty hours are zero.
    Sum,
}

fn validate_ticks(ticks: &[(TimePoint, f64)]) -> Result<(), SeriesError> {
    if ticks.is_empty() {
        return Err(SeriesError::EmptyInput);
    }
    for (i, w) in ticks.windows(2).enumerate() {
        if w[1].0 < w[0].0 {
            return Err(SeriesError::Unsorted(i + 1));
        }
    }
    if let Some(i) = ticks.iter().position(|(_, v)| !v.is_finite()) {
        return Err(SeriesError::NonFinite(i));
    }
    Ok(())
}

/// Bucket sorted ticks onto `grid`.
///
/// Ticks before the grid only seed the `Last` carry value. A run of more
/// than `max_gap` consecutive empty hours is marked missing instead of
/// being filled; `None` fills every gap.
pub fn resample_ticks(
    name: &str,
    ticks: &[(TimePoint, f64)],
    grid: Grid,
    aggregation: Aggregation,
    max_gap: Option<usize>,
) -> Result<HourlySeries, SeriesError> {
    validate_ticks(ticks)?;
    // Work on an extended grid so gaps that start before the window are
    // measured from the true previous tick.
    let first_hour = ticks[0].0.hour_bucket();
    let ext_start = first_hour.min(grid.start());
    let lead = ext_start.hours_until(grid.start()) as usize;
    let ext_len = lead + grid.len();

    let mut bucket: Vec<Option<f64>> = vec![None; ext_len];
    for &(t, v) in ticks {
        let h = ext_start.hours_until(t.hour_bucket());
        if h < 0 || h as usize >= ext_len {
            continue;
        }
        let slot = &mut bucket[h as usize];
        *slot = Some(match (aggregation, *slot) {
            (Aggregation::Last, _) => v,
            (Aggregation::Sum, Some(acc)) => acc + v,
            (Aggregation::Sum, None) => v,
        });
    }

    // Length of the empty run each empty hour belongs to.
    let mut run_len = vec![0usize; ext_len];
    let mut i = 0;
    while i < ext_len {
        if bucket[i].is_some() {
            i += 1;
            continue;
        }
        let j = (i..ext_len)
            .find(|&j| bucket[j].is_some())
            .unwrap_or(ext_len);
        for r in &mut run_len[i..j] {
            *r = j - i;
        }
        i = j;
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    let mut carry: Option<f64> = None;
    for h in 0..ext_len {
        let (v, f) = match bucket[h] {
            Some(v) => {
                carry = Some(v);
                (v, PointFlag::Observed)
            }
            None if max_gap.is_some_and(|g| run_len[h] > g) => {
                carry = None;
                (f64::NAN, PointFlag::Missing)
            }
            None => match aggregation {
                Aggregation::Sum => (0.0, PointFlag::Observed),
                Aggregation::Last => match carry {
                    Some(c) => (c, PointFlag::ForwardFilled),
                    None => (f64::NAN, PointFlag::Missing),
                },
            },
        };
        if h >= lead {
            values.push(v);
            flags.push(f);
        }
    }
    HourlySeries::new(name, grid.start(), values, flags)
}

/// Hourly close: the last tick in each hour, forward-filling empty hours.
pub fn resample_last(ticks: &[(TimePoint, f64)]) -> Result<HourlySeries, SeriesError> {
    validate_ticks(ticks)?;
    let grid = Grid::spanning(ticks[0].0, ticks[ticks.len() - 1].0);
    resample_ticks("last", ticks, grid, Aggregation::Last, None)
}

/// Hourly flow: the sum of ticks in each hour, zero for empty hours.
pub fn resample_sum(ticks: &[(TimePoint, f64)]) -> Result<HourlySeries, SeriesError> {
    validate_ticks(ticks)?;
    let grid = Grid::spanning(ticks[0].0, ticks[ticks.len() - 1].0);
    resample_ticks("sum", ticks, grid, Aggregation::Sum, None)
}

/// `r_t = ln P_t - ln P_{t-1}`. The output starts one hour after the input.
pub fn log_returns(prices: &HourlySeries) -> Result<HourlySeries, SeriesError> {
    if prices.is_empty() {
        return Err(SeriesError::EmptyInput);
    }
    for (i, (&p, f)) in prices.values.iter().zip(&prices.flags).enumerate() {
        if !f.is_missing() && !(p > 0.0) {
            return Err(SeriesError::NonPositivePrice(i));
        }
    }
    let n = prices.len() - 1;
    let mut values = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for t in 1..prices.len() {
        let (a, b) = (prices.flags[t - 1], prices.flags[t]);
        if a.is_missing() || b.is_missing() {
            values.push(f64::NAN);
            flags.push(PointFlag::Missing);
            continue;
        }
        values.push(prices.values[t].ln() - prices.values[t - 1].ln());
        flags.push(
            if a == PointFlag::ForwardFilled || b == PointFlag::ForwardFilled {
                PointFlag::ForwardFilled
            } else {
                PointFlag::Observed
            },
        );
    }
    HourlySeries::new(
        prices.name.clone(),
        prices.start.plus_hours(1),
        values,
        flags,
    )
}

/// Result of [`safe_log`].
#[derive(Debug, Clone, PartialEq)]
pub struct SafeLog {
    pub series: HourlySeries,
    pub clamped: usize,
}

/// `ln(max(v, floor))`; points below the floor are flagged clamped.
pub fn safe_log(series: &HourlySeries, floor: f64) -> Result<SafeLog, SeriesError> {
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(SeriesError::InvalidFloor(floor));
    }
    let mut clamped = 0;
    let mut values = Vec::with_capacity(series.len());
    let mut flags = Vec::with_capacity(series.len());
    for (&v, &f) in series.values.iter().zip(&series.flags) {
        if f.is_missing() {
            values.push(f64::NAN);
            flags.push(f);
        } else if v < floor {
            clamped += 1;
            values.push(floor.ln());
            flags.push(PointFlag::Clamped);
        } else {
            values.push(v.ln());
            flags.push(f);
        }
    }
    Ok(SafeLog {
        series: HourlySeries::new(series.name.clone(), series.start, values, flags)?,
        clamped,
    })
}

/// Shift by `k` hours on the same grid; the first `k` points become missing.
pub fn lag(series: &HourlySeries, k: usize) -> Result<HourlySeries, SeriesError> {
    if k >= series.len() {
        return Err(SeriesError::LagTooLarge {
            k,
            len: series.len(),
        });
    }
    let mut values = vec![f64::NAN; k];
    let mut flags = vec![PointFlag::Missing; k];
    values.extend_from_slice(&series.values[..series.len() - k]);
    flags.extend_from_slice(&series.flags[..series.len() - k]);
    HourlySeries::new(series.name.clone(), series.start, values, flags)
}
