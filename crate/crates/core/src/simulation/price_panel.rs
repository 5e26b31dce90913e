//! Synthetic source files whose price follows the quantity-theory form
//! `P = (k·G/V + L(i)) / B`: economy size `G` over velocity `V`, plus a
//! liquidity term decreasing in the interest rate, per unit of coin stock
//! `B`. Returns carry GARCH-X noise driven by the panel's own lagged,
//! standardized regressors with known signs.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::rng::{NormalStream, RNG_ALGORITHM};
use super::SimError;
use crate::engine::{variance_step, ParamVector};
use crate::ingest::{
    assemble_panel, total_stock_hourly, ChainRecord, DailyRecord, PanelBuild, PanelSettings,
    Parsed, RewardSchedule, TradeRecord, VelocityVariant, CHAIN_HEADER, COL_LOGNO, COL_LOGR_RATE,
    COL_LOGTOT_BTC, COL_LOGVELOCITY, COL_LOGVOLUME, DAILY_HEADER, TRADES_HEADER,
};
use crate::series::{HourlySeries, TimePoint, HOUR};

const DAY_SECONDS: i64 = 86_400;

/// `L(i) = intercept − slope·i`, in USD, with `i` in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineLiquidity {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineLiquidity {
    pub fn at(&self, rate: f64) -> f64 {
        self.intercept - self.slope * rate
    }
}

/// Noise-free price `(k·G/V + L(i)) / B`.
pub fn fundamental_price(
    k: f64,
    economy_size: f64,
    velocity: f64,
    rate: f64,
    stock: f64,
    liquidity: &AffineLiquidity,
) -> f64 {
    (k * economy_size / velocity + liquidity.at(rate)) / stock
}

/// Variance-equation loadings, as multiples of ω, on the standardized
/// lagged panel columns. Large loadings drive the variance onto its floor,
/// where the likelihood of the fitted model is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceLoadings {
    pub logtot_btc: f64,
    pub logvolume: f64,
    pub logno: f64,
    pub logvelocity: f64,
    pub logr_rate: f64,
}

impl Default for VarianceLoadings {
    fn default() -> Self {
        Self {
            logtot_btc: -0.125,
            logvolume: 0.25,
            logno: 0.25,
            logvelocity: -0.25,
            logr_rate: -0.125,
        }
    }
}

impl VarianceLoadings {
    pub fn columns(&self) -> [(&'static str, f64); 5] {
        [
            (COL_LOGTOT_BTC, self.logtot_btc),
            (COL_LOGVOLUME, self.logvolume),
            (COL_LOGNO, self.logno),
            (COL_LOGVELOCITY, self.logvelocity),
            (COL_LOGR_RATE, self.logr_rate),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceNoise {
    pub enabled: bool,
    /// Long-run standard deviation of hourly log-price noise.
    pub long_run_sd: f64,
    pub alpha: f64,
    pub beta: f64,
    pub loadings: VarianceLoadings,
}

impl Default for PriceNoise {
    fn default() -> Self {
        Self {
            enabled: true,
            long_run_sd: 0.01,
            alpha: 0.1,
            beta: 0.8,
            loadings: VarianceLoadings::default(),
        }
    }
}

impl PriceNoise {
    pub fn omega(&self) -> f64 {
        self.long_run_sd * self.long_run_sd * (1.0 - self.alpha - self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricePanelConfig {
    pub hours: usize,
    /// Unix seconds of the first hour; must be midnight UTC.
    pub start_unix: i64,
    #[serde(skip)]
    pub seed: u64,
    pub initial_price: f64,
    pub initial_stock: f64,
    pub block_time_minutes: f64,
    /// Standard deviation of hourly log block-time deviations.
    pub block_time_noise: f64,
    /// AR(1) coefficient of the slow components of volume, addresses and
    /// velocity.
    pub latent_persistence: f64,
    pub latent_innovation_sd: f64,
    /// Standard deviation of hour-specific log deviations around the slow
    /// components.
    pub hourly_noise_sd: f64,
    pub mean_volume_btc: f64,
    pub mean_addresses: f64,
    /// Hourly transaction volume over stock at the start.
    pub mean_velocity: f64,
    pub initial_rate: f64,
    /// Daily AR(1) coefficient of the rate around `initial_rate`.
    pub rate_persistence: f64,
    pub rate_innovation_sd: f64,
    pub liquidity: AffineLiquidity,
    pub noise: PriceNoise,
}

impl Default for PricePanelConfig {
    fn default() -> Self {
        Self {
            hours: 1_000,
            start_unix: 1_388_534_400,
            seed: 0,
            initial_price: 750.0,
            initial_stock: 12_000_000.0,
            block_time_minutes: 10.0,
            block_time_noise: 0.05,
            latent_persistence: 0.999,
            latent_innovation_sd: 0.002,
            hourly_noise_sd: 0.3,
            mean_volume_btc: 1_000.0,
            mean_addresses: 20_000.0,
            mean_velocity: 5e-5,
            initial_rate: 0.5,
            rate_persistence: 0.9,
            rate_innovation_sd: 0.05,
            liquidity: AffineLiquidity {
                intercept: 75.0,
                slope: 37.5,
            },
            noise: PriceNoise::default(),
        }
    }
}

impl PricePanelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.hours < 3 {
            return invalid("hours must be at least 3");
        }
        if self.start_unix < 0 || self.start_unix % DAY_SECONDS != 0 {
            return invalid("start_unix must be a nonnegative UTC midnight");
        }
        let positive = [
            self.initial_price,
            self.initial_stock,
            self.block_time_minutes,
            self.mean_volume_btc,
            self.mean_addresses,
            self.mean_velocity,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return invalid(
                "price, stock, block time, volume, addresses and velocity must be positive",
            );
        }
        let sds = [
            self.block_time_noise,
            self.latent_innovation_sd,
            self.hourly_noise_sd,
            self.rate_innovation_sd,
            self.noise.long_run_sd,
        ];
        if sds.iter().any(|v| !(*v >= 0.0)) {
            return invalid("standard deviations must be nonnegative");
        }
        if !(self.latent_persistence.abs() < 1.0) || !(self.rate_persistence.abs() < 1.0) {
            return invalid("persistence parameters must lie in (-1, 1)");
        }
        if !(self.liquidity.slope > 0.0) {
            return invalid("liquidity must decrease in the rate");
        }
        if !(self.scale_factor() > 0.0) {
            return invalid("liquidity term exceeds the initial price");
        }
        if self.noise.enabled {
            let n = &self.noise;
            if !(n.alpha > 0.0 && n.beta > 0.0 && n.alpha + n.beta < 1.0 && n.long_run_sd > 0.0) {
                return invalid("noise needs alpha, beta > 0, alpha + beta < 1 and positive sd");
            }
        }
        Ok(())
    }

    /// `k` such that the starting fundamental price equals `initial_price`
    /// (G, V and B normalized to one at the start).
    pub fn scale_factor(&self) -> f64 {
        self.initial_price - self.liquidity.at(self.initial_rate)
    }

    fn start(&self) -> TimePoint {
        TimePoint::new(self.start_unix).expect("validated start")
    }

    /// Ingestion settings covering the simulated window.
    pub fn panel_settings(&self, variant: VelocityVariant) -> PanelSettings {
        let start = self.start();
        let mut s = PanelSettings::new(start, start.plus_hours(self.hours as i64 - 1));
        s.velocity_variant = variant;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub price_form: String,
    pub liquidity_form: String,
    pub scale_factor: f64,
    pub liquidity: AffineLiquidity,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Variance-equation coefficients on standardized lagged columns.
    pub delta: Vec<(String, f64)>,
    /// Sign of the price response to each driver.
    pub price_signs: Vec<(String, String)>,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rng_algorithm: String,
    /// Decimal string so the full u64 range survives TOML.
    pub seed: String,
    pub files: Vec<String>,
    pub config: PricePanelConfig,
    pub ground_truth: GroundTruth,
}

/// The three source files and their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFixture {
    pub trades: Vec<TradeRecord>,
    pub chain: Vec<ChainRecord>,
    pub daily: Vec<DailyRecord>,
    pub manifest: Manifest,
    /// Fundamental price per hour, before noise.
    pub fundamental: Vec<f64>,
}

pub const TRADES_FILE: &str = "trades.csv";
pub const CHAIN_FILE: &str = "chain.csv";
pub const DAILY_FILE: &str = "daily.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

impl PriceFixture {
    /// Panel built from the in-memory records exactly as from the files.
    pub fn build_panel(&self, variant: VelocityVariant) -> Result<PanelBuild, SimError> {
        let settings = self.manifest.config.panel_settings(variant);
        Ok(assemble_panel(
            &parsed(self.trades.clone()),
            &parsed(self.chain.clone()),
            &parsed(self.daily.clone()),
            &settings,
        )?)
    }

    /// Write the three source CSVs and the manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        let write = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), SimError> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(|e| SimError::Csv(e.to_string()))?;
            w.write_record(header)
                .map_err(|e| SimError::Csv(e.to_string()))?;
            for r in rows {
                w.write_record(&r)
                    .map_err(|e| SimError::Csv(e.to_string()))?;
            }
            w.flush().map_err(|e| SimError::io(&path, e))
        };
        write(
            TRADES_FILE,
            &TRADES_HEADER,
            self.trades
                .iter()
                .map(|t| {
                    vec![
                        t.time.epoch_seconds().to_string(),
                        t.price_usd.to_string(),
                        t.volume_btc.to_string(),
                    ]
                })
                .collect(),
        )?;
        write(
            CHAIN_FILE,
            &CHAIN_HEADER,
            self.chain
                .iter()
                .map(|c| {
                    vec![
                        c.time.epoch_seconds().to_string(),
                        c.tx_volume_btc.to_string(),
                        c.tx_count.to_string(),
                        c.unique_addresses.to_string(),
                        c.avg_block_time_minutes.to_string(),
                    ]
                })
                .collect(),
        )?;
        let opt = |v: Option<f64>| v.map_or(".".to_string(), |x| x.to_string());
        write(
            DAILY_FILE,
            &DAILY_HEADER,
            self.daily
                .iter()
                .map(|d| {
                    vec![
                        d.date.format("%Y-%m-%d").to_string(),
                        opt(d.total_btc),
                        opt(d.tips_rate),
                    ]
                })
                .collect(),
        )?;
        let text =
            toml::to_string(&self.manifest).map_err(|e| SimError::Manifest(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| SimError::io(&path, e))
    }
}

fn parsed<T>(records: Vec<T>) -> Parsed<T> {
    Parsed {
        records,
        rejects: Vec::new(),
    }
}

fn ar1_path(rng: &mut NormalStream, n: usize, phi: f64, sd: f64) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            let v = x;
            x = phi * x + sd * rng.normal();
            v
        })
        .collect()
}

fn standardized(series: &HourlySeries) -> Result<Vec<f64>, SimError> {
    let v = series.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(SimError::InvalidConfig(format!(
            "column `{}` has no variation to load on",
            series.name()
        )));
    }
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Streams: 0 price noise, 1–3 slow volume/address/velocity components,
/// 4–6 their hourly deviations, 7 block times, 8 the daily rate.
pub fn simulate_price_panel(config: &PricePanelConfig) -> Result<PriceFixture, SimError> {
    config.validate()?;
    let n = config.hours;
    let seed = config.seed;
    let start = config.start();
    let stream = |k| NormalStream::new(seed, k);
    let (phi, lat_sd, hour_sd) = (
        config.latent_persistence,
        config.latent_innovation_sd,
        config.hourly_noise_sd,
    );

    let slow_volume = ar1_path(&mut stream(1), n, phi, lat_sd);
    let slow_addresses = ar1_path(&mut stream(2), n, phi, lat_sd);
    let slow_velocity = ar1_path(&mut stream(3), n, phi, lat_sd);
    let hourly = |k: u64| {
        let mut r = stream(k);
        (0..n).map(|_| hour_sd * r.normal()).collect::<Vec<f64>>()
    };
    let (dev_volume, dev_addresses, dev_velocity) = (hourly(4), hourly(5), hourly(6));
    let mut bt_rng = stream(7);
    let block_times: Vec<f64> = (0..n)
        .map(|_| config.block_time_minutes * (config.block_time_noise * bt_rng.normal()).exp())
        .collect();
    let days = n.div_ceil(24);
    let mut rate_rng = stream(8);
    let mut dev = 0.0;
    let rates: Vec<f64> = (0..days)
        .map(|_| {
            let r = config.initial_rate + dev;
            dev = config.rate_persistence * dev + config.rate_innovation_sd * rate_rng.normal();
            r
        })
        .collect();

    // Stock as ingestion integrates it, anchored once at the start.
    let first_day = date_of(start);
    let bt_series = HourlySeries::observed("block_time", start, block_times.clone())?;
    let schedule = RewardSchedule::default();
    let anchor_only = vec![DailyRecord {
        date: first_day,
        total_btc: Some(config.initial_stock),
        tips_rate: Some(rates[0]),
    }];
    let stock = total_stock_hourly(&anchor_only, &bt_series, &schedule)?;
    let daily: Vec<DailyRecord> = (0..days)
        .map(|d| DailyRecord {
            date: first_day + Duration::days(d as i64),
            // Floored end-of-previous-day stock never overrides the running value.
            total_btc: Some(if d == 0 {
                config.initial_stock
            } else {
                stock.values()[24 * d - 1].floor()
            }),
            tips_rate: Some(rates[d]),
        })
        .collect();

    let addresses: Vec<u64> = (0..n)
        .map(|h| {
            (config.mean_addresses * (slow_addresses[h] + dev_addresses[h]).exp())
                .round()
                .max(1.0) as u64
        })
        .collect();
    let chain: Vec<ChainRecord> = (0..n)
        .map(|h| {
            let velocity = config.mean_velocity * (slow_velocity[h] + dev_velocity[h]).exp();
            ChainRecord {
                time: offset(start.plus_hours(h as i64), HOUR / 2),
                tx_volume_btc: velocity * stock.values()[h],
                tx_count: (addresses[h] as f64 * 0.6).round() as u64,
                unique_addresses: addresses[h],
                avg_block_time_minutes: block_times[h],
            }
        })
        .collect();
    let volumes: Vec<f64> = (0..n)
        .map(|h| config.mean_volume_btc * (slow_volume[h] + dev_volume[h]).exp())
        .collect();
    let trades_at = |prices: &[f64]| -> Vec<TradeRecord> {
        let mut out = Vec::with_capacity(2 * n);
        for h in 0..n {
            let hour = start.plus_hours(h as i64);
            let prev = if h == 0 { prices[0] } else { prices[h - 1] };
            out.push(TradeRecord {
                time: offset(hour, HOUR / 12),
                price_usd: (prev * prices[h]).sqrt(),
                volume_btc: 0.4 * volumes[h],
            });
            out.push(TradeRecord {
                time: offset(hour, 3 * HOUR / 4),
                price_usd: prices[h],
                volume_btc: 0.6 * volumes[h],
            });
        }
        out
    };

    // Regressors depend only on volumes, chain and daily records, so a
    // placeholder price yields the final panel columns.
    let settings = config.panel_settings(VelocityVariant::V1);
    let draft = assemble_panel(
        &parsed(trades_at(&vec![1.0; n])),
        &parsed(chain.clone()),
        &parsed(daily.clone()),
        &settings,
    )?;

    let k = config.scale_factor();
    let fundamental: Vec<f64> = (0..n)
        .map(|h| {
            let economy = (0.5 * slow_volume[h] + 0.5 * slow_addresses[h]).exp();
            let velocity = slow_velocity[h].exp();
            let b = stock.values()[h] / config.initial_stock;
            fundamental_price(k, economy, velocity, rates[h / 24], b, &config.liquidity)
        })
        .collect();

    let noise = &config.noise;
    let omega = noise.omega();
    let mut delta = Vec::new();
    let mut columns = Vec::new();
    for (name, loading) in noise.loadings.columns() {
        delta.push((name.to_string(), loading * omega));
        columns.push(standardized(draft.panel.column(name)?)?);
    }
    let mut clamp_events = 0;
    let prices: Vec<f64> = if noise.enabled {
        let params = ParamVector {
            beta0: 0.0,
            beta1: 0.0,
            gamma: vec![],
            omega,
            alpha: vec![noise.alpha],
            beta: vec![noise.beta],
            delta: delta.iter().map(|d| d.1).collect(),
        };
        let init = noise.long_run_sd * noise.long_run_sd;
        let mut rng = stream(0);
        let mut sq = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        let mut level = 0.0;
        let mut out = Vec::with_capacity(n);
        for h in 0..n {
            let x = if h == 0 {
                0.0
            } else {
                params
                    .delta
                    .iter()
                    .zip(&columns)
                    .map(|(d, z)| d * z[h - 1])
                    .sum()
            };
            let (v, clamped) = variance_step(&params, &sq, &var, x, init, h);
            clamp_events += usize::from(clamped);
            let e = v.sqrt() * rng.normal();
            var.push(v);
            sq.push(e * e);
            level += e;
            out.push(fundamental[h] * level.exp());
        }
        out
    } else {
        fundamental.clone()
    };

    let sign = |s: &str| s.to_string();
    Ok(PriceFixture {
        trades: trades_at(&prices),
        chain,
        daily,
        fundamental,
        manifest: Manifest {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: seed.to_string(),
            files: vec![TRADES_FILE.into(), CHAIN_FILE.into(), DAILY_FILE.into()],
            config: config.clone(),
            ground_truth: GroundTruth {
                price_form: "P = (k*G/V + L(i)) / B; G = exp((slow_volume + slow_addresses)/2), \
                             V = exp(slow_velocity), B = stock / initial_stock; \
                             observed price = P * exp(cumulated GARCH-X noise)"
                    .into(),
                liquidity_form: "L(i) = intercept - slope * i".into(),
                scale_factor: k,
                liquidity: config.liquidity,
                omega,
                alpha: noise.alpha,
                beta: noise.beta,
                delta,
                price_signs: vec![
                    (sign("economy_size"), sign("+")),
                    (sign("velocity"), sign("-")),
                    (sign("stock"), sign("-")),
                    (sign("rate"), sign("-")),
                ],
                clamp_events,
            },
        },
    })
}

fn offset(t: TimePoint, seconds: i64) -> TimePoint {
    TimePoint::new(t.epoch_seconds() + seconds).expect("offset stays after the epoch")
}

fn date_of(t: TimePoint) -> NaiveDate {
    DateTime::from_timestamp(t.epoch_seconds(), 0)
        .expect("valid timestamp")
        .date_naive()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_chain, parse_daily, parse_trades, COL_RETURN};

    fn liquidity() -> AffineLiquidity {
        AffineLiquidity {
            intercept: 75.0,
            slope: 37.5,
        }
    }

    #[test]
    fn doubling_stock_halves_price() {
        let l = liquidity();
        let p = fundamental_price(700.0, 1.3, 0.9, 0.4, 1.0, &l);
        assert_eq!(fundamental_price(700.0, 1.3, 0.9, 0.4, 2.0, &l), p / 2.0);
    }

    #[test]
    fn doubling_economy_doubles_price_without_liquidity() {
        let l = AffineLiquidity {
            intercept: 0.0,
            slope: 0.0,
        };
        let p = fundamental_price(700.0, 1.3, 0.9, 0.4, 1.1, &l);
        assert_eq!(fundamental_price(700.0, 2.6, 0.9, 0.4, 1.1, &l), 2.0 * p);
    }

    #[test]
    fn liquidity_decreases_in_rate() {
        let l = liquidity();
        assert!(l.at(1.0) < l.at(0.5));
        assert!(
            fundamental_price(700.0, 1.0, 1.0, 1.0, 1.0, &l)
                < fundamental_price(700.0, 1.0, 1.0, 0.5, 1.0, &l)
        );
    }

    #[test]
    fn fixture_round_trips_through_files() {
        let cfg = PricePanelConfig {
            hours: 200,
            seed: 17,
            ..Default::default()
        };
        let fx = simulate_price_panel(&cfg).unwrap();
        assert_eq!(fx, simulate_price_panel(&cfg).unwrap());
        let dir = tempfile::tempdir().unwrap();
        fx.write(dir.path()).unwrap();
        let trades = parse_trades(fs::File::open(dir.path().join(TRADES_FILE)).unwrap()).unwrap();
        let chain = parse_chain(fs::File::open(dir.path().join(CHAIN_FILE)).unwrap()).unwrap();
        let daily = parse_daily(fs::File::open(dir.path().join(DAILY_FILE)).unwrap()).unwrap();
        assert!(trades.rejects.is_empty() && chain.rejects.is_empty() && daily.rejects.is_empty());
        assert_eq!(trades.records, fx.trades);
        assert_eq!(chain.records, fx.chain);
        assert_eq!(daily.records, fx.daily);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(manifest.contains("ChaCha20") && manifest.contains("seed = \"17\""));

        let built = fx.build_panel(VelocityVariant::V1).unwrap();
        assert_eq!(built.panel.grid().len(), 200);
        assert_eq!(built.summary.return_points, 199);
        let r = built.panel.column(COL_RETURN).unwrap();
        let price = built.panel.price().unwrap();
        for t in 1..200 {
            let expected = (price.values()[t] / price.values()[t - 1]).ln();
            assert!((r.values()[t] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_price_is_fundamental() {
        let mut cfg = PricePanelConfig {
            hours: 100,
            seed: 3,
            ..Default::default()
        };
        cfg.noise.enabled = false;
        let fx = simulate_price_panel(&cfg).unwrap();
        let last: Vec<f64> = fx
            .trades
            .iter()
            .skip(1)
            .step_by(2)
            .map(|t| t.price_usd)
            .collect();
        assert_eq!(last, fx.fundamental);
        // the first hour's issuance moves the price slightly off its calibration
        assert!((fx.fundamental[0] / cfg.initial_price - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = PricePanelConfig {
            start_unix: 1_388_534_400 + 3600,
            ..Default::default()
        };
        assert!(simulate_price_panel(&bad).is_err());
        let bad = PricePanelConfig {
            liquidity: AffineLiquidity {
                intercept: 10.0,
                slope: -1.0,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
