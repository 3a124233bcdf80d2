//! Trade tapes: parsing, serialization, synthesis and time windows.
//!
//! A trade is identified by its value `C` (currency) and volume `U` (asset
//! units); the price is always derived as `C / U`. An explicit price column in
//! the input is only checked against that identity.

use std::io::Read;
use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::format::write_f64;

/// Relative tolerance for `|price * volume - value| / value` on input records
/// that carry an explicit price.
pub const PRICE_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("malformed record at line {line}, column `{column}`: {reason}")]
    MalformedRecord {
        line: u64,
        column: String,
        reason: String,
    },
    #[error("non-positive volume {volume} at line {line}")]
    NonPositiveVolume { line: u64, volume: f64 },
    #[error("non-positive value {value} at line {line}")]
    NonPositiveValue { line: u64, value: f64 },
    #[error("price {price} at line {line} inconsistent with value/volume = {derived}")]
    PriceInconsistent { line: u64, price: f64, derived: f64 },
    #[error("tape contains no trades")]
    EmptyTape,
    #[error("no trades inside window centered at {center} with width {width}")]
    EmptyWindow { center: f64, width: f64 },
    #[error("invalid window: width {0} must be positive and finite")]
    InvalidWindow(f64),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// One market execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    t: f64,
    value: f64,
    volume: f64,
    price: f64,
}

impl Trade {
    /// Builds a trade; the price is `value / volume`.
    pub fn new(t: f64, value: f64, volume: f64) -> Result<Self, TapeError> {
        Self::checked(0, t, value, volume)
    }

    fn checked(line: u64, t: f64, value: f64, volume: f64) -> Result<Self, TapeError> {
        if !t.is_finite() {
            return Err(TapeError::MalformedRecord {
                line,
                column: "t".into(),
                reason: format!("timestamp {t} is not finite"),
            });
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(TapeError::NonPositiveVolume { line, volume });
        }
        if !(value > 0.0) || !value.is_finite() {
            return Err(TapeError::NonPositiveValue { line, value });
        }
        Ok(Self {
            t,
            value,
            volume,
            price: value / volume,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn value(&self) -> f64 {
        self.value
    }
    pub fn volume(&self) -> f64 {
        self.volume
    }
    pub fn price(&self) -> f64 {
        self.price
    }
}

/// Time-sorted, non-empty sequence of trades.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeTape {
    trades: Vec<Trade>,
    source: String,
}

impl TradeTape {
    /// Stable-sorts `trades` by timestamp.
    pub fn new(mut trades: Vec<Trade>, source: impl Into<String>) -> Result<Self, TapeError> {
        if trades.is_empty() {
            return Err(TapeError::EmptyTape);
        }
        trades.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self {
            trades,
            source: source.into(),
        })
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    /// Whole tape as one slice.
    pub fn as_slice(&self) -> TradeSlice<'_> {
        TradeSlice {
            trades: &self.trades,
        }
    }

    /// Trades with `center - width/2 <= t <= center + width/2`.
    pub fn select(&self, window: Window) -> Result<TradeSlice<'_>, TapeError> {
        let (lo, hi) = window.bounds();
        let start = self.trades.partition_point(|tr| tr.t < lo);
        let end = self.trades.partition_point(|tr| tr.t <= hi);
        if start >= end {
            return Err(TapeError::EmptyWindow {
                center: window.center,
                width: window.width,
            });
        }
        Ok(TradeSlice {
            trades: &self.trades[start..end],
        })
    }

    /// Canonical CSV (`t,value,volume`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,volume\n");
        for tr in &self.trades {
            write_f64(&mut out, tr.t);
            out.push(',');
            write_f64(&mut out, tr.value);
            out.push(',');
            write_f64(&mut out, tr.volume);
            out.push('\n');
        }
        out
    }
}

/// Averaging interval of width `width` around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub width: f64,
}

impl Window {
    pub fn new(center: f64, width: f64) -> Result<Self, TapeError> {
        if !(width > 0.0 && width.is_finite()) || !center.is_finite() {
            return Err(TapeError::InvalidWindow(width));
        }
        Ok(Self { center, width })
    }

    /// Inclusive `(low, high)` bounds.
    pub fn bounds(&self) -> (f64, f64) {
        let half = 0.5 * self.width;
        (self.center - half, self.center + half)
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.bounds();
        lo <= t && t <= hi
    }
}

/// Non-empty contiguous run of a tape's trades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeSlice<'a> {
    trades: &'a [Trade],
}

impl<'a> TradeSlice<'a> {
    /// `None` if `trades` is empty.
    pub fn from_trades(trades: &'a [Trade]) -> Option<Self> {
        (!trades.is_empty()).then_some(Self { trades })
    }

    pub fn trades(&self) -> &'a [Trade] {
        self.trades
    }

    /// Trade count `N`, always at least one.
    pub fn count(&self) -> usize {
        self.trades.len()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + 'a {
        self.trades.iter().map(|t| t.value)
    }

    pub fn volumes(&self) -> impl Iterator<Item = f64> + 'a {
        self.trades.iter().map(|t| t.volume)
    }

    pub fn prices(&self) -> impl Iterator<Item = f64> + 'a {
        self.trades.iter().map(|t| t.price)
    }

    /// Re-applies a window to this slice.
    pub fn select(&self, window: Window) -> Result<TradeSlice<'a>, TapeError> {
        let (lo, hi) = window.bounds();
        let start = self.trades.partition_point(|tr| tr.t < lo);
        let end = self.trades.partition_point(|tr| tr.t <= hi);
        if start >= end {
            return Err(TapeError::EmptyWindow {
                center: window.center,
                width: window.width,
            });
        }
        Ok(TradeSlice {
            trades: &self.trades[start..end],
        })
    }
}

impl Deref for TradeSlice<'_> {
    type Target = [Trade];

    fn deref(&self) -> &[Trade] {
        self.trades
    }
}

/// Parses a tape from CSV text with header `t,value,volume[,price]`.
pub fn parse_tape(text: &str, source: impl Into<String>) -> Result<TradeTape, TapeError> {
    parse_tape_reader(text.as_bytes(), source)
}

pub fn parse_tape_reader<R: Read>(reader: R, source: impl Into<String>) -> Result<TradeTape, TapeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let mut idx_t = None;
    let mut idx_value = None;
    let mut idx_volume = None;
    let mut idx_price = None;
    for (i, name) in headers.iter().enumerate() {
        let slot = match name {
            "t" => &mut idx_t,
            "value" => &mut idx_value,
            "volume" => &mut idx_volume,
            "price" => &mut idx_price,
            other => {
                return Err(TapeError::MalformedRecord {
                    line: 1,
                    column: other.to_string(),
                    reason: "unknown column".into(),
                })
            }
        };
        if slot.replace(i).is_some() {
            return Err(TapeError::MalformedRecord {
                line: 1,
                column: name.to_string(),
                reason: "duplicate column".into(),
            });
        }
    }
    let missing = |name: &str| TapeError::MalformedRecord {
        line: 1,
        column: name.to_string(),
        reason: "required column missing from header".into(),
    };
    let idx_t = idx_t.ok_or_else(|| missing("t"))?;
    let idx_value = idx_value.ok_or_else(|| missing("value"))?;
    let idx_volume = idx_volume.ok_or_else(|| missing("volume"))?;

    let mut trades = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| csv_error(e, trades.len() as u64 + 2))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let field = |idx: usize, name: &str| -> Result<f64, TapeError> {
            let raw = &record[idx];
            let v: f64 = raw.parse().map_err(|_| TapeError::MalformedRecord {
                line,
                column: name.to_string(),
                reason: format!("`{raw}` is not a decimal number"),
            })?;
            if !v.is_finite() {
                return Err(TapeError::MalformedRecord {
                    line,
                    column: name.to_string(),
                    reason: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        let t = field(idx_t, "t")?;
        let value = field(idx_value, "value")?;
        let volume = field(idx_volume, "volume")?;
        let trade = Trade::checked(line, t, value, volume)?;
        if let Some(ip) = idx_price {
            let price = field(ip, "price")?;
            if ((price * volume - value) / value).abs() > PRICE_CONSISTENCY_TOL {
                return Err(TapeError::PriceInconsistent {
                    line,
                    price,
                    derived: trade.price,
                });
            }
        }
        trades.push(trade);
    }
    TradeTape::new(trades, source)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> TapeError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(io) => TapeError::Io(io.to_string()),
        csv::ErrorKind::Utf8 { .. } => TapeError::MalformedRecord {
            line,
            column: "*".into(),
            reason: "invalid UTF-8".into(),
        },
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => TapeError::MalformedRecord {
            line,
            column: "*".into(),
            reason: format!("expected {expected_len} fields, found {len}"),
        },
        _ => TapeError::MalformedRecord {
            line,
            column: "*".into(),
            reason: e.to_string(),
        },
    }
}

/// Price path of a synthetic tape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriceProcess {
    Constant { price: f64 },
    /// Geometric random walk: `ln p` moves by `N(drift, vol²)` per trade.
    LognormalWalk { start: f64, drift: f64, vol: f64 },
}

/// Per-trade volume law of a synthetic tape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VolumeProcess {
    Constant { volume: f64 },
    /// Uniform integer lot size in `1..=max`.
    UniformLots { max: u32 },
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapeSpec {
    pub count: usize,
    /// Spacing between consecutive timestamps; the first trade is at `t = 0`.
    pub dt: f64,
    pub price: PriceProcess,
    pub volume: VolumeProcess,
}

impl Default for TapeSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            dt: 1.0,
            price: PriceProcess::LognormalWalk {
                start: 100.0,
                drift: 0.0,
                vol: 0.001,
            },
            volume: VolumeProcess::Lognormal { mu: 3.0, sigma: 1.0 },
        }
    }
}

impl TapeSpec {
    fn validate(&self) -> Result<(), TapeError> {
        let bad = |m: &str| Err(TapeError::InvalidSpec(m.to_string()));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return bad("dt must be finite and non-negative");
        }
        match self.price {
            PriceProcess::Constant { price } if !(price > 0.0 && price.is_finite()) => {
                return bad("constant price must be positive")
            }
            PriceProcess::LognormalWalk { start, drift, vol }
                if !(start > 0.0 && start.is_finite() && drift.is_finite() && vol >= 0.0 && vol.is_finite()) =>
            {
                return bad("lognormal walk needs start > 0, finite drift, vol >= 0")
            }
            _ => {}
        }
        match self.volume {
            VolumeProcess::Constant { volume } if !(volume > 0.0 && volume.is_finite()) => {
                return bad("constant volume must be positive")
            }
            VolumeProcess::UniformLots { max } if max == 0 => return bad("lot maximum must be at least 1"),
            VolumeProcess::Lognormal { mu, sigma } if !(mu.is_finite() && sigma >= 0.0 && sigma.is_finite()) => {
                return bad("lognormal volume needs finite mu and sigma >= 0")
            }
            _ => {}
        }
        Ok(())
    }
}

/// Deterministic synthetic tape. Each trade's value is `price * volume`.
pub fn synthesize_tape(spec: &TapeSpec, seed: u64) -> Result<TradeTape, TapeError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = match spec.price {
        PriceProcess::LognormalWalk { drift, vol, .. } => {
            Some(Normal::new(drift, vol).map_err(|e| TapeError::InvalidSpec(e.to_string()))?)
        }
        PriceProcess::Constant { .. } => None,
    };
    let lots = match spec.volume {
        VolumeProcess::UniformLots { max } => {
            Some(Uniform::new_inclusive(1u32, max).map_err(|e| TapeError::InvalidSpec(e.to_string()))?)
        }
        _ => None,
    };
    let lognormal_volume = match spec.volume {
        VolumeProcess::Lognormal { mu, sigma } => {
            Some(LogNormal::new(mu, sigma).map_err(|e| TapeError::InvalidSpec(e.to_string()))?)
        }
        _ => None,
    };

    let mut log_price = match spec.price {
        PriceProcess::Constant { price } => price.ln(),
        PriceProcess::LognormalWalk { start, .. } => start.ln(),
    };
    let mut trades = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let price = match spec.price {
            PriceProcess::Constant { price } => price,
            PriceProcess::LognormalWalk { .. } => {
                if i > 0 {
                    log_price += step.as_ref().unwrap().sample(&mut rng);
                }
                log_price.exp()
            }
        };
        let volume = match spec.volume {
            VolumeProcess::Constant { volume } => volume,
            VolumeProcess::UniformLots { .. } => f64::from(lots.as_ref().unwrap().sample(&mut rng)),
            VolumeProcess::Lognormal { .. } => lognormal_volume.as_ref().unwrap().sample(&mut rng),
        };
        let t = spec.dt * i as f64;
        let trade = Trade::new(t, price * volume, volume)
            .map_err(|e| TapeError::InvalidSpec(format!("trade {i} invalid: {e}")))?;
        trades.push(trade);
    }
    TradeTape::new(trades, format!("synthetic(seed={seed})"))
}
