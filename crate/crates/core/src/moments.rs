//! Frequency-based distributions and market-based price moments.
//!
//! For a slice of `N` trades with values `C_i`, volumes `U_i` and prices
//! `p_i = C_i / U_i`:
//!
//! * market-based moments: `p(n) = Σ C_iⁿ / Σ U_iⁿ` (VWAP at `n = 1`),
//! * frequency-based moments: `π(n) = (1/N) Σ p_iⁿ`.
//!
//! The two sequences coincide when every volume in the slice is the same, and
//! differ otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::format::write_f64;
use crate::numeric::summation::CompensatedSum;
use crate::tape::TradeSlice;

/// Default highest moment order: enough for the order-3 approximation.
pub const DEFAULT_N_MAX: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("moment order must be at least 1")]
    InvalidOrder,
    #[error("{quantity}^{n} of trade {index} (t = {t}) is out of floating-point range")]
    OrderOverflow {
        n: u32,
        index: usize,
        t: f64,
        quantity: &'static str,
    },
    #[error("moment order {have} computed, {need} required")]
    InsufficientOrder { have: u32, need: u32 },
    #[error("market-based variance p(2) - p(1)^2 = {variance} is negative")]
    NegativeVariance { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Frequency,
    Market,
}

impl std::fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeasureKind::Frequency => "frequency",
            MeasureKind::Market => "market",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub level: f64,
    pub count: u64,
}

/// Counting measure over exact float levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    atoms: Vec<Atom>,
    total: u64,
}

impl FrequencyDistribution {
    /// Groups identical levels. Returns `None` for an empty input or a
    /// non-finite level.
    pub fn from_levels<I: IntoIterator<Item = f64>>(levels: I) -> Option<Self> {
        let mut sorted: Vec<f64> = levels.into_iter().collect();
        if sorted.is_empty() || sorted.iter().any(|x| !x.is_finite()) {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let mut atoms: Vec<Atom> = Vec::new();
        for level in sorted {
            match atoms.last_mut() {
                Some(last) if last.level == level => last.count += 1,
                _ => atoms.push(Atom { level, count: 1 }),
            }
        }
        let total = atoms.iter().map(|a| a.count).sum();
        Some(Self { atoms, total })
    }

    /// Builds from explicit `(level, count)` pairs; levels must be strictly
    /// increasing and counts positive.
    pub fn from_atoms(atoms: Vec<Atom>) -> Option<Self> {
        if atoms.is_empty()
            || atoms.iter().any(|a| a.count == 0 || !a.level.is_finite())
            || atoms.windows(2).any(|w| w[0].level >= w[1].level)
        {
            return None;
        }
        let total = atoms.iter().map(|a| a.count).sum();
        Some(Self { atoms, total })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mass(&self, atom: &Atom) -> f64 {
        atom.count as f64 / self.total as f64
    }

    pub fn masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| self.mass(a))
    }

    /// `(level, cumulative mass up to and including level)` pairs.
    pub fn cumulative(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let total = self.total as f64;
        self.atoms.iter().scan(0u64, move |acc, a| {
            *acc += a.count;
            Some((a.level, *acc as f64 / total))
        })
    }

    /// Mass of atoms with level `< x` and `<= x`.
    pub fn mass_below_and_at(&self, x: f64) -> (f64, f64) {
        let below: u64 = self.atoms.iter().filter(|a| a.level < x).map(|a| a.count).sum();
        let at_or_below: u64 = self.atoms.iter().filter(|a| a.level <= x).map(|a| a.count).sum();
        let total = self.total as f64;
        (below as f64 / total, at_or_below as f64 / total)
    }

    pub fn min_level(&self) -> f64 {
        self.atoms[0].level
    }

    pub fn max_level(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].level
    }

    /// CSV with header `level,count,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,count,mass\n");
        for a in &self.atoms {
            write_f64(&mut out, a.level);
            out.push(',');
            out.push_str(&a.count.to_string());
            out.push(',');
            write_f64(&mut out, self.mass(a));
            out.push('\n');
        }
        out
    }
}

pub fn value_distribution(slice: &TradeSlice<'_>) -> FrequencyDistribution {
    FrequencyDistribution::from_levels(slice.values()).expect("trade slices are non-empty")
}

pub fn volume_distribution(slice: &TradeSlice<'_>) -> FrequencyDistribution {
    FrequencyDistribution::from_levels(slice.volumes()).expect("trade slices are non-empty")
}

/// Frequency-based price measure: each trade counts once at its price.
pub fn price_distribution(slice: &TradeSlice<'_>) -> FrequencyDistribution {
    FrequencyDistribution::from_levels(slice.prices()).expect("trade slices are non-empty")
}

/// Moments of order `n` for one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: u32,
    /// `Σ C_iⁿ`
    #[serde(rename = "C_sum")]
    pub c_sum: f64,
    /// `Σ U_iⁿ`
    #[serde(rename = "U_sum")]
    pub u_sum: f64,
    #[serde(rename = "C_m")]
    pub c_mean: f64,
    #[serde(rename = "U_m")]
    pub u_mean: f64,
    /// Market-based `p(n) = C_sum / U_sum`.
    pub p: f64,
    /// Frequency-based `π(n)`.
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSet {
    pub n_max: u32,
    #[serde(rename = "N")]
    pub count: usize,
    pub rows: Vec<MomentRow>,
    #[serde(skip)]
    price_min: f64,
    #[serde(skip)]
    price_max: f64,
}

impl MomentSet {
    pub fn row(&self, n: u32) -> Option<&MomentRow> {
        n.checked_sub(1).and_then(|i| self.rows.get(i as usize))
    }

    /// Market-based `p(n)`.
    pub fn p(&self, n: u32) -> Option<f64> {
        self.row(n).map(|r| r.p)
    }

    /// Frequency-based `π(n)`.
    pub fn pi(&self, n: u32) -> Option<f64> {
        self.row(n).map(|r| r.pi)
    }

    pub fn moment(&self, kind: MeasureKind, n: u32) -> Option<f64> {
        match kind {
            MeasureKind::Market => self.p(n),
            MeasureKind::Frequency => self.pi(n),
        }
    }

    pub fn price_range(&self) -> (f64, f64) {
        (self.price_min, self.price_max)
    }

    /// All trades in the slice share one price.
    pub fn is_degenerate(&self) -> bool {
        self.price_min == self.price_max
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moment sets serialize")
    }

    fn require(&self, need: u32) -> Result<(), MomentError> {
        if self.n_max < need {
            Err(MomentError::InsufficientOrder { have: self.n_max, need })
        } else {
            Ok(())
        }
    }
}

fn checked_power(x: f64, n: u32, index: usize, t: f64, quantity: &'static str) -> Result<f64, MomentError> {
    let y = x.powi(n as i32);
    if y.is_finite() && y > 0.0 {
        Ok(y)
    } else {
        Err(MomentError::OrderOverflow { n, index, t, quantity })
    }
}

/// Power sums `(Σ C_iⁿ, Σ U_iⁿ, Σ p_iⁿ)` in slice order.
fn power_sums(slice: &TradeSlice<'_>, n: u32) -> Result<(f64, f64, f64), MomentError> {
    let mut c = CompensatedSum::new();
    let mut u = CompensatedSum::new();
    let mut p = CompensatedSum::new();
    for (i, tr) in slice.iter().enumerate() {
        c.add(checked_power(tr.value(), n, i, tr.t(), "value")?);
        u.add(checked_power(tr.volume(), n, i, tr.t(), "volume")?);
        p.add(checked_power(tr.price(), n, i, tr.t(), "price")?);
    }
    Ok((c.total(), u.total(), p.total()))
}

/// Market- and frequency-based moments of orders `1..=n_max`.
pub fn compute_moments(slice: &TradeSlice<'_>, n_max: u32) -> Result<MomentSet, MomentError> {
    if n_max == 0 {
        return Err(MomentError::InvalidOrder);
    }
    if n_max > i32::MAX as u32 {
        return Err(MomentError::OrderOverflow {
            n: n_max,
            index: 0,
            t: slice[0].t(),
            quantity: "order",
        });
    }
    let count = slice.count();
    let nf = count as f64;
    let mut rows = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let (c_sum, u_sum, p_sum) = power_sums(slice, n)?;
        rows.push(MomentRow {
            n,
            c_sum,
            u_sum,
            c_mean: c_sum / nf,
            u_mean: u_sum / nf,
            p: c_sum / u_sum,
            pi: p_sum / nf,
        });
    }
    let (price_min, price_max) = slice
        .prices()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
    Ok(MomentSet {
        n_max,
        count,
        rows,
        price_min,
        price_max,
    })
}

/// Volume-weighted average price `Σ C_i / Σ U_i`.
pub fn vwap(slice: &TradeSlice<'_>) -> f64 {
    let mut c = CompensatedSum::new();
    let mut u = CompensatedSum::new();
    for tr in slice.iter() {
        c.add(tr.value().powi(1));
        u.add(tr.volume().powi(1));
    }
    c.total() / u.total()
}

/// Price variance `m(2) - m(1)²` under the chosen measure.
///
/// The frequency variance is non-negative in exact arithmetic; rounding
/// residue below zero is returned as zero. A negative market variance is a
/// property of the market-based moment sequence and is reported as
/// [`MomentError::NegativeVariance`].
pub fn volatility(m: &MomentSet, kind: MeasureKind) -> Result<f64, MomentError> {
    m.require(2)?;
    if m.is_degenerate() {
        return Ok(0.0);
    }
    let first = m.moment(kind, 1).unwrap();
    let second = m.moment(kind, 2).unwrap();
    let variance = second - first * first;
    match kind {
        MeasureKind::Frequency => Ok(variance.max(0.0)),
        MeasureKind::Market if variance < 0.0 => Err(MomentError::NegativeVariance { variance }),
        MeasureKind::Market => Ok(variance),
    }
}

/// Third central coefficient `m(3) - 3·m(1)·σ² - m(1)³`, with
/// `σ² = m(2) - m(1)²` taken unclamped.
///
/// This already is the third central moment `E[(p - m(1))³]`; no further
/// `3·m(1)³` correction applies.
pub fn third_central(m: &MomentSet, kind: MeasureKind) -> Result<f64, MomentError> {
    m.require(3)?;
    if m.is_degenerate() {
        return Ok(0.0);
    }
    let m1 = m.moment(kind, 1).unwrap();
    let m2 = m.moment(kind, 2).unwrap();
    let m3 = m.moment(kind, 3).unwrap();
    let variance = m2 - m1 * m1;
    Ok(m3 - 3.0 * m1 * variance - m1 * m1 * m1)
}

/// Mean, variance and (optionally) third central moment of one measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralStats {
    pub mean: f64,
    pub variance: f64,
    pub third_central: Option<f64>,
    pub kind: MeasureKind,
}

impl CentralStats {
    /// Fails with `NegativeVariance` for a market measure whose variance is
    /// negative.
    pub fn from_moments(m: &MomentSet, kind: MeasureKind) -> Result<Self, MomentError> {
        let variance = volatility(m, kind)?;
        let third_central = if m.n_max >= 3 { Some(third_central(m, kind)?) } else { None };
        Ok(Self {
            mean: m.moment(kind, 1).unwrap(),
            variance,
            third_central,
            kind,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}
