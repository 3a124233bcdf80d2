//! Value-at-risk quantiles under frequency-based and market-based price
//! measures, and the side-by-side comparison of the two.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::charfn::{fit_charfn, CharFnApprox, CharFnError, GridSpec, MIN_GRID_SIGMAS, NEGATIVE_DENSITY_WARN};
use crate::moments::{
    compute_moments, price_distribution, CentralStats, FrequencyDistribution, MeasureKind, MomentError, MomentSet,
};
use crate::numeric::format::write_f64;
use crate::numeric::normal;
use crate::tape::{TapeError, TradeSlice, TradeTape, Window};

/// Default tail probabilities: the 1% and 3% benchmarks and the 5% example.
pub const DEFAULT_EPSILONS: [f64; 3] = [0.01, 0.03, 0.05];
/// Half-width of the order-3 root bracket, in σ.
pub const ORDER3_BRACKET_SIGMAS: f64 = 12.0;
/// Root tolerance on the CDF value for the order-3 quantile.
pub const ORDER3_CDF_TOL: f64 = 1e-8;
const ORDER3_SCAN_CELLS: usize = 96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarError {
    #[error("tail probability {0} must lie strictly between 0 and 1")]
    InvalidEpsilon(f64),
    #[error("variance {0} must be positive for a Gaussian quantile")]
    NonPositiveVariance(f64),
    #[error("CDF never crosses {epsilon} inside [{low}, {high}] (CDF {cdf_low:e} at the low end, {cdf_high:e} at the high end)")]
    BracketFailure {
        epsilon: f64,
        low: f64,
        high: f64,
        cdf_low: f64,
        cdf_high: f64,
    },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    CharFn(#[from] CharFnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarMeasure {
    FrequencyEmpirical,
    FrequencyGaussian,
    MarketGaussian,
    MarketOrder3,
}

impl VarMeasure {
    pub const ALL: [VarMeasure; 4] = [
        VarMeasure::FrequencyEmpirical,
        VarMeasure::FrequencyGaussian,
        VarMeasure::MarketGaussian,
        VarMeasure::MarketOrder3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VarMeasure::FrequencyEmpirical => "frequency-empirical",
            VarMeasure::FrequencyGaussian => "frequency-gaussian",
            VarMeasure::MarketGaussian => "market-gaussian",
            VarMeasure::MarketOrder3 => "market-order3",
        }
    }

    pub fn kind(&self) -> MeasureKind {
        match self {
            VarMeasure::FrequencyEmpirical | VarMeasure::FrequencyGaussian => MeasureKind::Frequency,
            VarMeasure::MarketGaussian | VarMeasure::MarketOrder3 => MeasureKind::Market,
        }
    }
}

impl fmt::Display for VarMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarMeasure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VarMeasure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown measure `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Every trade has the same price; quantiles are that price.
    Degenerate,
    /// Market-based variance is negative; market measures were skipped.
    NegativeVariance { variance: f64 },
    /// The order-3 pseudo-density is negative inside the root bracket.
    NegativePseudoDensity { min_density: f64 },
    /// An order-3 quantile could not be computed.
    Order3Unavailable { epsilon: f64, reason: String },
}

impl Warning {
    pub fn code(&self) -> &'static str {
        match self {
            Warning::Degenerate => "degenerate",
            Warning::NegativeVariance { .. } => "negative-variance",
            Warning::NegativePseudoDensity { .. } => "negative-pseudo-density",
            Warning::Order3Unavailable { .. } => "order3-unavailable",
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Degenerate => f.write_str("degenerate: all prices equal"),
            Warning::NegativeVariance { variance } => {
                write!(f, "negative-variance: market p(2) - p(1)^2 = {variance}")
            }
            Warning::NegativePseudoDensity { min_density } => {
                write!(f, "negative-pseudo-density: minimum {min_density:e}")
            }
            Warning::Order3Unavailable { epsilon, reason } => {
                write!(f, "order3-unavailable at epsilon {epsilon}: {reason}")
            }
        }
    }
}

impl Serialize for Warning {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarRequest {
    pub epsilon: f64,
    pub measure: VarMeasure,
    pub n_max: u32,
}

impl VarRequest {
    pub fn new(epsilon: f64, measure: VarMeasure, n_max: u32) -> Result<Self, VarError> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, measure, n_max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDiagnostics {
    #[serde(rename = "N")]
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a3: Option<f64>,
    pub cdf_at_quantile: f64,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarResult {
    pub epsilon: f64,
    pub measure: VarMeasure,
    pub p_epsilon: f64,
    pub diagnostics: VarDiagnostics,
}

impl VarResult {
    pub fn sigma(&self) -> f64 {
        self.diagnostics.variance.sqrt()
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), VarError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(VarError::InvalidEpsilon(epsilon))
    }
}

/// Smallest atom level whose cumulative mass is at least `epsilon`.
pub fn empirical_quantile(dist: &FrequencyDistribution, epsilon: f64) -> Result<f64, VarError> {
    check_epsilon(epsilon)?;
    Ok(dist
        .cumulative()
        .find(|&(_, mass)| mass >= epsilon)
        .map_or(dist.max_level(), |(level, _)| level))
}

/// `mean + σ·Φ⁻¹(ε)`.
pub fn gaussian_quantile(stats: &CentralStats, epsilon: f64) -> Result<f64, VarError> {
    check_epsilon(epsilon)?;
    if !(stats.variance > 0.0) {
        return Err(VarError::NonPositiveVariance(stats.variance));
    }
    Ok(stats.mean + stats.sigma() * normal::quantile(epsilon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order3Quantile {
    pub price: f64,
    pub cdf: f64,
    pub warnings: Vec<Warning>,
}

/// Smallest root of `CDF(p) = ε` for an order-3 approximation inside
/// `mean ± 12σ`.
pub fn order3_quantile(f: &CharFnApprox, epsilon: f64) -> Result<Order3Quantile, VarError> {
    order3_quantile_within(f, epsilon, ORDER3_BRACKET_SIGMAS)
}

/// As [`order3_quantile`] with a bracket of `mean ± bracket_sigmas·σ`.
///
/// The first grid cell whose CDF reaches `ε` is located on the FFT-tabulated
/// CDF, confirmed with the Gil-Pelaez CDF (or found by a fixed coarse scan
/// when the two disagree), then bisected to [`ORDER3_CDF_TOL`]. A negative
/// pseudo-density anywhere in the bracket adds a warning: the CDF may then be
/// non-monotone and only the first crossing is returned.
pub fn order3_quantile_within(f: &CharFnApprox, epsilon: f64, bracket_sigmas: f64) -> Result<Order3Quantile, VarError> {
    check_epsilon(epsilon)?;
    if f.order() != 3 {
        return Err(CharFnError::WrongOrder {
            expected: 3,
            actual: f.order(),
        }
        .into());
    }
    let sigma = f.sigma();
    let low = f.mean() - bracket_sigmas * sigma;
    let high = f.mean() + bracket_sigmas * sigma;
    let cdf_low = f.cdf(low)?;
    let bracket_failure = |cdf_high: f64| VarError::BracketFailure {
        epsilon,
        low,
        high,
        cdf_low,
        cdf_high,
    };
    if cdf_low >= epsilon {
        return Err(bracket_failure(f.cdf(high)?));
    }

    // The tabulated CDF locates the first crossing cheaply; Gil-Pelaez then
    // confirms the cell, falling back to a coarse scan if it disagrees.
    let grid = f.tabulate(GridSpec::around(f, bracket_sigmas.max(MIN_GRID_SIGMAS), 2048))?;
    let in_bracket = |p: &f64| *p >= low && *p <= high;
    let offset = grid.cdf[0];
    let guess = grid
        .prices
        .iter()
        .zip(&grid.cdf)
        .position(|(p, c)| in_bracket(p) && c - offset >= epsilon);
    let mut cell = None;
    if let Some(j) = guess {
        let a = grid.prices[j.saturating_sub(2)].max(low);
        let b = grid.prices[(j + 2).min(grid.prices.len() - 1)].min(high);
        let (ca, cb) = (if a == low { cdf_low } else { f.cdf(a)? }, f.cdf(b)?);
        if ca < epsilon && cb >= epsilon {
            cell = Some((a, b, cb));
        }
    }
    if cell.is_none() {
        let step = (high - low) / ORDER3_SCAN_CELLS as f64;
        let mut a = low;
        for j in 1..=ORDER3_SCAN_CELLS {
            let x = if j == ORDER3_SCAN_CELLS { high } else { low + step * j as f64 };
            let c = f.cdf(x)?;
            if c >= epsilon {
                cell = Some((a, x, c));
                break;
            }
            a = x;
        }
    }
    let Some((mut a, mut b, cdf_b)) = cell else {
        return Err(bracket_failure(f.cdf(high)?));
    };

    let (mut price, mut cdf) = (b, cdf_b);
    let width_tol = 1e-10 * sigma;
    for _ in 0..200 {
        if (cdf - epsilon).abs() <= ORDER3_CDF_TOL && b - a <= width_tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            break;
        }
        let c = f.cdf(mid)?;
        if c >= epsilon {
            b = mid;
            price = mid;
            cdf = c;
        } else {
            a = mid;
            if (c - epsilon).abs() < (cdf - epsilon).abs() {
                price = mid;
                cdf = c;
            }
        }
    }

    let mut warnings = Vec::new();
    let min_density = grid
        .prices
        .iter()
        .zip(&grid.density)
        .filter(|(p, _)| in_bracket(p))
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    if min_density < NEGATIVE_DENSITY_WARN {
        warnings.push(Warning::NegativePseudoDensity { min_density });
    }
    Ok(Order3Quantile { price, cdf, warnings })
}

/// Moments and per-measure statistics shared by all quantiles of a slice.
struct SliceModel {
    moments: MomentSet,
    distribution: FrequencyDistribution,
    frequency: CentralStats,
    market: Result<CentralStats, MomentError>,
}

impl SliceModel {
    fn build(slice: &TradeSlice<'_>, n_max: u32) -> Result<Self, VarError> {
        let moments = compute_moments(slice, n_max.max(2))?;
        let frequency = CentralStats::from_moments(&moments, MeasureKind::Frequency)?;
        let market = CentralStats::from_moments(&moments, MeasureKind::Market);
        if let Err(e) = &market {
            if !matches!(e, MomentError::NegativeVariance { .. }) {
                return Err(e.clone().into());
            }
        }
        Ok(Self {
            moments,
            distribution: price_distribution(slice),
            frequency,
            market,
        })
    }

    fn quantile(&self, measure: VarMeasure, epsilon: f64) -> Result<VarResult, VarError> {
        check_epsilon(epsilon)?;
        let count = self.moments.count;
        let stats = match measure.kind() {
            MeasureKind::Frequency => self.frequency,
            MeasureKind::Market => self.market.clone()?,
        };
        let result = |p_epsilon: f64, cdf_at_quantile: f64, a3: Option<f64>, warnings: Vec<Warning>| VarResult {
            epsilon,
            measure,
            p_epsilon,
            diagnostics: VarDiagnostics {
                count,
                mean: stats.mean,
                variance: stats.variance,
                a3,
                cdf_at_quantile,
                warnings,
            },
        };

        if self.moments.is_degenerate() {
            let price = self.distribution.min_level();
            return Ok(result(price, 1.0, None, vec![Warning::Degenerate]));
        }
        match measure {
            VarMeasure::FrequencyEmpirical => {
                let p = empirical_quantile(&self.distribution, epsilon)?;
                let (_, at) = self.distribution.mass_below_and_at(p);
                Ok(result(p, at, None, Vec::new()))
            }
            VarMeasure::FrequencyGaussian | VarMeasure::MarketGaussian => {
                let p = gaussian_quantile(&stats, epsilon)?;
                let cdf = normal::cdf((p - stats.mean) / stats.sigma());
                Ok(result(p, cdf, None, Vec::new()))
            }
            VarMeasure::MarketOrder3 => {
                if self.moments.n_max < 3 {
                    return Err(MomentError::InsufficientOrder {
                        have: self.moments.n_max,
                        need: 3,
                    }
                    .into());
                }
                let f = fit_charfn(&stats, 3)?;
                let q = order3_quantile(&f, epsilon)?;
                Ok(result(q.price, q.cdf, f.third(), q.warnings))
            }
        }
    }
}

/// Single VaR quantile for one measure.
pub fn value_at_risk(slice: &TradeSlice<'_>, request: &VarRequest) -> Result<VarResult, VarError> {
    let n_max = match request.measure {
        VarMeasure::MarketOrder3 => request.n_max.max(3),
        _ => request.n_max,
    };
    SliceModel::build(slice, n_max)?.quantile(request.measure, request.epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub epsilon: f64,
    pub frequency_gaussian: f64,
    pub market_gaussian: f64,
    /// `p_market(ε) - p_frequency(ε)`.
    pub divergence: f64,
}

/// Frequency-based and market-based quantiles from one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(rename = "N")]
    pub count: usize,
    pub epsilons: Vec<f64>,
    pub results: Vec<VarResult>,
    pub moment_table: MomentSet,
    pub divergence: Vec<DivergenceRow>,
    pub warnings: Vec<Warning>,
}

pub const REPORT_CSV_HEADER: &str = "epsilon,measure,p_epsilon,mean,sigma,warnings";

impl ComparisonReport {
    pub fn result(&self, measure: VarMeasure, epsilon: f64) -> Option<&VarResult> {
        self.results.iter().find(|r| r.measure == measure && r.epsilon == epsilon)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// CSV rows (no header). Divergence rows use the measure name
    /// `divergence` and leave `mean` and `sigma` empty. Report-level warnings
    /// are appended to every row.
    pub fn write_csv_rows(&self, out: &mut String, prefix: &str) {
        for &eps in &self.epsilons {
            for r in self.results.iter().filter(|r| r.epsilon == eps) {
                out.push_str(prefix);
                write_f64(out, eps);
                out.push(',');
                out.push_str(r.measure.as_str());
                out.push(',');
                write_f64(out, r.p_epsilon);
                out.push(',');
                write_f64(out, r.diagnostics.mean);
                out.push(',');
                write_f64(out, r.sigma());
                out.push(',');
                out.push_str(&warning_codes(r.diagnostics.warnings.iter().chain(&self.warnings)));
                out.push('\n');
            }
            if let Some(d) = self.divergence.iter().find(|d| d.epsilon == eps) {
                out.push_str(prefix);
                write_f64(out, eps);
                out.push_str(",divergence,");
                write_f64(out, d.divergence);
                out.push_str(",,,");
                out.push_str(&warning_codes(self.warnings.iter()));
                out.push('\n');
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        self.write_csv_rows(&mut out, "");
        out
    }
}

pub fn warning_codes<'a>(warnings: impl Iterator<Item = &'a Warning>) -> String {
    let mut codes: Vec<&str> = Vec::new();
    for w in warnings {
        if !codes.contains(&w.code()) {
            codes.push(w.code());
        }
    }
    codes.join(";")
}

/// Frequency-empirical, frequency-Gaussian and market-Gaussian quantiles
/// (plus market order 3 when `n_max >= 3`) for every `ε`.
///
/// A negative market variance drops the market rows and records a warning
/// instead of failing.
pub fn compare(slice: &TradeSlice<'_>, epsilons: &[f64], n_max: u32) -> Result<ComparisonReport, VarError> {
    for &e in epsilons {
        check_epsilon(e)?;
    }
    let model = SliceModel::build(slice, n_max)?;
    let mut warnings = Vec::new();
    if let Err(MomentError::NegativeVariance { variance }) = model.market {
        warnings.push(Warning::NegativeVariance { variance });
    }
    let degenerate = model.moments.is_degenerate();
    let market_ok = model.market.is_ok();
    let with_order3 = n_max >= 3 && market_ok;

    let mut results = Vec::new();
    let mut divergence = Vec::new();
    for &eps in epsilons {
        results.push(model.quantile(VarMeasure::FrequencyEmpirical, eps)?);
        let freq = model.quantile(VarMeasure::FrequencyGaussian, eps)?;
        let freq_p = freq.p_epsilon;
        results.push(freq);
        if market_ok {
            let market = model.quantile(VarMeasure::MarketGaussian, eps)?;
            divergence.push(DivergenceRow {
                epsilon: eps,
                frequency_gaussian: freq_p,
                market_gaussian: market.p_epsilon,
                divergence: market.p_epsilon - freq_p,
            });
            results.push(market);
        }
        if with_order3 {
            match model.quantile(VarMeasure::MarketOrder3, eps) {
                Ok(r) => results.push(r),
                Err(e @ (VarError::BracketFailure { .. } | VarError::CharFn(_))) => {
                    warnings.push(Warning::Order3Unavailable {
                        epsilon: eps,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    if degenerate && !warnings.contains(&Warning::Degenerate) {
        warnings.push(Warning::Degenerate);
    }
    Ok(ComparisonReport {
        window: None,
        count: model.moments.count,
        epsilons: epsilons.to_vec(),
        results,
        moment_table: model.moments,
        divergence,
        warnings,
    })
}

/// Selects `window` on `tape` and compares inside it.
pub fn compare_window(tape: &TradeTape, window: Window, epsilons: &[f64], n_max: u32) -> Result<ComparisonReport, VarError> {
    let slice = tape.select(window)?;
    let mut report = compare(&slice, epsilons, n_max)?;
    report.window = Some(window);
    Ok(report)
}

/// Window centers `start, start + stride, …` up to and including `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSpec {
    pub start: f64,
    pub end: f64,
    pub stride: f64,
    pub width: f64,
}

impl SweepSpec {
    pub fn centers(&self) -> Result<Vec<f64>, VarError> {
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(VarError::InvalidSweep(format!("stride {} must be positive", self.stride)));
        }
        if !(self.start.is_finite() && self.end.is_finite()) || self.end < self.start {
            return Err(VarError::InvalidSweep(format!("need start <= end, got {} .. {}", self.start, self.end)));
        }
        let steps = ((self.end - self.start) / self.stride + 1e-9).floor();
        if steps > 1e7 {
            return Err(VarError::InvalidSweep(format!("{steps} windows is too many")));
        }
        Ok((0..=steps as usize).map(|i| self.start + self.stride * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub center: f64,
    pub outcome: Result<ComparisonReport, VarError>,
}

/// One comparison per window center, evaluated in parallel and returned in
/// center order.
pub fn sweep(tape: &TradeTape, spec: &SweepSpec, epsilons: &[f64], n_max: u32) -> Result<Vec<SweepEntry>, VarError> {
    Window::new(spec.start, spec.width)?;
    for &e in epsilons {
        check_epsilon(e)?;
    }
    let centers = spec.centers()?;
    Ok(centers
        .into_par_iter()
        .map(|center| SweepEntry {
            center,
            outcome: Window::new(center, spec.width)
                .map_err(VarError::from)
                .and_then(|w| compare_window(tape, w, epsilons, n_max)),
        })
        .collect())
}
