//! Exponential-polynomial approximations of the price characteristic
//! function and their numerical inversion.
//!
//! An order-`k` approximation keeps the first `k` cumulants:
//!
//! ```text
//! F_1(x) = exp(i a1 x)
//! F_2(x) = exp(i a1 x - a2 x² / 2)
//! F_3(x) = exp(i a1 x - a2 x² / 2 - i a3 x³ / 6)
//! ```
//!
//! so its first `k` raw moments reproduce those of the measure it was fitted
//! to. The density is recovered with `η(p) = (1/2π) ∫ F(x) e^{-ipx} dx`.
//! `F_3` does not in general invert to a non-negative density; the pseudo
//! density is reported as is.

use std::f64::consts::PI;

pub use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{CentralStats, MeasureKind};
use crate::numeric::format::write_f64;
use crate::numeric::quadrature::{integrate, QuadratureOptions};

/// Gil-Pelaez integration runs over `(0, GIL_PELAEZ_SIGMAS / σ]`.
pub const GIL_PELAEZ_SIGMAS: f64 = 50.0;
/// Absolute error target for the Gil-Pelaez integral.
pub const GIL_PELAEZ_TOL: f64 = 1e-8;
/// Negative pseudo-density below this value raises the warning flag.
/// Cycles of the Gil-Pelaez phase over `u ≤ GIL_PELAEZ_ENVELOPE` beyond which the
/// adaptive quadrature cannot reach its tolerance within the segment budget.
pub const GIL_PELAEZ_MAX_CYCLES: f64 = 2000.0;
const GIL_PELAEZ_ENVELOPE: f64 = 9.0;
const GIL_PELAEZ_SEGMENTS: usize = 20_000;
pub const NEGATIVE_DENSITY_WARN: f64 = -1e-6;
pub const DEFAULT_GRID_SIGMAS: f64 = 10.0;
pub const DEFAULT_GRID_POINTS: usize = 4096;
/// Tabulation grids must reach at least this many σ on each side of the mean.
pub const MIN_GRID_SIGMAS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharFnError {
    #[error("approximation order {0} not supported (1, 2 or 3)")]
    UnsupportedOrder(u32),
    #[error("variance {0} must be positive for order >= 2")]
    NonPositiveVariance(f64),
    #[error("third central moment required for order 3")]
    MissingThirdMoment,
    #[error("coefficient `{0}` is not finite")]
    NonFiniteCoefficient(&'static str),
    #[error("moment order {n} exceeds fitted order {order}")]
    OrderExceedsFit { n: u32, order: u32 },
    #[error("operation needs an order-{expected} approximation, got order {actual}")]
    WrongOrder { expected: u32, actual: u32 },
    #[error("quadrature did not converge (error estimate {error_estimate:e})")]
    QuadratureFailure { error_estimate: f64 },
    #[error("order-1 approximation is a point mass and cannot be tabulated")]
    PointMassUnsupported,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Fitted characteristic-function approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharFnApprox {
    order: u32,
    a1: f64,
    a2: f64,
    a3: f64,
    kind: MeasureKind,
}

impl CharFnApprox {
    pub fn point_mass(mean: f64, kind: MeasureKind) -> Result<Self, CharFnError> {
        Self::new(1, mean, None, None, kind)
    }

    pub fn gaussian(mean: f64, variance: f64, kind: MeasureKind) -> Result<Self, CharFnError> {
        Self::new(2, mean, Some(variance), None, kind)
    }

    pub fn skewed(mean: f64, variance: f64, third: f64, kind: MeasureKind) -> Result<Self, CharFnError> {
        Self::new(3, mean, Some(variance), Some(third), kind)
    }

    fn new(order: u32, a1: f64, a2: Option<f64>, a3: Option<f64>, kind: MeasureKind) -> Result<Self, CharFnError> {
        if !a1.is_finite() {
            return Err(CharFnError::NonFiniteCoefficient("a1"));
        }
        let a2 = match (order, a2) {
            (1, _) => 0.0,
            (_, Some(v)) if v.is_nan() || v == f64::INFINITY => {
                return Err(CharFnError::NonFiniteCoefficient("a2"))
            }
            (_, Some(v)) if v > 0.0 => v,
            (_, Some(v)) => return Err(CharFnError::NonPositiveVariance(v)),
            (_, None) => return Err(CharFnError::NonPositiveVariance(0.0)),
        };
        let a3 = match (order, a3) {
            (3, Some(s)) if s.is_finite() => s,
            (3, Some(_)) => return Err(CharFnError::NonFiniteCoefficient("a3")),
            (3, None) => return Err(CharFnError::MissingThirdMoment),
            _ => 0.0,
        };
        Ok(Self { order, a1, a2, a3, kind })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.a1
    }

    pub fn variance(&self) -> Option<f64> {
        (self.order >= 2).then_some(self.a2)
    }

    pub fn third(&self) -> Option<f64> {
        (self.order == 3).then_some(self.a3)
    }

    /// `√a2`, zero for the point mass.
    pub fn sigma(&self) -> f64 {
        self.a2.sqrt()
    }

    /// `F_k(x)`.
    pub fn evaluate(&self, x: f64) -> Complex64 {
        let phase = self.a1 * x - self.a3 * x * x * x / 6.0;
        let magnitude = (-0.5 * self.a2 * x * x).exp();
        Complex64::new(magnitude * phase.cos(), magnitude * phase.sin())
    }

    /// Raw moment `i⁻ⁿ dⁿF_k/dxⁿ` at zero, from the cumulant recursion
    /// `m_n = Σ_{j=1..n} C(n-1, j-1) κ_j m_{n-j}`.
    pub fn moment(&self, n: u32) -> Result<f64, CharFnError> {
        if n == 0 {
            return Ok(1.0);
        }
        if n > self.order {
            return Err(CharFnError::OrderExceedsFit { n, order: self.order });
        }
        let cumulants = [self.a1, self.a2, self.a3];
        let n = n as usize;
        let mut raw = vec![1.0_f64; n + 1];
        for k in 1..=n {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for j in 1..=k.min(self.order as usize) {
                if j > 1 {
                    binom = binom * (k - j + 1) as f64 / (j - 1) as f64;
                }
                acc += binom * cumulants[j - 1] * raw[k - j];
            }
            raw[k] = acc;
        }
        Ok(raw[n])
    }

    /// Gaussian density of an order-2 approximation.
    pub fn gaussian_density(&self, p: f64) -> Result<f64, CharFnError> {
        if self.order != 2 {
            return Err(CharFnError::WrongOrder {
                expected: 2,
                actual: self.order,
            });
        }
        let sigma = self.sigma();
        let z = (p - self.a1) / sigma;
        Ok((-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma))
    }

    /// CDF at `p`. Order 1 is the unit step at the mean (right-continuous);
    /// orders 2 and 3 use the Gil-Pelaez integral.
    pub fn cdf(&self, p: f64) -> Result<f64, CharFnError> {
        self.cdf_with_error(p).map(|(v, _)| v)
    }

    /// CDF and the quadrature error estimate on it.
    pub fn cdf_with_error(&self, p: f64) -> Result<(f64, f64), CharFnError> {
        if self.order == 1 {
            return Ok((if p < self.a1 { 0.0 } else { 1.0 }, 0.0));
        }
        let sigma = self.sigma();
        // x = u / σ maps the integration range to (0, GIL_PELAEZ_SIGMAS].
        let shift = (self.a1 - p) / sigma;
        let cubic = self.a3 / (6.0 * sigma * sigma * sigma);
        let integrand = |u: f64| {
            let u2 = u * u;
            let slope = shift - cubic * u2;
            let phase = slope * u;
            (-0.5 * u2).exp() * slope * sinc(phase)
        };
        let u = GIL_PELAEZ_ENVELOPE;
        let cycles = (shift.abs() * u + cubic.abs() * u * u * u) / (2.0 * PI);
        if !(cycles <= GIL_PELAEZ_MAX_CYCLES) {
            // |integrand| ≤ e^{-u²/2}(|b| + |c|u²), whose integral over (0, ∞) is √(π/2)(|b| + |c|).
            let bound = (PI / 2.0).sqrt() * (shift.abs() + cubic.abs());
            return Err(CharFnError::QuadratureFailure { error_estimate: bound / PI });
        }
        let opts = QuadratureOptions {
            abs_tol: GIL_PELAEZ_TOL,
            initial_pieces: 64,
            max_segments: GIL_PELAEZ_SEGMENTS,
        };
        let r = integrate(integrand, 0.0, GIL_PELAEZ_SIGMAS, &opts).map_err(|e| CharFnError::QuadratureFailure {
            error_estimate: e.error_estimate / PI,
        })?;
        Ok((0.5 - r.value / PI, r.error_estimate / PI))
    }

    /// Density (or pseudo-density) tabulated by FFT over samples of `F_k`.
    pub fn tabulate(&self, grid: GridSpec) -> Result<DensityGrid, CharFnError> {
        if self.order == 1 {
            return Err(CharFnError::PointMassUnsupported);
        }
        let GridSpec { min, max, points } = grid;
        if points < 2 || !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(CharFnError::InvalidGrid(format!(
                "need finite min < max and at least 2 points (got [{min}, {max}], {points} points)"
            )));
        }
        let reach = MIN_GRID_SIGMAS * self.sigma();
        if min > self.a1 - reach || max < self.a1 + reach {
            return Err(CharFnError::InvalidGrid(format!(
                "[{min}, {max}] does not cover mean ± {MIN_GRID_SIGMAS}σ = [{}, {}]",
                self.a1 - reach,
                self.a1 + reach
            )));
        }

        let n = points;
        let step = (max - min) / (n - 1) as f64;
        let dx = 2.0 * PI / (n as f64 * step);
        let half = n / 2;
        let mut buffer: Vec<Complex64> = (0..n)
            .map(|k| {
                let x = (k as f64 - half as f64) * dx;
                self.evaluate(x) * Complex64::from_polar(1.0, -x * min)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buffer);

        let scale = dx / (2.0 * PI);
        let prices: Vec<f64> = (0..n).map(|j| min + j as f64 * step).collect();
        let density: Vec<f64> = buffer
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let turn = 2.0 * PI * ((half * j) % n) as f64 / n as f64;
                (z * Complex64::from_polar(1.0, turn)).re * scale
            })
            .collect();

        let mut cdf = Vec::with_capacity(n);
        let mut running = 0.0;
        cdf.push(0.0);
        for j in 1..n {
            running += 0.5 * (density[j - 1] + density[j]) * step;
            cdf.push(running);
        }
        let min_density = density.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(DensityGrid {
            prices,
            density,
            cdf,
            diagnostics: DensityDiagnostics {
                integral_of_density: running,
                min_density,
                warning: min_density < NEGATIVE_DENSITY_WARN,
            },
        })
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Fits an order-`k` approximation whose first `k` moments match `stats`.
pub fn fit_charfn(stats: &CentralStats, k: u32) -> Result<CharFnApprox, CharFnError> {
    match k {
        1 => CharFnApprox::point_mass(stats.mean, stats.kind),
        2 => CharFnApprox::gaussian(stats.mean, stats.variance, stats.kind),
        3 => CharFnApprox::skewed(
            stats.mean,
            stats.variance,
            stats.third_central.ok_or(CharFnError::MissingThirdMoment)?,
            stats.kind,
        ),
        other => Err(CharFnError::UnsupportedOrder(other)),
    }
}

/// Uniform price grid, `points` samples from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    /// `mean ± sigmas·σ` with `points` samples.
    pub fn around(f: &CharFnApprox, sigmas: f64, points: usize) -> Self {
        let reach = sigmas * f.sigma();
        Self {
            min: f.mean() - reach,
            max: f.mean() + reach,
            points,
        }
    }

    pub fn default_for(f: &CharFnApprox) -> Self {
        Self::around(f, DEFAULT_GRID_SIGMAS, DEFAULT_GRID_POINTS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    pub integral_of_density: f64,
    pub min_density: f64,
    /// Pseudo-density dips below the warning threshold somewhere.
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub prices: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub diagnostics: DensityDiagnostics,
}

impl DensityGrid {
    /// CSV with header `price,density,cdf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("price,density,cdf\n");
        for ((p, d), c) in self.prices.iter().zip(&self.density).zip(&self.cdf) {
            write_f64(&mut out, *p);
            out.push(',');
            write_f64(&mut out, *d);
            out.push(',');
            write_f64(&mut out, *c);
            out.push('\n');
        }
        out
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string(&self.diagnostics).expect("diagnostics serialize")
    }

    pub fn step(&self) -> f64 {
        self.prices[1] - self.prices[0]
    }
}
