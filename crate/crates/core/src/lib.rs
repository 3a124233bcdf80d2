//! Trade-tape risk engine.
//!
//! Computes the conventional frequency-based price probability (each trade
//! counts once at its price) next to the market-based price moments built
//! from trade value and volume power sums, fits exponential-polynomial
//! characteristic-function approximations to both, and extracts
//! value-at-risk quantiles `p(ε)` under each measure.
//!
//! ```
//! use tapevar_core::{compare, parse_tape, Window};
//!
//! let tape = parse_tape("t,value,volume\n1,4,2\n2,9,3", "example").unwrap();
//! let slice = tape.select(Window::new(1.5, 1.0).unwrap()).unwrap();
//! let report = compare(&slice, &[0.05], 3).unwrap();
//! assert!((report.divergence[0].divergence + 0.455).abs() < 5e-3);
//! ```

pub mod charfn;
pub mod moments;
pub mod numeric;
pub mod tape;
pub mod var;

pub use charfn::{fit_charfn, CharFnApprox, CharFnError, DensityDiagnostics, DensityGrid, GridSpec};
pub use moments::{
    compute_moments, price_distribution, third_central, value_distribution, volatility, volume_distribution, vwap,
    Atom, CentralStats, FrequencyDistribution, MeasureKind, MomentError, MomentRow, MomentSet, DEFAULT_N_MAX,
};
pub use tape::{
    parse_tape, parse_tape_reader, synthesize_tape, PriceProcess, TapeError, TapeSpec, Trade, TradeSlice, TradeTape,
    VolumeProcess, Window,
};
pub use var::{
    compare, compare_window, empirical_quantile, gaussian_quantile, order3_quantile, order3_quantile_within, Order3Quantile, sweep,
    value_at_risk, ComparisonReport, DivergenceRow, SweepEntry, SweepSpec, VarError, VarMeasure, VarRequest, VarResult,
    Warning, DEFAULT_EPSILONS,
};
