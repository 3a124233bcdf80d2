//! Browser bindings for the tapevar engine.
//!
//! Three operations are exported to JavaScript: synthesize a tape, compare
//! the VaR measures on a window of it, and tabulate a fitted density curve.
//! Each one is a thin wrapper over a plain Rust function returning
//! `Result<String, String>` so that the logic is testable without a browser.

use serde::Serialize;
use tapevar_core::{
    compare, compute_moments, fit_charfn, gaussian_quantile, order3_quantile, parse_tape, synthesize_tape,
    CentralStats, DensityDiagnostics, GridSpec, MeasureKind, PriceProcess, TapeSpec, TradeSlice, TradeTape,
    VolumeProcess, Window,
};
use wasm_bindgen::prelude::*;

/// Grid used for browser curves. Coarser than the CLI default; plenty for a canvas.
pub const CURVE_SIGMAS: f64 = 10.0;
pub const CURVE_POINTS: usize = 1024;

fn load(csv: &str) -> Result<TradeTape, String> {
    parse_tape(csv, "browser").map_err(|e| e.to_string())
}

/// A non-finite `center` or `delta` selects the whole tape.
fn window<'a>(tape: &'a TradeTape, center: f64, delta: f64) -> Result<TradeSlice<'a>, String> {
    if !(center.is_finite() && delta.is_finite()) {
        return Ok(tape.as_slice());
    }
    let w = Window::new(center, delta).map_err(|e| e.to_string())?;
    tape.select(w).map_err(|e| e.to_string())
}

fn epsilons(text: &str) -> Result<Vec<f64>, String> {
    let eps = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if eps.is_empty() {
        return Err("at least one epsilon is required".into());
    }
    Ok(eps)
}

fn measure_kind(name: &str) -> Result<MeasureKind, String> {
    match name {
        "frequency" => Ok(MeasureKind::Frequency),
        "market" => Ok(MeasureKind::Market),
        other => Err(format!("unknown measure {other:?} (expected frequency or market)")),
    }
}

/// Lognormal-walk prices with uniform lot sizes in `1..=max_lot`.
pub fn synthesize_csv(count: usize, seed: u64, start_price: f64, vol: f64, max_lot: u32) -> Result<String, String> {
    let spec = TapeSpec {
        count,
        dt: 1.0,
        price: PriceProcess::LognormalWalk {
            start: start_price,
            drift: 0.0,
            vol,
        },
        volume: VolumeProcess::UniformLots { max: max_lot },
    };
    synthesize_tape(&spec, seed).map(|t| t.to_csv()).map_err(|e| e.to_string())
}

/// Comparison report as JSON, same shape as `tapevar compare --format json`.
pub fn compare_json(csv: &str, center: f64, delta: f64, eps: &str) -> Result<String, String> {
    let tape = load(csv)?;
    let slice = window(&tape, center, delta)?;
    let mut report = compare(&slice, &epsilons(eps)?, 3).map_err(|e| e.to_string())?;
    report.window = if center.is_finite() && delta.is_finite() {
        Window::new(center, delta).ok()
    } else {
        None
    };
    Ok(report.to_json())
}

#[derive(Debug, Serialize)]
struct Quantile {
    epsilon: f64,
    price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Curve {
    measure: &'static str,
    order: u32,
    mean: f64,
    sigma: f64,
    third_central: Option<f64>,
    prices: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    diagnostics: DensityDiagnostics,
    quantiles: Vec<Quantile>,
}

/// Density and CDF of the order-`order` fit under one measure, plus the
/// quantile at each ε from the same fit.
pub fn density_json(csv: &str, center: f64, delta: f64, measure: &str, order: u32, eps: &str) -> Result<String, String> {
    let kind = measure_kind(measure)?;
    let eps = epsilons(eps)?;
    let tape = load(csv)?;
    let slice = window(&tape, center, delta)?;
    let m = compute_moments(&slice, order.max(2)).map_err(|e| e.to_string())?;
    let stats = CentralStats::from_moments(&m, kind).map_err(|e| e.to_string())?;
    let f = fit_charfn(&stats, order).map_err(|e| e.to_string())?;
    let grid = f
        .tabulate(GridSpec::around(&f, CURVE_SIGMAS, CURVE_POINTS))
        .map_err(|e| e.to_string())?;
    let quantiles = eps
        .iter()
        .map(|&epsilon| {
            let r = if order == 3 {
                order3_quantile(&f, epsilon).map(|q| q.price)
            } else {
                gaussian_quantile(&stats, epsilon)
            };
            match r {
                Ok(price) => Quantile {
                    epsilon,
                    price: Some(price),
                    error: None,
                },
                Err(e) => Quantile {
                    epsilon,
                    price: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let curve = Curve {
        measure: match kind {
            MeasureKind::Frequency => "frequency",
            MeasureKind::Market => "market",
        },
        order,
        mean: f.mean(),
        sigma: f.sigma(),
        third_central: f.third(),
        prices: grid.prices,
        density: grid.density,
        cdf: grid.cdf,
        diagnostics: grid.diagnostics,
        quantiles,
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn synthesize(count: usize, seed: u32, start_price: f64, vol: f64, max_lot: u32) -> Result<String, JsError> {
    synthesize_csv(count, u64::from(seed), start_price, vol, max_lot).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compareReport)]
pub fn compare_report(csv: &str, center: f64, delta: f64, eps: &str) -> Result<String, JsError> {
    compare_json(csv, center, delta, eps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve(csv: &str, center: f64, delta: f64, measure: &str, order: u32, eps: &str) -> Result<String, JsError> {
    density_json(csv, center, delta, measure, order, eps).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const TWO: &str = "t,value,volume\n1,4,2\n2,9,3\n";

    #[test]
    fn compare_matches_core() {
        let v: Value = serde_json::from_str(&compare_json(TWO, f64::NAN, f64::NAN, "0.05").unwrap()).unwrap();
        let d = v["divergence"][0]["divergence"].as_f64().unwrap();
        assert!((d - -0.455268).abs() < 1e-6, "{d}");
        assert!(v.get("window").is_none());
    }

    #[test]
    fn windowed_compare_records_window() {
        let csv = synthesize_csv(400, 7, 100.0, 0.002, 20).unwrap();
        let v: Value = serde_json::from_str(&compare_json(&csv, 200.0, 50.0, "0.01, 0.05").unwrap()).unwrap();
        assert_eq!(v["N"].as_u64(), Some(51));
        assert_eq!(v["window"]["center"].as_f64(), Some(200.0));
    }

    #[test]
    fn synthesize_is_deterministic() {
        let a = synthesize_csv(50, 3, 100.0, 0.01, 10).unwrap();
        assert_eq!(a, synthesize_csv(50, 3, 100.0, 0.01, 10).unwrap());
        assert_ne!(a, synthesize_csv(50, 4, 100.0, 0.01, 10).unwrap());
        assert_eq!(a.lines().count(), 51);
    }

    #[test]
    fn gaussian_curve() {
        let csv = "t,value,volume\n0,10,1\n1,12,1\n2,14,1\n3,16,1\n";
        let v: Value = serde_json::from_str(&density_json(csv, f64::NAN, f64::NAN, "frequency", 2, "0.05").unwrap()).unwrap();
        assert_eq!(v["prices"].as_array().unwrap().len(), CURVE_POINTS);
        let integral = v["diagnostics"]["integral_of_density"].as_f64().unwrap();
        assert!((integral - 1.0).abs() < 1e-4);
        let q = v["quantiles"][0]["price"].as_f64().unwrap();
        let sigma = v["sigma"].as_f64().unwrap();
        assert!((q - (13.0 - 1.6448536269514722 * sigma)).abs() < 1e-9);
    }

    #[test]
    fn order3_curve_reports_quantiles() {
        let csv = synthesize_csv(300, 11, 50.0, 0.003, 5).unwrap();
        let v: Value = serde_json::from_str(&density_json(&csv, f64::NAN, f64::NAN, "frequency", 3, "0.01,0.05").unwrap()).unwrap();
        assert_eq!(v["order"].as_u64(), Some(3));
        assert_eq!(v["quantiles"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn input_errors_are_messages() {
        assert!(compare_json("t,value\n0,1\n", f64::NAN, f64::NAN, "0.05").is_err());
        assert!(compare_json(TWO, f64::NAN, f64::NAN, "").is_err());
        assert!(compare_json(TWO, f64::NAN, f64::NAN, "x").is_err());
        assert!(compare_json(TWO, 100.0, 1.0, "0.05").unwrap_err().contains("window"));
        assert!(density_json(TWO, f64::NAN, f64::NAN, "volume", 2, "0.05").is_err());
        assert!(density_json(TWO, f64::NAN, f64::NAN, "market", 4, "0.05").is_err());
    }
}
