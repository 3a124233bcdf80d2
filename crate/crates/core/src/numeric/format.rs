//! Deterministic float formatting for CSV output.

use std::fmt::Write;

/// Shortest representation that round-trips through `f64::from_str`
/// (never more than 17 significant digits). Very large or very small
/// magnitudes switch to exponent notation. NaN and infinities are written as
/// `NaN`, `inf` and `-inf`.
pub fn fmt_f64(x: f64) -> String {
    let mut s = String::new();
    write_f64(&mut s, x);
    s
}

pub fn write_f64(out: &mut String, x: f64) {
    let a = x.abs();
    let _ = if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        write!(out, "{x}")
    } else {
        write!(out, "{x:e}")
    };
}
