//! Fixed numeric formatting for report files.
//!
//! Every real number written to a CSV or report JSON is first rounded to six
//! significant digits and then printed in its shortest round-trip form, so
//! output bytes do not depend on trailing-bit differences in the arithmetic.

/// Rounds `x` to six significant digits. Non-finite values pass through and
/// negative zero becomes zero.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    if x == 0.0 {
        return 0.0;
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

/// Text form of [`sig6`], e.g. `177.726`, `-29.6216`, `0`.
pub fn fmt6(x: f64) -> String {
    let r = sig6(x);
    if r.is_finite() && r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

/// Rounds every number inside a JSON value with [`sig6`].
pub fn round_json(value: &mut serde_json::Value) {
    use serde_json::Value;
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(v) = n.as_f64().map(sig6) {
                    if let Some(num) = serde_json::Number::from_f64(v) {
                        *n = num;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}
