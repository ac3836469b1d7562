//! CSV rendering with bit-faithful floats.
//!
//! Every float column is printed in scientific notation with 17
//! significant digits, which round-trips any finite `f64` exactly; plots
//! and reruns therefore see the same numbers the run produced.

/// One float field. Non-finite values are spelled out so a reader never
/// sees an empty cell where a number failed.
pub fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// An optional float field; `None` renders empty.
pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Assemble a complete CSV file from a header and pre-rendered rows.
pub fn table(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}
