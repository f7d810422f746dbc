//! Shared numeric formatting for the text output formats.

/// Formats a finite value with up to 6 fractional digits, trailing zeros
/// trimmed. `500.0` becomes `"500"`, `0.125` stays `"0.125"`.
pub(crate) fn trim6(value: f64) -> String {
    let mut s = format!("{value:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Formats an optional probability; undefined conditionals render empty.
pub(crate) fn trim6_opt(value: Option<f64>) -> String {
    value.map(trim6).unwrap_or_default()
}
