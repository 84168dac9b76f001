//! Deterministic number formatting for CSV output.

/// Formats with `sig` significant digits, positional where readable and
/// scientific otherwise, trailing zeros trimmed. Output depends only on the
/// value, never on locale or platform state.
pub fn sig_digits(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..sig as i32).contains(&exponent) {
        let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
        trim_decimal(format!("{x:.decimals$}"))
    } else {
        let formatted = format!("{:.*e}", sig - 1, x);
        let (mantissa, exp) = formatted.split_once('e').expect("scientific format");
        format!("{}e{}", trim_decimal(mantissa.to_string()), exp)
    }
}

fn trim_decimal(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}
