//! Fixed-precision number formatting for CSV output.

/// Significant digits of every printed float.
pub const SIG_DIGITS: usize = 12;

/// `x` with [`SIG_DIGITS`] significant digits, trailing zeros trimmed.
/// Plain notation for magnitudes in `[1e-5, 1e15)`, scientific otherwise.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // the exponent after rounding (9.99…e0 may become 1e1)
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    if (-5..15).contains(&e) {
        let decimals = (SIG_DIGITS as i32 - 1 - e).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa), e)
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// The value a reader recovers from [`sig`]'s output.
pub fn printed(x: f64) -> f64 {
    sig(x).parse().expect("sig output parses")
}
