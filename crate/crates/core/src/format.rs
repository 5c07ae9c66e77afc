//! Number formatting shared by every CSV the crate writes.

/// Formats `x` with 12 significant digits, like C's `%.12g`.
pub fn sig12(x: f64) -> String {
    format_general(x, 12)
}

/// `%.{precision}g` formatting: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn format_general(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let precision = precision.max(1);
    let sci = format!("{:.*e}", precision - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders an optional value, leaving the field empty when undefined.
pub fn sig12_opt(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}
