//! `%g`-style float rendering shared by the text exporters.

/// Formats `x` with `sig` significant digits, trailing zeros stripped, in
/// the style of C's `%.{sig}g`.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };

    if exp < -4 || exp >= sig as i32 {
        let mut m = String::new();
        m.push_str(&digits[..1]);
        let rest = digits[1..].trim_end_matches('0');
        if !rest.is_empty() {
            m.push('.');
            m.push_str(rest);
        }
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{m}e{esign}{:02}", exp.abs());
    }

    let s = if exp >= 0 {
        let int_len = exp as usize + 1;
        let (int_part, frac) = digits.split_at(int_len.min(digits.len()));
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            int_part.to_string()
        } else {
            format!("{int_part}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{}", digits.trim_end_matches('0'))
    };
    format!("{sign}{s}")
}

/// Table-style rendering: like [`format_sig`] but always shows a decimal
/// point, so `0` prints as `0.0` and `1` as `1.0`.
pub fn format_table(x: f64, sig: usize) -> String {
    let s = format_sig(x, sig);
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}
