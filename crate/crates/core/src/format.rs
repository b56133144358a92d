//! Number formatting shared by the CSV writers.

/// Formats `x` like C's `%.{digits}g`.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig(-std::f64::consts::FRAC_PI_4, 9), "-0.785398163");
        assert_eq!(sig(0.0, 9), "0");
        assert_eq!(sig(10.0, 9), "10");
        assert_eq!(sig(1.5e-7, 9), "1.5e-07");
        assert_eq!(sig(123456789012.0, 9), "1.23456789e+11");
        assert_eq!(sig(0.000123, 9), "0.000123");
        assert_eq!(sig(9.9999999999, 9), "10");
    }
}
