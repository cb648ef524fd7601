/// Value with its uncertainty in the last two significant digits of the
/// uncertainty, e.g. `2.9987(17)`.
pub fn format_with_uncertainty(value: f64, std_error: f64) -> String {
    if !value.is_finite() || !std_error.is_finite() {
        return format!("{value}({std_error})");
    }
    if std_error <= 0.0 {
        return format!("{value}(0)");
    }
    let mut decimals = 1 - std_error.log10().floor() as i32;
    let mut digits = (std_error * 10f64.powi(decimals)).round();
    if digits >= 100.0 {
        // rounding carried into a third digit
        decimals -= 1;
        digits = (std_error * 10f64.powi(decimals)).round();
    }
    if decimals <= 0 {
        let scale = 10f64.powi(-decimals);
        let v = (value / scale).round() * scale;
        return format!("{v:.0}({:.0})", digits * scale);
    }
    format!("{value:.prec$}({digits:.0})", prec = decimals as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_digit_uncertainty() {
        assert_eq!(format_with_uncertainty(2.99871, 0.00173), "2.9987(17)");
        assert_eq!(format_with_uncertainty(3.54, 0.0102), "3.540(10)");
        assert_eq!(format_with_uncertainty(0.9990, 0.00995), "0.999(10)");
    }

    #[test]
    fn large_uncertainty() {
        assert_eq!(format_with_uncertainty(135_135.4, 1234.0), "135100(1200)");
        assert_eq!(format_with_uncertainty(14.8, 12.0), "15(12)");
    }

    #[test]
    fn degenerate_uncertainty() {
        assert_eq!(format_with_uncertainty(3.0, 0.0), "3(0)");
    }
}
