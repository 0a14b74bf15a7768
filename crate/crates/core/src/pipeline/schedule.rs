//! The distillation-weight decay schedule: `lambda(e) = initial *
//! decay^floor(e / every)`, evaluated exactly for decimal inputs so that
//! canonical values like 0.5 * 0.8^2 come out as the decimal 0.32, not one
//! ulp off from repeated float multiplication.

/// Decimal decomposition `x = mantissa * 10^-exp10`, when the shortest
/// representation is plain decimal.
fn decimal_parts(x: f64) -> Option<(i128, u32)> {
    let s = format!("{x}");
    if s.contains(['e', 'E']) {
        return None;
    }
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s.as_str(), ""),
    };
    let digits: String = format!("{int_part}{frac_part}");
    let mantissa: i128 = digits.parse().ok()?;
    Some((mantissa, frac_part.len() as u32))
}

/// `initial * decay^floor(epoch / every)`.
pub fn lambda_at_epoch(initial: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    let k = (epoch / every.max(1)) as u32;
    if let (Some((im, ie)), Some((dm, de))) = (decimal_parts(initial), decimal_parts(decay)) {
        // numerator = im * dm^k, value = numerator / 10^(ie + k * de)
        let exp10 = ie as u64 + k as u64 * de as u64;
        let pow = dm.checked_pow(k);
        if let (Some(p), true) = (pow, exp10 <= 300) {
            if let Some(num) = im.checked_mul(p) {
                // The division is a single correctly-rounded operation when
                // both sides are exactly representable.
                if num.unsigned_abs() <= (1u128 << 53) && exp10 <= 22 {
                    return num as f64 / 10f64.powi(exp10 as i32);
                }
            }
        }
    }
    initial * decay.powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_schedule_is_exact() {
        // floor(25/10) = 2 decay steps: 0.5 * 0.8^2 = 0.32 exactly.
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 25), 0.32);
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 20), 0.32);
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 0), 0.5);
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 9), 0.5);
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 10), 0.4);
        assert_eq!(lambda_at_epoch(0.5, 0.8, 10, 30), 0.256);
    }

    #[test]
    fn schedule_matches_formula_for_every_epoch() {
        for e in 0..200 {
            let k = e / 10;
            let want = 0.5 * 0.8f64.powi(k as i32);
            let got = lambda_at_epoch(0.5, 0.8, 10, e);
            assert!((got - want).abs() < 1e-12, "epoch {e}: {got} vs {want}");
        }
    }

    #[test]
    fn large_k_falls_back_gracefully() {
        let got = lambda_at_epoch(0.5, 0.8, 10, 5000);
        assert!(got > 0.0 && got < 1e-40);
    }

    #[test]
    fn zero_decay_and_unit_decay() {
        assert_eq!(lambda_at_epoch(0.5, 1.0, 10, 995), 0.5);
        assert_eq!(lambda_at_epoch(0.5, 0.0, 10, 15), 0.0);
    }
}
