//! Flicker severity.
//!
//! Short-term severity uses a simplified, non-standard estimator: the 95th
//! percentile of the relative deviation of the half-cycle RMS envelope from
//! its mean, times a calibration constant. It is zero for a constant
//! envelope and scales linearly with modulation depth. Long-term severity is
//! the cubic power mean of twelve consecutive short-term values.

use super::AnalyzerError;

/// Number of short-term values combined into one long-term value.
pub const PLT_SOURCE_COUNT: usize = 12;

/// Minimum fraction of expected half-cycle values for a valid Pst.
pub const PST_MIN_COVERAGE: f64 = 0.99;

/// Short-term severity of one phase. `None` when the envelope mean is zero.
pub fn compute_pst(half_cycle_rms: &[f64], expected_len: usize, calibration: f64) -> Result<Option<f64>, AnalyzerError> {
    let required = (PST_MIN_COVERAGE * expected_len as f64).ceil() as usize;
    if half_cycle_rms.is_empty() || half_cycle_rms.len() < required {
        return Err(AnalyzerError::InsufficientData {
            what: "half-cycle RMS series",
            got: half_cycle_rms.len(),
            needed: required,
        });
    }
    let mean = half_cycle_rms.iter().sum::<f64>() / half_cycle_rms.len() as f64;
    if !(mean > 0.0) {
        return Ok(None);
    }
    let mut deviations: Vec<f64> = half_cycle_rms.iter().map(|r| (r - mean).abs() / mean).collect();
    deviations.sort_by(f64::total_cmp);
    Ok(Some(calibration * percentile_sorted(&deviations, 0.95)))
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `Plt = ∛(Σ Pst³ / N)`, evaluated relative to the largest input so that
/// equal inputs return that value exactly and power-of-two scaling is exact.
pub fn plt(pst: &[f64]) -> f64 {
    let max = pst.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let mean_cube = pst.iter().map(|p| (p / max).powi(3)).sum::<f64>() / pst.len() as f64;
    max * mean_cube.cbrt()
}

/// Long-term severity from exactly twelve non-negative short-term values.
pub fn compute_plt(pst: &[f64]) -> Result<f64, AnalyzerError> {
    if pst.len() != PLT_SOURCE_COUNT {
        return Err(AnalyzerError::InsufficientData {
            what: "short-term flicker values",
            got: pst.len(),
            needed: PLT_SOURCE_COUNT,
        });
    }
    if let Some(bad) = pst.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(AnalyzerError::InvalidInput(format!("Pst value {bad} is not a finite non-negative number")));
    }
    Ok(plt(pst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plt_examples() {
        let mut one = [0.0; 12];
        one[0] = 1.0;
        assert!((compute_plt(&one).unwrap() - (1.0f64 / 12.0).cbrt()).abs() < 1e-12);
        assert!((compute_plt(&one).unwrap() - 0.43679).abs() < 1e-5);
        for c in [0.0, 0.1, 0.7, 1.3, 123.456] {
            assert_eq!(compute_plt(&[c; 12]).unwrap(), c);
        }
        assert!(compute_plt(&[1.0; 11]).is_err());
        let mut neg = [1.0; 12];
        neg[3] = -0.1;
        assert!(compute_plt(&neg).is_err());
    }

    #[test]
    fn pst_of_constant_envelope_is_zero() {
        let series = vec![230.0; 60_000];
        assert_eq!(compute_pst(&series, 60_000, 1.0).unwrap(), Some(0.0));
        assert_eq!(compute_pst(&[0.0; 100], 100, 1.0).unwrap(), None);
        assert!(compute_pst(&[1.0; 98], 100, 1.0).is_err());
        assert!(compute_pst(&[1.0; 99], 100, 1.0).is_ok());
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        assert_eq!(percentile_sorted(&v, 0.95), 95.0);
        assert_eq!(percentile_sorted(&[0.0, 1.0], 0.95), 0.95);
        assert_eq!(percentile_sorted(&[4.0], 0.95), 4.0);
    }

    proptest! {
        #[test]
        fn plt_within_power_mean_bounds(v in prop::collection::vec(0.0f64..50.0, 12)) {
            let p = compute_plt(&v).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(0.0, f64::max);
            prop_assert!(p <= hi);
            prop_assert!(p >= lo * (1.0 - 1e-12));
            let all_equal = v.iter().all(|x| *x == v[0]);
            prop_assert_eq!(p == hi && p == lo, all_equal);
        }

        #[test]
        fn plt_is_degree_one_homogeneous(v in prop::collection::vec(0.0f64..50.0, 12), s in 0.01f64..100.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            let (a, b) = (compute_plt(&v).unwrap(), compute_plt(&scaled).unwrap());
            prop_assert!((b - s * a).abs() <= 1e-12 * (s * a).max(1e-300));
        }
    }
}
