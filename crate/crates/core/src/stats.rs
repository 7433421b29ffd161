use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{param, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exact at the edges; avoid rounding residue there.
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes as f64 == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for mean(a) > mean(b).
    pub p: f64,
}

/// Welch's unequal-variance t-test, alternative mean(a) > mean(b).
///
/// Returns `None` when both samples have zero variance.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Result<Option<WelchTest>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(param("each sample needs at least 2 values"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(param("samples must be finite"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(None);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| param(e.to_string()))?;
    Ok(Some(WelchTest {
        t,
        df,
        p: dist.sf(t),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_value() {
        // 8/10 at 95%: [0.4902, 0.9433].
        let (lo, hi) = wilson(8, 10, Z95);
        assert!(
            (lo - 0.4902).abs() < 1e-4 && (hi - 0.9433).abs() < 1e-4,
            "{lo} {hi}"
        );
    }

    #[test]
    fn wilson_edges_stay_in_unit_interval() {
        let (lo, hi) = wilson(0, 50, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson(50, 50, Z95);
        assert!(lo > 0.9);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_matches_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 0.5, 1.0, 1.5, 2.0];
        let w = welch_greater(&a, &b).unwrap().unwrap();
        // var a = 5/3, var b = 0.625; se^2 = 5/12 + 0.125
        let se2 = 5.0 / 12.0 + 0.125;
        assert!((w.t - 1.5 / f64::sqrt(se2)).abs() < 1e-12);
        let df = se2 * se2 / ((5.0f64 / 12.0).powi(2) / 3.0 + 0.125f64.powi(2) / 4.0);
        assert!((w.df - df).abs() < 1e-9);
        assert!(w.p > 0.03 && w.p < 0.07, "{}", w.p);
    }

    #[test]
    fn zero_variance_reports_none() {
        assert_eq!(welch_greater(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), None);
        assert!(welch_greater(&[1.0], &[1.0, 2.0]).is_err());
    }
}
