//! Signal to noise-and-distortion ratio of a single-tone record.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{param, Result};
use crate::signal::Waveform;

/// Reported when the residual power is negligible.
pub const SINAD_CAP_DB: f64 = 120.0;

/// Residual-to-signal power ratio below which [`SINAD_CAP_DB`] is reported.
pub const CAP_RATIO: f64 = 1e-12;

// 5-term flat-top, main lobe spans +-5 bins.
const FLAT_TOP: [f64; 5] = [
    0.215_578_95,
    0.416_631_58,
    0.277_263_158,
    0.083_578_947,
    0.006_947_368,
];
const FLAT_TOP_HALF_LOBE: usize = 5;

/// SINAD in dB of `w` around `fundamental` (Hz).
///
/// When the record holds a whole number of periods the spectrum is read
/// without a window and the fundamental occupies one bin either side of its
/// centre. Otherwise a flat-top window is applied and the exclusion widens
/// to the window's main lobe. The mean is removed first, so DC never counts
/// as noise.
pub fn sinad(w: &Waveform, fundamental: f64) -> Result<f64> {
    let fs = w.sample_rate();
    let n = w.len();
    if !(fundamental.is_finite() && fundamental > 0.0) {
        return Err(param(format!("fundamental must be > 0, got {fundamental}")));
    }
    if fundamental >= fs / 2.0 {
        return Err(param(format!(
            "fundamental {fundamental} Hz is at or above Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    let periods = fundamental * n as f64 / fs;
    if periods < 2.0 {
        return Err(param(format!(
            "record covers {periods:.3} periods of the fundamental, need at least 2"
        )));
    }

    let mean = w.samples().iter().sum::<f64>() / n as f64;
    let coherent = (periods - periods.round()).abs() < 1e-6;
    let (half, dc_guard) = if coherent {
        (1, 0)
    } else {
        (FLAT_TOP_HALF_LOBE, FLAT_TOP_HALF_LOBE)
    };
    let mut buf: Vec<Complex<f64>> = w
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let win = if coherent { 1.0 } else { flat_top(i, n) };
            Complex::new((s - mean) * win, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let nyq = n / 2;
    let power = |k: usize| {
        let both_sides = k != 0 && !(n.is_multiple_of(2) && k == nyq);
        buf[k].norm_sqr() * if both_sides { 2.0 } else { 1.0 }
    };
    let centre = periods.round() as usize;
    let lo = centre.saturating_sub(half).max(1);
    let hi = (centre + half).min(nyq);

    let mut signal = 0.0;
    let mut residual = 0.0;
    for k in (dc_guard + 1)..=nyq {
        if (lo..=hi).contains(&k) {
            signal += power(k);
        } else {
            residual += power(k);
        }
    }
    // Bins inside the DC guard but also inside the fundamental lobe.
    for k in lo..=hi.min(dc_guard) {
        signal += power(k);
    }
    if signal <= 0.0 {
        return Err(param("no power at the fundamental"));
    }
    if residual <= CAP_RATIO * signal {
        return Ok(SINAD_CAP_DB);
    }
    Ok((10.0 * (signal / residual).log10()).min(SINAD_CAP_DB))
}

fn flat_top(i: usize, n: usize) -> f64 {
    let x = 2.0 * PI * i as f64 / n as f64;
    FLAT_TOP
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * a * (k as f64 * x).cos()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 500e6;

    fn two_tone(f: f64, ratio: f64, n: usize) -> Waveform {
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                (2.0 * PI * f * t).sin() + ratio * (2.0 * PI * 2.0 * f * t + 0.7).sin()
            })
            .collect();
        Waveform::new(s, FS).unwrap()
    }

    #[test]
    fn pure_sine_hits_the_cap() {
        let w = Waveform::tone(1.0, 10e6, 0.2, 1000, FS).unwrap();
        assert!(sinad(&w, 10e6).unwrap() >= SINAD_CAP_DB);
    }

    #[test]
    fn tenth_amplitude_harmonic_is_twenty_db() {
        let s = sinad(&two_tone(10e6, 0.1, 1000), 10e6).unwrap();
        assert!((s - 20.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn non_coherent_record_uses_window() {
        // 10.37 MHz over 4096 samples is not a whole number of periods.
        let s = sinad(&two_tone(10.37e6, 0.1, 4096), 10.37e6).unwrap();
        assert!((s - 20.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn dc_offset_is_ignored() {
        let mut w = two_tone(10e6, 0.1, 1000).into_samples();
        w.iter_mut().for_each(|x| *x += 2.5);
        let s = sinad(&Waveform::new(w, FS).unwrap(), 10e6).unwrap();
        assert!((s - 20.0).abs() < 0.1);
    }

    #[test]
    fn rejects_nyquist_and_short_records() {
        let w = Waveform::tone(1.0, 10e6, 0.0, 1000, FS).unwrap();
        assert!(matches!(
            sinad(&w, FS / 2.0),
            Err(crate::Error::Parameter(_))
        ));
        let short = Waveform::tone(1.0, 10e6, 0.0, 60, FS).unwrap();
        assert!(sinad(&short, 10e6).is_err());
    }
}
