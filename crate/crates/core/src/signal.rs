//! Analog model of the differential pair and the subtractor.
//!
//! A pair of wire voltages `(D+, D-)` is carried in mode coordinates
//! `v_dm = D+ - D-`, `v_cm = (D+ + D-) / 2`. An electromagnetic injection
//! couples the same voltage onto both wires, so it only ever moves `v_cm`.
//! The subtractor output is
//!
//! ```text
//! o = G_dm * v_dm + G_cm(f) * v_cm + F(G_cm(f) * v_cm) + n
//! ```
//!
//! with `G_cm(f)` read from a frequency curve, `F` a polynomial acting on the
//! part of the common mode that leaks through, and `n` white Gaussian noise.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{param, structural, Result};

/// Attack content must stay below this fraction of the sample rate.
pub const MAX_FREQ_FRACTION: f64 = 0.4;

/// Uniformly sampled voltage signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(param(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(structural("waveform has no samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(param(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn constant(value: f64, len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![value; len], sample_rate)
    }

    /// `amplitude * sin(2π f t + phase)`; `amplitude` is the peak value.
    pub fn tone(
        amplitude: f64,
        freq: f64,
        phase: f64,
        len: usize,
        sample_rate: f64,
    ) -> Result<Self> {
        let w = 2.0 * PI * freq / sample_rate;
        let samples = (0..len)
            .map(|i| amplitude * (w * i as f64 + phase).sin())
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        hi - lo
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Waveform {
        Waveform {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn ensure_compatible(&self, other: &Waveform, what: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(structural(format!(
                "{what}: length {} vs {}",
                self.len(),
                other.len()
            )));
        }
        if self.sample_rate != other.sample_rate {
            return Err(structural(format!(
                "{what}: sample rate {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        Ok(())
    }
}

/// Reject attack frequencies the sampled model cannot represent.
pub fn check_attack_frequency(freq: f64, sample_rate: f64) -> Result<()> {
    if !(freq.is_finite() && freq >= 0.0) {
        return Err(param(format!("attack frequency must be >= 0, got {freq}")));
    }
    if freq >= MAX_FREQ_FRACTION * sample_rate {
        return Err(param(format!(
            "attack frequency {freq} Hz must stay below {} Hz ({}x sample rate {sample_rate} Hz)",
            MAX_FREQ_FRACTION * sample_rate,
            MAX_FREQ_FRACTION
        )));
    }
    Ok(())
}

/// Differential / common-mode view of a signal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub v_dm: Waveform,
    pub v_cm: Waveform,
}

impl ModePair {
    pub fn new(v_dm: Waveform, v_cm: Waveform) -> Result<Self> {
        v_dm.ensure_compatible(&v_cm, "mode pair")?;
        Ok(Self { v_dm, v_cm })
    }
}

/// Two complementary wire signals `D+`, `D-`.
///
/// Stored in mode coordinates so that a common-mode injection leaves the
/// differential component untouched bit for bit; the wire voltages are
/// reconstructed on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialPair {
    modes: ModePair,
}

impl DifferentialPair {
    pub fn from_wires(d_plus: Waveform, d_minus: Waveform) -> Result<Self> {
        d_plus.ensure_compatible(&d_minus, "differential pair")?;
        let (dm, cm) = d_plus
            .samples
            .iter()
            .zip(&d_minus.samples)
            .map(|(p, m)| (p - m, 0.5 * (p + m)))
            .unzip();
        Ok(Self {
            modes: ModePair {
                v_dm: d_plus.with_samples(dm),
                v_cm: d_plus.with_samples(cm),
            },
        })
    }

    pub fn from_modes(modes: ModePair) -> Self {
        Self { modes }
    }

    pub fn d_plus(&self) -> Waveform {
        let s = self
            .modes
            .v_cm
            .samples
            .iter()
            .zip(&self.modes.v_dm.samples)
            .map(|(cm, dm)| cm + 0.5 * dm)
            .collect();
        self.modes.v_cm.with_samples(s)
    }

    pub fn d_minus(&self) -> Waveform {
        let s = self
            .modes
            .v_cm
            .samples
            .iter()
            .zip(&self.modes.v_dm.samples)
            .map(|(cm, dm)| cm - 0.5 * dm)
            .collect();
        self.modes.v_cm.with_samples(s)
    }

    pub fn modes(&self) -> &ModePair {
        &self.modes
    }

    pub fn sample_rate(&self) -> f64 {
        self.modes.v_dm.sample_rate
    }

    pub fn len(&self) -> usize {
        self.modes.v_dm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn decompose(pair: &DifferentialPair) -> ModePair {
    pair.modes.clone()
}

pub fn recompose(modes: &ModePair) -> DifferentialPair {
    DifferentialPair::from_modes(modes.clone())
}

/// Add `injected` to both wires.
pub fn inject_common_mode(
    pair: &DifferentialPair,
    injected: &Waveform,
) -> Result<DifferentialPair> {
    pair.modes
        .v_cm
        .ensure_compatible(injected, "common-mode injection")?;
    let cm = pair
        .modes
        .v_cm
        .samples
        .iter()
        .zip(&injected.samples)
        .map(|(c, s)| c + s)
        .collect();
    Ok(DifferentialPair {
        modes: ModePair {
            v_dm: pair.modes.v_dm.clone(),
            v_cm: pair.modes.v_cm.with_samples(cm),
        },
    })
}

/// Injection path from the attacker's emitter to the wires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    /// Linear coupling factor at the pass-band centre.
    pub gain: f64,
    /// Seconds; quantised to whole samples.
    pub delay: f64,
    pub bandpass_center: f64,
    pub bandpass_width: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            delay: 0.0,
            bandpass_center: 50e6,
            bandpass_width: 1e9,
        }
    }
}

/// Butterworth order of the injection band-pass.
pub const TRANSFER_ORDER: i32 = 2;

impl TransferParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(param(format!(
                "transfer gain must be >= 0, got {}",
                self.gain
            )));
        }
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(param(format!(
                "transfer delay must be >= 0, got {}",
                self.delay
            )));
        }
        if !(self.bandpass_center.is_finite() && self.bandpass_center > 0.0) {
            return Err(param("band-pass centre must be > 0"));
        }
        if !(self.bandpass_width.is_finite() && self.bandpass_width > 0.0) {
            return Err(param("band-pass width must be > 0"));
        }
        Ok(())
    }

    /// |H(f)| of the band-pass, excluding `gain`.
    pub fn bandpass_magnitude(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let fc = self.bandpass_center;
        let q = (f * f - fc * fc) / (f * self.bandpass_width);
        1.0 / (1.0 + q.powi(2 * TRANSFER_ORDER)).sqrt()
    }
}

/// Delayed, gain-scaled, band-limited copy of `attack`.
///
/// Filtering is zero-phase and circular over the record; the delay then
/// shifts the result right, filling the head with zeros.
pub fn apply_transfer(attack: &Waveform, t: &TransferParams) -> Result<Waveform> {
    t.validate()?;
    let n = attack.len();
    let fs = attack.sample_rate;
    let mut buf: Vec<Complex<f64>> = attack
        .samples
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        *c *= t.gain * t.bandpass_magnitude(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let delay = (t.delay * fs).round() as usize;
    let scale = 1.0 / n as f64;
    let out = (0..n)
        .map(|i| {
            if i < delay {
                0.0
            } else {
                buf[i - delay].re * scale
            }
        })
        .collect();
    Ok(attack.with_samples(out))
}

/// Narrow resonance added to the common-mode gain curve (in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantBump {
    pub center_hz: f64,
    /// Gaussian width in decades of frequency.
    pub width_decades: f64,
    pub peak_db: f64,
}

/// Common-mode gain versus frequency, in dB (negative means attenuation).
///
/// Flat at `inband_db` up to the corner frequency, then rising at
/// `slope_db_per_decade`, never above `max_db`. Resonant bumps are added on
/// top of the slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcmCurve {
    pub inband_db: f64,
    pub slope_db_per_decade: f64,
    pub max_db: f64,
    #[serde(default)]
    pub bumps: Vec<ResonantBump>,
}

impl Default for GcmCurve {
    fn default() -> Self {
        Self {
            inband_db: -90.0,
            slope_db_per_decade: 40.0,
            max_db: 0.0,
            bumps: Vec::new(),
        }
    }
}

impl GcmCurve {
    /// Frequency-independent gain.
    pub fn flat(db: f64) -> Self {
        Self {
            inband_db: db,
            slope_db_per_decade: 0.0,
            max_db: db,
            bumps: Vec::new(),
        }
    }

    pub fn gain_db(&self, freq: f64, corner: f64) -> f64 {
        let mut db = self.inband_db;
        if freq > corner {
            db += self.slope_db_per_decade * (freq / corner).log10();
        }
        if freq > 0.0 {
            for b in &self.bumps {
                let x = (freq / b.center_hz).log10() / b.width_decades;
                db += b.peak_db * (-0.5 * x * x).exp();
            }
        }
        db.min(self.max_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Differential amplifier model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtractorParams {
    pub g_dm: f64,
    pub g_cm_curve: GcmCurve,
    /// `distortion_coeffs[k]` multiplies `x^(k+2)`, with `x` the leaked common mode.
    pub distortion_coeffs: Vec<f64>,
    /// Volts RMS of white output noise.
    pub noise_sigma: f64,
    pub corner_freq: f64,
}

impl Default for SubtractorParams {
    fn default() -> Self {
        Self {
            g_dm: 1.0,
            g_cm_curve: GcmCurve::default(),
            distortion_coeffs: vec![0.1, 0.05],
            noise_sigma: 0.01,
            corner_freq: 2e6,
        }
    }
}

impl SubtractorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_dm.is_finite() && self.g_dm > 0.0) {
            return Err(param(format!("g_dm must be > 0, got {}", self.g_dm)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(param(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.corner_freq.is_finite() && self.corner_freq > 0.0) {
            return Err(param("corner_freq must be > 0"));
        }
        if self.distortion_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(param("distortion coefficients must be finite"));
        }
        Ok(())
    }

    /// Linear common-mode gain at `freq`.
    pub fn g_cm(&self, freq: f64) -> f64 {
        db_to_linear(self.g_cm_curve.gain_db(freq, self.corner_freq))
    }

    /// Distortion polynomial `F(x)`.
    pub fn distortion(&self, x: f64) -> f64 {
        // Horner over x^2 * (c0 + c1 x + c2 x^2 + ...)
        let inner = self
            .distortion_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c);
        inner * x * x
    }
}

/// Subtractor output for the given modes. `attack_freq = 0` selects the
/// in-band common-mode gain.
pub fn subtractor_output(
    modes: &ModePair,
    p: &SubtractorParams,
    attack_freq: f64,
    seed: u64,
) -> Result<Waveform> {
    p.validate()?;
    modes
        .v_dm
        .ensure_compatible(&modes.v_cm, "subtractor input")?;
    check_attack_frequency(attack_freq, modes.v_dm.sample_rate)?;
    let g_cm = p.g_cm(attack_freq);
    let mut out: Vec<f64> = modes
        .v_dm
        .samples
        .iter()
        .zip(&modes.v_cm.samples)
        .map(|(dm, cm)| {
            let leak = g_cm * cm;
            p.g_dm * dm + leak + p.distortion(leak)
        })
        .collect();
    if p.noise_sigma > 0.0 {
        let mut rng = crate::rng::stream(seed, 0);
        for o in &mut out {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o += p.noise_sigma * z;
        }
    }
    Ok(modes.v_dm.with_samples(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 500e6;

    fn pair(dp: f64, dm: f64, n: usize) -> DifferentialPair {
        DifferentialPair::from_wires(
            Waveform::constant(dp, n, FS).unwrap(),
            Waveform::constant(dm, n, FS).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![], FS).is_err());
        assert!(Waveform::new(vec![1.0], 0.0).is_err());
        assert!(Waveform::new(vec![f64::NAN], FS).is_err());
    }

    #[test]
    fn decompose_equal_and_opposite_inputs() {
        let m = decompose(&pair(2.5, 2.5, 8));
        assert!(m.v_dm.samples().iter().all(|&x| x == 0.0));
        assert!(m.v_cm.samples().iter().all(|&x| x == 2.5));

        let m = decompose(&pair(3.5, 1.5, 8));
        assert!(m.v_dm.samples().iter().all(|&x| x == 2.0));
        assert!(m.v_cm.samples().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn mismatched_wires_are_structural_errors() {
        let a = Waveform::constant(1.0, 8, FS).unwrap();
        let b = Waveform::constant(1.0, 9, FS).unwrap();
        let c = Waveform::constant(1.0, 8, FS / 2.0).unwrap();
        assert!(matches!(
            DifferentialPair::from_wires(a.clone(), b),
            Err(crate::Error::Structural(_))
        ));
        assert!(matches!(
            DifferentialPair::from_wires(a, c),
            Err(crate::Error::Structural(_))
        ));
    }

    #[test]
    fn injecting_zeros_is_identity() {
        let p = pair(3.5, 1.5, 16);
        let z = Waveform::constant(0.0, 16, FS).unwrap();
        assert_eq!(inject_common_mode(&p, &z).unwrap(), p);
    }

    #[test]
    fn injected_sine_rides_on_common_mode_only() {
        let p = pair(3.5, 1.5, 64);
        let s = Waveform::tone(1.0, 10e6, 0.0, 64, FS).unwrap();
        let m = decompose(&inject_common_mode(&p, &s).unwrap());
        assert!(m.v_dm.samples().iter().all(|&x| x == 2.0));
        for (cm, si) in m.v_cm.samples().iter().zip(s.samples()) {
            assert_eq!(*cm, 2.5 + si);
        }
        // Wire view: both wires moved by the injected signal.
        let inj = inject_common_mode(&p, &s).unwrap();
        for (i, si) in s.samples().iter().enumerate() {
            assert!((inj.d_plus().samples()[i] - (3.5 + si)).abs() < 1e-12);
            assert!((inj.d_minus().samples()[i] - (1.5 + si)).abs() < 1e-12);
        }
    }

    #[test]
    fn injection_length_mismatch() {
        let p = pair(3.5, 1.5, 16);
        let s = Waveform::constant(0.0, 15, FS).unwrap();
        assert!(inject_common_mode(&p, &s).is_err());
    }

    #[test]
    fn default_curve_is_strongly_rejecting_in_band() {
        let p = SubtractorParams::default();
        for f in [0.0, 1e3, 1e5, 1e6, p.corner_freq] {
            assert!(p.g_cm_curve.gain_db(f, p.corner_freq) <= -70.0, "f = {f}");
        }
    }

    #[test]
    fn default_curve_is_monotone() {
        let p = SubtractorParams::default();
        let mut prev = 0.0;
        for i in 0..=2000 {
            let f = 1e3 * 10f64.powf(i as f64 * 5.3 / 2000.0);
            let g = p.g_cm(f);
            assert!(g >= prev, "g_cm decreased at {f} Hz");
            prev = g;
        }
    }

    #[test]
    fn ideal_subtractor_passes_differential_mode() {
        let p = SubtractorParams {
            g_dm: 1.0,
            g_cm_curve: GcmCurve::flat(-400.0),
            distortion_coeffs: vec![],
            noise_sigma: 0.0,
            corner_freq: 1e6,
        };
        let modes = decompose(&pair(3.5, 1.5, 32));
        let o = subtractor_output(&modes, &p, 0.0, 1).unwrap();
        for &x in o.samples() {
            assert!((x - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn seventy_db_attenuates_a_volt_to_316_microvolts() {
        let n = 5000;
        let p = SubtractorParams {
            g_dm: 1.0,
            g_cm_curve: GcmCurve::flat(-70.0),
            distortion_coeffs: vec![],
            noise_sigma: 0.0,
            corner_freq: 1e6,
        };
        let dm = Waveform::constant(0.0, n, FS).unwrap();
        let cm = Waveform::tone(1.0, 10e6, 0.0, n, FS).unwrap();
        let o = subtractor_output(&ModePair::new(dm, cm).unwrap(), &p, 10e6, 0).unwrap();
        let amp = 0.5 * o.peak_to_peak();
        assert!((amp - 3.162e-4).abs() < 1e-6, "amplitude {amp}");
    }

    #[test]
    fn subtractor_rejects_frequencies_near_nyquist() {
        let modes = decompose(&pair(1.0, 0.0, 16));
        let p = SubtractorParams::default();
        assert!(subtractor_output(&modes, &p, 0.4 * FS, 0).is_err());
        assert!(subtractor_output(&modes, &p, 0.39 * FS, 0).is_ok());
    }

    #[test]
    fn transfer_zero_gain_silences() {
        let s = Waveform::tone(1.0, 50e6, 0.0, 1000, FS).unwrap();
        let t = TransferParams {
            gain: 0.0,
            ..Default::default()
        };
        let o = apply_transfer(&s, &t).unwrap();
        assert!(o.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn transfer_passes_centre_tone() {
        // 50 MHz over 1000 samples at 500 MS/s: 100 whole periods.
        let s = Waveform::tone(1.0, 50e6, 0.3, 1000, FS).unwrap();
        let t = TransferParams {
            gain: 1.0,
            delay: 0.0,
            bandpass_center: 50e6,
            bandpass_width: 5e6,
        };
        let o = apply_transfer(&s, &t).unwrap();
        for (a, b) in o.samples().iter().zip(s.samples()) {
            assert!((a - b).abs() < 1e-9);
        }
        let t2 = TransferParams { gain: 0.25, ..t };
        let o2 = apply_transfer(&s, &t2).unwrap();
        assert!((o2.rms() / s.rms() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn transfer_delay_shifts_by_whole_samples() {
        let s = Waveform::tone(1.0, 50e6, 0.0, 1000, FS).unwrap();
        let t = TransferParams {
            gain: 1.0,
            delay: 10.0 / FS,
            bandpass_center: 50e6,
            bandpass_width: 5e6,
        };
        let o = apply_transfer(&s, &t).unwrap();
        assert!(o.samples()[..10].iter().all(|&x| x == 0.0));
        for i in 10..1000 {
            assert!((o.samples()[i] - s.samples()[i - 10]).abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_rejects_bad_params() {
        let s = Waveform::tone(1.0, 50e6, 0.0, 100, FS).unwrap();
        for t in [
            TransferParams {
                gain: -1.0,
                ..Default::default()
            },
            TransferParams {
                bandpass_width: 0.0,
                ..Default::default()
            },
        ] {
            assert!(apply_transfer(&s, &t).is_err());
        }
    }

    #[test]
    fn noise_is_seeded() {
        let modes = decompose(&pair(1.0, 0.0, 256));
        let p = SubtractorParams::default();
        let a = subtractor_output(&modes, &p, 0.0, 42).unwrap();
        let b = subtractor_output(&modes, &p, 0.0, 42).unwrap();
        let c = subtractor_output(&modes, &p, 0.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn distortion_polynomial_starts_at_square() {
        let p = SubtractorParams {
            distortion_coeffs: vec![2.0, 3.0],
            ..Default::default()
        };
        assert_eq!(p.distortion(0.0), 0.0);
        assert!((p.distortion(2.0) - (2.0 * 4.0 + 3.0 * 8.0)).abs() < 1e-12);
    }
}
