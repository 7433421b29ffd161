//! Digital side of the link: ESD clamp, charge accumulation, hysteresis latch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng::split_seed;
use crate::signal::{
    check_attack_frequency, inject_common_mode, subtractor_output, DifferentialPair, ModePair,
    SubtractorParams, Waveform,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    pub v_dd: f64,
    pub v_h: f64,
    pub v_l: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub accumulation_tau: f64,
    /// Volts of equivalent DC offset per volt of rectified oscillation.
    pub offset_gain: f64,
    pub bit_period: f64,
    /// Fraction of the bit period at which the comparator latches.
    pub sample_phase: f64,
    /// Simulation sample rate for the physics chain.
    pub sample_rate: f64,
}

impl ReceiverParams {
    /// nRF52833 GPIO at 3 V with 1 Mbit/s framing.
    pub fn nrf52833() -> Self {
        Self {
            v_dd: 3.0,
            v_h: 2.1,
            v_l: 0.9,
            clamp_min: -0.3,
            clamp_max: 3.3,
            accumulation_tau: 0.1e-6,
            offset_gain: 20.0,
            bit_period: 1e-6,
            sample_phase: 0.5,
            sample_rate: 500e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.v_dd,
            self.v_h,
            self.v_l,
            self.clamp_min,
            self.clamp_max,
            self.accumulation_tau,
            self.offset_gain,
            self.bit_period,
            self.sample_phase,
            self.sample_rate,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(param("receiver parameters must be finite"));
        }
        if !(self.clamp_min <= self.v_l && self.v_l < self.v_h && self.v_h <= self.clamp_max) {
            return Err(param(format!(
                "need clamp_min <= v_l < v_h <= clamp_max, got {} <= {} < {} <= {}",
                self.clamp_min, self.v_l, self.v_h, self.clamp_max
            )));
        }
        if self.bit_period <= 0.0 || self.accumulation_tau <= 0.0 || self.sample_rate <= 0.0 {
            return Err(param(
                "bit_period, accumulation_tau and sample_rate must be > 0",
            ));
        }
        if !(0.0..1.0).contains(&self.sample_phase) {
            return Err(param(format!(
                "sample_phase must be in [0, 1), got {}",
                self.sample_phase
            )));
        }
        if self.offset_gain < 0.0 {
            return Err(param("offset_gain must be >= 0"));
        }
        Ok(())
    }

    /// Logic level driven on the line for `bit`.
    pub fn nominal_level(&self, bit: u8) -> f64 {
        if bit != 0 {
            self.v_dd
        } else {
            0.0
        }
    }

    pub fn samples_per_bit(&self) -> usize {
        (self.bit_period * self.sample_rate).round() as usize
    }
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self::nrf52833()
    }
}

/// Latched bits and the instants they were taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitTrace {
    pub bits: Vec<u8>,
    pub latch_times: Vec<f64>,
}

pub fn esd_clamp(w: &Waveform, p: &ReceiverParams) -> Waveform {
    let s = w
        .samples()
        .iter()
        .map(|x| x.max(p.clamp_min).min(p.clamp_max))
        .collect();
    w.with_samples(s)
}

/// Offset the rectified oscillation settles to; sign points toward the far threshold.
pub fn offset_asymptote(
    w: &Waveform,
    nominal: f64,
    p: &ReceiverParams,
    on: usize,
    off: usize,
) -> f64 {
    let s = direction(nominal, p);
    let active = &w.samples()[on..off];
    if active.is_empty() {
        return 0.0;
    }
    let half_wave = active
        .iter()
        .map(|x| (s * (x - nominal)).max(0.0))
        .sum::<f64>()
        / active.len() as f64;
    // Mean of a half-wave rectified sine is A/pi.
    s * p.offset_gain * std::f64::consts::PI * half_wave
}

fn direction(nominal: f64, p: &ReceiverParams) -> f64 {
    if nominal >= 0.5 * (p.v_l + p.v_h) {
        -1.0
    } else {
        1.0
    }
}

/// First-order offset trajectory: builds up while the attack is on
/// (`on..off`, sample indices) and decays with the same constant after.
pub fn offset_trajectory(
    w: &Waveform,
    nominal: f64,
    p: &ReceiverParams,
    on: usize,
    off: usize,
) -> Vec<f64> {
    let target = offset_asymptote(w, nominal, p, on, off);
    let fs = w.sample_rate();
    let tau = p.accumulation_tau;
    let t_on = on as f64 / fs;
    let t_off = off as f64 / fs;
    let at_off = target * (1.0 - (-(t_off - t_on) / tau).exp());
    (0..w.len())
        .map(|i| {
            let t = i as f64 / fs;
            if i < on || target == 0.0 {
                0.0
            } else if i < off {
                target * (1.0 - (-(t - t_on) / tau).exp())
            } else {
                at_off * (-(t - t_off) / tau).exp()
            }
        })
        .collect()
}

/// `w` plus the equivalent DC offset accumulated while the attack covers
/// the whole record.
pub fn accumulate_offset(w: &Waveform, nominal: f64, p: &ReceiverParams) -> Waveform {
    accumulate_offset_over(w, nominal, p, 0, w.len())
}

/// As [`accumulate_offset`] with the attack active on samples `on..off`.
pub fn accumulate_offset_over(
    w: &Waveform,
    nominal: f64,
    p: &ReceiverParams,
    on: usize,
    off: usize,
) -> Waveform {
    let off = off.min(w.len());
    let on = on.min(off);
    let offset = offset_trajectory(w, nominal, p, on, off);
    w.with_samples(w.samples().iter().zip(offset).map(|(x, o)| x + o).collect())
}

/// Sample index of latch `k`.
pub fn latch_index(k: usize, p: &ReceiverParams, sample_rate: f64) -> usize {
    let t = (k as f64 + p.sample_phase) * p.bit_period;
    (t * sample_rate + 1e-9).floor() as usize
}

pub fn detect_bits(w: &Waveform, p: &ReceiverParams, initial_bit: u8) -> Result<BitTrace> {
    if w.duration() < p.bit_period * (1.0 - 1e-12) {
        return Err(param(format!(
            "waveform lasts {} s, shorter than one bit period ({} s)",
            w.duration(),
            p.bit_period
        )));
    }
    let fs = w.sample_rate();
    let mut state = u8::from(initial_bit != 0);
    let mut trace = BitTrace {
        bits: Vec::new(),
        latch_times: Vec::new(),
    };
    for k in 0.. {
        let t = (k as f64 + p.sample_phase) * p.bit_period;
        let i = latch_index(k, p, fs);
        if i >= w.len() {
            break;
        }
        let v = w.samples()[i];
        if v >= p.v_h {
            state = 1;
        } else if v <= p.v_l {
            state = 0;
        }
        trace.bits.push(state);
        trace.latch_times.push(t);
    }
    Ok(trace)
}

fn attacked_modes(
    nominal_bit: u8,
    amplitude_vpp: f64,
    freq: f64,
    sp: &SubtractorParams,
    rp: &ReceiverParams,
) -> Result<ModePair> {
    let n = rp.samples_per_bit();
    let fs = rp.sample_rate;
    let line = DifferentialPair::from_modes(ModePair::new(
        Waveform::constant(rp.nominal_level(nominal_bit) / sp.g_dm, n, fs)?,
        Waveform::constant(0.0, n, fs)?,
    )?);
    let tone = Waveform::tone(0.5 * amplitude_vpp, freq, 0.0, n, fs)?;
    Ok(inject_common_mode(&line, &tone)?.modes().clone())
}

/// One bit period of the attacked line as seen by the comparator.
///
/// The equivalent offset is driven by the noise-free bypassed oscillation;
/// subtractor noise rides on top without being rectified into the offset.
pub fn physics_chain(
    nominal_bit: u8,
    amplitude_vpp: f64,
    freq: f64,
    sp: &SubtractorParams,
    rp: &ReceiverParams,
    seed: u64,
) -> Result<Waveform> {
    rp.validate()?;
    check_attack_frequency(freq, rp.sample_rate)?;
    if !(amplitude_vpp.is_finite() && amplitude_vpp >= 0.0) {
        return Err(param(format!(
            "attack amplitude must be >= 0, got {amplitude_vpp}"
        )));
    }
    let modes = attacked_modes(nominal_bit, amplitude_vpp, freq, sp, rp)?;
    let clean = SubtractorParams {
        noise_sigma: 0.0,
        ..sp.clone()
    };
    let level = rp.nominal_level(nominal_bit);
    let offset = offset_trajectory(
        &esd_clamp(&subtractor_output(&modes, &clean, freq, 0)?, rp),
        level,
        rp,
        0,
        modes.v_dm.len(),
    );
    let noisy = esd_clamp(&subtractor_output(&modes, sp, freq, seed)?, rp);
    Ok(noisy.with_samples(
        noisy
            .samples()
            .iter()
            .zip(offset)
            .map(|(x, o)| x + o)
            .collect(),
    ))
}

/// Fraction of `trials` one-bit attacks whose latched bit differs from
/// `nominal_bit`. Trial `i` uses noise seed `split_seed(seed, i)`, so runs at
/// different amplitudes share their noise draws.
#[allow(clippy::too_many_arguments)]
pub fn flip_probability(
    nominal_bit: u8,
    attack_amplitude: f64,
    attack_freq: f64,
    sp: &SubtractorParams,
    rp: &ReceiverParams,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    sp.validate()?;
    // Fail fast on parameter errors before fanning out.
    physics_chain(nominal_bit, attack_amplitude, attack_freq, sp, rp, seed)?;
    let bit = u8::from(nominal_bit != 0);
    let flips = (0..trials)
        .into_par_iter()
        .map(|i| {
            let w = physics_chain(
                bit,
                attack_amplitude,
                attack_freq,
                sp,
                rp,
                split_seed(seed, i),
            )?;
            let trace = detect_bits(&w, rp, bit)?;
            Ok(u64::from(trace.bits[0] != bit))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    Ok(flips as f64 / trials as f64)
}
