//! Monte Carlo bit and message injection campaigns.
//!
//! Trial `i` of a campaign draws from `rng::stream(master_seed, i)` and
//! consumes exactly two uniforms per bit (guess, flip) whether or not they
//! are needed, so results do not depend on scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacker::{check_g, decide, guess_from_uniform, AttackDecision, FlipPair};
use crate::error::{param, structural, Result};
use crate::rng::{split_seed, stream};
use crate::stats::{welch_greater, wilson, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every bit is an independent injection.
    Independent,
    /// Within a run of identical injections, bits after the first
    /// successful flip succeed for free.
    GroupedApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub trials: u64,
    pub master_seed: u64,
    pub mode: Mode,
    pub g: f64,
    pub pair: FlipPair,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(param("trials must be >= 1"));
        }
        check_g(self.g)?;
        self.pair.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSpec {
    pub intended_bits: Vec<u8>,
    pub line_bits: Vec<u8>,
    /// Per-bit guess parameter; the campaign `g` applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_schedule: Option<Vec<f64>>,
}

impl MessageSpec {
    pub fn new(intended_bits: Vec<u8>, line_bits: Vec<u8>) -> Result<Self> {
        let s = Self {
            intended_bits,
            line_bits,
            g_schedule: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_g_schedule(mut self, g: Vec<f64>) -> Result<Self> {
        self.g_schedule = Some(g);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.intended_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intended_bits.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.intended_bits.is_empty() {
            return Err(structural("message is empty"));
        }
        if self.intended_bits.len() != self.line_bits.len() {
            return Err(structural(format!(
                "intended has {} bits, line has {}",
                self.intended_bits.len(),
                self.line_bits.len()
            )));
        }
        if let Some(b) = self
            .intended_bits
            .iter()
            .chain(&self.line_bits)
            .find(|&&b| b > 1)
        {
            return Err(structural(format!("bit value {b} is not 0 or 1")));
        }
        if let Some(gs) = &self.g_schedule {
            if gs.len() != self.len() {
                return Err(structural(format!(
                    "g schedule has {} entries for {} bits",
                    gs.len(),
                    self.len()
                )));
            }
            gs.iter().try_for_each(|&g| check_g(g))?;
        }
        Ok(())
    }

    fn g_at(&self, i: usize, default: f64) -> f64 {
        self.g_schedule.as_ref().map_or(default, |gs| gs[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci95: (f64, f64),
    /// Trials whose first wrong bit was at each index.
    pub per_bit_failures: Vec<u64>,
}

impl CampaignResult {
    fn from_counts(successes: u64, trials: u64, per_bit_failures: Vec<u64>) -> Self {
        Self {
            successes,
            trials,
            rate: successes as f64 / trials as f64,
            ci95: wilson(successes, trials, Z95),
            per_bit_failures,
        }
    }

    /// Binomial standard error of `rate` under the true rate `p`.
    pub fn std_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Outcome of one trial: `None` on success, else the index of the failing bit.
fn run_trial(spec: &MessageSpec, cfg: &CampaignConfig, trial: u64) -> Option<usize> {
    let mut rng = stream(cfg.master_seed, trial);
    let mut prev_radiated: Option<(u8, u8)> = None;
    for (i, (&intended, &actual)) in spec.intended_bits.iter().zip(&spec.line_bits).enumerate() {
        let guess_u: f64 = rng.random();
        let flip_u: f64 = rng.random();
        let guess = guess_from_uniform(spec.g_at(i, cfg.g), guess_u);
        let key = (actual, intended);
        let final_bit = match decide(intended, guess, &cfg.pair) {
            AttackDecision::Silent => {
                prev_radiated = None;
                actual
            }
            AttackDecision::Radiate(pair) => {
                let free = cfg.mode == Mode::GroupedApprox && prev_radiated == Some(key);
                prev_radiated = Some(key);
                if free {
                    intended
                } else if flip_u < pair.flip_prob(actual) {
                    1 - actual
                } else {
                    actual
                }
            }
        };
        if final_bit != intended {
            return Some(i);
        }
    }
    None
}

pub fn simulate_message(spec: &MessageSpec, cfg: &CampaignConfig) -> Result<CampaignResult> {
    simulate_message_with(spec, cfg, Execution::Parallel)
}

pub fn simulate_message_with(
    spec: &MessageSpec,
    cfg: &CampaignConfig,
    exec: Execution,
) -> Result<CampaignResult> {
    spec.validate()?;
    cfg.validate()?;
    let n = spec.len();
    let tally = |(mut ok, mut hist): (u64, Vec<u64>), t: u64| {
        match run_trial(spec, cfg, t) {
            None => ok += 1,
            Some(i) => hist[i] += 1,
        }
        (ok, hist)
    };
    let merge = |(a, mut ha): (u64, Vec<u64>), (b, hb): (u64, Vec<u64>)| {
        ha.iter_mut().zip(hb).for_each(|(x, y)| *x += y);
        (a + b, ha)
    };
    let (ok, hist) = match exec {
        Execution::Sequential => (0..cfg.trials).fold((0, vec![0; n]), tally),
        Execution::Parallel => (0..cfg.trials)
            .into_par_iter()
            .fold(|| (0, vec![0; n]), tally)
            .reduce(|| (0, vec![0; n]), merge),
    };
    Ok(CampaignResult::from_counts(ok, cfg.trials, hist))
}

/// Single-bit campaign; `g` and `pair` override those in `cfg`.
pub fn simulate_bit(
    intended: u8,
    actual: u8,
    g: f64,
    pair: &FlipPair,
    cfg: &CampaignConfig,
) -> Result<CampaignResult> {
    let spec = MessageSpec::new(vec![intended], vec![actual])?;
    let cfg = CampaignConfig {
        g,
        pair: *pair,
        ..cfg.clone()
    };
    simulate_message(&spec, &cfg)
}

/// Exact success probability of the campaign model.
pub fn analytic_rate(spec: &MessageSpec, cfg: &CampaignConfig) -> Result<f64> {
    spec.validate()?;
    cfg.validate()?;
    // Probability of being alive with the previous bit silent / radiated.
    let mut silent = 1.0;
    let mut radiated = 0.0;
    let mut prev_key = None;
    for (i, (&intended, &actual)) in spec.intended_bits.iter().zip(&spec.line_bits).enumerate() {
        let g = spec.g_at(i, cfg.g);
        let p_radiate = if intended != 0 { 1.0 - g } else { g };
        let alive = silent + radiated;
        let silent_ok = if actual == intended { 1.0 } else { 0.0 };
        let flip = cfg.pair.flip_prob(actual);
        let radiate_ok = if actual == intended { 1.0 - flip } else { flip };
        let key = (actual, intended);
        let chained = cfg.mode == Mode::GroupedApprox && prev_key == Some(key);
        let next_radiated = p_radiate
            * if chained {
                radiated + silent * radiate_ok
            } else {
                alive * radiate_ok
            };
        silent = (1.0 - p_radiate) * alive * silent_ok;
        radiated = next_radiated;
        prev_key = Some(key);
    }
    Ok(silent + radiated)
}

/// `(number of 0 bits, number of maximal runs of 0 bits)`.
pub fn count_dominant_groups(bits: &[u8]) -> (usize, usize) {
    let dominant = bits.iter().filter(|&&b| b == 0).count();
    let groups = bits
        .iter()
        .enumerate()
        .filter(|&(i, &b)| b == 0 && (i == 0 || bits[i - 1] != 0))
        .count();
    (dominant, groups)
}

/// Message success bracket when every dominant bit must be flipped with
/// probability `u`: `u^dominant` if each flip is independent, `u^groups` if
/// only the first flip of each run counts.
pub fn message_bounds(bits: &[u8], u: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&u) {
        return Err(param(format!("u must be in [0, 1], got {u}")));
    }
    let (d, g) = count_dominant_groups(bits);
    Ok((u.powi(d as i32), u.powi(g as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ABetter,
    NotSignificant,
}

/// One-sided Welch test of mean(A) > mean(B).
pub fn compare_pairs(samples_a: &[f64], samples_b: &[f64], alpha: f64) -> Result<Verdict> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param(format!("alpha must be in (0, 1), got {alpha}")));
    }
    match welch_greater(samples_a, samples_b)? {
        Some(w) if w.p < alpha => Ok(Verdict::ABetter),
        Some(_) => Ok(Verdict::NotSignificant),
        None => {
            let (ma, mb) = (crate::stats::mean(samples_a), crate::stats::mean(samples_b));
            Ok(if ma > mb {
                Verdict::ABetter
            } else {
                Verdict::NotSignificant
            })
        }
    }
}

/// Success-rate samples for injecting a 1 with `pair` at guess parameter `g`.
///
/// Each trial draws the line bit uniformly, a guess and a flip. Sample `j`
/// reads the same random streams whatever the pair, so samples for two
/// pairs differ only through the pairs themselves.
pub fn success_rate_samples(
    pair: &FlipPair,
    g: f64,
    samples: usize,
    trials_per_sample: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_g(g)?;
    pair.validate()?;
    if samples == 0 || trials_per_sample == 0 {
        return Err(param("samples and trials per sample must be >= 1"));
    }
    Ok((0..samples)
        .into_par_iter()
        .map(|j| {
            let sample_seed = split_seed(seed, j as u64);
            let ok = (0..trials_per_sample)
                .filter(|&t| {
                    let mut rng = stream(sample_seed, t);
                    let actual = u8::from(rng.random::<f64>() < 0.5);
                    let guess = guess_from_uniform(g, rng.random());
                    let flip_u: f64 = rng.random();
                    match decide(1, guess, pair) {
                        AttackDecision::Silent => actual == 1,
                        AttackDecision::Radiate(p) => {
                            let flipped = flip_u < p.flip_prob(actual);
                            (actual == 1) != flipped
                        }
                    }
                })
                .count();
            ok as f64 / trials_per_sample as f64
        })
        .collect())
}
