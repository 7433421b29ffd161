//! The attacker's statistical model: guesses, case probabilities and
//! the weighted-sum choice of flip pair.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Attack signal that produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackMeta {
    pub freq_hz: f64,
    pub amplitude_vpp: f64,
}

/// `u` = P(1 -> 0), `v` = P(0 -> 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPair {
    pub u: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<AttackMeta>,
}

impl FlipPair {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        Self::with_meta(u, v, None)
    }

    pub fn with_meta(u: f64, v: f64, meta: Option<AttackMeta>) -> Result<Self> {
        let p = Self { u, v, meta };
        p.validate()?;
        Ok(p)
    }

    /// Radiating nothing flips nothing.
    pub const SEND_NOTHING: FlipPair = FlipPair {
        u: 0.0,
        v: 0.0,
        meta: None,
    };

    pub fn is_send_nothing(&self) -> bool {
        self.u == 0.0 && self.v == 0.0 && self.meta.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("u", self.u), ("v", self.v)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(param(format!("{name} must be in [0, 1], got {x}")));
            }
        }
        Ok(())
    }

    /// Probability that radiating this pair flips a line currently at `actual`.
    pub fn flip_prob(&self, actual: u8) -> f64 {
        if actual != 0 {
            self.u
        } else {
            self.v
        }
    }
}

/// Candidate pairs for one device. SendNothing is always implied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub pairs: Vec<FlipPair>,
}

impl FeasibleSet {
    pub fn new(pairs: Vec<FlipPair>) -> Result<Self> {
        pairs.iter().try_for_each(FlipPair::validate)?;
        Ok(Self { pairs })
    }

    /// Explicit pairs followed by SendNothing unless already present.
    pub fn candidates(&self) -> impl Iterator<Item = &FlipPair> {
        let extra = if self.pairs.iter().any(FlipPair::is_send_nothing) {
            None
        } else {
            Some(&FlipPair::SEND_NOTHING)
        };
        self.pairs.iter().chain(extra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessModel {
    pub g: f64,
}

impl GuessModel {
    pub fn new(g: f64) -> Result<Self> {
        check_g(g)?;
        Ok(Self { g })
    }
}

pub(crate) fn check_g(g: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&g) {
        return Err(param(format!("g must be in [0, 1], got {g}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttackDecision {
    Silent,
    Radiate(FlipPair),
}

/// Bernoulli(g) guess from a seeded stream.
pub fn draw_guess(m: &GuessModel, seed: u64) -> u8 {
    guess_from(m.g, &mut crate::rng::stream(seed, 0))
}

pub(crate) fn guess_from<R: Rng>(g: f64, rng: &mut R) -> u8 {
    guess_from_uniform(g, rng.random::<f64>())
}

pub(crate) fn guess_from_uniform(g: f64, uniform: f64) -> u8 {
    u8::from(uniform < g)
}

/// Stay silent when the guess says the line already carries the intended bit.
pub fn decide(intended_bit: u8, guess: u8, pair: &FlipPair) -> AttackDecision {
    if (intended_bit != 0) == (guess != 0) {
        AttackDecision::Silent
    } else {
        AttackDecision::Radiate(*pair)
    }
}

fn one(bit: u8) -> f64 {
    if bit != 0 {
        1.0
    } else {
        0.0
    }
}

/// Success probability of injecting a 1.
pub fn success_prob_inject1(actual_bit: u8, guess: u8, pair: &FlipPair) -> f64 {
    let g = one(guess);
    if actual_bit != 0 {
        g + (1.0 - g) * (1.0 - pair.u)
    } else {
        (1.0 - g) * pair.v
    }
}

/// Success probability of injecting a 0.
pub fn success_prob_inject0(actual_bit: u8, guess: u8, pair: &FlipPair) -> f64 {
    let g = one(guess);
    if actual_bit != 0 {
        g * pair.u
    } else {
        (1.0 - g) + g * (1.0 - pair.v)
    }
}

/// Expected success of injecting a 1 over guesses drawn with parameter `g`.
pub fn expected_p1(g: f64, pair: &FlipPair, actual_bit: u8) -> f64 {
    if actual_bit != 0 {
        pair.u * g + 1.0 - pair.u
    } else {
        -pair.v * g + pair.v
    }
}

/// Weighted-sum objective for reaching `target_bit`.
pub fn objective(pair: &FlipPair, g: f64, target_bit: u8) -> f64 {
    if target_bit != 0 {
        g * (1.0 - pair.u) + (1.0 - g) * pair.v
    } else {
        g * pair.u + (1.0 - g) * (1.0 - pair.v)
    }
}

/// Objectives closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-12;

/// Best pair in `fs` (SendNothing included) for `target_bit` at guess parameter `g`.
///
/// Ties go to the smaller `u` for target 1 and the larger `u` for target 0,
/// then to the pair without metadata, then by frequency and amplitude.
pub fn optimal_pair(fs: &FeasibleSet, g: f64, target_bit: u8) -> FlipPair {
    let mut best = FlipPair::SEND_NOTHING;
    let mut best_obj = objective(&best, g, target_bit);
    for p in fs.candidates() {
        let obj = objective(p, g, target_bit);
        let better = if obj > best_obj + TIE_EPS {
            true
        } else if obj < best_obj - TIE_EPS {
            false
        } else {
            tie_order(p, &best, target_bit) == Ordering::Less
        };
        if better {
            best = *p;
            best_obj = obj;
        }
    }
    best
}

fn tie_order(a: &FlipPair, b: &FlipPair, target_bit: u8) -> Ordering {
    let by_u = if target_bit != 0 {
        a.u.total_cmp(&b.u)
    } else {
        b.u.total_cmp(&a.u)
    };
    by_u.then_with(|| match (&a.meta, &b.meta) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x
            .freq_hz
            .total_cmp(&y.freq_hz)
            .then(x.amplitude_vpp.total_cmp(&y.amplitude_vpp)),
    })
}
