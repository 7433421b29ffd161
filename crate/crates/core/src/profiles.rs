//! Named device profiles.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::receiver::ReceiverParams;
use crate::signal::{GcmCurve, ResonantBump, SubtractorParams};

pub const PROFILE_NAMES: [&str; 2] = ["nrf52833", "tja1050"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub subtractor: SubtractorParams,
    pub receiver: ReceiverParams,
}

/// TJA1050-like transceiver: rejection collapses above a few MHz with local
/// maxima near 20 and 90 MHz.
pub fn tja1050_subtractor() -> SubtractorParams {
    SubtractorParams {
        g_dm: 1.0,
        g_cm_curve: GcmCurve {
            inband_db: -90.0,
            slope_db_per_decade: 40.0,
            max_db: 0.0,
            bumps: vec![
                ResonantBump {
                    center_hz: 20e6,
                    width_decades: 0.08,
                    peak_db: 20.0,
                },
                ResonantBump {
                    center_hz: 90e6,
                    width_decades: 0.05,
                    peak_db: 10.0,
                },
            ],
        },
        distortion_coeffs: vec![0.137, 0.05],
        noise_sigma: 0.01,
        corner_freq: 2e6,
    }
}

pub fn profile(name: &str) -> Result<DeviceProfile> {
    let subtractor = match name {
        "nrf52833" => SubtractorParams::default(),
        "tja1050" => tja1050_subtractor(),
        other => {
            return Err(param(format!(
                "unknown profile `{other}` (known: {})",
                PROFILE_NAMES.join(", ")
            )))
        }
    };
    Ok(DeviceProfile {
        name: name.to_owned(),
        subtractor,
        receiver: ReceiverParams::nrf52833(),
    })
}
