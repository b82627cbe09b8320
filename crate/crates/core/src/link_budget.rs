//! 60 GHz link budget with ideal conical antennas.
//!
//! ```text
//! Pr(d) = Pt + G(tx) + G(rx) - PL0 - 10 a log10(d) - X - LM
//! PL0   = 10 a log10(4 pi / lambda)
//! G(bw) = 2 pi / bw
//! ```
//!
//! The budget is affine in the transmit gain in dB, so the widest transmit
//! beam that still meets a receiver sensitivity is found in closed form.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyEnv {
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    pub path_loss_exp: f64,
    pub fading_db: f64,
    pub link_margin_db: f64,
    /// Receiver sensitivity per MCS name, dBm.
    pub sensitivities: BTreeMap<String, f64>,
    /// Narrowest transmit beam the antenna can form, radians. Zero means no
    /// floor.
    #[serde(default)]
    pub beam_floor: f64,
}

impl PhyEnv {
    pub fn table1() -> Self {
        PhyEnv {
            tx_power_dbm: 10.0,
            frequency_hz: 60e9,
            path_loss_exp: 2.0,
            fading_db: 2.0,
            link_margin_db: 20.0,
            sensitivities: BTreeMap::from([("MCS0".to_string(), -78.0), ("MCS4".to_string(), -64.0)]),
            beam_floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(invalid(format!("frequency must be positive, got {}", self.frequency_hz)));
        }
        if !(self.path_loss_exp > 0.0) {
            return Err(invalid(format!("path loss exponent must be positive, got {}", self.path_loss_exp)));
        }
        if self.sensitivities.is_empty() {
            return Err(invalid("at least one receiver sensitivity is required"));
        }
        if !(0.0..=TAU).contains(&self.beam_floor) {
            return Err(invalid(format!("beam floor {} outside [0, 2π]", self.beam_floor)));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    /// Path loss at the 1 m reference distance, dB.
    pub fn reference_loss_db(&self) -> f64 {
        10.0 * self.path_loss_exp * (4.0 * PI / self.wavelength()).log10()
    }

    pub fn sensitivity(&self, mcs: &str) -> Result<f64> {
        self.sensitivities
            .get(mcs)
            .copied()
            .ok_or_else(|| invalid(format!("no receiver sensitivity for {mcs:?}")))
    }
}

impl Default for PhyEnv {
    fn default() -> Self {
        Self::table1()
    }
}

fn check_beamwidth(bw: f64) -> Result<()> {
    if !(bw > 0.0 && bw <= TAU) {
        return Err(invalid(format!("beamwidth {bw} outside (0, 2π]")));
    }
    Ok(())
}

/// Linear gain of a conical beam of width `beamwidth` relative to omni.
pub fn directivity_gain(beamwidth: f64) -> Result<f64> {
    check_beamwidth(beamwidth)?;
    Ok(TAU / beamwidth)
}

pub fn gain_db(beamwidth: f64) -> Result<f64> {
    Ok(10.0 * directivity_gain(beamwidth)?.log10())
}

/// Received power in dBm at distance `d` (metres, at least 1).
pub fn received_power(d: f64, tx_bw: f64, rx_bw: f64, env: &PhyEnv) -> Result<f64> {
    Ok(budget_without_tx_gain(d, rx_bw, env)? + gain_db(tx_bw)?)
}

fn budget_without_tx_gain(d: f64, rx_bw: f64, env: &PhyEnv) -> Result<f64> {
    env.validate()?;
    if !(d >= 1.0) || !d.is_finite() {
        return Err(Error::Domain(format!(
            "distance {d} m is below the 1 m reference distance"
        )));
    }
    Ok(env.tx_power_dbm + gain_db(rx_bw)?
        - env.reference_loss_db()
        - 10.0 * env.path_loss_exp * d.log10()
        - env.fading_db
        - env.link_margin_db)
}

/// Outcome of inverting the budget for the transmit beamwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TxBeamwidth {
    /// The budget is met with equality at this width (radians).
    Limited { radians: f64 },
    /// Even an omnidirectional transmitter closes the link.
    Omni,
    /// The required width is narrower than the antenna can form.
    BelowFloor { required: f64 },
}

impl TxBeamwidth {
    /// Usable width in radians, `2π` for omni, `None` if infeasible.
    pub fn radians(&self) -> Option<f64> {
        match *self {
            TxBeamwidth::Limited { radians } => Some(radians),
            TxBeamwidth::Omni => Some(TAU),
            TxBeamwidth::BelowFloor { .. } => None,
        }
    }

    pub fn is_clamped(&self) -> bool {
        matches!(self, TxBeamwidth::Omni)
    }
}

/// Widest transmit beam for which the received power at `d` still meets the
/// sensitivity of `mcs`.
pub fn max_tx_beamwidth(d: f64, rx_bw: f64, mcs: &str, env: &PhyEnv) -> Result<TxBeamwidth> {
    let rs = env.sensitivity(mcs)?;
    let needed_gain_db = rs - budget_without_tx_gain(d, rx_bw, env)?;
    let width = TAU / 10f64.powf(needed_gain_db / 10.0);
    Ok(if width >= TAU {
        TxBeamwidth::Omni
    } else if width < env.beam_floor {
        TxBeamwidth::BelowFloor { required: width }
    } else {
        TxBeamwidth::Limited { radians: width }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rx_bw: f64,
    pub tx_bw: TxBeamwidth,
}

/// Maximum transmit beamwidth over a range of receive beamwidths.
pub fn required_tx_beamwidth_curve(rx_bw_range: &[f64], mcs: &str, d: f64, env: &PhyEnv) -> Result<Vec<CurvePoint>> {
    rx_bw_range
        .iter()
        .map(|&rx_bw| {
            Ok(CurvePoint {
                rx_bw,
                tx_bw: max_tx_beamwidth(d, rx_bw, mcs, env)?,
            })
        })
        .collect()
}
