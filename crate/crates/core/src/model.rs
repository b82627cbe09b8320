//! Shared domain types: backoff constants, frame timing, and the station
//! layout around the access point.

use std::collections::HashSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MICROSECOND: f64 = 1e-6;

/// Binary exponential backoff constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacParams {
    /// Minimum contention window, in slots.
    pub w0: u32,
    /// Maximum backoff stage; the window stops doubling here.
    pub m: u32,
    /// Retry limit. The frame is dropped after stage `h`.
    pub h: u32,
}

impl MacParams {
    pub const TABLE1: MacParams = MacParams { w0: 8, m: 3, h: 5 };

    pub fn validate(&self) -> Result<()> {
        if self.w0 < 1 {
            return Err(invalid("w0 must be at least 1"));
        }
        if self.m > self.h {
            return Err(invalid(format!("m ({}) must not exceed h ({})", self.m, self.h)));
        }
        if self.m >= 32 || (self.w0 as u64) << self.m > u32::MAX as u64 {
            return Err(invalid("2^m * w0 overflows"));
        }
        Ok(())
    }

    pub fn w_max(&self) -> u32 {
        self.w0 << self.m
    }

    /// Contention window at backoff stage `stage`: `min(2^stage * w0, w_max)`.
    pub fn window(&self, stage: u32) -> u32 {
        self.w0 << stage.min(self.m)
    }

    pub fn stages(&self) -> impl Iterator<Item = u32> {
        0..=self.h
    }
}

impl Default for MacParams {
    fn default() -> Self {
        Self::TABLE1
    }
}

/// Interframe spacings, frame sizes and PHY rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub sifs: f64,
    pub difs: f64,
    pub cca_detect: f64,
    /// Carried for completeness; none of the slot formulas use it.
    pub rifs: f64,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_bytes: u32,
    pub data_bytes: u32,
    /// Control PHY rate for RTS, CTS and ACK, bits/s.
    pub control_rate: f64,
    /// Data frame rate, bits/s.
    pub data_rate: f64,
    /// Response timeout after a collided RTS. `None` means one CTS airtime.
    pub timeout: Option<f64>,
}

impl TimingParams {
    pub const TABLE1: TimingParams = TimingParams {
        sifs: 2.5 * MICROSECOND,
        difs: 13.5 * MICROSECOND,
        cca_detect: 4.0 * MICROSECOND,
        rifs: 9.0 * MICROSECOND,
        rts_bytes: 20,
        cts_bytes: 26,
        ack_bytes: 14,
        data_bytes: 1024,
        control_rate: 27.5e6,
        data_rate: 1.15e9,
        timeout: None,
    };

    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("cca_detect", self.cca_detect),
            ("rifs", self.rifs),
            ("timeout", self.timeout.unwrap_or(0.0)),
        ];
        for (name, value) in durations {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(invalid(format!("{name} must be a non-negative duration, got {value}")));
            }
        }
        for (name, rate) in [("control_rate", self.control_rate), ("data_rate", self.data_rate)] {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {rate}")));
            }
        }
        Ok(())
    }
}

impl Default for TimingParams {
    fn default() -> Self {
        Self::TABLE1
    }
}

/// Durations of the three slot kinds plus the airtime of one data payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDurations {
    pub t_idle: f64,
    pub t_suc: f64,
    pub t_col: f64,
    pub e_payload: f64,
}

impl SlotDurations {
    pub fn table1() -> Self {
        slot_durations(&TimingParams::TABLE1).expect("built-in timing is valid")
    }
}

/// Airtime of `size` octets at `rate` bits/s, without PHY preamble.
pub fn frame_duration(size: u32, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(invalid(format!("rate must be positive, got {rate}")));
    }
    Ok(8.0 * size as f64 / rate)
}

pub fn slot_durations(t: &TimingParams) -> Result<SlotDurations> {
    t.validate()?;
    let rts = frame_duration(t.rts_bytes, t.control_rate)?;
    let cts = frame_duration(t.cts_bytes, t.control_rate)?;
    let ack = frame_duration(t.ack_bytes, t.control_rate)?;
    let data = frame_duration(t.data_bytes, t.data_rate)?;
    let timeout = t.timeout.unwrap_or(cts);

    Ok(SlotDurations {
        t_idle: t.sifs + t.cca_detect,
        t_suc: rts + 2.0 * t.sifs + cts + t.difs + data + ack,
        t_col: rts + t.sifs + t.difs + timeout,
        e_payload: data,
    })
}

/// Reduces any finite angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if a >= TAU {
        0.0
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: u32,
    #[serde(rename = "distance_m")]
    pub distance: f64,
    /// Angle seen from the access point, radians in `[0, 2π)`.
    #[serde(rename = "angle_rad")]
    pub angle: f64,
}

impl Station {
    pub fn new(id: u32, distance: f64, angle: f64) -> Self {
        Station {
            id,
            distance,
            angle: normalize_angle(angle),
        }
    }
}

/// Stations placed around an access point at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "radius_m")]
    pub radius: f64,
    pub stations: Vec<Station>,
}

impl Scenario {
    pub fn new(radius: f64, stations: Vec<Station>) -> Result<Self> {
        let scenario = Scenario { radius, stations };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn empty(radius: f64) -> Self {
        Scenario {
            radius,
            stations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid(format!("radius must be positive, got {}", self.radius)));
        }
        let mut seen = HashSet::with_capacity(self.stations.len());
        for s in &self.stations {
            if !seen.insert(s.id) {
                return Err(Error::DuplicateStation(s.id));
            }
            if !(s.distance > 0.0) || s.distance > self.radius {
                return Err(invalid(format!(
                    "station {} distance {} outside (0, {}]",
                    s.id, s.distance, self.radius
                )));
            }
            if !(0.0..TAU).contains(&s.angle) {
                return Err(invalid(format!("station {} angle {} outside [0, 2π)", s.id, s.angle)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }
}
