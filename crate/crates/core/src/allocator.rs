//! Partitioning the circle around the access point into quasi-omni sectors.
//!
//! The adaptive allocator walks the circle once. Each sector starts at the
//! end of the previous one with the minimum width and widens in fixed
//! increments while the sector's utilization does not drop and the width
//! stays within the maximum. The fixed allocator cuts the circle into equal
//! sectors starting at angle zero.

use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analytics::{SolverMethod, UtilizationCurve};
use crate::error::{invalid, Error, Result};
use crate::link_budget::{max_tx_beamwidth, PhyEnv};
use crate::model::{normalize_angle, MacParams, Scenario, SlotDurations};

const ANGLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    #[serde(rename = "start_rad")]
    pub start: f64,
    #[serde(rename = "width_rad")]
    pub width: f64,
    pub members: Vec<u32>,
}

impl SectorSpec {
    pub fn n(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPlan {
    pub kind: PlanKind,
    pub sectors: Vec<SectorSpec>,
    /// Stations left outside every sector once the circle was exhausted.
    #[serde(default)]
    pub uncovered: Vec<u32>,
}

impl SectorPlan {
    /// Number of sectors, `Q`.
    pub fn q(&self) -> usize {
        self.sectors.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.sectors.iter().map(SectorSpec::n).collect()
    }

    pub fn total_width(&self) -> f64 {
        self.sectors.iter().map(|s| s.width).sum()
    }

    /// Checks the structural invariants of a plan against its scenario.
    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if self.total_width() > TAU + ANGLE_EPS {
            return Err(invalid(format!("sectors span {} rad, more than a full turn", self.total_width())));
        }
        for (i, a) in self.sectors.iter().enumerate() {
            if !(a.width > 0.0) {
                return Err(invalid(format!("sector {i} has non-positive width")));
            }
            for b in &self.sectors[i + 1..] {
                let ab = normalize_angle(b.start - a.start);
                let ba = normalize_angle(a.start - b.start);
                if ab < a.width - ANGLE_EPS || ba < b.width - ANGLE_EPS {
                    return Err(invalid(format!(
                        "sectors starting at {} and {} overlap",
                        a.start, b.start
                    )));
                }
            }
        }
        if self.kind == PlanKind::Fixed {
            if let Some(first) = self.sectors.first() {
                if self.sectors.iter().any(|s| (s.width - first.width).abs() > ANGLE_EPS) {
                    return Err(invalid("fixed plan has unequal sector widths"));
                }
            }
        }

        let ids: HashSet<u32> = scenario.stations.iter().map(|s| s.id).collect();
        let mut seen = HashSet::with_capacity(ids.len());
        for id in self.sectors.iter().flat_map(|s| &s.members).chain(&self.uncovered) {
            if !ids.contains(id) {
                return Err(invalid(format!("plan references unknown station {id}")));
            }
            if !seen.insert(*id) {
                return Err(invalid(format!("station {id} assigned more than once")));
            }
        }
        if seen.len() != ids.len() {
            return Err(invalid("plan neither covers nor reports every station"));
        }
        for (i, sector) in self.sectors.iter().enumerate() {
            let mut expected = stas_in_arc(scenario, sector.start, sector.width);
            let mut actual = sector.members.clone();
            expected.sort_unstable();
            actual.sort_unstable();
            if expected != actual {
                return Err(invalid(format!("sector {i} members disagree with its arc")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub omega_min: f64,
    pub delta_omega: f64,
    pub omega_max: f64,
}

impl AllocatorConfig {
    /// 20° minimum and increment, 90° maximum.
    pub fn evaluation_defaults() -> Self {
        AllocatorConfig {
            omega_min: 20f64.to_radians(),
            delta_omega: 20f64.to_radians(),
            omega_max: 90f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_min > 0.0 && self.omega_min <= self.omega_max && self.omega_max <= TAU + ANGLE_EPS) {
            return Err(invalid(format!(
                "need 0 < omega_min ({}) <= omega_max ({}) <= 2π",
                self.omega_min, self.omega_max
            )));
        }
        if !(self.delta_omega > 0.0) {
            return Err(invalid(format!("delta_omega must be positive, got {}", self.delta_omega)));
        }
        Ok(())
    }

    /// Replaces `omega_max` with the widest transmit beam that closes the
    /// link to distance `d` at `mcs`.
    pub fn with_link_budget_max(mut self, d: f64, rx_bw: f64, mcs: &str, env: &PhyEnv) -> Result<Self> {
        let limit = max_tx_beamwidth(d, rx_bw, mcs, env)?;
        let width = limit
            .radians()
            .ok_or_else(|| Error::Infeasible(format!("{mcs} at {d} m needs a beam below the antenna floor")))?;
        if width < self.omega_min {
            return Err(Error::Infeasible(format!(
                "{mcs} at {d} m allows at most {:.3}°, below omega_min {:.3}°",
                width.to_degrees(),
                self.omega_min.to_degrees()
            )));
        }
        self.omega_max = width;
        Ok(self)
    }
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self::evaluation_defaults()
    }
}

/// Stations whose angle lies in the half-open arc `[start, start + width)`,
/// wrapping at 2π.
pub fn stas_in_arc(scenario: &Scenario, start: f64, width: f64) -> Vec<u32> {
    if width <= 0.0 {
        return Vec::new();
    }
    if width >= TAU {
        return scenario.stations.iter().map(|s| s.id).collect();
    }
    scenario
        .stations
        .iter()
        .filter(|s| normalize_angle(s.angle - start) < width)
        .map(|s| s.id)
        .collect()
}

/// Adaptive allocation, tabulating sector utilization with `method`.
pub fn allocate_adaptive(
    scenario: &Scenario,
    cfg: &AllocatorConfig,
    mac: &MacParams,
    slots: &SlotDurations,
    method: SolverMethod,
) -> Result<SectorPlan> {
    let curve = UtilizationCurve::new(scenario.len(), mac, slots, method)?;
    allocate_adaptive_with(scenario, cfg, |n| {
        curve.get(n).ok_or_else(|| invalid(format!("no utilization for {n} stations")))
    })
}

/// Adaptive allocation against an arbitrary utilization function of the
/// sector's station count.
pub fn allocate_adaptive_with<F>(scenario: &Scenario, cfg: &AllocatorConfig, mut utilization: F) -> Result<SectorPlan>
where
    F: FnMut(usize) -> Result<f64>,
{
    cfg.validate()?;
    let mut plan = SectorPlan {
        kind: PlanKind::Adaptive,
        sectors: Vec::new(),
        uncovered: Vec::new(),
    };
    let Some(anchor) = scenario.stations.iter().map(|s| s.angle).min_by(f64::total_cmp) else {
        return Ok(plan);
    };

    // Work in offsets from the first anchor so consecutive sectors tile
    // exactly: sector k+1 starts at the same f64 where sector k ends.
    let mut offsets: Vec<(f64, u32)> = scenario
        .stations
        .iter()
        .map(|s| (normalize_angle(s.angle - anchor), s.id))
        .collect();
    offsets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Stations before `next` are assigned.
    let mut next = 0;
    let count_in = |next: usize, from: f64, width: f64| -> usize {
        offsets[next..].partition_point(|&(o, _)| o < from + width)
    };

    let angle_of: HashMap<u32, f64> = scenario.stations.iter().map(|s| (s.id, s.angle)).collect();
    let mut pos = 0.0;
    // Absolute start of the next sector when it is anchored on a station.
    let mut anchored_at = Some(anchor);
    while next < offsets.len() && pos < TAU {
        let remaining = TAU - pos;
        if count_in(next, pos, cfg.omega_min.min(remaining)) == 0 {
            pos = offsets[next].0;
            anchored_at = Some(angle_of[&offsets[next].1]);
            continue;
        }

        let mut width = cfg.omega_min;
        let mut u_prev = utilization(count_in(next, pos, width.min(remaining)))?;
        for step in 1.. {
            let candidate = cfg.omega_min + step as f64 * cfg.delta_omega;
            if candidate > cfg.omega_max + ANGLE_EPS {
                break;
            }
            let u_next = utilization(count_in(next, pos, candidate.min(remaining)))?;
            if u_next >= u_prev {
                width = candidate;
                u_prev = u_next;
            } else {
                break;
            }
        }

        let truncated = width >= remaining;
        let width = width.min(remaining);
        let taken = count_in(next, pos, width);
        let members = offsets[next..next + taken].iter().map(|&(_, id)| id).collect();
        let start = anchored_at.take().unwrap_or_else(|| normalize_angle(anchor + pos));
        // A sector cut off at the full turn ends exactly on the first anchor,
        // measured the same way arc membership is.
        let arc_width = if truncated && pos > 0.0 {
            normalize_angle(anchor - start)
        } else {
            width
        };
        plan.sectors.push(SectorSpec {
            start,
            width: arc_width,
            members,
        });
        next += taken;
        pos += width;
    }
    plan.uncovered = offsets[next..].iter().map(|&(_, id)| id).collect();
    Ok(plan)
}

/// Equal sectors of `width` starting at angle zero.
pub fn allocate_fixed(scenario: &Scenario, width: f64) -> Result<SectorPlan> {
    if !(width > 0.0 && width <= TAU + ANGLE_EPS) {
        return Err(invalid(format!("fixed width {width} outside (0, 2π]")));
    }
    let ratio = TAU / width;
    let q = ratio.round();
    if q < 1.0 || (ratio - q).abs() > 1e-9 {
        return Err(invalid(format!("2π / {width} is not a positive integer")));
    }
    let q = q as usize;
    let width = TAU / q as f64;

    let mut sectors: Vec<SectorSpec> = (0..q)
        .map(|k| SectorSpec {
            start: k as f64 * width,
            width,
            members: Vec::new(),
        })
        .collect();
    // Index by floor(angle / width) rather than per-arc filtering so that
    // rounding at the boundaries cannot drop or duplicate a station.
    for s in &scenario.stations {
        let k = ((s.angle / width).floor() as usize).min(q - 1);
        sectors[k].members.push(s.id);
    }
    Ok(SectorPlan {
        kind: PlanKind::Fixed,
        sectors,
        uncovered: Vec::new(),
    })
}
