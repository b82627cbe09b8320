//! Slot-level Monte Carlo simulation of saturated CSMA/CA in one sector.
//!
//! Every station always has a frame queued. A station whose backoff counter
//! is zero transmits; a slot with one transmitter is a success, with two or
//! more a collision, and with none it is idle. Colliders move up one
//! backoff stage, and a frame that collides at the retry limit is dropped.
//! After a success or a drop the station starts a fresh frame at stage 0.
//!
//! Counters are kept as absolute deadlines on a clock in a min-heap, so
//! runs of idle slots are skipped in one step. The clock is either the slot
//! index ([`BackoffClock::EverySlot`]) or the idle-slot index
//! ([`BackoffClock::FreezeOnBusy`]).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::allocator::{SectorPlan, SectorSpec};
use crate::model::{MacParams, SlotDurations};

/// When a waiting station's backoff counter advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BackoffClock {
    /// Once per slot of any kind. This is the time scale of the backoff
    /// chain, where a busy period counts as one slot.
    #[default]
    EverySlot,
    /// Only on idle slots; counters hold through busy slots.
    FreezeOnBusy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Run exactly this many slots.
    Slots(u64),
    /// Run until this many frames have been delivered.
    Successes(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimStats {
    pub idle_slots: u64,
    pub success_slots: u64,
    pub collision_slots: u64,
    pub attempts: u64,
    pub colliding_attempts: u64,
    /// Frames discarded after colliding at the retry limit.
    pub dropped: u64,
    /// Seconds of channel time.
    pub elapsed: f64,
    pub per_station_successes: BTreeMap<u32, u64>,
    pub empirical_tau: f64,
    pub empirical_p: f64,
    pub utilization: f64,
}

impl SimStats {
    pub fn total_slots(&self) -> u64 {
        self.idle_slots + self.success_slots + self.collision_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSimulator {
    pub mac: MacParams,
    pub slots: SlotDurations,
    pub clock: BackoffClock,
}

impl SlotSimulator {
    pub fn new(mac: MacParams, slots: SlotDurations) -> Self {
        SlotSimulator {
            mac,
            slots,
            clock: BackoffClock::default(),
        }
    }

    pub fn with_clock(mut self, clock: BackoffClock) -> Self {
        self.clock = clock;
        self
    }

    /// Simulates stations `0..n`.
    pub fn sector(&self, n: usize, stop: StopRule, seed: u64) -> SimStats {
        let ids: Vec<u32> = (0..n as u32).collect();
        self.run(&ids, stop, seed)
    }

    /// Simulates each sector independently. Sector seeds are derived from
    /// `seed` and the sector's own start, width and members, not from its
    /// position in the plan.
    pub fn plan(&self, plan: &SectorPlan, stop: StopRule, seed: u64) -> Vec<SimStats> {
        plan.sectors
            .iter()
            .map(|sector| self.run(&sector.members, stop, sector_seed(seed, sector)))
            .collect()
    }

    pub fn run(&self, ids: &[u32], stop: StopRule, seed: u64) -> SimStats {
        let mut stats = SimStats::default();
        if ids.is_empty() {
            return stats;
        }
        let mac = self.mac;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut stage = vec![0u32; ids.len()];
        let mut successes = vec![0u64; ids.len()];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..ids.len())
            .map(|i| Reverse((rng.random_range(0..mac.w0) as u64, i)))
            .collect();
        let mut clock = 0u64;
        let mut total = 0u64;
        let mut transmitters = Vec::with_capacity(ids.len());

        loop {
            let budget_left = match stop {
                StopRule::Slots(limit) => limit.saturating_sub(total),
                StopRule::Successes(target) if stats.success_slots >= target => 0,
                StopRule::Successes(_) => u64::MAX,
            };
            if budget_left == 0 {
                break;
            }

            let Reverse((next, _)) = *heap.peek().expect("stations never leave");
            if next > clock {
                let gap = (next - clock).min(budget_left);
                stats.idle_slots += gap;
                total += gap;
                clock += gap;
                continue;
            }

            transmitters.clear();
            while let Some(&Reverse((key, i))) = heap.peek() {
                if key != clock {
                    break;
                }
                heap.pop();
                transmitters.push(i);
            }
            total += 1;
            stats.attempts += transmitters.len() as u64;
            if let [only] = transmitters[..] {
                stats.success_slots += 1;
                successes[only] += 1;
                stage[only] = 0;
            } else {
                stats.collision_slots += 1;
                stats.colliding_attempts += transmitters.len() as u64;
                for &i in &transmitters {
                    if stage[i] == mac.h {
                        stage[i] = 0;
                        stats.dropped += 1;
                    } else {
                        stage[i] += 1;
                    }
                }
            }
            if self.clock == BackoffClock::EverySlot {
                clock += 1;
            }
            for &i in &transmitters {
                let backoff = rng.random_range(0..mac.window(stage[i])) as u64;
                heap.push(Reverse((clock + backoff, i)));
            }
        }

        let s = &self.slots;
        stats.elapsed = stats.idle_slots as f64 * s.t_idle
            + stats.success_slots as f64 * s.t_suc
            + stats.collision_slots as f64 * s.t_col;
        stats.per_station_successes = ids.iter().copied().zip(successes).collect();
        if total > 0 {
            stats.empirical_tau = stats.attempts as f64 / (ids.len() as f64 * total as f64);
        }
        if stats.attempts > 0 {
            stats.empirical_p = stats.colliding_attempts as f64 / stats.attempts as f64;
        }
        if stats.elapsed > 0.0 {
            stats.utilization = stats.success_slots as f64 * s.e_payload / stats.elapsed;
        }
        stats
    }
}

pub fn simulate_sector(n: usize, mac: &MacParams, slots: &SlotDurations, stop: StopRule, seed: u64) -> SimStats {
    SlotSimulator::new(*mac, *slots).sector(n, stop, seed)
}

pub fn simulate_plan(plan: &SectorPlan, mac: &MacParams, slots: &SlotDurations, stop: StopRule, seed: u64) -> Vec<SimStats> {
    SlotSimulator::new(*mac, *slots).plan(plan, stop, seed)
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a master seed with a key into an independent stream seed.
pub fn derive_seed(master: u64, key: u64) -> u64 {
    mix64(mix64(master) ^ key)
}

fn sector_seed(master: u64, sector: &SectorSpec) -> u64 {
    let mut h = derive_seed(master, sector.start.to_bits());
    h = derive_seed(h, sector.width.to_bits());
    for &id in &sector.members {
        h = derive_seed(h, id as u64);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::PlanKind;

    fn sim() -> SlotSimulator {
        SlotSimulator::new(MacParams::TABLE1, SlotDurations::table1())
    }

    #[test]
    fn lone_station_never_collides() {
        for clock in [BackoffClock::EverySlot, BackoffClock::FreezeOnBusy] {
            let s = sim().with_clock(clock).sector(1, StopRule::Slots(100_000), 3);
            assert_eq!(s.collision_slots, 0);
            assert_eq!(s.empirical_p, 0.0);
            assert_eq!(s.total_slots(), 100_000);
        }
    }

    #[test]
    fn slot_and_attempt_accounting() {
        for clock in [BackoffClock::EverySlot, BackoffClock::FreezeOnBusy] {
            let s = sim().with_clock(clock).sector(12, StopRule::Slots(200_000), 11);
            assert_eq!(s.total_slots(), 200_000);
            assert_eq!(s.attempts, s.success_slots + s.colliding_attempts);
            assert_eq!(s.per_station_successes.values().sum::<u64>(), s.success_slots);
            let slots = SlotDurations::table1();
            let elapsed = s.idle_slots as f64 * slots.t_idle
                + s.success_slots as f64 * slots.t_suc
                + s.collision_slots as f64 * slots.t_col;
            assert_eq!(s.elapsed, elapsed);
            assert_eq!(s.utilization, s.success_slots as f64 * slots.e_payload / elapsed);
        }
    }

    #[test]
    fn success_target_stops_exactly() {
        let s = sim().sector(7, StopRule::Successes(500), 5);
        assert_eq!(s.success_slots, 500);
    }

    #[test]
    fn reproducible() {
        let a = sim().sector(20, StopRule::Slots(50_000), 99);
        let b = sim().sector(20, StopRule::Slots(50_000), 99);
        assert_eq!(a, b);
        let c = sim().sector(20, StopRule::Slots(50_000), 100);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(sim().sector(0, StopRule::Slots(10), 1), SimStats::default());
        assert_eq!(sim().sector(4, StopRule::Slots(0), 1).total_slots(), 0);
    }

    #[test]
    fn fixed_window_matches_renewal_rate() {
        // With no stages each station is an independent renewal process
        // with mean period (W0 + 1) / 2 slots.
        let mac = MacParams { w0: 8, m: 0, h: 0 };
        let s = SlotSimulator::new(mac, SlotDurations::table1()).sector(3, StopRule::Slots(2_000_000), 1);
        assert!((s.empirical_tau - 2.0 / 9.0).abs() < 2e-3, "{}", s.empirical_tau);
    }

    #[test]
    fn plan_sector_order_does_not_matter() {
        let sector = |start: f64, members: Vec<u32>| SectorSpec {
            start,
            width: 0.5,
            members,
        };
        let plan = SectorPlan {
            kind: PlanKind::Adaptive,
            sectors: vec![sector(0.0, vec![]), sector(1.0, vec![1, 2, 3]), sector(2.0, vec![4, 5])],
            uncovered: vec![],
        };
        let mut reversed = plan.clone();
        reversed.sectors.reverse();
        let a = sim().plan(&plan, StopRule::Slots(10_000), 8);
        let mut b = sim().plan(&reversed, StopRule::Slots(10_000), 8);
        b.reverse();
        assert_eq!(a, b);
        assert_eq!(a[0], SimStats::default());
        assert_eq!(a[1].per_station_successes.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
