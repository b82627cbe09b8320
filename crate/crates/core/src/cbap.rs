//! Minimum contention-period duration needed to deliver `N` frames in one
//! sector.
//!
//! `T = n_id * T_idle + n_b * T_b`, where `n_id` is the expected number of
//! backoff slots a frame spends before leaving the system, `n_b = N / p_s|b`
//! is the expected number of busy slots needed for `N` successes, and `T_b`
//! is the mean busy-slot duration.

use serde::{Deserialize, Serialize};

use crate::analytics::{slot_probabilities, solve, SolverMethod};
use crate::error::{invalid, Error, Result};
use crate::model::{MacParams, SlotDurations};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbapEstimate {
    /// Expected idle (backoff) slots.
    pub n_id: f64,
    /// Busy slots needed for the requested successes; fractional.
    pub n_b_min: f64,
    /// Mean busy-slot duration, seconds.
    pub t_b: f64,
    pub t_cbap: f64,
}

impl CbapEstimate {
    pub const ZERO: CbapEstimate = CbapEstimate {
        n_id: 0.0,
        n_b_min: 0.0,
        t_b: 0.0,
        t_cbap: 0.0,
    };
}

/// Expected backoff slots accumulated up to and including `stage`, with the
/// counter drawn uniformly over `[0, W_i]`.
pub fn expected_backoff_slots(stage: u32, mac: &MacParams) -> Result<f64> {
    mac.validate()?;
    if stage > mac.h {
        return Err(invalid(format!("stage {stage} beyond retry limit {}", mac.h)));
    }
    let w0 = mac.w0 as f64;
    let doubling_stages = stage.min(mac.m);
    let doubling: f64 = (0..=doubling_stages).map(|k| (1u64 << k) as f64 * w0).sum();
    let flat = stage.saturating_sub(mac.m) as f64 * mac.w_max() as f64;
    Ok(0.5 * (doubling + flat))
}

/// Expected backoff slots a frame accumulates before it leaves the system,
/// either delivered at stage `i < h` (weight `p^i (1 - p)`) or having
/// reached stage `h` (weight `p^h`).
pub fn expected_idle_slots(p: f64, mac: &MacParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("collision probability must lie in [0, 1), got {p}")));
    }
    let mut total = 0.0;
    for stage in 0..mac.h {
        total += p.powi(stage as i32) * (1.0 - p) * expected_backoff_slots(stage, mac)?;
    }
    total += p.powi(mac.h as i32) * expected_backoff_slots(mac.h, mac)?;
    Ok(total)
}

/// Success and collision probabilities conditioned on the slot being busy.
pub fn busy_slot_probabilities(n: usize, tau: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(invalid("station count must be at least 1"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::UndefinedConditional(format!(
            "no busy slots when tau = {tau}"
        )));
    }
    if n == 1 {
        return Ok((1.0, 0.0));
    }
    let pr = slot_probabilities(n, tau);
    let busy = 1.0 - pr.p_idle;
    let p_suc = pr.p_suc / busy;
    // Complement keeps the pair summing to one where p_col underflows.
    Ok((p_suc, 1.0 - p_suc))
}

/// Expected busy slots needed for `requests` successes.
pub fn min_busy_slots(requests: usize, p_suc_busy: f64) -> Result<f64> {
    if !(p_suc_busy > 0.0) {
        return Err(Error::Infeasible(format!(
            "a busy slot never succeeds (p = {p_suc_busy})"
        )));
    }
    Ok(requests as f64 / p_suc_busy)
}

/// Minimum contention period for `requests` frames from `n` saturated
/// stations.
pub fn min_cbap_duration(
    requests: usize,
    n: usize,
    mac: &MacParams,
    slots: &SlotDurations,
    method: SolverMethod,
) -> Result<CbapEstimate> {
    if requests == 0 {
        return Ok(CbapEstimate::ZERO);
    }
    if n == 0 {
        return Err(invalid("requests need at least one station"));
    }
    let sol = solve(n, mac, method)?;
    let n_id = expected_idle_slots(sol.p, mac)?;
    let (p_suc_busy, p_col_busy) = busy_slot_probabilities(n, sol.tau)?;
    let t_b = p_suc_busy * slots.t_suc + p_col_busy * slots.t_col;
    let n_b_min = min_busy_slots(requests, p_suc_busy)?;
    Ok(CbapEstimate {
        n_id,
        n_b_min,
        t_b,
        t_cbap: n_id * slots.t_idle + n_b_min * t_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MICROSECOND;

    const MAC: MacParams = MacParams::TABLE1;

    #[test]
    fn backoff_slot_values() {
        assert_eq!(expected_backoff_slots(0, &MAC).unwrap(), 4.0);
        assert_eq!(expected_backoff_slots(1, &MAC).unwrap(), 12.0);
        assert_eq!(expected_backoff_slots(4, &MAC).unwrap(), 92.0);
        assert_eq!(expected_backoff_slots(5, &MAC).unwrap(), 124.0);
        assert!(expected_backoff_slots(6, &MAC).is_err());
        let v: Vec<f64> = MAC.stages().map(|i| expected_backoff_slots(i, &MAC).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn idle_slot_limits() {
        assert_eq!(expected_idle_slots(0.0, &MAC).unwrap(), 4.0);
        let near_one = expected_idle_slots(1.0 - 1e-9, &MAC).unwrap();
        assert!((near_one - 124.0).abs() < 1e-5, "{near_one}");
        assert!(expected_idle_slots(1.0, &MAC).is_err());
    }

    #[test]
    fn busy_conditionals() {
        assert_eq!(busy_slot_probabilities(1, 0.4).unwrap(), (1.0, 0.0));
        let (s, c) = busy_slot_probabilities(2, 0.5).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15 && (c - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(busy_slot_probabilities(3, 0.0), Err(Error::UndefinedConditional(_))));
    }

    #[test]
    fn busy_slot_counts() {
        assert_eq!(min_busy_slots(10, 1.0).unwrap(), 10.0);
        assert!((min_busy_slots(10, 2.0 / 3.0).unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(min_busy_slots(0, 0.3).unwrap(), 0.0);
        assert!(matches!(min_busy_slots(5, 0.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_request_single_station() {
        let slots = SlotDurations::table1();
        for method in [SolverMethod::PaperClosedForm, SolverMethod::NumericChain] {
            let e = min_cbap_duration(1, 1, &MAC, &slots, method).unwrap();
            assert_eq!(e.n_id, 4.0);
            assert_eq!(e.t_b, slots.t_suc);
            assert_eq!(e.n_b_min, 1.0);
            assert!((e.t_cbap - 69.08 * MICROSECOND).abs() < 0.005 * MICROSECOND);
        }
        assert_eq!(min_cbap_duration(0, 0, &MAC, &slots, SolverMethod::NumericChain).unwrap(), CbapEstimate::ZERO);
        assert!(min_cbap_duration(3, 0, &MAC, &slots, SolverMethod::NumericChain).is_err());
    }

    #[test]
    fn busy_duration_between_collision_and_success() {
        let slots = SlotDurations::table1();
        for n in [1, 2, 7, 30] {
            let e = min_cbap_duration(n, n, &MAC, &slots, SolverMethod::NumericChain).unwrap();
            assert!(slots.t_col <= e.t_b && e.t_b <= slots.t_suc);
        }
    }
}
