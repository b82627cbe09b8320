//! Saturation model of CSMA/CA contention inside one quasi-omni sector.
//!
//! Every station in a sector is assumed to transmit in a random slot with a
//! fixed probability `tau` and to collide with a fixed conditional
//! probability `p`. The pair is the fixed point of
//!
//! ```text
//! p   = 1 - (1 - tau)^(n - 1)
//! tau = tau(p)                      (backoff chain)
//! ```
//!
//! Two routes to `tau(p)` are provided: the closed form ([`tau_of_p`]) and
//! the stationary distribution of the explicit backoff chain
//! ([`chain::BackoffChain`]). They disagree for the default constants; see
//! the crate README for the measured gap.

pub mod chain;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{MacParams, SlotDurations};

pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
pub const MAX_BISECTION_ITERATIONS: usize = 200;
const P_UPPER: f64 = 1.0 - 1e-12;

/// How `tau(p)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// The two-parameter closed form, evaluated term by term.
    PaperClosedForm,
    /// Stationary distribution of the explicit stage/counter chain.
    #[default]
    NumericChain,
}

impl SolverMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMethod::PaperClosedForm => "paper-closed-form",
            SolverMethod::NumericChain => "numeric-chain",
        }
    }
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-closed-form" => Ok(SolverMethod::PaperClosedForm),
            "numeric-chain" => Ok(SolverMethod::NumericChain),
            other => Err(invalid(format!("unknown solver method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentionSolution {
    pub n: usize,
    pub p: f64,
    pub tau: f64,
    pub b00: f64,
    pub method: SolverMethod,
}

impl ContentionSolution {
    pub fn residual(&self) -> f64 {
        (self.p - p_of_tau(self.tau, self.n).unwrap_or(f64::NAN)).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotProbabilities {
    pub p_idle: f64,
    pub p_suc: f64,
    pub p_col: f64,
}

/// Conditional collision probability seen by one of `n` stations that each
/// transmit with probability `tau`.
pub fn p_of_tau(tau: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("station count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(1.0 - (1.0 - tau).powi(n as i32 - 1))
}

/// `sum_{k=0}^{terms-1} x^k`, which equals `(1 - x^terms) / (1 - x)` away
/// from `x = 1` and stays finite at it.
fn geometric_sum(x: f64, terms: u32) -> f64 {
    let mut acc = 0.0;
    let mut term = 1.0;
    for _ in 0..terms {
        acc += term;
        term *= x;
    }
    acc
}

/// Closed-form transmission probability for collision probability `p`.
/// Returns `(tau, b00)`.
///
/// The `(1 - (2p)^(m+1)) / (1 - 2p)` and `(1 - p^(m+1)) / (1 - p)` ratios
/// are expanded as finite geometric sums, so `p = 0.5` and `p = 0` take
/// their analytic limits.
pub fn tau_of_p(p: f64, mac: &MacParams) -> Result<(f64, f64)> {
    mac.validate()?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("collision probability must lie in [0, 1), got {p}")));
    }
    let m = mac.m;
    let w0 = mac.w0 as f64;
    let w_max = mac.w_max() as f64;

    let doubling = geometric_sum(2.0 * p, m + 1);
    let tail = 1.0 - p.powi(m as i32 + 1) + (w_max + 1.0) * (1.0 - p.powi((mac.h - m) as i32));
    let b00 = 2.0 * (1.0 - p) / (w0 * (1.0 - p) * doubling + tail);
    let tau = geometric_sum(p, m + 1) * b00;
    Ok((tau, b00))
}

/// Finds the root of `p - p_of_tau(tau(p), n)` by bisection.
pub(crate) fn bisect_fixed_point<F>(n: usize, method: SolverMethod, mut tau_fn: F) -> Result<ContentionSolution>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if n == 0 {
        return Err(invalid("station count must be at least 1"));
    }
    if n == 1 {
        let (tau, b00) = tau_fn(0.0)?;
        return Ok(ContentionSolution {
            n,
            p: 0.0,
            tau,
            b00,
            method,
        });
    }

    let mut eval = |p: f64| -> Result<(f64, f64, f64)> {
        let (tau, b00) = tau_fn(p)?;
        Ok((p - p_of_tau(tau, n)?, tau, b00))
    };

    let (mut lo, mut hi) = (0.0_f64, P_UPPER);
    let (g_lo, tau_lo, b00_lo) = eval(lo)?;
    let (g_hi, tau_hi, b00_hi) = eval(hi)?;
    // A root at or beyond either end of the bracket.
    for (g, p, tau, b00) in [(g_lo, lo, tau_lo, b00_lo), (g_hi, hi, tau_hi, b00_hi)] {
        if g.abs() <= 1e-3 * FIXED_POINT_TOLERANCE || (g.abs() <= FIXED_POINT_TOLERANCE && g_lo * g_hi > 0.0) {
            return Ok(ContentionSolution { n, p, tau, b00, method });
        }
    }
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::SolverFailure {
            iterations: 0,
            residual: g_lo.abs().min(g_hi.abs()),
        });
    }

    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (g, tau, b00) = eval(mid)?;
        if g.abs() < best.0 {
            best = (g.abs(), mid, tau, b00);
        }
        if g.abs() <= 1e-3 * FIXED_POINT_TOLERANCE || hi - lo <= f64::EPSILON * 4.0 {
            break;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (residual, p, tau, b00) = best;
    if residual > FIXED_POINT_TOLERANCE {
        return Err(Error::SolverFailure { iterations, residual });
    }
    Ok(ContentionSolution {
        n,
        p,
        tau,
        b00,
        method,
    })
}

/// Fixed point using the closed form for `tau(p)`.
pub fn solve_fixed_point(n: usize, mac: &MacParams) -> Result<ContentionSolution> {
    bisect_fixed_point(n, SolverMethod::PaperClosedForm, |p| tau_of_p(p, mac))
}

/// Fixed point using the stationary distribution of the backoff chain.
pub fn solve_markov_numeric(n: usize, mac: &MacParams) -> Result<ContentionSolution> {
    let chain = chain::BackoffChain::new(*mac)?;
    bisect_fixed_point(n, SolverMethod::NumericChain, |p| {
        let s = chain.stationary(p)?;
        Ok((s.tau, s.b00))
    })
}

pub fn solve(n: usize, mac: &MacParams, method: SolverMethod) -> Result<ContentionSolution> {
    match method {
        SolverMethod::PaperClosedForm => solve_fixed_point(n, mac),
        SolverMethod::NumericChain => solve_markov_numeric(n, mac),
    }
}

/// Idle / success / collision probabilities of a random slot.
///
/// `n` must be at least 1 and `tau` must lie in `[0, 1]`.
pub fn slot_probabilities(n: usize, tau: f64) -> SlotProbabilities {
    debug_assert!(n >= 1 && (0.0..=1.0).contains(&tau));
    let others = (1.0 - tau).powi(n as i32 - 1);
    let p_idle = others * (1.0 - tau);
    let p_suc = n as f64 * tau * others;
    let p_col = (1.0 - p_suc - p_idle).max(0.0);
    SlotProbabilities { p_idle, p_suc, p_col }
}

/// Fraction of airtime spent on successful payload when `n` stations
/// transmit with probability `tau`.
pub fn utilization_at(n: usize, tau: f64, slots: &SlotDurations) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let pr = slot_probabilities(n, tau);
    let mean_slot = pr.p_idle * slots.t_idle + pr.p_suc * slots.t_suc + pr.p_col * slots.t_col;
    pr.p_suc * slots.e_payload / mean_slot
}

/// Channel utilization of one sector with `n` saturated stations.
/// An empty sector has zero utilization and does not touch the solver.
pub fn sector_utilization(n: usize, mac: &MacParams, slots: &SlotDurations, method: SolverMethod) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let sol = solve(n, mac, method)?;
    Ok(utilization_at(n, sol.tau, slots))
}

/// Beacon-interval utilization when the `Q` sectors share time equally.
pub fn network_utilization(per_sector: &[f64]) -> Result<f64> {
    if per_sector.is_empty() {
        return Err(invalid("at least one sector is required"));
    }
    Ok(per_sector.iter().sum::<f64>() / per_sector.len() as f64)
}

/// Sector utilization tabulated for `0..=max_n` stations. Solving the chain
/// is comparatively expensive, so allocators look values up here.
#[derive(Debug, Clone)]
pub struct UtilizationCurve {
    values: Vec<f64>,
    method: SolverMethod,
}

impl UtilizationCurve {
    pub fn new(max_n: usize, mac: &MacParams, slots: &SlotDurations, method: SolverMethod) -> Result<Self> {
        let values = (0..=max_n)
            .map(|n| sector_utilization(n, mac, slots, method))
            .collect::<Result<Vec<_>>>()?;
        Ok(UtilizationCurve { values, method })
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        self.values.get(n).copied()
    }

    pub fn max_n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn method(&self) -> SolverMethod {
        self.method
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
