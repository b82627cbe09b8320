//! Experiment drivers: utilization sweeps, adaptive-versus-fixed comparison,
//! link-budget curves, and the analytic-versus-simulation cross-check.
//!
//! Everything here is deterministic given an [`ExperimentConfig`]; parallel
//! work is collected back in input order.

mod config;

pub use config::{
    AllocatorFileConfig, EnvConfig, ExperimentConfig, GeometryFileConfig, LinkBudgetBound, LinkBudgetSweepConfig,
    SeedSpec, TimingConfig, ValidationConfig,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate_adaptive_with, allocate_fixed, SectorPlan};
use crate::analytics::{
    network_utilization, sector_utilization, solve, utilization_at, ContentionSolution, SolverMethod,
};
use crate::cbap::{min_cbap_duration, CbapEstimate};
use crate::error::{invalid, Result};
use crate::link_budget::{max_tx_beamwidth, TxBeamwidth};
use crate::model::{MacParams, SlotDurations, MICROSECOND};
use crate::scenario::generate_scenario;
use crate::sim::{derive_seed, SlotSimulator, StopRule};

/// Formats with nine significant digits, the precision of every CSV float.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-station-count model values, computed once and shared by every seed.
#[derive(Debug, Clone)]
pub struct ModelTable {
    solutions: Vec<Option<ContentionSolution>>,
    utilization: Vec<f64>,
    cbap: Vec<CbapEstimate>,
}

impl ModelTable {
    /// Tabulates `n = 0..=max_n`. Entry `n` of the CBAP column is the
    /// contention period for `n` requests from `n` stations.
    pub fn new(max_n: usize, mac: &MacParams, slots: &SlotDurations, method: SolverMethod) -> Result<Self> {
        let rows = (0..=max_n)
            .into_par_iter()
            .map(|n| {
                if n == 0 {
                    return Ok((None, 0.0, CbapEstimate::ZERO));
                }
                let sol = solve(n, mac, method)?;
                let cbap = min_cbap_duration(n, n, mac, slots, method)?;
                Ok((Some(sol), utilization_at(n, sol.tau, slots), cbap))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut table = ModelTable {
            solutions: Vec::with_capacity(rows.len()),
            utilization: Vec::with_capacity(rows.len()),
            cbap: Vec::with_capacity(rows.len()),
        };
        for (s, u, c) in rows {
            table.solutions.push(s);
            table.utilization.push(u);
            table.cbap.push(c);
        }
        Ok(table)
    }

    pub fn max_n(&self) -> usize {
        self.utilization.len() - 1
    }

    pub fn solution(&self, n: usize) -> Option<&ContentionSolution> {
        self.solutions.get(n).and_then(Option::as_ref)
    }

    pub fn utilization(&self, n: usize) -> Result<f64> {
        self.utilization
            .get(n)
            .copied()
            .ok_or_else(|| invalid(format!("model table stops at {} stations, asked for {n}", self.max_n())))
    }

    pub fn cbap(&self, n: usize) -> Result<CbapEstimate> {
        self.cbap
            .get(n)
            .copied()
            .ok_or_else(|| invalid(format!("model table stops at {} stations, asked for {n}", self.max_n())))
    }

    /// Network utilization and summed contention period of a plan, with
    /// each sector requesting one frame per member.
    pub fn evaluate(&self, plan: &SectorPlan) -> Result<PlanMetrics> {
        let per_sector = plan
            .sectors
            .iter()
            .map(|s| self.utilization(s.n()))
            .collect::<Result<Vec<_>>>()?;
        let utilization = if per_sector.is_empty() {
            0.0
        } else {
            network_utilization(&per_sector)?
        };
        let t_cbap = plan
            .sectors
            .iter()
            .map(|s| self.cbap(s.n()).map(|c| c.t_cbap))
            .sum::<Result<f64>>()?;
        Ok(PlanMetrics {
            utilization,
            t_cbap,
            sectors: plan.q(),
            uncovered: plan.uncovered.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub utilization: f64,
    /// Seconds.
    pub t_cbap: f64,
    pub sectors: usize,
    pub uncovered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub utilization: std::result::Result<f64, String>,
}

/// Analytic sector utilization for each `n`; a failed solve is reported in
/// its row and the sweep carries on.
pub fn run_utilization_sweep(ns: &[usize], cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let slots = cfg.slot_durations()?;
    Ok(ns
        .par_iter()
        .map(|&n| SweepRow {
            n,
            utilization: sector_utilization(n, &cfg.mac, &slots, cfg.method).map_err(|e| e.to_string()),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub seed: u64,
    pub adaptive: PlanMetrics,
    pub fixed: PlanMetrics,
}

impl ComparisonRow {
    /// Relative utilization gain of the adaptive plan.
    pub fn uplift(&self) -> f64 {
        self.adaptive.utilization / self.fixed.utilization - 1.0
    }

    /// Relative contention-period saving of the adaptive plan.
    pub fn reduction(&self) -> f64 {
        1.0 - self.adaptive.t_cbap / self.fixed.t_cbap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonAggregate {
    pub n: usize,
    pub runs: usize,
    pub failures: usize,
    pub u_adaptive: MeanStd,
    pub u_fixed: MeanStd,
    /// Seconds.
    pub t_adaptive: MeanStd,
    pub t_fixed: MeanStd,
    /// Mean over seeds of the per-seed relative uplift.
    pub uplift: MeanStd,
    pub reduction: MeanStd,
    /// Runs in which the adaptive plan left some station without a sector.
    pub runs_with_uncovered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub method: SolverMethod,
    pub rows: Vec<ComparisonRow>,
    pub failures: Vec<SeedFailure>,
    pub aggregates: Vec<ComparisonAggregate>,
}

impl ComparisonReport {
    pub fn aggregate(&self, n: usize) -> Option<&ComparisonAggregate> {
        self.aggregates.iter().find(|a| a.n == n)
    }
}

fn compare_one(
    n: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    allocator: &crate::allocator::AllocatorConfig,
    table: &ModelTable,
) -> Result<ComparisonRow> {
    let scenario = generate_scenario(&cfg.geometry_for(n, seed))?;
    let adaptive = allocate_adaptive_with(&scenario, allocator, |k| table.utilization(k))?;
    let fixed = allocate_fixed(&scenario, cfg.fixed_width())?;
    Ok(ComparisonRow {
        n,
        seed,
        adaptive: table.evaluate(&adaptive)?,
        fixed: table.evaluate(&fixed)?,
    })
}

/// Adaptive versus fixed plans over every `(n, seed)` pair of the config.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let slots = cfg.slot_durations()?;
    let allocator = cfg.allocator()?;
    let max_n = cfg.n_sweep.iter().copied().max().unwrap_or(0);
    let table = ModelTable::new(max_n, &cfg.mac, &slots, cfg.method)?;
    let seeds = cfg.seed_list();

    let jobs: Vec<(usize, u64)> = cfg
        .n_sweep
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(n, seed)| (n, seed, compare_one(n, seed, cfg, &allocator, &table)))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, seed, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(SeedFailure {
                n,
                seed,
                error: e.to_string(),
            }),
        }
    }

    let aggregates = cfg
        .n_sweep
        .iter()
        .map(|&n| {
            let group: Vec<&ComparisonRow> = rows.iter().filter(|r| r.n == n).collect();
            let col = |f: &dyn Fn(&ComparisonRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
            ComparisonAggregate {
                n,
                runs: group.len(),
                failures: failures.iter().filter(|f| f.n == n).count(),
                u_adaptive: MeanStd::of(&col(&|r| r.adaptive.utilization)),
                u_fixed: MeanStd::of(&col(&|r| r.fixed.utilization)),
                t_adaptive: MeanStd::of(&col(&|r| r.adaptive.t_cbap)),
                t_fixed: MeanStd::of(&col(&|r| r.fixed.t_cbap)),
                uplift: MeanStd::of(&col(&|r| r.uplift())),
                reduction: MeanStd::of(&col(&|r| r.reduction())),
                runs_with_uncovered: group.iter().filter(|r| r.adaptive.uncovered > 0).count(),
            }
        })
        .collect();

    Ok(ComparisonReport {
        method: cfg.method,
        rows,
        failures,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetRow {
    pub mcs: String,
    pub d_m: f64,
    pub rx_bw_deg: f64,
    /// `None` when the required beam is narrower than the antenna floor.
    pub tx_bw_deg: Option<f64>,
    /// The budget would allow more than 2π, reported as 360°.
    pub omni: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetReport {
    pub rows: Vec<LinkBudgetRow>,
    /// Requested MCS names with no sensitivity entry.
    pub skipped_mcs: Vec<String>,
}

/// Maximum transmit beamwidth for every `(mcs, d, rx_bw)` combination.
pub fn run_linkbudget_curves(
    cfg: &ExperimentConfig,
    mcs_list: &[String],
    distances: &[f64],
    rx_bw_deg: &[f64],
) -> Result<LinkBudgetReport> {
    let env = cfg.phy_env();
    env.validate()?;
    let mut report = LinkBudgetReport {
        rows: Vec::new(),
        skipped_mcs: Vec::new(),
    };
    for mcs in mcs_list {
        if !env.sensitivities.contains_key(mcs) {
            report.skipped_mcs.push(mcs.clone());
            continue;
        }
        for &d in distances {
            for &rx in rx_bw_deg {
                let tx = max_tx_beamwidth(d, rx.to_radians(), mcs, &env)?;
                report.rows.push(LinkBudgetRow {
                    mcs: mcs.clone(),
                    d_m: d,
                    rx_bw_deg: rx,
                    tx_bw_deg: tx.radians().map(f64::to_degrees),
                    omni: matches!(tx, TxBeamwidth::Omni),
                });
            }
        }
    }
    Ok(report)
}

/// Mean and standard error of simulated statistics over independent seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub runs: usize,
    pub slots_per_run: u64,
    pub p: f64,
    pub p_se: f64,
    pub tau: f64,
    pub tau_se: f64,
    pub utilization: f64,
    pub utilization_se: f64,
}

/// Runs `seeds` independent `n`-station sectors for `slots` slots each.
pub fn simulate_summary(sim: &SlotSimulator, n: usize, slots: u64, seeds: &[u64]) -> SimSummary {
    let stats: Vec<_> = seeds
        .par_iter()
        .map(|&s| sim.sector(n, StopRule::Slots(slots), s))
        .collect();
    let se = |xs: Vec<f64>| {
        let (m, sd) = mean_std(&xs);
        (m, sd / (xs.len() as f64).sqrt())
    };
    let (p, p_se) = se(stats.iter().map(|s| s.empirical_p).collect());
    let (tau, tau_se) = se(stats.iter().map(|s| s.empirical_tau).collect());
    let (utilization, utilization_se) = se(stats.iter().map(|s| s.utilization).collect());
    SimSummary {
        runs: seeds.len(),
        slots_per_run: slots,
        p,
        p_se,
        tau,
        tau_se,
        utilization,
        utilization_se,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub p: f64,
    pub tau: f64,
    pub utilization: f64,
}

impl ModelPoint {
    fn solve(n: usize, mac: &MacParams, slots: &SlotDurations, method: SolverMethod) -> Result<Self> {
        let sol = solve(n, mac, method)?;
        Ok(ModelPoint {
            p: sol.p,
            tau: sol.tau,
            utilization: utilization_at(n, sol.tau, slots),
        })
    }
}

/// Distance in standard errors; an exact match with zero spread is 0 and
/// any mismatch with zero spread is infinite.
fn z_score(estimate: f64, se: f64, reference: f64) -> f64 {
    let diff = (estimate - reference).abs();
    if diff <= 1e-15 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub n: usize,
    pub closed_form: ModelPoint,
    pub chain: ModelPoint,
    pub sim: SimSummary,
    pub p_z: f64,
    pub tau_z: f64,
    /// Relative gap between chain and simulated utilization.
    pub utilization_rel: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub clock: crate::sim::BackoffClock,
    pub sigma: f64,
    pub utilization_rel_tol: f64,
    pub rows: Vec<ValidationRow>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub const CLOSED_FORM_NOTE: &str = "closed-form column: the closed-form b00 expression gives tau = 1/37 at p = 0, \
while the backoff chain gives 2/(W0 + 1) = 2/9; closed-form deltas are informational only";

/// Closed form, numeric chain and simulator side by side for each `n` in
/// `ns`. Rows pass when the simulated p and tau lie within `sigma` standard
/// errors of the chain and utilization within the relative tolerance.
pub fn validate(cfg: &ExperimentConfig, ns: &[usize]) -> Result<ValidationReport> {
    let v = &cfg.validation;
    if v.seeds < 2 {
        return Err(invalid("validation needs at least two seeds"));
    }
    let slots = cfg.slot_durations()?;
    let sim = SlotSimulator::new(cfg.mac, slots).with_clock(v.clock);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(invalid("validation needs at least one station"));
        }
        let closed_form = ModelPoint::solve(n, &cfg.mac, &slots, SolverMethod::PaperClosedForm)?;
        let chain = ModelPoint::solve(n, &cfg.mac, &slots, SolverMethod::NumericChain)?;
        let seeds: Vec<u64> = (0..v.seeds as u64).map(|i| derive_seed(v.seed, ((n as u64) << 32) | i)).collect();
        let summary = simulate_summary(&sim, n, v.slots_per_seed, &seeds);
        let p_z = z_score(summary.p, summary.p_se, chain.p);
        let tau_z = z_score(summary.tau, summary.tau_se, chain.tau);
        let utilization_rel = (summary.utilization - chain.utilization).abs() / chain.utilization;
        rows.push(ValidationRow {
            n,
            closed_form,
            chain,
            sim: summary,
            p_z,
            tau_z,
            utilization_rel,
            pass: p_z <= v.sigma && tau_z <= v.sigma && utilization_rel <= v.utilization_rel_tol,
        });
    }
    Ok(ValidationReport {
        clock: v.clock,
        sigma: v.sigma,
        utilization_rel_tol: v.utilization_rel_tol,
        rows,
        notes: vec![CLOSED_FORM_NOTE.to_string()],
    })
}

/// Minimum contention period in microseconds, for CLI display.
pub fn cbap_time_us(requests: usize, n: usize, cfg: &ExperimentConfig) -> Result<(CbapEstimate, f64)> {
    let slots = cfg.slot_durations()?;
    let est = min_cbap_duration(requests, n, &cfg.mac, &slots, cfg.method)?;
    Ok((est, est.t_cbap / MICROSECOND))
}
