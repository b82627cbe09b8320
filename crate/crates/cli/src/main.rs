use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use qo_cbap::allocator::{allocate_adaptive_with, allocate_fixed, SectorPlan};
use qo_cbap::analytics::{SolverMethod, UtilizationCurve};
use qo_cbap::experiment::{
    cbap_time_us, format_sig9, run_comparison, run_linkbudget_curves, run_utilization_sweep, validate,
    ExperimentConfig, SeedSpec,
};
use qo_cbap::scenario::{generate_scenario, load_scenario, to_json};
use qo_cbap::sim::{BackoffClock, SlotSimulator, StopRule};
use qo_cbap::Error;

#[derive(Parser)]
#[command(name = "qo-cbap", version, about = "Contention model, sector allocation and CBAP sizing for 60 GHz quasi-omni sectors")]
struct Cli {
    /// Experiment config (JSON). Built-in evaluation defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's contention solver.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    PaperClosedForm,
    NumericChain,
}

impl From<Method> for SolverMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::PaperClosedForm => SolverMethod::PaperClosedForm,
            Method::NumericChain => SolverMethod::NumericChain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    EverySlot,
    FreezeOnBusy,
}

impl From<Clock> for BackoffClock {
    fn from(c: Clock) -> Self {
        match c {
            Clock::EverySlot => BackoffClock::EverySlot,
            Clock::FreezeOnBusy => BackoffClock::FreezeOnBusy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Adaptive,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic sector utilization against station count.
    SweepUtilization {
        /// Largest station count; the sweep covers 1..=N.
        #[arg(long, default_value_t = 50, conflicts_with = "n")]
        max_n: usize,
        /// Explicit station counts.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
    /// Adaptive against fixed sectors over seeded layouts.
    Compare {
        #[arg(long, value_delimiter = ',')]
        n_sweep: Option<Vec<usize>>,
        /// Number of seeds, starting at --seed-start.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed_start: u64,
        /// Also write mean ± std aggregates as JSON to this path.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Widest transmit beam that closes the link.
    LinkBudget {
        #[arg(long, value_delimiter = ',')]
        mcs: Option<Vec<String>>,
        /// Distances in metres.
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        /// Receive beamwidths in degrees.
        #[arg(long, value_delimiter = ',')]
        rx: Option<Vec<f64>>,
    },
    /// Minimum contention period for a sector.
    CbapTime {
        /// Frames to deliver.
        #[arg(long)]
        requests: usize,
        /// Contending stations; defaults to the request count.
        #[arg(long)]
        stations: Option<usize>,
    },
    /// Sector plan for a scenario.
    Allocate {
        #[command(flatten)]
        source: ScenarioSource,
        #[arg(long, value_enum, default_value_t = Kind::Adaptive)]
        kind: Kind,
        /// Fixed sector width in degrees.
        #[arg(long)]
        width: Option<f64>,
    },
    /// Slot-level simulation of one sector or of a sector plan.
    Simulate {
        /// Stations in a single sector.
        #[arg(long, conflicts_with = "plan")]
        n: Option<usize>,
        /// Plan JSON; each sector is simulated independently.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, conflicts_with = "successes")]
        slots: Option<u64>,
        /// Stop after this many deliveries instead of a slot budget.
        #[arg(long)]
        successes: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Clock::EverySlot)]
        clock: Clock,
    },
    /// Seeded station layout as JSON.
    GenScenario {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed form, numeric chain and simulator side by side.
    Validate {
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50")]
        n: Vec<usize>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, value_enum)]
        clock: Option<Clock>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct ScenarioSource {
    /// Scenario JSON; otherwise one is generated from the config geometry.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, conflicts_with = "scenario")]
    n: Option<usize>,
    #[arg(long, conflicts_with = "scenario")]
    seed: Option<u64>,
}

/// Error carrying the process exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(
                Error::SolverFailure { .. } | Error::UndefinedConditional(_) | Error::Infeasible(_),
            ) => 1,
            _ => 2,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            // Skip causes already spelled out by the message above them.
            let mut msg = String::new();
            for cause in f.error.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::table1(),
    };
    if let Some(m) = cli.method {
        cfg.method = m.into();
    }
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let mut cfg = load_config(&cli)?;
    let mut out = open_output(cli.out.as_deref())?;
    let mut status = 0;

    match cli.command {
        Command::SweepUtilization { max_n, n } => {
            let ns = n.unwrap_or_else(|| (1..=max_n).collect());
            let rows = run_utilization_sweep(&ns, &cfg)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["n", "utilization"])?;
            for row in rows {
                let value = match row.utilization {
                    Ok(u) => format_sig9(u),
                    Err(e) => {
                        eprintln!("n = {}: {e}", row.n);
                        status = 1;
                        String::new()
                    }
                };
                w.write_record([row.n.to_string(), value])?;
            }
            w.flush()?;
        }

        Command::Compare {
            n_sweep,
            seeds,
            seed_start,
            summary,
            format,
        } => {
            if let Some(ns) = n_sweep {
                cfg.n_sweep = ns;
            }
            if let Some(count) = seeds {
                cfg.seeds = SeedSpec::Count {
                    count,
                    start: seed_start,
                };
            }
            let report = run_comparison(&cfg)?;
            for f in &report.failures {
                eprintln!("n = {}, seed = {}: {}", f.n, f.seed, f.error);
            }
            if format == Format::Json {
                write_json(&mut out, &report)?;
            } else {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(["n", "seed", "u_adaptive", "u_fixed", "t_adaptive_us", "t_fixed_us"])?;
                for r in &report.rows {
                    w.write_record([
                        r.n.to_string(),
                        r.seed.to_string(),
                        format_sig9(r.adaptive.utilization),
                        format_sig9(r.fixed.utilization),
                        format_sig9(r.adaptive.t_cbap * 1e6),
                        format_sig9(r.fixed.t_cbap * 1e6),
                    ])?;
                }
                w.flush()?;
            }
            for a in &report.aggregates {
                eprintln!(
                    "n = {:>3}  runs {:>4} (failed {})  U adaptive {:.4} ± {:.4}  fixed {:.4} ± {:.4}  uplift {:+.1}%  T reduction {:+.1}%",
                    a.n,
                    a.runs,
                    a.failures,
                    a.u_adaptive.mean,
                    a.u_adaptive.std,
                    a.u_fixed.mean,
                    a.u_fixed.std,
                    100.0 * a.uplift.mean,
                    100.0 * a.reduction.mean
                );
            }
            if let Some(path) = summary {
                let mut s = open_output(Some(&path))?;
                write_json(&mut s, &report.aggregates)?;
                s.flush()?;
            }
        }

        Command::LinkBudget { mcs, d, rx } => {
            let mcs = mcs.unwrap_or_else(|| cfg.link_budget.mcs.clone());
            let d = d.unwrap_or_else(|| cfg.link_budget.distances_m.clone());
            let rx = rx.unwrap_or_else(|| cfg.link_budget.rx_bw_deg.clone());
            let report = run_linkbudget_curves(&cfg, &mcs, &d, &rx)?;
            for m in &report.skipped_mcs {
                eprintln!("skipping {m}: no sensitivity configured");
            }
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["mcs", "d_m", "rx_bw_deg", "tx_bw_deg", "omni"])?;
            for r in &report.rows {
                w.write_record([
                    r.mcs.clone(),
                    format_sig9(r.d_m),
                    format_sig9(r.rx_bw_deg),
                    opt(r.tx_bw_deg),
                    r.omni.to_string(),
                ])?;
            }
            w.flush()?;
        }

        Command::CbapTime { requests, stations } => {
            let n = stations.unwrap_or(requests);
            let (est, t_us) = cbap_time_us(requests, n, &cfg)?;
            let value = serde_json::json!({
                "requests": requests,
                "stations": n,
                "method": cfg.method,
                "n_id": est.n_id,
                "n_b_min": est.n_b_min,
                "t_b_us": est.t_b * 1e6,
                "t_cbap_us": t_us,
            });
            write_json(&mut out, &value)?;
        }

        Command::Allocate { source, kind, width } => {
            let scenario = match &source.scenario {
                Some(path) => load_scenario(path)?,
                None => {
                    let n = source.n.unwrap_or(cfg.geometry.n);
                    let seed = source.seed.unwrap_or(cfg.geometry.seed);
                    generate_scenario(&cfg.geometry_for(n, seed))?
                }
            };
            let plan = match kind {
                Kind::Adaptive => {
                    let slots = cfg.slot_durations()?;
                    let curve = UtilizationCurve::new(scenario.len(), &cfg.mac, &slots, cfg.method)?;
                    allocate_adaptive_with(&scenario, &cfg.allocator()?, |k| {
                        curve
                            .get(k)
                            .ok_or_else(|| Error::InvalidParameter(format!("no utilization for {k} stations")))
                    })?
                }
                Kind::Fixed => allocate_fixed(&scenario, width.map_or(cfg.fixed_width(), f64::to_radians))?,
            };
            plan.check(&scenario)?;
            if !plan.uncovered.is_empty() {
                eprintln!("{} station(s) left without a sector", plan.uncovered.len());
            }
            write_json(&mut out, &plan)?;
        }

        Command::Simulate {
            n,
            plan,
            slots,
            successes,
            seed,
            clock,
        } => {
            let stop = match (slots, successes) {
                (_, Some(s)) => StopRule::Successes(s),
                (Some(s), None) => StopRule::Slots(s),
                (None, None) => StopRule::Slots(1_000_000),
            };
            let sim = SlotSimulator::new(cfg.mac, cfg.slot_durations()?).with_clock(clock.into());
            match (n, plan) {
                (Some(n), None) => write_json(&mut out, &sim.sector(n, stop, seed))?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let plan: SectorPlan =
                        serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?;
                    write_json(&mut out, &sim.plan(&plan, stop, seed))?;
                }
                _ => bail_input("simulate needs --n or --plan")?,
            }
        }

        Command::GenScenario { n, seed } => {
            let n = n.unwrap_or(cfg.geometry.n);
            let seed = seed.unwrap_or(cfg.geometry.seed);
            let scenario = generate_scenario(&cfg.geometry_for(n, seed))?;
            writeln!(out, "{}", to_json(&scenario))?;
        }

        Command::Validate {
            n,
            slots,
            seeds,
            clock,
            format,
        } => {
            if let Some(s) = slots {
                cfg.validation.slots_per_seed = s;
            }
            if let Some(s) = seeds {
                cfg.validation.seeds = s;
            }
            if let Some(c) = clock {
                cfg.validation.clock = c.into();
            }
            let report = validate(&cfg, &n)?;
            if format == Format::Json {
                write_json(&mut out, &report)?;
            } else {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record([
                    "n", "p_closed", "tau_closed", "u_closed", "p_chain", "tau_chain", "u_chain", "p_sim", "p_sim_se",
                    "tau_sim", "tau_sim_se", "u_sim", "u_sim_se", "p_z", "tau_z", "u_rel", "pass",
                ])?;
                for r in &report.rows {
                    let mut rec = vec![r.n.to_string()];
                    rec.extend(
                        [
                            r.closed_form.p,
                            r.closed_form.tau,
                            r.closed_form.utilization,
                            r.chain.p,
                            r.chain.tau,
                            r.chain.utilization,
                            r.sim.p,
                            r.sim.p_se,
                            r.sim.tau,
                            r.sim.tau_se,
                            r.sim.utilization,
                            r.sim.utilization_se,
                            r.p_z,
                            r.tau_z,
                            r.utilization_rel,
                        ]
                        .map(format_sig9),
                    );
                    rec.push(r.pass.to_string());
                    w.write_record(&rec)?;
                }
                w.flush()?;
            }
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            if !report.passed() {
                eprintln!("validation failed: simulator and numeric chain disagree beyond tolerance");
                status = 1;
            }
        }
    }
    out.flush().map_err(anyhow::Error::from)?;
    Ok(status)
}

fn bail_input(msg: &str) -> Result<(), Failure> {
    Err(Failure {
        code: 2,
        error: anyhow::anyhow!("{msg}"),
    })
}
