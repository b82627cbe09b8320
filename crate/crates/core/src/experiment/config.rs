//! Experiment configuration file.
//!
//! The file is JSON in user-facing units (microseconds, degrees, dBm).
//! `"defaults": "table1"` fills every omitted field from the built-in
//! evaluation parameters; without it the file must be complete.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::allocator::AllocatorConfig;
use crate::analytics::SolverMethod;
use crate::error::{invalid, Error, Result};
use crate::link_budget::PhyEnv;
use crate::model::{slot_durations, MacParams, SlotDurations, TimingParams, MICROSECOND};
use crate::scenario::GeometryConfig;
use crate::sim::BackoffClock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub sifs_us: f64,
    pub difs_us: f64,
    pub cca_detect_us: f64,
    pub rifs_us: f64,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_bytes: u32,
    pub data_bytes: u32,
    pub control_rate_bps: f64,
    pub data_rate_bps: f64,
    /// Omitted or null: one CTS airtime.
    #[serde(default)]
    pub timeout_us: Option<f64>,
}

impl TimingConfig {
    pub fn to_params(&self) -> TimingParams {
        TimingParams {
            sifs: self.sifs_us * MICROSECOND,
            difs: self.difs_us * MICROSECOND,
            cca_detect: self.cca_detect_us * MICROSECOND,
            rifs: self.rifs_us * MICROSECOND,
            rts_bytes: self.rts_bytes,
            cts_bytes: self.cts_bytes,
            ack_bytes: self.ack_bytes,
            data_bytes: self.data_bytes,
            control_rate: self.control_rate_bps,
            data_rate: self.data_rate_bps,
            timeout: self.timeout_us.map(|t| t * MICROSECOND),
        }
    }

    fn table1() -> Self {
        let t = TimingParams::TABLE1;
        TimingConfig {
            sifs_us: 2.5,
            difs_us: 13.5,
            cca_detect_us: 4.0,
            rifs_us: 9.0,
            rts_bytes: t.rts_bytes,
            cts_bytes: t.cts_bytes,
            ack_bytes: t.ack_bytes,
            data_bytes: t.data_bytes,
            control_rate_bps: t.control_rate,
            data_rate_bps: t.data_rate,
            timeout_us: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    pub path_loss_exp: f64,
    pub fading_db: f64,
    pub link_margin_db: f64,
    pub sensitivities_dbm: BTreeMap<String, f64>,
    #[serde(default)]
    pub beam_floor_deg: f64,
}

impl EnvConfig {
    pub fn to_env(&self) -> PhyEnv {
        PhyEnv {
            tx_power_dbm: self.tx_power_dbm,
            frequency_hz: self.frequency_hz,
            path_loss_exp: self.path_loss_exp,
            fading_db: self.fading_db,
            link_margin_db: self.link_margin_db,
            sensitivities: self.sensitivities_dbm.clone(),
            beam_floor: self.beam_floor_deg.to_radians(),
        }
    }

    fn table1() -> Self {
        let e = PhyEnv::table1();
        EnvConfig {
            tx_power_dbm: e.tx_power_dbm,
            frequency_hz: e.frequency_hz,
            path_loss_exp: e.path_loss_exp,
            fading_db: e.fading_db,
            link_margin_db: e.link_margin_db,
            sensitivities_dbm: e.sensitivities,
            beam_floor_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFileConfig {
    pub n: usize,
    pub radius_m: f64,
    pub dist_min_m: f64,
    pub angle_mean_deg: f64,
    pub angle_std_deg: f64,
    pub seed: u64,
}

impl GeometryFileConfig {
    pub fn to_geometry(&self) -> GeometryConfig {
        GeometryConfig {
            n: self.n,
            radius: self.radius_m,
            dist_min: self.dist_min_m,
            angle_mean: self.angle_mean_deg.to_radians(),
            angle_std: self.angle_std_deg.to_radians(),
            seed: self.seed,
        }
    }
}

/// Derive `omega_max` from the link budget instead of taking it verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetBound {
    pub distance_m: f64,
    pub rx_bw_deg: f64,
    pub mcs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocatorFileConfig {
    pub omega_min_deg: f64,
    pub delta_omega_deg: f64,
    pub omega_max_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max_from_link_budget: Option<LinkBudgetBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Count {
        count: usize,
        #[serde(default)]
        start: u64,
    },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Count { count, start } => (*start..*start + *count as u64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub slots_per_seed: u64,
    pub seeds: usize,
    pub seed: u64,
    pub clock: BackoffClock,
    /// Allowed distance between simulated and chain p / tau, in standard
    /// errors of the simulated mean.
    pub sigma: f64,
    /// Allowed relative gap between simulated and chain utilization.
    pub utilization_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetSweepConfig {
    pub mcs: Vec<String>,
    pub distances_m: Vec<f64>,
    pub rx_bw_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mac: MacParams,
    pub timing: TimingConfig,
    pub env: EnvConfig,
    pub geometry: GeometryFileConfig,
    pub allocator: AllocatorFileConfig,
    pub fixed_width_deg: f64,
    pub seeds: SeedSpec,
    pub method: SolverMethod,
    pub n_sweep: Vec<usize>,
    pub validation: ValidationConfig,
    pub link_budget: LinkBudgetSweepConfig,
}

impl ExperimentConfig {
    /// Evaluation defaults: the reference MAC, timing and PHY parameters and
    /// the conference-room layout.
    pub fn table1() -> Self {
        ExperimentConfig {
            mac: MacParams::TABLE1,
            timing: TimingConfig::table1(),
            env: EnvConfig::table1(),
            geometry: GeometryFileConfig {
                n: 50,
                radius_m: 10.0,
                dist_min_m: 1.0,
                angle_mean_deg: 180.0,
                angle_std_deg: 90.0,
                seed: 1,
            },
            allocator: AllocatorFileConfig {
                omega_min_deg: 20.0,
                delta_omega_deg: 20.0,
                omega_max_deg: 90.0,
                omega_max_from_link_budget: None,
            },
            fixed_width_deg: 90.0,
            seeds: SeedSpec::Count { count: 200, start: 0 },
            method: SolverMethod::NumericChain,
            n_sweep: vec![10, 20, 30, 40, 50],
            validation: ValidationConfig {
                slots_per_seed: 1_000_000,
                seeds: 20,
                seed: 2024,
                clock: BackoffClock::EverySlot,
                sigma: 3.0,
                utilization_rel_tol: 0.05,
            },
            link_budget: LinkBudgetSweepConfig {
                mcs: vec!["MCS0".into(), "MCS4".into()],
                distances_m: vec![5.0, 10.0, 15.0],
                rx_bw_deg: (1..=12).map(|k| 10.0 * k as f64).collect(),
            },
        }
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        };
        let mut value: Value = serde_json::from_str(text).map_err(parse_err)?;
        let Value::Object(obj) = &mut value else {
            return Err(invalid("config must be a JSON object"));
        };
        let merged = match obj.remove("defaults") {
            None => value,
            Some(Value::String(name)) if name == "table1" => {
                let mut base = serde_json::to_value(Self::table1()).expect("defaults serialise");
                merge(&mut base, value);
                base
            }
            Some(other) => return Err(invalid(format!("unknown defaults {other}"))),
        };
        let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.mac.validate()?;
        self.timing.to_params().validate()?;
        self.env.to_env().validate()?;
        self.geometry.to_geometry().validate()?;
        self.allocator()?;
        if !(self.fixed_width_deg > 0.0 && self.fixed_width_deg <= 360.0) {
            return Err(invalid(format!("fixed width {}° outside (0, 360]", self.fixed_width_deg)));
        }
        if self.validation.seeds < 2 {
            return Err(invalid("validation needs at least two seeds for a standard error"));
        }
        Ok(())
    }

    pub fn slot_durations(&self) -> Result<SlotDurations> {
        slot_durations(&self.timing.to_params())
    }

    pub fn phy_env(&self) -> PhyEnv {
        self.env.to_env()
    }

    /// Geometry for `n` stations drawn with `seed`.
    pub fn geometry_for(&self, n: usize, seed: u64) -> GeometryConfig {
        GeometryConfig {
            n,
            seed,
            ..self.geometry.to_geometry()
        }
    }

    pub fn allocator(&self) -> Result<AllocatorConfig> {
        let a = &self.allocator;
        let cfg = AllocatorConfig {
            omega_min: a.omega_min_deg.to_radians(),
            delta_omega: a.delta_omega_deg.to_radians(),
            omega_max: a.omega_max_deg.to_radians(),
        };
        cfg.validate()?;
        match &a.omega_max_from_link_budget {
            None => Ok(cfg),
            Some(b) => cfg.with_link_budget_max(b.distance_m, b.rx_bw_deg.to_radians(), &b.mcs, &self.phy_env()),
        }
    }

    pub fn fixed_width(&self) -> f64 {
        self.fixed_width_deg.to_radians()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.seeds()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::table1()
    }
}

/// Overlays `patch` onto `base`; objects merge key by key, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => merge_objects(b, p),
        (b, p) => *b = p,
    }
}

fn merge_objects(base: &mut Map<String, Value>, patch: Map<String, Value>) {
    for (k, v) in patch {
        match base.get_mut(&k) {
            Some(slot) => merge(slot, v),
            None => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_round_trips() {
        let cfg = ExperimentConfig::table1();
        let back = ExperimentConfig::from_json_str(&cfg.to_json(), Path::new("t.json")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn defaults_shorthand_with_overrides() {
        let text = r#"{"defaults": "table1", "mac": {"w0": 16}, "seeds": [3, 5], "method": "paper-closed-form"}"#;
        let cfg = ExperimentConfig::from_json_str(text, Path::new("c.json")).unwrap();
        assert_eq!(cfg.mac, MacParams { w0: 16, m: 3, h: 5 });
        assert_eq!(cfg.seed_list(), vec![3, 5]);
        assert_eq!(cfg.method, SolverMethod::PaperClosedForm);
        assert_eq!(cfg.timing, TimingConfig::table1());
    }

    #[test]
    fn incomplete_file_without_defaults_is_rejected() {
        let err = ExperimentConfig::from_json_str(r#"{"mac": {"w0": 8, "m": 3, "h": 5}}"#, Path::new("c.json"));
        assert!(matches!(err, Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_fields_and_defaults_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"defaults": "table1", "mack": {}}"#, Path::new("c")).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"defaults": "table2"}"#, Path::new("c")).is_err());
    }

    #[test]
    fn table1_timing_matches_model_defaults() {
        let cfg = ExperimentConfig::table1();
        assert_eq!(cfg.slot_durations().unwrap(), SlotDurations::table1());
        assert_eq!(cfg.phy_env(), PhyEnv::table1());
        assert_eq!(cfg.allocator().unwrap(), AllocatorConfig::evaluation_defaults());
        assert_eq!(cfg.seed_list().len(), 200);
    }

    #[test]
    fn omega_max_from_link_budget() {
        let text = r#"{"defaults": "table1", "allocator": {"omega_max_from_link_budget":
            {"distance_m": 5, "rx_bw_deg": 60, "mcs": "MCS0"}}}"#;
        let cfg = ExperimentConfig::from_json_str(text, Path::new("c")).unwrap();
        assert!((cfg.allocator().unwrap().omega_max.to_degrees() - 54.5).abs() < 0.5);
    }
}
