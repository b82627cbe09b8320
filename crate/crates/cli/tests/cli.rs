use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qo_cbap::allocator::SectorPlan;
use qo_cbap::analytics::{sector_utilization, SolverMethod};
use qo_cbap::experiment::format_sig9;
use qo_cbap::model::{MacParams, SlotDurations};
use qo_cbap::scenario::load_scenario;

fn qo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qo-cbap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sweep_single_row_matches_library() {
    let o = qo(&["sweep-utilization", "--n", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let u = sector_utilization(1, &MacParams::TABLE1, &SlotDurations::table1(), SolverMethod::NumericChain).unwrap();
    assert_eq!(stdout(&o), format!("n,utilization\n1,{}\n", format_sig9(u)));
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let a = qo(&["sweep-utilization", "--max-n", "12", "--method", "paper-closed-form"]);
    let b = qo(&["sweep-utilization", "--max-n", "12", "--method", "paper-closed-form"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rows = csv_rows(&stdout(&a));
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0], ["n", "utilization"]);
}

#[test]
fn compare_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    let summary = dir.path().join("agg.json");
    let args = [
        "compare",
        "--n-sweep",
        "1,12",
        "--seeds",
        "3",
        "--method",
        "paper-closed-form",
        "--out",
        out.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ];
    let o = qo(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read_to_string(&out).unwrap();
    let rows = csv_rows(&first);
    assert_eq!(rows[0], ["n", "seed", "u_adaptive", "u_fixed", "t_adaptive_us", "t_fixed_us"]);
    assert_eq!(rows.len(), 1 + 2 * 3);
    // One station: both plans have one occupied sector with the same cost.
    assert_eq!(rows[1][4], rows[1][5]);

    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(agg.as_array().unwrap().len(), 2);
    assert_eq!(agg[1]["runs"], 3);

    assert!(qo(&args).status.success());
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn link_budget_rows_and_skipped_mcs() {
    let o = qo(&["link-budget", "--mcs", "MCS0,MCS7", "--d", "5,10,15", "--rx", "60"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("MCS7"));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0], ["mcs", "d_m", "rx_bw_deg", "tx_bw_deg", "omni"]);
    assert_eq!(rows.len(), 4);
    let tx: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!((tx[0] - 54.5).abs() <= 0.5);
    assert!(tx.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn link_budget_flags_omni_rows() {
    let o = qo(&["link-budget", "--mcs", "MCS0", "--d", "1", "--rx", "10"]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[1][3], "360");
    assert_eq!(rows[1][4], "true");
}

#[test]
fn cbap_time_single_request() {
    let o = qo(&["cbap-time", "--requests", "1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["t_cbap_us"].as_f64().unwrap() - 69.08).abs() < 0.005);
    assert_eq!(v["n_id"], 4.0);
}

#[test]
fn scenario_allocate_simulate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.json");
    let plan_path = dir.path().join("p.json");
    let o = qo(&["gen-scenario", "--n", "25", "--seed", "9", "--out", scen.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scenario = load_scenario(&scen).unwrap();
    assert_eq!(scenario.len(), 25);

    let o = qo(&["allocate", "--scenario", scen.to_str().unwrap(), "--out", plan_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan: SectorPlan = serde_json::from_str(&fs::read_to_string(&plan_path).unwrap()).unwrap();
    plan.check(&scenario).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&plan_path).unwrap()).unwrap();
    assert_eq!(raw["kind"], "adaptive");
    assert!(raw["sectors"][0]["start_rad"].is_f64());
    assert!(raw["sectors"][0]["width_rad"].is_f64());

    let o = qo(&["allocate", "--scenario", scen.to_str().unwrap(), "--kind", "fixed", "--width", "90"]);
    let fixed: SectorPlan = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(fixed.q(), 4);

    let o = qo(&["simulate", "--plan", plan_path.to_str().unwrap(), "--slots", "5000", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats.as_array().unwrap().len(), plan.q());
    let again = qo(&["simulate", "--plan", plan_path.to_str().unwrap(), "--slots", "5000", "--seed", "3"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn simulate_single_sector() {
    let o = qo(&["simulate", "--n", "1", "--successes", "10", "--seed", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["success_slots"], 10);
    assert_eq!(v["collision_slots"], 0);
}

#[test]
fn validate_single_station_passes() {
    let o = qo(&["validate", "--n", "1", "--slots", "20000", "--seeds", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[1][0], "1");
    assert_eq!(rows[1][4], "0");
    assert_eq!(rows[1][7], "0");
    assert_eq!(rows[1].last().unwrap(), "true");
    assert!(stderr(&o).contains("1/37"));
}

#[test]
fn validate_exit_status_on_disagreement() {
    // Two contending stations: the simulated collision rate sits well above
    // the chain's once the standard error is small.
    let o = qo(&["validate", "--n", "2", "--slots", "1000000", "--seeds", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn config_file_with_defaults_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"defaults": "table1", "method": "numeric-chain", "mac": {"w0": 16}}"#).unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", cfg.to_str().unwrap(), "sweep-utilization", "--n", "3"];
        args.extend_from_slice(extra);
        stdout(&qo(&args))
    };
    let mac = MacParams { w0: 16, m: 3, h: 5 };
    let slots = SlotDurations::table1();
    let chain = sector_utilization(3, &mac, &slots, SolverMethod::NumericChain).unwrap();
    let closed = sector_utilization(3, &mac, &slots, SolverMethod::PaperClosedForm).unwrap();
    assert!(run(&[]).ends_with(&format!("3,{}\n", format_sig9(chain))));
    assert!(run(&["--method", "paper-closed-form"]).ends_with(&format!("3,{}\n", format_sig9(closed))));
}

#[test]
fn shipped_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.json");
    let o = qo(&["--config", path.to_str().unwrap(), "cbap-time", "--requests", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_input_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(qo(&["--config", missing.to_str().unwrap(), "cbap-time", "--requests", "1"]).status.code(), Some(2));

    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{"defaults": "table1", "mac": {"w_0": 8}}"#).unwrap();
    let o = qo(&["--config", typo.to_str().unwrap(), "cbap-time", "--requests", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"defaults\": \"table1\",\n  oops\n}").unwrap();
    let o = qo(&["--config", broken.to_str().unwrap(), "cbap-time", "--requests", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    assert_eq!(qo(&["compare", "--seeds", "many"]).status.code(), Some(2));
    assert_eq!(qo(&["simulate"]).status.code(), Some(2));
    assert_eq!(qo(&["allocate", "--kind", "fixed", "--width", "70"]).status.code(), Some(2));
}

#[test]
fn duplicate_station_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("dup.json");
    fs::write(
        &scen,
        r#"{"radius_m": 10, "stations": [{"id": 1, "distance_m": 2, "angle_rad": 0.1}, {"id": 1, "distance_m": 3, "angle_rad": 0.2}]}"#,
    )
    .unwrap();
    let o = qo(&["allocate", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate"));
}
