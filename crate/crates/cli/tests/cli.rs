use std::path::Path;
use std::process::{Command, Output};

fn flexagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexagg"))
        .args(args)
        .env_remove("FLEXAGG_OUT")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quick_run(verb: &str, out: &Path) -> Output {
    flexagg(&[
        verb,
        "--scenario",
        "2",
        "--method",
        "crps",
        "--seeds",
        "1,2",
        "--cycles",
        "6",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_metrics_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = quick_run("run", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "metrics_per_lfe.csv",
        "metrics_aggregator.csv",
        "selection_masks.csv",
        "reward_curve.csv",
        "config.toml",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    assert!(!dir.path().join("cycles.csv").exists());
    let cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(cfg.contains("accuracy_mode = \"dynamic\""), "{cfg}");
    assert!(cfg.contains("seeds = [1, 2]"), "{cfg}");
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(quick_run("export", a.path()).status.success());
    assert!(quick_run("export", b.path()).status.success());
    for name in ["metrics_per_lfe.csv", "metrics_aggregator.csv", "selection_masks.csv", "reward_curve.csv", "cycles.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn export_writes_cycle_log() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quick_run("export", dir.path()).status.success());
    let log = std::fs::read_to_string(dir.path().join("cycles.csv")).unwrap();
    // Header comment, column names, then 2 seeds × 6 cycles × 12 LFEs.
    assert_eq!(log.lines().count(), 2 + 2 * 6 * 12);
}

#[test]
fn gen_fleet_writes_assets() {
    let dir = tempfile::tempdir().unwrap();
    let o = flexagg(&["gen-fleet", "--seeds", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fleet = std::fs::read_to_string(dir.path().join("fleet.csv")).unwrap();
    assert!(fleet.starts_with("# flexagg schema=1"));
    assert!(fleet.lines().count() > 12);
}

#[test]
fn compare_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = flexagg(&[
        "compare",
        "--methods",
        "crps,simple,all",
        "--scenario",
        "3",
        "--seeds",
        "1",
        "--cycles",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let mut lines = table.lines().skip(1);
    let head = lines.next().unwrap();
    assert!(head.starts_with("lfe_id,s3_crps_eur_per_mwh,s3_simple_eur_per_mwh,s3_all_eur_per_mwh"), "{head}");
    assert_eq!(lines.count(), 13);
}

#[test]
fn inconsistent_config_is_rejected_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "scenario_id = 3\naccuracy_mode = \"dynamic\"\ngrid_payment = \"simple\"\n").unwrap();
    let o = flexagg(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("accuracy_mode"), "{}", stderr(&o));

    std::fs::write(&path, "scenario_id = 3\naccuracy_mode = \"static\"\ngrid_payment = \"simple\"\n").unwrap();
    let o = flexagg(&["validate-config", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_overrides_and_methods_exit_one() {
    let o = flexagg(&["validate-config", "--set", "selection.tau_crps=1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tau_crps"), "{}", stderr(&o));
    let o = flexagg(&["validate-config", "--method", "vcg"]);
    assert_eq!(o.status.code(), Some(1));
    let o = flexagg(&["validate-config", "--set", "no_such_field=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_verb_exits_one() {
    assert_eq!(flexagg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(flexagg(&[]).status.code(), Some(1));
    assert_eq!(flexagg(&["--help"]).status.code(), Some(0));
}
