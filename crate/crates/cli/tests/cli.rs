use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn timebin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timebin"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

const QUICK_FRINGE: [&str; 9] = [
    "fringe", "--start", "15.0", "--stop", "15.6", "--step", "0.2", "--hours", "0.02",
];

#[test]
fn fringe_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&timebin(&QUICK_FRINGE, &a));
    ok(&timebin(&QUICK_FRINGE, &b));
    let ca = std::fs::read(a.join("fringe.csv")).unwrap();
    let cb = std::fs::read(b.join("fringe.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("temperature_C,phase_rad,window_counts,fit_value\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(a.join("manifest.json").exists());
}

#[test]
fn replay_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    ok(&timebin(&QUICK_FRINGE, &run));
    let replay_dir = dir.path().join("replay");
    let o = Command::new(env!("CARGO_BIN_EXE_timebin"))
        .arg("replay")
        .arg(run.join("manifest.json"))
        .arg("--out")
        .arg(&replay_dir)
        .output()
        .unwrap();
    ok(&o);
    assert_eq!(
        std::fs::read(run.join("fringe.csv")).unwrap(),
        std::fs::read(replay_dir.join("fringe.csv")).unwrap()
    );
}

#[test]
fn analytic_chsh_violates_bound() {
    let dir = TempDir::new().unwrap();
    let o = timebin(&["chsh", "--analytic"], dir.path());
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let s: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("S = "))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .expect("S line printed");
    assert!((s - 2.354).abs() < 0.01, "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("chsh_counts.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn plan_without_distances_is_header_only() {
    let dir = TempDir::new().unwrap();
    ok(&timebin(&["plan", "--distances"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert_eq!(
        csv,
        "distance_km,loss_db,rate_per_hour,duration_hours,duration_days\n"
    );
}

#[test]
fn plan_reports_reach() {
    let dir = TempDir::new().unwrap();
    let o = timebin(
        &["plan", "--distances", "300,400", "--min-visibility", "0.71"],
        dir.path(),
    );
    ok(&o);
    let table = std::fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    assert!(table.contains("max distance (V >= 0.71): 504."), "{table}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| timebin(args, dir.path()).status.code();
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["fringe", "--window-ps=-5", "--analytic"]), Some(3));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "duration_s = \"long\"\n").unwrap();
    assert_eq!(
        code(&["plan", "--scenario", bad.to_str().unwrap()]),
        Some(3)
    );

    let missing = dir.path().join("missing.toml");
    assert_eq!(
        code(&["plan", "--scenario", missing.to_str().unwrap()]),
        Some(5)
    );
}
