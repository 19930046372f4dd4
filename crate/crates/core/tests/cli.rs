use std::path::Path;
use std::process::{Command, Output};
use uavran::routing::precedence_respected;
use uavran::Scenario;

fn uavran(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavran")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = uavran(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["generate", "--out", s(&path)];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.toml", &["--seed", "5", "--n-users", "6"]);
    let b = generate(dir.path(), "b.toml", &["--seed", "5", "--n-users", "6"]);
    let c = generate(dir.path(), "c.toml", &["--seed", "6", "--n-users", "6"]);
    let read = |p| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let scn = Scenario::load(&a).unwrap();
    assert_eq!(scn.group_counts(), (0, 0, 3));
    let mixed = generate(dir.path(), "m.toml", &["--n-users", "5", "--uplink", "1", "--downlink", "2", "--pairs", "1"]);
    assert_eq!(Scenario::load(mixed).unwrap().group_counts(), (1, 2, 1));
    let bad = uavran(&["generate", "--n-users", "5", "--pairs", "1", "--out", s(&dir.path().join("x.toml"))]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn init_only_pdp_keeps_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let scn_path = generate(dir.path(), "s.toml", &["--seed", "2", "--n-users", "8", "--throughput-bits", "3e8"]);
    let out = dir.path().join("init");
    ok(&["init-only", "--scenario", s(&scn_path), "--mode", "onetime", "--init", "pdp", "--time", "300", "--out", s(&out)]);
    let plan: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["command"], "init-only");
    assert_eq!(plan["n_slots"], 300);
    let scn = Scenario::load(&scn_path).unwrap();
    let ids: Vec<u32> = plan["tour"]["order_user_ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
    let order: Vec<usize> =
        ids.iter().map(|id| (0..scn.n_flows()).find(|&f| scn.user_id_of_flow(f) == *id).unwrap()).collect();
    assert!(precedence_respected(&scn, &order));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.starts_with("n,t_seconds,x_m,y_m,alpha_1,alpha_2,alpha_3,alpha_4,beta_1"));
}

#[test]
fn plan_audit_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let scn_path = generate(dir.path(), "s.toml", &["--seed", "3", "--n-users", "2", "--box-side", "800", "--throughput-bits", "1e9"]);
    let out = dir.path().join("plan");
    let run = ok(&["plan-onetime", "--scenario", s(&scn_path), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stdout).contains("audit PASS"));
    let first = std::fs::read(out.join("plan.json")).unwrap();
    let plan: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(plan["audit_passed"], true);
    assert!(plan["eta"].as_f64().unwrap() >= 1.0);

    let again = dir.path().join("plan2");
    ok(&["plan-onetime", "--scenario", s(&scn_path), "--out", s(&again)]);
    assert_eq!(first, std::fs::read(again.join("plan.json")).unwrap());
    assert_eq!(std::fs::read(out.join("trajectory.csv")).unwrap(), std::fs::read(again.join("trajectory.csv")).unwrap());

    let audit = uavran(&["audit", "--scenario", s(&scn_path), "--plan", s(&out)]);
    assert_eq!(audit.status.code(), Some(0));

    // Teleport the UAV in the third slot.
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[2] = (cells[2].parse::<f64>().unwrap() + 500.0).to_string();
    lines[3] = cells.join(",");
    std::fs::write(out.join("trajectory.csv"), lines.join("\n") + "\n").unwrap();
    let audit = uavran(&["audit", "--scenario", s(&scn_path), "--plan", s(&out)]);
    assert_eq!(audit.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&audit.stdout).contains("FAIL"));
}

#[test]
fn single_user_periodic_plan() {
    let dir = tempfile::tempdir().unwrap();
    let scn_path = generate(dir.path(), "s.toml", &["--n-users", "1", "--rate-bps", "1e6"]);
    let out = dir.path().join("plan");
    ok(&["plan-periodic", "--scenario", s(&scn_path), "--out", s(&out)]);
    let plan: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["t_star"], 2.0);
    assert_eq!(plan["mode"], "periodic");
    assert!(std::fs::read_to_string(out.join("audit.txt")).unwrap().contains("PASS"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = uavran(&["plan-periodic", "--scenario", s(&dir.path().join("none.toml")), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error[io]"));

    let junk = dir.path().join("junk.toml");
    std::fs::write(&junk, "[radio\n").unwrap();
    let parse = uavran(&["plan-periodic", "--scenario", s(&junk), "--out", s(&out)]);
    assert_eq!(parse.status.code(), Some(2));

    let good = generate(dir.path(), "g.toml", &["--n-users", "2"]);
    let scheme = uavran(&["plan-periodic", "--scenario", s(&good), "--init", "spiral", "--out", s(&out)]);
    assert_eq!(scheme.status.code(), Some(3));

    let heavy = generate(dir.path(), "h.toml", &["--n-users", "2", "--rate-bps", "9e7"]);
    let infeasible = uavran(&["plan-periodic", "--scenario", s(&heavy), "--out", s(&out)]);
    assert_eq!(infeasible.status.code(), Some(4));
}
