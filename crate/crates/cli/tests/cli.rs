use std::fs;
use std::process::{Command, Output};

fn lifespan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifespan")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = lifespan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn damping_eval_prints_one_number() {
    let text = stdout(&["damping", "eval", "--family", "constant", "--params", "c=1", "--what", "B0"]);
    let v: f64 = text.trim().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-12);
    let text = stdout(&["damping", "eval", "--family", "log-tower", "--params", "n=1", "--what", "B", "--t", "1"]);
    let v: f64 = text.trim().parse().unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-14);
}

#[test]
fn damping_check_lists_key_values() {
    let text = stdout(&["damping", "check", "--family", "power", "--params", "beta=-0.5", "--horizon", "100"]);
    assert!(text.lines().any(|l| l.trim_start().starts_with("not_overdamping: true")));
    assert!(text.lines().all(|l| l.contains(": ")));
}

#[test]
fn unknown_family_fails() {
    let out = lifespan(&["damping", "eval", "--family", "mystery", "--what", "b"]);
    assert!(!out.status.success());
}

#[test]
fn key_bound_reports_agreement() {
    let text = stdout(&["key-bound", "--delta", "1", "--C0", "1", "--R1", "1", "--theta", "0", "--p", "2"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let bound: f64 = row[0].parse().unwrap();
    assert!((bound - (1.0 / std::f64::consts::LN_2).exp()).abs() < 1e-9);
    assert_eq!(row[2], "ok");
}

#[test]
fn verify_cutoff_table() {
    let text = stdout(&["verify-cutoff", "--family", "constant", "--R", "10,100", "--p", "2"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "R,C1,C2,C3");
    assert_eq!(lines.len(), 3);
}

#[test]
fn solve_writes_record_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let snaps = dir.path().join("snaps");
    let text = stdout(&[
        "solve", "--family", "constant", "--p", "2", "--eps", "1", "--tmax", "20",
        "--snapshots", snaps.to_str().unwrap(), "--snapshot-every", "2",
    ]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "label,N,p,beta_or_params,eps,T_num,B_of_T,reason,peak_norm,steps");
    let row = lines.next().unwrap();
    assert!(row.contains(",threshold,"), "{row}");
    let files = fs::read_dir(&snaps).unwrap().count();
    assert!(files >= 3);
}

#[test]
fn scaled_solve_with_energies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("energy.csv");
    let text = stdout(&[
        "scaled-solve", "--family", "constant", "--p", "4", "--eps", "0.05", "--smax", "1", "--ds", "0.01",
        "--energies", path.to_str().unwrap(), "--cadence", "0.25",
    ]);
    assert!(text.lines().nth(1).unwrap().contains(",horizon,"));
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("s,E0,E1,E2,E3,E4,E5,alpha,dalpha,M,mean_f,mean_g,residual\n"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn heat_lower_bound_csv() {
    let text = stdout(&["heat-lower-bound", "--p", "2", "--N", "1", "--eps-list", "1,0.5", "--h", "0.2"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps,t_eps,T_heat,verdict");
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")), "{text}");
    let sup = stdout(&["heat-lower-bound", "--p", "4", "--N", "1", "--eps-list", "0.01"]);
    assert!(sup.lines().nth(1).unwrap().ends_with(",global"));
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let plan = dir.path().join("plan.txt");
    fs::write(
        &plan,
        format!(
            "family = constant\nparams = c=1\nN = 1\np = 2\neps_list = geometric:0.4:0.1:5\nsmax = 40\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    stdout(&["sweep", "--plan", plan.to_str().unwrap()]);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let text = stdout(&["fit", "--csv", out.to_str().unwrap(), "--model", "power"]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "model,slope,intercept,r_squared,predicted_slope,relative_error");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "power");
    let slope: f64 = row[1].parse().unwrap();
    assert!(slope < -1.0 && slope > -3.0, "{slope}");
}

#[test]
fn bad_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    fs::write(&plan, "family = constant\nN = 1\np = 2\neps_list = 0.1,0.2\n").unwrap();
    let out = lifespan(&["sweep", "--plan", plan.to_str().unwrap()]);
    assert!(!out.status.success());
}
