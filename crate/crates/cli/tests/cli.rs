use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acopf_core::case_io::parse_dat;
use acopf_core::export::{export_point, import_json};
use acopf_core::ir::FormKind;
use acopf_core::transforms::{lift_point, VoltagePoint};
use num_complex::Complex64;

fn case5() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/case5.dat")
}

fn acopf(args: &[&str], case: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acopf")).args(args).arg(case).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn parse_prints_summary() {
    let o = acopf(&["parse"], &case5());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "5 buses, 6 lines, 5 generators, reference bus 4");

    let m = case5().with_extension("m");
    assert_eq!(stdout(&acopf(&["parse"], &m)).trim(), "5 buses, 6 lines, 5 generators, reference bus 4");
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.dat");
    let o = acopf(&["parse"], &missing);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.dat");
    std::fs::write(&bad, "param : B : busType :=\n 1 1 ;\n").unwrap();
    assert_eq!(acopf(&["parse"], &bad).status.code(), Some(2));

    assert_eq!(acopf(&["build", "--form", "cubic"], &case5()).status.code(), Some(2));
    assert_eq!(acopf(&["export", "--form", "polar", "--sdpa"], &case5()).status.code(), Some(2));
}

const IDLE: &str = "param : B : busType SDR SDC VL VU :=
  1 3 0.0 0.0 0.9 1.1
  2 1 0.0 0.0 0.9 1.1 ;
set G[1] := 1 ;
param : SLR SLC SUR SUC :=
  1 1 0.0 -1.0 2.0 1.0 ;
param : L0 : status SU r x bb tau nu pdLB pdUB :=
  1 2 1 1 2.0 0.01 0.1 0.0 1.0 0.0 -0.5 0.5 ;
param C :=
  1 1 0 4.0
  1 1 1 20.0 ;
";

#[test]
fn check_flat_point_on_idle_grid() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("idle.dat");
    std::fs::write(&case, IDLE).unwrap();
    let g = parse_dat(IDLE).unwrap();
    let flat = VoltagePoint::Cartesian(vec![Complex64::new(1.0, 0.0); 2]);
    let p = lift_point(&g, FormKind::VoltageOnly, &flat, &[Complex64::new(0.0, 0.0)]);
    let point = dir.path().join("flat.json");
    std::fs::write(&point, export_point(&p)).unwrap();
    let pt = point.to_str().unwrap();

    let o = acopf(&["check", "--form", "voltage_only", "--point", pt, "--tol", "1e-6"], &case);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("objective 4.0"));

    let mut off = p.clone();
    off.set(acopf_core::builders::names::v_re(2), 1.2);
    std::fs::write(&point, export_point(&off)).unwrap();
    let o = acopf(&["check", "--form", "voltage_only", "--point", pt], &case);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violated voltageboundR"));

    // Point written for another model.
    let o = acopf(&["check", "--form", "jabr", "--point", pt], &case);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_reports_ordered_bounds() {
    let o = acopf(&["solve", "--lb", "--ub"], &case5());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let value = |row: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(row)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert!(value("lower") <= value("upper"));
    let gap: f64 = out.lines().find_map(|l| l.strip_prefix("gap ")).unwrap().parse().unwrap();
    assert!(gap >= 0.0);

    let only_lb = stdout(&acopf(&["solve", "--lb"], &case5()));
    assert!(only_lb.contains("lower") && !only_lb.contains("upper") && !only_lb.contains("gap"));
}

#[test]
fn build_and_export_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("jabr.json");
    let o = acopf(&["build", "--form", "jabr", "--out", json.to_str().unwrap()], &case5());
    assert_eq!(o.status.code(), Some(0));
    let f = import_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(f.kind, FormKind::Jabr);

    let o = acopf(&["export", "--form", "sdp_real", "--sdpa"], &case5());
    assert_eq!(o.status.code(), Some(0));
    let body: Vec<String> = stdout(&o).lines().filter(|l| !l.starts_with('*')).map(String::from).collect();
    assert_eq!(body[0], f_vars("sdp_real").to_string());
    assert!(body[2].split_whitespace().any(|d| d == "10"));
    assert!(body[2].split_whitespace().last().unwrap().starts_with('-'));
}

fn f_vars(kind: &str) -> usize {
    let o = acopf(&["build", "--form", kind], &case5());
    import_json(&stdout(&o)).unwrap().variables().len()
}
