use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use atfbm_cli::manifest::{RunManifest, SCHEMA};

fn atfbm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atfbm")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pde_check_case_f_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = atfbm(&["pde-check", "case=f", "H=0.5", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS pde-f"));
    let csv = fs::read_to_string(dir.path().join("run/pde.csv")).unwrap();
    assert!(csv.starts_with("case,name,residual,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn tails_sup_slope_covers_minus_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = atfbm(&["tails", "mode=sup", "H=0.5", "alpha=1", "paths=200000", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let results: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/results.json")).unwrap()).unwrap();
    let ci = &results["summary"]["slope"]["ci"];
    assert!(ci[0].as_f64().unwrap() <= -2.0 && -2.0 <= ci[1].as_f64().unwrap());
}

#[test]
fn manifest_lists_every_output_with_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let o = atfbm(&["simulate", "paths=3", "steps=8", "dim=2", "--out", "run", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let run = dir.path().join("run");
    let m = RunManifest::read(&run).unwrap();
    assert_eq!(m.schema, SCHEMA);
    assert_eq!((m.command.as_str(), m.seed, m.exit_code), ("simulate", 5, 0));
    assert_eq!(m.config["params"]["dim"], 2);
    assert!(m.mismatches(&run).is_empty());
    let mut listed: Vec<&str> = m.outputs.iter().map(|d| d.file.as_str()).collect();
    listed.sort();
    assert_eq!(listed, ["paths.csv", "paths.svg", "results.json"]);
    let files = fs::read_dir(&run).unwrap().count();
    assert_eq!(files, listed.len() + 1, "no temporary files remain");
}

#[test]
fn failed_check_exits_one_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = atfbm(&["density", "t=1", "x_points=101", "mass_tol=1e-12", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL mass-t1"));
    let m = RunManifest::read(&dir.path().join("run")).unwrap();
    assert_eq!(m.exit_code, 1);
    assert!(!m.all_passed() && m.error.is_none());
}

#[test]
fn module_error_exits_two_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = atfbm(&["localtime", "mode=oscillation", "radii=1e-14,1e-13", "paths=10", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let m = RunManifest::read(&dir.path().join("run")).unwrap();
    assert_eq!(m.exit_code, 2);
    assert!(m.error.is_some() && m.checks.is_empty());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# tails run\nmode = sup\nalpha = 2.5\n").unwrap();
    let o = atfbm(&["tails", "--config", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("out of (0,2]"), "{err}");

    fs::write(dir.path().join("typo.cfg"), "mode = sup\npaht = 3\n").unwrap();
    let err = stderr(&atfbm(&["tails", "--config", "typo.cfg"], dir.path()));
    assert!(err.contains("line 2") && err.contains("paht"), "{err}");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.cfg"), "paths = 2\nsteps = 4\nseed = 3\nout = from_file\n").unwrap();
    let o = atfbm(&["simulate", "--config", "sim.cfg", "steps=8", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = RunManifest::read(&dir.path().join("from_file")).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.config["params"]["steps"], 8);
    let rows = fs::read_to_string(dir.path().join("from_file/paths.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 9);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for (out, workers) in [("a", "1"), ("b", "2")] {
        let o = atfbm(&["tails", "mode=constant", "paths=20000", "--out", out, "--workers", workers], dir.path());
        assert!(o.status.code().is_some());
    }
    for file in ["tail_constant.csv", "results.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap()
        );
    }
}

#[test]
fn report_reverifies_digests() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(atfbm(&["pde-check", "case=a", "--out", "runs/pde"], dir.path()).status.code(), Some(0));
    assert_eq!(atfbm(&["simulate", "paths=1", "steps=4", "--out", "runs/sim"], dir.path()).status.code(), Some(0));
    let o = atfbm(&["report", "root=runs", "--out", "runs/report"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 2);

    fs::write(dir.path().join("runs/sim/paths.csv"), "tampered\n").unwrap();
    let o = atfbm(&["report", "root=runs", "--out", "runs/report"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL sim"));
    let table = fs::read_to_string(dir.path().join("runs/report/report.csv")).unwrap();
    assert!(table.contains("sim,simulate,digests,fail"));
}

#[test]
fn help_documents_keys_and_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&atfbm(&["scaling-limit", "--help"], dir.path()));
    for needle in ["n_check", "[default: 100000]", "variance.csv: n,variance,ratio", "workers"] {
        assert!(help.contains(needle), "missing {needle}");
    }
}
