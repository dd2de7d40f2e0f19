//! End-to-end tests of the `netslice` binary on small workloads.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netslice"))
}

fn desk() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk.toml")
}

fn exec(cmd: &mut Command) -> Output {
    cmd.env_remove("NETSLICE_MILP_SOLVER").output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Runs the desk scenario with a short stream into `out`.
fn small_run(out: &Path, extra: &[&str]) -> Output {
    exec(
        bin()
            .args(["run", "--scenario"])
            .arg(desk())
            .args(["--max-requests", "8", "--out"])
            .arg(out)
            .args(extra),
    )
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn run_writes_artifacts_with_class_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for name in ["decisions.csv", "assignments.csv", "utilization.csv", "metrics_summary.csv", "timing.csv"] {
        let body = read(dir.path(), name);
        assert!(body.starts_with("#schema="), "{name} lacks a schema line");
    }
    let decisions = read(dir.path(), "decisions.csv");
    assert_eq!(decisions.lines().count(), 2 + 8, "schema, header and one row per request");
    let summary = read(dir.path(), "metrics_summary.csv");
    for class in ["premium", "standard", "all"] {
        assert!(
            summary.lines().skip(2).any(|l| l.split(',').any(|f| f == class)),
            "no {class} row in\n{summary}"
        );
    }
}

#[test]
fn policy_overrides_show_in_the_label() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--alpha", "0", "--delta-p", "0"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let decisions = read(dir.path(), "decisions.csv");
    let row = decisions.lines().nth(2).unwrap();
    assert!(row.starts_with("desk-alpha0-dp0,"), "{row}");
    assert!(text(&out.stdout).starts_with("desk-alpha0-dp0 "));
}

#[test]
fn missing_topology_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = fs::read_to_string(desk())
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("[topology]") && !l.starts_with("builtin"))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.path().join("broken.toml");
    fs::write(&path, body).unwrap();
    let out = exec(bin().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("`topology`"), "{}", text(&out.stderr));
}

#[test]
fn validate_accepts_untouched_logs_and_flags_edits() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = small_run(&run_dir, &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));

    let validate = |seed: &str, target: &Path| {
        exec(
            bin()
                .args(["validate", "--scenario"])
                .arg(desk())
                .args(["--max-requests", "8", "--seed", seed, "--run"])
                .arg(target),
        )
    };
    let clean = validate("1", &run_dir);
    assert!(clean.status.success(), "{}{}", text(&clean.stdout), text(&clean.stderr));
    assert!(text(&clean.stdout).contains("no violations"));

    // another seed produces a different workload
    let wrong = validate("2", &run_dir);
    assert_eq!(wrong.status.code(), Some(1));
    assert!(text(&wrong.stderr).contains("does not match"), "{}", text(&wrong.stderr));

    // inflate one committed instance count
    let edited = dir.path().join("edited");
    fs::create_dir(&edited).unwrap();
    for name in ["decisions.csv", "assignments.csv"] {
        fs::copy(run_dir.join(name), edited.join(name)).unwrap();
    }
    let body = read(&edited, "assignments.csv");
    let mut lines: Vec<String> = body.lines().map(String::from).collect();
    assert!(lines.len() > 2, "no granted request in the short run");
    let row = lines
        .iter()
        .position(|l| l.contains(",vnf,"))
        .expect("a VNF assignment row");
    let mut fields: Vec<String> = lines[row].split(',').map(String::from).collect();
    let request = fields[0].clone();
    let last = fields.len() - 1;
    fields[last] = (fields[last].parse::<u32>().unwrap() + 500).to_string();
    lines[row] = fields.join(",");
    fs::write(edited.join("assignments.csv"), lines.join("\n") + "\n").unwrap();
    let bad = validate("1", &edited);
    assert_eq!(bad.status.code(), Some(1));
    let report = text(&bad.stdout);
    assert!(report.contains(&format!("request {request}: ")), "{report}");
    assert!(report.contains(&format!("_s{request}")), "{report}");
}

#[test]
fn compare_member_matches_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        format!(
            "scenario = {:?}\nseeds = [3]\nvariants = [\"jpr\"]\n\n[[cells]]\nlabel = \"same\"\nmax_requests = 8\n",
            desk().display().to_string()
        ),
    )
    .unwrap();
    let cmp_out = dir.path().join("cmp");
    let out = exec(bin().args(["compare", "--grid"]).arg(&grid).arg("--out").arg(&cmp_out));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let compare = read(&cmp_out, "compare.csv");
    assert!(compare.contains("same,jpr,premium_acceptance,1,"), "{compare}");

    let run_out = dir.path().join("run");
    let out = small_run(&run_out, &["--label", "same", "--seed", "3", "--variant", "jpr"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let member = cmp_out.join("same/jpr/seed-3");
    for name in ["decisions.csv", "assignments.csv", "utilization.csv", "metrics_summary.csv"] {
        assert_eq!(read(&member, name), read(&run_out, name), "{name} differs");
    }
}

#[cfg(unix)]
#[test]
fn external_backend_runs_the_configured_binary() {
    use std::os::unix::fs::PermissionsExt;

    let dir = tempfile::tempdir().unwrap();
    // a solver that declares every model infeasible
    let script = dir.path().join("fake-solver");
    fs::write(
        &script,
        "#!/bin/sh\nfor a in \"$@\"; do last=\"$a\"; done\necho \"Infeasible - objective value 0\" > \"$last\"\n",
    )
    .unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();

    let missing = small_run(&dir.path().join("a"), &["--solver", "external"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).contains("NETSLICE_MILP_SOLVER"));

    let out = bin()
        .args(["run", "--scenario"])
        .arg(desk())
        .args(["--max-requests", "8", "--solver", "external", "--out"])
        .arg(dir.path().join("b"))
        .env("NETSLICE_MILP_SOLVER", &script)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("premium 0/"), "{}", text(&out.stdout));
    assert!(text(&out.stdout).contains("standard 0/"));
}
