use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochgram"))
}

fn system(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("systems").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn field(csv_text: &str, name: &str, row: usize) -> String {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let at = header.iter().position(|h| *h == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(at).unwrap().to_string()
}

#[test]
fn validate_exit_codes() {
    let ok = run(&["validate", system("shear.json").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad_q = write_temp(
        &dir,
        "bad_q.json",
        r#"{"kind":"ltv","n":1,"p":1,"N":3,"phi":[[1]],"c":[[1]],"q":[["1-k"]],"r":[[1]]}"#,
    );
    let out = run(&["validate", bad_q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains('1'), "{}", stdout(&out));

    let bad_expr = write_temp(
        &dir,
        "bad_expr.json",
        r#"{"kind":"ltv","n":1,"p":1,"N":2,"phi":[["1+*k"]],"c":[[1]],"q":[[1]],"r":[[1]]}"#,
    );
    let out = run(&["validate", bad_expr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 2"));
}

#[test]
fn gramian_rows_and_usage_errors() {
    let unit = system("scalar_unit.json");
    let unit = unit.to_str().unwrap();
    let out = run(&[
        "gramian",
        unit,
        "--kind",
        "obs",
        "--method",
        "recursive_dual",
        "--w",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&stdout(&out), "f11", 0), "1.5");

    let out = run(&["gramian", unit, "--kind", "cons", "--method", "direct_thm1", "--w", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["gramian", unit, "--kind", "obs", "--method", "direct_mform", "--w", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "gramian",
        unit,
        "--kind",
        "sideways",
        "--method",
        "direct_mform",
        "--w",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trace_lists_every_iterate() {
    let oscillator = system("oscillator.json");
    let out = run(&[
        "gramian",
        oscillator.to_str().unwrap(),
        "--kind",
        "obs",
        "--method",
        "recursive_dual",
        "--w",
        "11",
        "--trace",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 12);
    let single = run(&[
        "gramian",
        oscillator.to_str().unwrap(),
        "--kind",
        "obs",
        "--method",
        "recursive_dual",
        "--w",
        "11",
    ]);
    let last: f64 = field(&text, "f11", 10).parse().unwrap();
    let direct: f64 = field(&stdout(&single), "f11", 0).parse().unwrap();
    assert!((last - direct).abs() <= 1e-12 * direct.abs());
}

#[test]
fn sweep_is_deterministic_single_threaded() {
    let oscillator = system("oscillator.json");
    let args = ["--threads", "1", "sweep", oscillator.to_str().unwrap(), "--w-max", "6"];
    let strip = |o: Output| -> Vec<String> {
        let text = stdout(&o);
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let wall = header.iter().position(|h| *h == "wall_ns").unwrap();
        text.lines()
            .map(|l| {
                let mut cells: Vec<&str> = l.split(',').collect();
                cells.remove(wall);
                cells.join(",")
            })
            .collect()
    };
    let a = strip(run(&args));
    let b = strip(run(&args));
    assert_eq!(a.len(), 19);
    assert_eq!(a, b);
}

#[test]
fn dare_reports() {
    let out = run(&["dare", system("scalar_unit.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let f: f64 = field(&stdout(&out), "f11", 0).parse().unwrap();
    assert!((f - 1.618_033_988_7).abs() < 1e-9);

    let out = run(&["dare", system("oscillator.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&[
        "--tol",
        "1e-14",
        "dare",
        system("shear.json").to_str().unwrap(),
        "--max-iter",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let blind = write_temp(
        &dir,
        "blind.json",
        r#"{"kind":"lti","n":1,"p":1,"phi":[[1]],"c":[[0]],"q":[[1]],"r":[[1]]}"#,
    );
    let out = run(&["dare", blind.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&stdout(&out), "f11", 0), "0");
}

#[test]
fn reproductions_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reproduce-fig1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("plateau from k ="));
    let text = std::fs::read_to_string(dir.path().join("information_profile.csv")).unwrap();
    assert_eq!(text.lines().count(), 62);
    assert_eq!(field(&text, "total_f11", 0), field(&text, "obs_f11", 0));
    assert_eq!(field(&text, "total_f11", 60), field(&text, "cons_f11", 60));

    let out = run(&["reproduce-fig2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = std::fs::read_to_string(dir.path().join("oscillator_summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "method,max_sym_err,first_monotonicity_break_w"
    );
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().any(|l| l == "recursive_dual,0,"));
}
