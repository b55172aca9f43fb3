use std::process::{Command, Output};

fn fbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbsde"))
        .args(args)
        .env("FBSDE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn convergence_csv() {
    let o = fbsde(&["convergence", "--problem", "linear", "--ns", "4,8", "--no-runtime"]);
    assert!(o.status.success());
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "N,dt,errY,errZ_1,picard_total");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("4,2.500000e-1,"));
    assert!(lines[3].starts_with("CR,"));
}

#[test]
fn markdown_table() {
    let o = fbsde(&["convergence", "--problem", "heston", "--forward", "wt2", "--ns", "8,16", "--format", "markdown"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("| N | |Y0 - Y^0| | |Z0 - Z^0| | Picard | RT (s) |"));
    assert!(s.lines().last().unwrap().starts_with("| **CR** |"));
}

#[test]
fn solve_reports_values() {
    let o = fbsde(&["solve", "--problem", "linear", "--n", "4", "--x0", "0.25"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("Y=1.5000000000e0"), "{s}");
    assert!(s.contains("picard_total=4"));
}

#[test]
fn errors_name_their_class() {
    let o = fbsde(&["solve", "--problem", "heston", "--n", "7"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("OddN:"));

    let o = fbsde(&["solve", "--problem", "heston", "--box", "0,2"]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("BoxTouchesZero:"));

    let o = fbsde(&["convergence", "--problem", "linear", "--gh-order", "65", "--ns", "4"]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("OrderOutOfRange:"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("fbsde-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    let out = dir.join("table.csv");
    std::fs::write(&cfg, "# linear sanity run\nproblem = linear\nns = 4,8\nscheme = cn\nno_runtime = true\n").unwrap();
    let o = fbsde(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--ns",
        "2,4,6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let o = fbsde(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("InvalidConfig:"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn csv_independent_of_thread_count() {
    let args = ["convergence", "--problem", "sine2d", "--ns", "4,8", "--no-runtime"];
    let one = fbsde(&args);
    let many = Command::new(env!("CARGO_BIN_EXE_fbsde"))
        .args(args)
        .env("FBSDE_THREADS", "4")
        .output()
        .unwrap();
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
}
