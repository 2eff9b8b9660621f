use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otbench")).args(args).output().expect("run otbench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_fixture(dir: &Path) {
    fs::write(dir.join("a.txt"), "1 2\n0.7 0\n0.3 1\n").unwrap();
    fs::write(dir.join("b.txt"), "1 2\n0.4 0\n0.6 1\n").unwrap();
    fs::write(dir.join("c.txt"), "2 2\n0 1\n1 0\n").unwrap();
}

#[test]
fn exact_on_the_two_by_two_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let p = |f: &str| dir.path().join(f).display().to_string();
    let out = dir.path().join("out").display().to_string();
    let o = otbench(&[
        "run", "--source-file", &p("a.txt"), "--target-file", &p("b.txt"), "--cost-file", &p("c.txt"),
        "--solver", "exact", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("estimate=3.000000000000e-1"), "{text}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert!((summary["oracle_cost"].as_f64().unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(summary["solvers"][0]["report"]["within"], true);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# small run\nm=20\nn=15\nT=100\nsolvers=fista,exact\nseed=3\n").unwrap();
    let out = dir.path().join("out");
    let o = otbench(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!((summary["m"].as_u64(), summary["n"].as_u64()), (Some(20), Some(15)));
    assert_eq!(summary["T"].as_f64(), Some(100.0));
    assert!(summary["bound"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["solvers"][0]["report"]["within"], true);
    assert!(out.join("fista_trace.csv").exists() && out.join("exact_trace.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    // config errors
    assert_eq!(otbench(&["run", "--T", "0", "--out", &out]).status.code(), Some(3));
    assert_eq!(otbench(&["run", "--solvers", "newton", "--out", &out]).status.code(), Some(3));
    assert_eq!(otbench(&["run", "--config", "/nonexistent/x.cfg"]).status.code(), Some(3));
    assert_eq!(otbench(&["run", "--bogus-flag"]).status.code(), Some(3));
    assert_eq!(
        otbench(&["run", "--m", "40", "--n", "40", "--solvers", "exact", "--max-cells", "100", "--out", &out])
            .status
            .code(),
        Some(3)
    );
    // kernel evaluation of the raw p-sweep cost at T = 800 overflows
    let o = otbench(&[
        "run", "--preset", "p-sweep", "--p", "2", "--T", "800", "--solvers", "sinkhorn", "--kernel-mode",
        "--no-center", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("numerical_failure"));
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"numerical_failure\""));
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = otbench(&["generate", "--preset", "sphere-paper", "--seed", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        ["source.txt", "target.txt", "cost.bin"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    // sphere-paper supports are unit vectors
    let text = String::from_utf8(a[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("3 500"));
    for line in lines {
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generated_files_round_trip_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = otbench(&["generate", "--m", "12", "--n", "9", "--seed", "5", "--out", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let from_files = dir.path().join("files");
    let from_seed = dir.path().join("seed");
    let args = ["--solvers", "fista,exact", "--T", "50"];
    let o1 = otbench(
        &[
            &["run", "--source-file", inst.join("source.txt").to_str().unwrap()][..],
            &["--target-file", inst.join("target.txt").to_str().unwrap()],
            &["--cost-file", inst.join("cost.bin").to_str().unwrap(), "--out", from_files.to_str().unwrap()],
            &args,
        ]
        .concat(),
    );
    let o2 = otbench(&[&["run", "--m", "12", "--n", "9", "--seed", "5", "--out", from_seed.to_str().unwrap()][..], &args].concat());
    assert_eq!((o1.status.code(), o2.status.code()), (Some(0), Some(0)));
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p.join("fista_trace.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&from_files), strip(&from_seed));
}

#[test]
fn p_sweep_family_has_positive_range_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbench(&["generate", "--preset", "p-sweep", "--seed", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for p in ["1.5", "2", "3", "4"] {
        assert!(dir.path().join(format!("p={p}")).join("cost.bin").exists());
    }
    let line = stdout(&o).lines().next().unwrap().to_string();
    let range: f64 = line.rsplit_once("cost range ").unwrap().1.trim_end_matches(')').parse().unwrap();
    assert!(range > 0.0);
}
