use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dolr(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dolr"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("DOLR_THREADS", t),
        None => cmd.env_remove("DOLR_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const OU: &str = "model.name = ou\nrun.d = 5\nrun.N = 300\nrun.R = 2\nrun.dt = 0.01\nrun.t_end = 0.5\nrun.seed = 4\nrun.record_stride = 5\n";

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.conf", OU);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out = dolr(
        &["simulate", "-c", &cfg, "-o", a.to_str().unwrap()],
        Some("1"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = dolr(
        &["simulate", "-c", &cfg, "-o", b.to_str().unwrap()],
        Some("3"),
    );
    assert!(out.status.success());
    for f in ["trajectory.csv", "diagnostics.csv", "events.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let strip = |s: String| -> String {
        s.lines()
            .filter(|l| !l.starts_with("# wall_time_s") && !l.starts_with("# command"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(read(&a, "manifest.txt")),
        strip(read(&b, "manifest.txt"))
    );
}

#[test]
fn every_file_names_the_config_hash_and_the_manifest_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.conf", OU);
    let a = tmp.path().join("a");
    assert!(
        dolr(&["simulate", "-c", &cfg, "-o", a.to_str().unwrap()], None)
            .status
            .success()
    );
    let manifest = read(&a, "manifest.txt");
    let hash = manifest
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash = "))
        .unwrap()
        .to_string();
    assert_eq!(hash.len(), 64);
    for f in ["trajectory.csv", "diagnostics.csv", "events.csv"] {
        assert!(
            read(&a, f).starts_with(&format!("# config_hash={hash} seed=4\n")),
            "{f}"
        );
    }
    let b = tmp.path().join("b");
    let m = a.join("manifest.txt");
    let out = dolr(
        &[
            "simulate",
            "-c",
            m.to_str().unwrap(),
            "-o",
            b.to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
}

#[test]
fn dumped_paths_have_the_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.conf", OU);
    let a = tmp.path().join("a");
    let out = dolr(
        &[
            "simulate",
            "--dump-paths",
            "-c",
            &cfg,
            "-o",
            a.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    let bytes = fs::read(a.join("paths.bin")).unwrap();
    // 50 steps x 300 atoms x 5 channels, 8 bytes each.
    assert_eq!(bytes.len(), 50 * 300 * 5 * 8);
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let var = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
    assert!((var - 0.01).abs() < 0.01 * 0.05, "{var}");
}

#[test]
fn compare_do_and_ambient_converges_at_order_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ll.conf",
        "model.name = linear_lowrank\nrun.d = 8\nrun.N = 256\nrun.R = 2\nrun.dt = 4e-3\nrun.t_end = 1.0\nrun.seed = 11\nrun.record_stride = 25\n",
    );
    let a = tmp.path().join("a");
    let out = dolr(
        &[
            "compare",
            "-c",
            &cfg,
            "-o",
            a.to_str().unwrap(),
            "do",
            "ambient",
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read(&a, "error_report.csv");
    let rate: f64 = report
        .lines()
        .find_map(|l| l.split("convergence_rate=").nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((rate - 1.0).abs() < 0.15, "{rate}");
    let summary = read(&a, "error_summary.csv");
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn explosion_study_records_one_event_near_the_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "mc.conf",
        "model.name = mode_crossing\nmodel.t_star = 0.8\nrun.d = 4\nrun.N = 200\nrun.R = 2\nrun.dt = 1e-3\nrun.t_end = 1.2\nrun.record_stride = 20\n",
    );
    let a = tmp.path().join("a");
    let out = dolr(
        &["explosion-study", "-c", &cfg, "-o", a.to_str().unwrap()],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let events = read(&a, "events.csv");
    let rows: Vec<&str> = events.lines().skip(2).collect();
    assert_eq!(rows.len(), 1, "{events}");
    let t: f64 = rows[0].split(',').next().unwrap().parse().unwrap();
    assert!((t - 0.8).abs() <= 0.05, "{t}");
    assert!(read(&a, "crossings.csv").lines().count() > 2);
    assert!(read(&a, "explosion.csv")
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("1,"));
}

#[test]
fn picard_and_lipschitz_subcommands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.conf", OU);
    let a = tmp.path().join("a");
    assert!(dolr(
        &["picard-demo", "-c", &cfg, "-o", a.to_str().unwrap()],
        None
    )
    .status
    .success());
    assert!(read(&a, "picard.csv").contains("iterate,difference,ratio"));
    let out = dolr(
        &[
            "lipschitz-harness",
            "--trials",
            "20",
            "-c",
            &cfg,
            "-o",
            a.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    let table = read(&a, "lipschitz.csv");
    let row: Vec<f64> = table
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[0], 20.0);
    assert!(row[1..].iter().all(|r| *r <= 1.0));
}

#[test]
fn errors_exit_with_codes_and_a_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.conf", "model.name = ou\nrun.dt = -0.1\n");
    let out = dolr(&["simulate", "-c", &bad], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.starts_with("error kind=validation code=2 message="),
        "{err}"
    );

    let unknown = write_config(tmp.path(), "u.conf", "model.name = ou\nrun.x = 1\n");
    let out = dolr(&["simulate", "-c", &unknown], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=parse"));

    let out = dolr(&["simulate", "-c", "/nonexistent/cfg"], None);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "ou.conf", OU);
    let out = dolr(
        &[
            "simulate",
            "-c",
            &cfg,
            "-o",
            tmp.path().join("t").to_str().unwrap(),
        ],
        Some("zero"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overflowing_runs_are_numerical_failures() {
    let tmp = tempfile::tempdir().unwrap();
    for scheme in ["do", "ambient", "reference"] {
        let cfg = write_config(
            tmp.path(),
            "g.conf",
            &format!("model.name = gbm_clipped\nmodel.mu = 1e6\nrun.d = 3\nrun.N = 16\nrun.dt = 0.01\nrun.scheme = {scheme}\n"),
        );
        let out = dolr(
            &[
                "simulate",
                "-c",
                &cfg,
                "-o",
                tmp.path().join("o").to_str().unwrap(),
            ],
            None,
        );
        assert_eq!(out.status.code(), Some(3), "{scheme}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(
            err.contains("kind=numerical") && err.contains("non-finite"),
            "{scheme}: {err}"
        );
    }
}
