use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TWO_CLAUSE: &str = "t(_)::h.\nt(_)::h :- b.\n";
const ALARM: &str = include_str!("../../core/programs/alarm.pl");

fn plp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn worked_example_csv() -> String {
    let mut csv = String::from("h,b\n");
    for (row, n) in [("0,0", 6), ("0,1", 2), ("1,0", 2), ("1,1", 2)] {
        csv.push_str(&format!("{row}\n").repeat(n));
    }
    csv
}

fn summary_value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("% {key}=")))
        .unwrap_or_else(|| panic!("{key} missing in\n{out}"))
        .parse()
        .unwrap()
}

#[test]
fn learn_direct_worked_example() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "p.pl", TWO_CLAUSE);
    let data = write(&dir, "d.csv", &worked_example_csv());
    let o = plp(&["learn", "--program", s(&program), "--data", s(&data), "--method", "direct"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("0.250000::h."), "{out}");
    assert!(out.contains("0.333333::h :- b."), "{out}");
    assert!(out.contains("direct.group.h.method=closed-form"));
    let optimum = 6.0 * 0.75f64.ln() + 4.0 * 0.5f64.ln() + 2.0 * 0.25f64.ln();
    assert!((summary_value(&out, "direct.loglik") - optimum).abs() < 1e-6);
}

#[test]
fn learn_both_reports_matching_likelihoods() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "alarm.pl", ALARM);
    let out_path = dir.path().join("fitted.pl");
    let o = plp(&[
        "learn", "--program", s(&program), "--constants", "4", "--sample-n", "200", "--seed", "3",
        "--method", "both", "--out", s(&out_path),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let d = summary_value(&out, "direct.loglik");
    let e = summary_value(&out, "em.loglik");
    assert!((d - e).abs() <= 1e-3, "{d} vs {e}");

    // the fitted program re-parses and re-grounds
    let fitted = std::fs::read_to_string(&out_path).unwrap();
    let p = plp_core::parse_program(&fitted).unwrap();
    assert_eq!(p.num_params(), 0);
    plp_core::ground(&p, &plp_core::learn::numbered_constants(4)).unwrap();
}

#[test]
fn nothing_to_learn() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "p.pl", "0.4::a.\nb :- a.\n");
    let o = plp(&["learn", "--program", s(&program), "--sample-n", "20", "--seed", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("nothing to learn"));
    assert!(summary_value(&out, "direct.loglik").is_finite());
}

#[test]
fn learn_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "alarm.pl", ALARM);
    let run = || {
        let o = plp(&["learn", "--program", s(&program), "--constants", "3", "--sample-n", "100", "--seed", "9"]);
        stdout(&o).lines().filter(|l| !l.contains("wall_time")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(run(), run());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "p.pl", "t(_)::h :- b.\nt(_)::b.\n");
    let bad = write(&dir, "bad.csv", "h,b\n1,0\n0,1\n1,1\n");

    let o = plp(&["learn", "--program", s(&program), "--data", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inconsistent"));

    let o = plp(&["learn", "--program", s(&program), "--data", s(&bad), "--on-inconsistent", "drop"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dropped 1"));
    assert!(stdout(&o).contains("direct.dropped_records=1"));

    let missing = dir.path().join("missing.pl");
    let o = plp(&["learn", "--program", s(&missing), "--data", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));

    let broken = write(&dir, "broken.pl", "h :- .\n");
    let o = plp(&["learn", "--program", s(&broken), "--data", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1:6: syntax error"));

    let o = plp(&["sample", "--program", s(&broken), "--n", "1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "alarm.pl", ALARM);
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for out in [&a, &b] {
        let o = plp(&["sample", "--program", s(&program), "--constants", "2", "--n", "10", "--seed", "7", "--out", s(out)]);
        assert!(o.status.success());
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(text).unwrap().starts_with("# seed=7 generator="));
}

#[test]
fn sample_certain_fact() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "p.pl", "1.0::h.\n");
    let o = plp(&["sample", "--program", s(&program), "--n", "5", "--seed", "1"]);
    let out = stdout(&o);
    let blocks: Vec<&str> = out.split("---\n").filter(|b| b.contains('.')).collect();
    assert_eq!(blocks.len(), 5);
    assert!(blocks.iter().all(|b| b.lines().any(|l| l == "h.")));
}

#[test]
fn sample_alarm_grounding_count() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "alarm.pl", ALARM);
    let o = plp(&["sample", "--program", s(&program), "--constants", "5", "--n", "100", "--seed", "2"]);
    let out = stdout(&o);
    let (header, body) = out.split_once('\n').unwrap();
    assert!(header.starts_with("# seed=2"));
    let blocks: Vec<&str> = body.split("---\n").filter(|b| !b.is_empty()).collect();
    assert_eq!(blocks.len(), 100);
    for b in blocks {
        assert_eq!(b.lines().count(), 65, "{b}");
    }
}

#[test]
fn bench_outputs_and_determinism() {
    let dir = TempDir::new().unwrap();
    let program = write(&dir, "alarm.pl", ALARM);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = plp(&[
            "bench", "--program", s(&program), "--mode", "relational", "--sizes", "5,10,15,20,25",
            "--records", "10", "--seed", "4", "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a.matches("method,size,wall_time_s,loglik,iterations").count(), 1);
    assert_eq!(a.lines().count(), 11);
    assert_eq!(plp_core::bench::without_timings(&a), plp_core::bench::without_timings(&b));
    assert!(dir.path().join("a.direct.dat").exists());
    assert!(dir.path().join("a.em.dat").exists());
    assert!(dir.path().join("a.tags.csv").exists());

    let rows: Vec<Vec<&str>> = a.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for pair in rows.chunks(2) {
        let (d, e): (f64, f64) = (pair[0][3].parse().unwrap(), pair[1][3].parse().unwrap());
        assert!((d - e).abs() <= 1e-3);
    }
}

#[test]
fn bench_marks_failed_rows_and_continues() {
    let dir = TempDir::new().unwrap();
    // more parameters than the override supplies: sampling fails on every row
    let program = write(&dir, "p.pl", TWO_CLAUSE);
    let o = plp(&["bench", "--program", s(&program), "--sizes", "5,10", "--theta", "0.5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("direct,5,,failed,"));
    assert!(out.contains("em,10,,failed,"));
}
