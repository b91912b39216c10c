use std::path::Path;
use std::process::{Command, Output};

fn tgv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgv")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of `key` on the `RESULT` line.
fn result(o: &Output, key: &str) -> String {
    let text = stdout(o);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("RESULT ")).collect();
    assert_eq!(lines.len(), 1, "expected one RESULT line in {text:?}");
    lines[0]
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {}", lines[0]))
        .to_string()
}

fn num(o: &Output, key: &str) -> f64 {
    result(o, key).parse().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.pgm", "b.pgm"] {
        let o = tgv(dir.path(), &["generate", "disk", "--n", "64", "--out", name]);
        assert!(o.status.success());
        assert_eq!(result(&o, "n"), "64");
    }
    let a = std::fs::read(dir.path().join("a.pgm")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.pgm")).unwrap());
    assert!(a.starts_with(b"P5\n"));
    let o = tgv(dir.path(), &["generate", "squares", "--n", "32", "--sigma", "0.1", "--seed", "7", "--out", "s.txt"]);
    assert!(o.status.success());
    let o2 = tgv(dir.path(), &["generate", "squares", "--n", "32", "--sigma", "0.1", "--seed", "7", "--out", "t.txt"]);
    assert!(o2.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("s.txt")).unwrap(),
        std::fs::read(dir.path().join("t.txt")).unwrap()
    );
}

#[test]
fn constant_image_denoises_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let row = vec!["0.5"; 8].join(" ");
    std::fs::write(dir.path().join("c.txt"), format!("{row}\n").repeat(8)).unwrap();
    for model in [["--model", "tv", "--alpha", "1"].as_slice(), &["--model", "tgv2", "--alpha", "1", "--beta", "2"]] {
        let mut args = vec!["denoise", "c.txt", "--out", "u.txt"];
        args.extend_from_slice(model);
        let o = tgv(dir.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(result(&o, "converged"), "true");
        let cmp = tgv(dir.path(), &["compare", "c.txt", "u.txt"]);
        assert!(num(&cmp, "rel_l2") < 1e-12);
    }
}

#[test]
fn non_convergence_exits_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tgv(dir.path(), &["generate", "disk", "--n", "16", "--out", "d.txt"]).status.success());
    let o = tgv(
        dir.path(),
        &["denoise", "d.txt", "--model", "tgv2", "--alpha", "1", "--beta", "1", "--max-iter", "20", "--w-out", "w.txt"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(result(&o, "converged"), "false");
    assert!(dir.path().join("d_tgv2.txt").exists());
    assert!(dir.path().join("w.txt").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tgv(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(tgv(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(tgv(dir.path(), &["generate", "triangle"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["generate", "disk", "--n", "1"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["generate", "disk", "--radius", "0.7"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["compare", "missing.txt", "also.txt"]).status.code(), Some(3));
    std::fs::write(dir.path().join("bad.txt"), "1 2\nx 4\n").unwrap();
    assert_eq!(tgv(dir.path(), &["eval-tgv", "bad.txt", "--alpha", "1", "--beta", "1"]).status.code(), Some(3));
    assert_eq!(tgv(dir.path(), &["generate", "disk", "--out", "no/such/dir/d.pgm"]).status.code(), Some(3));
    assert!(tgv(dir.path(), &["generate", "disk", "--n", "8", "--out", "d.txt"]).status.success());
    // beta is required by tgv2, alpha must be positive, p is 1 or 2
    assert_eq!(tgv(dir.path(), &["denoise", "d.txt", "--model", "tgv2", "--alpha", "1"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["denoise", "d.txt", "--model", "tv", "--alpha", "-1"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["denoise", "d.txt", "--model", "tv", "--alpha", "1", "--p", "3"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["denoise", "d.txt", "--model", "tv2-1d", "--beta", "1"]).status.code(), Some(1));
    assert_eq!(tgv(dir.path(), &["generate", "disk", "--config", "nope.cfg"]).status.code(), Some(3));
    std::fs::write(dir.path().join("typo.cfg"), "alpah=1\n").unwrap();
    assert_eq!(tgv(dir.path(), &["generate", "disk", "--config", "typo.cfg"]).status.code(), Some(1));
}

#[test]
fn flag_beats_config_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tgv(dir.path(), &["generate", "disk", "--n", "8", "--out", "d.txt"]).status.success());
    std::fs::write(dir.path().join("run.cfg"), "# solver settings\nmax_iter = 3e1\nalpha=0.5\n").unwrap();
    let base = ["denoise", "d.txt", "--model", "tv", "--alpha", "0.2"];

    let default = tgv(dir.path(), &base);
    assert_eq!(result(&default, "max_iter"), "20000");
    assert_eq!(num(&default, "alpha"), 0.2);

    let mut with_file = base.to_vec();
    with_file.extend(["--config", "run.cfg"]);
    let o = tgv(dir.path(), &with_file);
    assert_eq!(result(&o, "max_iter"), "30");
    assert_eq!(num(&o, "alpha"), 0.2);

    let mut with_flag = with_file.clone();
    with_flag.extend(["--max-iter", "7"]);
    let o = tgv(dir.path(), &with_flag);
    assert_eq!(result(&o, "max_iter"), "7");
    assert_eq!(result(&o, "iterations"), "7");

    let o = tgv(dir.path(), &["denoise", "d.txt", "--model", "tv", "--config", "run.cfg"]);
    assert_eq!(num(&o, "alpha"), 0.5);
}

#[test]
fn compare_reports_relative_and_sup_distances() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "1 2\n3 4\n").unwrap();
    std::fs::write(dir.path().join("b.txt"), "0.5 1\n1.5 2\n").unwrap();
    std::fs::write(dir.path().join("c.txt"), "1 2 3\n4 5 6\n").unwrap();
    let o = tgv(dir.path(), &["compare", "a.txt", "a.txt"]);
    assert_eq!(num(&o, "rel_l2"), 0.0);
    let o = tgv(dir.path(), &["compare", "a.txt", "b.txt"]);
    assert!((num(&o, "rel_l2") - 0.5).abs() < 1e-15);
    assert_eq!(num(&o, "linf"), 2.0);
    assert_eq!(tgv(dir.path(), &["compare", "a.txt", "c.txt"]).status.code(), Some(1));
}

#[test]
fn denoise_tv_matches_harness_distance() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tgv(dir.path(), &["generate", "disk", "--n", "16", "--sigma", "0.1", "--out", "f.txt"]).status.success());
    let common = ["--alpha", "0.3", "--max-iter", "3000"];
    let mut tv = vec!["denoise", "f.txt", "--model", "tv", "--out", "tv.txt"];
    tv.extend(common);
    let mut tgv2 = vec!["denoise", "f.txt", "--model", "tgv2", "--beta", "1e6", "--out", "tgv.txt"];
    tgv2.extend(common);
    tgv(dir.path(), &tv);
    tgv(dir.path(), &tgv2);
    let cmp = tgv(dir.path(), &["compare", "tv.txt", "tgv.txt"]);
    let f = tgv_core::io::load_scalar(&dir.path().join("f.txt")).unwrap();
    let settings = tgv_core::harness::ExperimentSettings {
        tv: tgv_core::solver::SolverConfig::default().with_adaptive(true).with_max_iter(3000),
        tgv: tgv_core::solver::SolverConfig::default().with_step_ratio(1e-4).with_max_iter(3000),
        ..Default::default()
    };
    let report = tgv_core::harness::experiment_tv_equivalence(&f, 0.3, 1e6, &settings).unwrap();
    let expected = report.last().unwrap().metric("dist_tgv_tv").unwrap();
    assert!((num(&cmp, "rel_l2") - expected).abs() <= 1e-12 * expected.max(1e-300), "{} vs {expected}", num(&cmp, "rel_l2"));
}

#[test]
fn eval_tgv_of_affine_image_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..6).map(|i| (0..6).map(|j| format!("{}", 0.5 * i as f64 - 0.25 * j as f64)).collect::<Vec<_>>().join(" ")).collect();
    std::fs::write(dir.path().join("ramp.txt"), rows.join("\n")).unwrap();
    let o = tgv(dir.path(), &["eval-tgv", "ramp.txt", "--alpha", "1", "--beta", "1"]);
    assert!(o.status.success());
    assert!(num(&o, "value").abs() < 1e-6);
}

#[test]
fn small_experiments_write_reports_with_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = tgv(
        dir.path(),
        &["experiment", "to-data", "--n", "16", "--beta-list", "1e-1:1e-3", "--max-iter", "2000", "--out", "td.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(result(&o, "rows"), "3");
    assert!(["pass", "fail"].contains(&result(&o, "verdict").as_str()));
    let csv = std::fs::read_to_string(dir.path().join("td.csv")).unwrap();
    assert!(csv.starts_with("experiment,alpha,beta,dist_f_u,"));
    assert!(csv.lines().nth(3).unwrap().starts_with("to-data,1.0,0.001,"));
    assert_eq!(csv.lines().count(), 4);

    let o = tgv(dir.path(), &["experiment", "beta-star", "--n", "32", "--alpha", "0.1", "--max-iter", "3000", "--out", "bs.csv"]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(dir.path().join("bs.csv")).unwrap().starts_with("experiment,beta,"));

    let o = tgv(
        dir.path(),
        &["experiment", "regression", "--n", "16", "--rungs", "3", "--max-iter", "500", "--jobs", "2", "--out", "r.csv"],
    );
    assert!(o.status.success());
    assert_eq!(result(&o, "rows"), "3");

    assert_eq!(tgv(dir.path(), &["experiment", "to-data", "--p", "1"]).status.code(), Some(1));
}
