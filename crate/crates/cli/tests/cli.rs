use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fnch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnch")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const MODEL: &str = r#"{"model": {"type": "multivariate", "y": [2, 2, 1],
  "priors": [{"family": "discrete_uniform", "a": 3, "b": 8},
             {"family": "discrete_uniform", "a": 3, "b": 8},
             {"family": "discrete_uniform", "a": 2, "b": 8}],
  "log_w": [0.0, 0.3, -0.2]},
  "mcmc": {"iterations": 4000, "burn_in": 1000}}"#;

const ABC: &str = r#"{"y": [2, 2, 1],
  "priors": [{"family": "discrete_uniform", "a": 3, "b": 8},
             {"family": "discrete_uniform", "a": 3, "b": 8},
             {"family": "discrete_uniform", "a": 2, "b": 8}],
  "log_w": [0.0, 0.0, 0.0],
  "abc": {"iterations": 2000, "burn_in": 200, "epsilon": [0, 0, 0]}}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn hypergeometric_pmf_value() {
    let o = fnch(&["pmf", "--m1", "2", "--m2", "2", "--n", "2", "--w", "1", "--y", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.6666666666666666\n");
}

#[test]
fn pmf_table_sums_to_one() {
    let o = fnch(&["pmf", "--m1", "7", "--m2", "5", "--n", "6", "--log-w", "-0.4"]);
    let text = stdout(&o);
    let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn multivariate_pmf_with_unit_weights_is_hypergeometric() {
    // C(2,1) C(3,1) C(1,0) / C(6,2) = 6 / 15
    let o = fnch(&["pmf", "--m", "2,3,1", "--y", "1,1,0"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.4).abs() < 1e-14, "{v}");
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let o = fnch(&["pmf", "--frobnicate", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn validation_errors_are_single_line_json() {
    let o = fnch(&["pmf", "--m1", "2", "--m2", "2", "--n", "9", "--y", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&err).unwrap();
    assert_eq!(v["error"], "empty_support");
    assert!(v["message"].is_string());
}

#[test]
fn sampling_is_seeded_and_in_support() {
    let args = ["sample", "--m1", "10", "--m2", "4", "--n", "8", "--w", "3", "--draws", "200", "--seed", "9"];
    let (a, b) = (fnch(&args), fnch(&args));
    assert_eq!(a.stdout, b.stdout);
    for l in stdout(&a).lines() {
        let y: u64 = l.parse().unwrap();
        assert!((4..=8).contains(&y));
    }
}

#[test]
fn fit_mcmc_outputs_are_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "model.json", MODEL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = fnch(&["fit-mcmc", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    for f in ["draws.csv", "draws.json", "summary.csv", "run.json"] {
        assert!(ta.contains_key(Path::new(f)), "{f}");
    }

    // run.json alone reproduces the run; flags override the file.
    let run_json = a.join("run.json");
    let c = dir.path().join("c");
    assert!(fnch(&["fit-mcmc", "--config", run_json.to_str().unwrap(), "--out", c.to_str().unwrap()]).status.success());
    assert_eq!(ta, tree(&c));
    let rec: serde_json::Value = serde_json::from_slice(&ta[Path::new("run.json")]).unwrap();
    assert_eq!(rec["config"]["mcmc"]["seed"], 5);
    assert_eq!(rec["version"], concat!("fnch ", env!("CARGO_PKG_VERSION")));
}

#[test]
fn summarize_matches_the_fit_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "model.json", MODEL);
    let out = dir.path().join("fit");
    assert!(fnch(&["fit-mcmc", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let o = fnch(&["summarize", "--draws", out.join("draws.csv").to_str().unwrap()]);
    assert!(o.status.success());
    let fit = fs::read_to_string(out.join("summary.csv")).unwrap();
    // Same numbers, different cell label.
    let strip = |s: &str| s.lines().skip(1).map(|l| l.split_once(',').unwrap().1.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&stdout(&o)), strip(&fit));
}

#[test]
fn abc_stall_keeps_partial_draws_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = ABC.replace("\"epsilon\"", "\"max_attempts_per_step\": 1, \"epsilon\"").replace("\"b\": 8", "\"b\": 800");
    let cfg = write(dir.path(), "abc.json", &text);
    let out = dir.path().join("abc");
    let o = fnch(&["fit-abc", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "attempts_exceeded");
    assert!(out.join("draws_partial.csv").exists());
    assert!(out.join("run.json").exists());
}

#[test]
fn fit_abc_runs_with_exact_matching() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "abc.json", ABC);
    let out = dir.path().join("abc");
    let o = fnch(&["fit-abc", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(s.lines().count(), 1 + 4);
}

#[test]
fn fit_without_a_model_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fnch(&["fit-mcmc", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_step1_is_independent_of_the_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, jobs: &str| {
        let o = fnch(&[
            "pipeline", "step1", "--out", out.to_str().unwrap(), "--seed", "7", "--iterations", "3000",
            "--burn-in", "500", "--jobs", jobs,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "1");
    run(&b, "3");
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    assert!(ta.contains_key(Path::new("step1/summary.csv")));
    assert!(ta.contains_key(Path::new("plots/size-posteriors.csv")));
}

#[test]
fn plots_rebuild_exactly_from_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fnch(&["pipeline", "step1", "--out", out.to_str().unwrap(), "--iterations", "2000", "--burn-in", "500"]);
    assert!(o.status.success());
    let plots = dir.path().join("plots");
    let results = out.join("results.json");
    let o = fnch(&["emit-plots", "--results", results.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(tree(&plots), tree(&out.join("plots")));

    let o = fnch(&["emit-plots", "--results", results.to_str().unwrap(), "--out", plots.to_str().unwrap(), "--kind", "pie"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_data_directory_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fnch(&["pipeline", "step1", "--data", "/nonexistent/tables", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"], "io");
}

#[test]
fn simulate_writes_coverage_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = fnch(&[
        "simulate", "--replicates", "2", "--seed", "1", "--out", out.to_str().unwrap(), "--no-abc",
        "--n-true", "2000", "--iterations", "3000", "--burn-in", "1000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cov = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert_eq!(cov.lines().next().unwrap(), "method,parameter,hits,replicates,frequency");
    assert_eq!(cov.lines().count(), 1 + 6);
    assert!(out.join("replicates.csv").exists());
}
