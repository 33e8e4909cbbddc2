use std::path::Path;

use clap::Parser;
use kis::cli::{cmd_benchmark, cmd_fit, cmd_select, cmd_simulate, run, Cli, Command};
use kis::error::Error;

fn parse(args: &[&str]) -> Command {
    Cli::try_parse_from(std::iter::once("kis").chain(args.iter().copied())).unwrap().command
}

fn fit_args(data: &Path, out: &Path) -> Vec<String> {
    ["fit", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--warmup", "20", "--iterations", "10", "--seed", "5"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn fit(args: &[String]) -> kis::cli::FitRecord {
    let v: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    match parse(&v) {
        Command::Fit(a) => cmd_fit(&a).unwrap(),
        _ => unreachable!(),
    }
}

#[test]
fn toy_fit_emits_four_traces_and_refits_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    std::fs::write(&data, "a,b,y\n0.5,1.0,2.0\n-1.0,0.25,0.5\n2.0,-0.5,1.5\n").unwrap();
    let out1 = dir.path().join("f1");
    let out2 = dir.path().join("f2");
    let r = fit(&fit_args(&data, &out1));
    fit(&fit_args(&data, &out2));
    for c in 1..=4 {
        assert!(out1.join(format!("trace_chain{c}.csv")).is_file());
    }
    assert_eq!(r.main_summaries.len(), 2);
    assert_eq!(r.sampler.seed, 5);
    let a = std::fs::read_to_string(out1.join("fit.json")).unwrap();
    let b = std::fs::read_to_string(out2.join("fit.json")).unwrap();
    assert_eq!(a, b);

    let sel = match parse(&["select", "--fit", out1.to_str().unwrap(), "--k", "2", "--out", out1.to_str().unwrap()]) {
        Command::Select(s) => cmd_select(&s).unwrap(),
        _ => unreachable!(),
    };
    assert_eq!(sel.report.candidate_pair_count, 1);
    assert_eq!(sel.report.rows.len(), 2 + 1 + 2);
    assert!(std::fs::read_to_string(out1.join("report.txt")).unwrap().contains("a:b"));

    std::fs::remove_file(out1.join("trace_chain3.csv")).unwrap();
    let missing = match parse(&["select", "--fit", out1.to_str().unwrap(), "--out", out1.to_str().unwrap()]) {
        Command::Select(s) => cmd_select(&s),
        _ => unreachable!(),
    };
    assert!(matches!(missing, Err(Error::Format { .. })));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["s1", "s2"] {
        let out = dir.path().join(name);
        match parse(&["simulate", "--n", "20", "--p", "8", "--lambda", "2", "--seed", "11", "--out", out.to_str().unwrap()]) {
            Command::Simulate(a) => {
                let t = cmd_simulate(&a).unwrap();
                assert_eq!(t.true_mains.len(), 5);
                assert_eq!(t.true_pairs.len(), 10);
            }
            _ => unreachable!(),
        }
        files.push((
            std::fs::read(out.join("data.csv")).unwrap(),
            std::fs::read(out.join("truth.json")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
    let truth: serde_json::Value = serde_json::from_slice(&files[0].1).unwrap();
    for key in ["true_mains", "true_pairs", "magnitude", "noise_variance"] {
        assert!(truth.get(key).is_some(), "{key}");
    }
    let bad = Cli::try_parse_from(["kis", "simulate", "--lambda", "0", "--out", dir.path().to_str().unwrap()]).unwrap();
    assert!(run(bad).is_err());
}

#[test]
fn malformed_csv_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "a,b,y\n1,2,3\n4,5\n").unwrap();
    let args = fit_args(&data, &dir.path().join("o"));
    let v: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let err = match parse(&v) {
        Command::Fit(a) => cmd_fit(&a).unwrap_err(),
        _ => unreachable!(),
    };
    assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
}

#[test]
fn config_file_overrides_prior_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    std::fs::write(&data, "a,b,c,y\n0.5,1.0,0.1,2.0\n-1.0,0.25,0.3,0.5\n2.0,-0.5,-0.2,1.5\n1.0,1.0,1.0,0.0\n").unwrap();
    let cfg = dir.path().join("prior.toml");
    std::fs::write(&cfg, "s = 1.5\nalpha5 = 2.0\nseed = 42\n").unwrap();
    let out = dir.path().join("f");
    let mut args: Vec<String> = ["fit", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--warmup", "10", "--iterations", "5", "--chains", "2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    args.extend(["--config".to_string(), cfg.to_str().unwrap().to_string()]);
    let r = fit(&args);
    assert_eq!(r.skim.s, 1.5);
    assert_eq!(r.skim.alpha[4], 2.0);
    assert_eq!(r.sampler.seed, 42);
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let v: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    match parse(&v) {
        Command::Fit(a) => assert!(cmd_fit(&a).is_err()),
        _ => unreachable!(),
    }
}

#[test]
fn benchmark_writes_timings_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    match parse(&["benchmark", "--methods", "kis,naive", "--n", "8", "--p-grid", "4,8,60", "--reps", "1", "--feature-cap", "100", "--out", out]) {
        Command::Benchmark(a) => {
            let r = cmd_benchmark(&a).unwrap();
            assert_eq!(r.slopes.len(), 2);
            assert_eq!(r.slopes[1].median_seconds.len(), 2);
        }
        _ => unreachable!(),
    }
    let csv = std::fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert!(csv.starts_with("method,N,p,rep,seconds,bytes_peak_estimate"));
    assert!(csv.contains("naive,8,60,0,,"));
}
