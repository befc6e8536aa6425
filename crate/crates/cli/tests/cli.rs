use std::path::Path;
use std::process::{Command, Output};

use surveytmle::data::{SamplingFunction, WeightedSample};
use surveytmle::design::{draw_fixed_size, make_plan, FixedSizeDesign, DEFAULT_MAX_ATTEMPTS};
use surveytmle::io::write_dataset;
use surveytmle::rng::{replicate_stream, stream, Purpose};
use surveytmle::sim::{generate_dataset, DgpSpec};
use surveytmle::tmle::{estimate_continuous, ContinuousConfig};
use surveytmle::worlds::logistic_world;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surveytmle"))
        .args(args)
        .args(["--log", "warn"])
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn binary_estimate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset(&data, &logistic_world(4, 5000)).unwrap();
    let out = dir.path().join("r.json");
    let nu = dir.path().join("nu.csv");
    let o = run(&[
        "tmle-binary", "--data", s(&data), "--w", "w1", "--v", "v", "--seed", "2", "--n", "600",
        "--json", s(&out), "--dump-nuisances", s(&nu),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("95% CI"));
    let r = json(&out);
    let psi = r["psi"].as_f64().unwrap();
    let ci = r["ci"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() < psi && psi < ci[1].as_f64().unwrap());
    assert_eq!(r["n"], 600);
    let rows = std::fs::read_to_string(&nu).unwrap().lines().count();
    assert_eq!(rows, 601);
}

#[test]
fn exported_data_reproduce_the_in_memory_estimate() {
    let spec = DgpSpec::new(2).unwrap();
    let ds = generate_dataset(&spec, 20_000, &mut stream(8, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    write_dataset(&data, &ds).unwrap();

    let h = SamplingFunction::uniform(3);
    let plan = make_plan(&ds, &h, 800).unwrap();
    let mut rng = replicate_stream(11, 0, Purpose::MainDraw, 0);
    let draw = draw_fixed_size(&plan, FixedSizeDesign::Rejective, &mut rng, DEFAULT_MAX_ATTEMPTS);
    let sample = WeightedSample::new(&ds, draw).unwrap();
    let direct = estimate_continuous(&sample, &h, &ContinuousConfig::default()).unwrap();

    let out = dir.path().join("r.json");
    let (lo, hi) = (spec.y_range[0].to_string(), spec.y_range[1].to_string());
    let o = run(&[
        "tmle-continuous", "--data", s(&data), "--w", "w1,w2", "--v", "v", "--y-min", &lo, "--y-max", &hi,
        "--seed", "11", "--n", "800", "--json", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    let psi = r["psi"].as_f64().unwrap();
    assert!((psi - direct.psi).abs() <= 1e-12 * direct.psi.abs().max(1.0), "{psi} vs {}", direct.psi);
    assert_eq!(r["iterations"].as_u64().unwrap() as usize, direct.iterations);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "w1,a,y\n0.1,1,0\n0.2,0,x\n").unwrap();
    let o = run(&["tmle-binary", "--data", s(&data), "--w", "w1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 3") && err.contains("`y`"), "{err}");

    let o = run(&["tmle-binary", "--data", s(&data), "--w", "w1"]);
    assert_eq!(o.status.code(), Some(2), "seed is required");

    let o = run(&["simulate", "--seed", "1", "--big-n", "1000", "--n", "500"]);
    assert_eq!(o.status.code(), Some(2), "n/N above the limit");
}

#[test]
fn validate_passes_and_catches_a_loose_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let quick = ["--rejective-draws", "20000", "--mc-draws", "300000"];
    let mut args = vec!["validate", "--json", s(&out)];
    args.extend(quick);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(json(&out)["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let mut args = vec!["validate", "--fluctuation-tol", "1e-1"];
    args.extend(quick);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL binary_fluctuation_grid"), "{stdout}");
}

#[test]
fn study_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("s{threads}.json"));
        let o = run(&[
            "simulate", "--seed", "5", "--big-n", "20000", "-B", "4", "--n", "500", "--dgp", "2", "--n0", "500",
            "--threads", threads, "--json", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn command_line_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset(&data, &logistic_world(6, 3000)).unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!("# sample run\ndata = {}\nw = w1\nv = v\nseed = 3\nn = 300\n", s(&data)),
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = run(&["sample", "--config", s(&cfg), "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 301);
    let o = run(&["sample", "--config", s(&cfg), "--n", "200", "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&b).unwrap().lines().count(), 201);

    std::fs::write(&cfg, "nonsense-key = 1\n").unwrap();
    let o = run(&["sample", "--config", s(&cfg), "--out", s(&b)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pilot_h_file_feeds_the_main_draw() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset(&data, &logistic_world(9, 8000)).unwrap();
    let h = dir.path().join("h.csv");
    let o = run(&[
        "pilot", "--data", s(&data), "--w", "w1", "--v", "v", "--exposure", "binary", "--seed", "1", "--n0", "400",
        "--h-out", s(&h),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&h).unwrap();
    assert!(text.starts_with("stratum,h\n"));
    let o = run(&[
        "tmle-binary", "--data", s(&data), "--w", "w1", "--v", "v", "--seed", "2", "--n", "500", "--h-file",
        s(&h),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
