//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! with status 1 if any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use surveytmle::data::{SamplingFunction, StratumId, WeightedSample};
use surveytmle::design::{
    exact_rejective_design, make_plan, pareto_sample, poisson_sample, rejective_sample, InclusionPlan,
};
use surveytmle::functional::{
    psi_c_least_squares, random_measure, remainder_b_closed, remainder_b_enumerated, remainder_c_closed,
    remainder_c_enumerated,
};
use surveytmle::glm::{expit, logistic_loss, logit};
use surveytmle::io::write_dataset;
use surveytmle::pilot::{run_pilot, PilotConfig};
use surveytmle::rng::{replicate_stream, stream, Purpose};
use surveytmle::sim::{generate_dataset, run_study, DgpSpec, HMode, StudyConfig, StudyMetrics};
use surveytmle::stats::chi_square_gof;
use surveytmle::tmle::binary::{estimate_binary_with, BinaryOverrides};
use surveytmle::tmle::{BinaryConfig, EstimatorKind, FnRegression};
use surveytmle::worlds::{logistic_g, logistic_psi, logistic_world, logistic_world_with};

// Pinned tolerances and sizes.
const C1_DRAWS: usize = 200_000;
const C1_MIN_P: f64 = 0.001;
const C1_SUM_TOL: f64 = 1e-10;
const C1_MAX_SECONDS: u64 = 30;
const C2_DRAWS: usize = 10_000;
const C2_SE_MULT: f64 = 3.0;
const C2_VAR_REL_TOL: f64 = 0.05;
const C3_SAMPLES: usize = 500;
const C3_SCORE_TOL: f64 = 1e-6;
const C3_T_TOL: f64 = 1e-4;
const C3_GRID_STEP: f64 = 1e-5;
const C4_REPLICATES: usize = 300;
const C4_N: usize = 5000;
const C4_SE_MULT: f64 = 3.0;
const C4_MAX_SECONDS: u64 = 300;
const STUDY_N: usize = 200_000;
const STUDY_B: usize = 200;
const STUDY_SEED: u64 = 20_240_601;
const C5_MIN_COVERAGE: f64 = 0.90;
const C5_MAX_SECONDS: u64 = 1200;
const C6_PILOTS: usize = 20;
const C6_H_TARGET: [f64; 3] = [4.66, 0.53, 0.09];
const C6_H_REL_TOL: f64 = 0.30;
const C6_MIN_RATIO: f64 = 2.0;
const C8_MEASURES: usize = 100;
const C8_TOL: f64 = 1e-10;

type Verdict = (bool, String);

fn main() {
    let criteria: Vec<(u8, &str, fn(&mut Studies) -> Verdict)> = vec![
        (1, "design correctness", c1_design),
        (2, "HT calibration", c2_calibration),
        (3, "binary score solving", c3_score),
        (4, "double robustness", c4_double_robust),
        (5, "continuous consistency", c5_consistency),
        (6, "optimal-design gain", c6_design_gain),
        (7, "conservative variance", c7_conservative),
        (8, "functional oracles", c8_functionals),
        (9, "determinism", c9_determinism),
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut studies = Studies::default();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = catch_unwind(AssertUnwindSafe(|| f(&mut studies)))
            .unwrap_or_else(|e| (false, format!("panicked: {}", panic_message(&e))));
        if !passed {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn within(elapsed: Duration, seconds: u64) -> bool {
    elapsed <= Duration::from_secs(seconds)
}

fn c1_design(_: &mut Studies) -> Verdict {
    let start = Instant::now();
    let p: Vec<f64> = [0.8, 0.6, 0.4, 0.3, 0.1].iter().map(|x| x * 2.0 / 2.2).collect();
    let exact = exact_rejective_design(&p, 2).unwrap();
    let plan = InclusionPlan::from_probabilities(p, 2).unwrap();
    let mut rng = stream(1, 0);
    let mut freq: HashMap<Vec<usize>, u64> = HashMap::new();
    for _ in 0..C1_DRAWS {
        let mut units = rejective_sample(&plan, &mut rng, 10_000).unwrap().units;
        units.sort_unstable();
        *freq.entry(units).or_default() += 1;
    }
    let observed: Vec<u64> = exact.subsets.iter().map(|(s, _)| freq.get(s).copied().unwrap_or(0)).collect();
    let probs: Vec<f64> = exact.subsets.iter().map(|(_, w)| *w).collect();
    let gof = chi_square_gof(&observed, &probs).unwrap();
    let stray = C1_DRAWS as u64 - observed.iter().sum::<u64>();
    let sum_err = (exact.inclusion.iter().sum::<f64>() - 2.0).abs();
    let elapsed = start.elapsed();
    (
        gof.p_value > C1_MIN_P && stray == 0 && sum_err <= C1_SUM_TOL && within(elapsed, C1_MAX_SECONDS),
        format!(
            "chi2 p = {:.4} (> {C1_MIN_P}), |sum pi - 2| = {sum_err:.1e}, limit {C1_MAX_SECONDS} s",
            gof.p_value
        ),
    )
}

fn c2_calibration(_: &mut Studies) -> Verdict {
    // Unit mass under h = 1 for both fixed-size designs and several (N, n).
    let mut exact = true;
    for (big_n, n) in [(1000, 100), (10_000, 500), (4321, 123), (777, 7)] {
        let ds = logistic_world(big_n as u64, big_n);
        let plan = make_plan(&ds, &SamplingFunction::uniform(2), n).unwrap();
        let mut rng = stream(2, big_n as u64);
        for k in 0..200 {
            let d = if k % 2 == 0 {
                rejective_sample(&plan, &mut rng, 10_000).unwrap()
            } else {
                pareto_sample(&plan, &mut rng)
            };
            exact &= WeightedSample::new(&ds, d).unwrap().ht_mass() == 1.0;
        }
    }

    let ds = logistic_world(21, 2000);
    let h = SamplingFunction::new(vec![0.5, 1.5]).unwrap().normalized(&ds);
    let plan = make_plan(&ds, &h, 200).unwrap();
    let f = |w: f64, y: f64| y + w;
    let target = ds.mean(|o| f(o.w[0], o.y));
    let big_n = ds.len() as f64;
    let pi = plan.probabilities();
    let var_identity: f64 = ds
        .iter()
        .zip(pi)
        .map(|(o, &p)| f(o.w[0], o.y).powi(2) * (1.0 - p) / p)
        .sum::<f64>()
        / (big_n * big_n);
    let mut rng = stream(3, 0);
    let est: Vec<f64> = (0..C2_DRAWS)
        .map(|_| {
            let s = WeightedSample::new(&ds, poisson_sample(&plan, &mut rng)).unwrap();
            s.ht_integral(|o| f(o.w[0], o.y))
        })
        .collect();
    let m = est.len() as f64;
    let mean = est.iter().sum::<f64>() / m;
    let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    let rel = (var / var_identity - 1.0).abs();
    (
        exact && (mean - target).abs() < C2_SE_MULT * se && rel <= C2_VAR_REL_TOL,
        format!(
            "unit mass exact: {exact}; |mean - P_N f| = {:.2e} ({:.2} SE); variance vs identity off by {:.1}%",
            (mean - target).abs(),
            (mean - target).abs() / se,
            100.0 * rel
        ),
    )
}

fn grid_minimum(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let argmin = |ts: Vec<f64>| -> f64 {
        ts.into_iter()
            .map(|t| (f(t), t))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1
    };
    let coarse_step = 1e-3;
    let m = ((hi - lo) / coarse_step).round() as i64;
    let coarse = argmin((0..=m).map(|i| lo + i as f64 * coarse_step).collect());
    let k = (coarse_step / C3_GRID_STEP).round() as i64;
    argmin((-k..=k).map(|i| coarse + i as f64 * C3_GRID_STEP).collect())
}

fn c3_score(_: &mut Studies) -> Verdict {
    let mut worst_score = 0.0f64;
    let mut worst_t = 0.0f64;
    for k in 0..C3_SAMPLES as u64 {
        let ds = logistic_world(1000 + k, 10_000);
        let mut rng = stream(4, k);
        let raw: Vec<f64> = (0..2).map(|_| 0.3 + 1.4 * rand::Rng::random::<f64>(&mut rng)).collect();
        let h = SamplingFunction::new(raw).unwrap().normalized(&ds);
        let plan = make_plan(&ds, &h, 500).unwrap();
        let s = WeightedSample::new(&ds, rejective_sample(&plan, &mut rng, 10_000).unwrap()).unwrap();
        let est = estimate_binary_with(&s, &h, &BinaryConfig::default(), BinaryOverrides::default()).unwrap();
        worst_score = worst_score.max(est.report.score_residual.abs());
        // Logistic submodel through the initial fit: logit Q(t) = logit Q + t H.
        let nu = &est.nuisance;
        let rows: Vec<(f64, f64, f64, f64)> = s
            .iter()
            .zip(s.ht_weights())
            .map(|(o, w)| (logit(nu.q_initial(o.a, o.w, o.v)), nu.clever(o.a, o.w, o.v), o.y, w))
            .collect();
        let risk = |t: f64| -> f64 {
            rows.iter()
                .map(|&(off, hh, y, w)| w * logistic_loss(y, expit(off + t * hh)))
                .sum()
        };
        let t_grid = grid_minimum(risk, -3.0, 3.0);
        worst_t = worst_t.max((t_grid - est.fluctuation.t).abs());
    }
    (
        worst_score <= C3_SCORE_TOL && worst_t < C3_T_TOL,
        format!("max |P^p D| = {worst_score:.1e}, max |t - grid| = {worst_t:.1e} over {C3_SAMPLES} samples"),
    )
}

fn c4_double_robust(_: &mut Studies) -> Verdict {
    let start = Instant::now();
    let psi0 = logistic_psi();
    let errors: Vec<f64> = (0..C4_REPLICATES as u64)
        .map(|r| {
            let ds = logistic_world_with(5000 + r, 50_000, 2, |w, _| StratumId::from(w > 0.0));
            let h = SamplingFunction::new(vec![0.6, 1.4]).unwrap().normalized(&ds);
            let plan = make_plan(&ds, &h, C4_N).unwrap();
            let mut rng = stream(5, r);
            let s = WeightedSample::new(&ds, rejective_sample(&plan, &mut rng, 10_000).unwrap()).unwrap();
            let overrides = BinaryOverrides {
                q: Some(Box::new(FnRegression(|a: f64, _: &[f64], _| expit(0.1 + 0.3 * a)))),
                g: Some(Box::new(FnRegression(|_: f64, w: &[f64], _| logistic_g(w[0])))),
            };
            let est = estimate_binary_with(&s, &h, &BinaryConfig::default(), overrides).unwrap();
            est.report.psi - psi0
        })
        .collect();
    let m = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / m;
    let sd = (errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let se = sd / m.sqrt();
    let elapsed = start.elapsed();
    (
        bias.abs() <= C4_SE_MULT * se && within(elapsed, C4_MAX_SECONDS),
        format!(
            "bias {bias:.5} ({:.2} SE, psi0 = {psi0:.5}), limit {C4_MAX_SECONDS} s",
            bias.abs() / se
        ),
    )
}

/// Studies shared by criteria 5, 6 and 7, run on first use.
#[derive(Default)]
struct Studies {
    j2: Option<(StudyMetrics, Duration)>,
    j3: Option<StudyMetrics>,
}

impl Studies {
    fn j2(&mut self) -> &(StudyMetrics, Duration) {
        self.j2.get_or_insert_with(|| {
            let start = Instant::now();
            let cfg = StudyConfig {
                big_n: STUDY_N,
                replicates: STUDY_B,
                n_grid: vec![500, 2000],
                dgps: vec![2],
                h_modes: vec![HMode::Uniform],
                seed: STUDY_SEED,
                ..StudyConfig::default()
            };
            let m = run_study(&cfg).unwrap();
            (m, start.elapsed())
        })
    }

    fn j3(&mut self) -> &StudyMetrics {
        self.j3.get_or_insert_with(|| {
            let cfg = StudyConfig {
                big_n: STUDY_N,
                replicates: STUDY_B,
                n_grid: vec![1000],
                dgps: vec![3],
                h_modes: vec![HMode::Pilot, HMode::Uniform],
                seed: STUDY_SEED,
                ..StudyConfig::default()
            };
            run_study(&cfg).unwrap()
        })
    }
}

fn c5_consistency(st: &mut Studies) -> Verdict {
    let (m, elapsed) = st.j2();
    let small = m.arm(2, HMode::Uniform, 500).unwrap();
    let large = m.arm(2, HMode::Uniform, 2000).unwrap();
    let ok = large.bias < small.bias
        && small.coverage >= C5_MIN_COVERAGE
        && large.coverage >= C5_MIN_COVERAGE
        && within(*elapsed, C5_MAX_SECONDS);
    (
        ok,
        format!(
            "b. {:.4} (n=500) -> {:.4} (n=2000), mean error {:.5} -> {:.5}, coverage {:.3} / {:.3}, {:.1} s",
            small.bias,
            large.bias,
            small.mean_error,
            large.mean_error,
            small.coverage,
            large.coverage,
            elapsed.as_secs_f64()
        ),
    )
}

fn c6_design_gain(st: &mut Studies) -> Verdict {
    let spec = DgpSpec::new(3).unwrap();
    let base = StudyConfig::default();
    let mut hs: Vec<Vec<f64>> = Vec::new();
    for r in 0..C6_PILOTS as u64 {
        let ds = generate_dataset(&spec, STUDY_N, &mut replicate_stream(STUDY_SEED + 1, r, Purpose::Data, 3)).unwrap();
        let mut cfg = PilotConfig::new(base.n0, EstimatorKind::Continuous);
        cfg.continuous = base.continuous.clone();
        cfg.floor = base.floor;
        let res = run_pilot(&ds, &cfg, &mut replicate_stream(STUDY_SEED + 1, r, Purpose::Pilot, 3)).unwrap();
        hs.push(res.h_opt.values().to_vec());
    }
    let median: Vec<f64> = (0..3)
        .map(|v| {
            let mut col: Vec<f64> = hs.iter().map(|h| h[v]).collect();
            col.sort_unstable_by(f64::total_cmp);
            0.5 * (col[col.len() / 2 - 1] + col[col.len() / 2])
        })
        .collect();
    let range: Vec<String> = (0..3)
        .map(|v| {
            let col = hs.iter().map(|h| h[v]);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            format!("{lo:.2}..{hi:.2}")
        })
        .collect();
    let h_ok: Vec<bool> = median
        .iter()
        .zip(C6_H_TARGET)
        .map(|(h, t)| (h - t).abs() <= C6_H_REL_TOL * t)
        .collect();
    let m = st.j3();
    let pilot = m.arm(3, HMode::Pilot, 1000).unwrap();
    let uniform = m.arm(3, HMode::Uniform, 1000).unwrap();
    let ratio = uniform.n_var / pilot.n_var;
    (
        h_ok.iter().all(|&b| b) && ratio >= C6_MIN_RATIO,
        format!(
            "median h = [{:.3}, {:.3}, {:.3}] (range {range:?}) vs {C6_H_TARGET:?} within {:.0}%: {h_ok:?}; variance ratio {ratio:.2} (>= {C6_MIN_RATIO})",
            median[0],
            median[1],
            median[2],
            100.0 * C6_H_REL_TOL
        ),
    )
}

fn c7_conservative(st: &mut Studies) -> Verdict {
    let mut arms = st.j2().0.arms.clone();
    arms.extend(st.j3().arms.iter().cloned());
    let bad: Vec<String> = arms
        .iter()
        .filter(|a| a.mean_sigma_n < a.n_var)
        .map(|a| format!("j={} {} n={}", a.j, a.h_mode, a.n))
        .collect();
    let summary: Vec<String> = arms
        .iter()
        .map(|a| format!("j={} {} n={}: e.v. {:.1} vs v. {:.1}", a.j, a.h_mode, a.n, a.mean_sigma_n, a.n_var))
        .collect();
    (bad.is_empty(), format!("{}; violations: {bad:?}", summary.join(", ")))
}

fn c8_functionals(_: &mut Studies) -> Verdict {
    let mut rng = stream(8, 0);
    let (mut ratio, mut rem_b, mut rem_c) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..C8_MEASURES {
        let p = random_measure(&mut rng, &[0.0, 1.0], &[0.0, 0.5, 2.0]);
        ratio = ratio.max((p.psi_c().unwrap() - psi_c_least_squares(&p).unwrap()).abs());
        // Six atoms each: 3 contexts x 2 exposures, and 2 contexts x 3 exposures.
        let p = random_measure(&mut rng, &[0.0, 1.0, 2.0], &[0.0, 1.0]);
        let q = random_measure(&mut rng, &[0.0, 1.0, 2.0], &[0.0, 1.0]);
        rem_b = rem_b.max((remainder_b_enumerated(&p, &q).unwrap() - remainder_b_closed(&p, &q).unwrap()).abs());
        let p = random_measure(&mut rng, &[0.0, 1.0], &[0.0, 0.7, 1.9]);
        let q = random_measure(&mut rng, &[0.0, 1.0], &[0.0, 0.7, 1.9]);
        rem_c = rem_c.max((remainder_c_enumerated(&p, &q).unwrap() - remainder_c_closed(&p, &q).unwrap()).abs());
    }
    (
        ratio <= C8_TOL && rem_b <= C8_TOL && rem_c <= C8_TOL,
        format!("ratio vs least squares {ratio:.1e}, binary remainder {rem_b:.1e}, continuous remainder {rem_c:.1e}"),
    )
}

fn cli(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_surveytmle"))
        .args(args)
        .args(["--log", "warn"])
        .output()
        .expect("binary runs");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn c9_determinism(_: &mut Studies) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bin = d.join("bin.csv");
    write_dataset(&bin, &logistic_world(31, 20_000)).unwrap();
    let spec = DgpSpec::new(1).unwrap();
    let cont = d.join("cont.csv");
    write_dataset(&cont, &generate_dataset(&spec, 20_000, &mut stream(32, 0)).unwrap()).unwrap();
    let (lo, hi) = (spec.y_range[0].to_string(), spec.y_range[1].to_string());
    let p = |name: &str, run: &str| d.join(format!("{run}-{name}")).to_str().unwrap().to_string();

    let runs = [("a", "1"), ("b", "3"), ("c", "1")];
    let names = [
        "sample.csv", "h.csv", "pilot.json", "tb.json", "tb-nu.csv", "tc.json", "tc-nu.csv", "sim.json", "sim.csv",
        "val.json",
    ];
    for (run, threads) in runs {
        let t = ["--threads", threads];
        let bin_args = ["--data", bin.to_str().unwrap(), "--w", "w1", "--v", "v"];
        let cont_args = [
            "--data", cont.to_str().unwrap(), "--w", "w1,w2", "--v", "v", "--y-min", &lo, "--y-max", &hi,
        ];
        cli(&[&["sample"][..], &bin_args, &t, &["--seed", "7", "--n", "400", "--out", &p("sample.csv", run)]].concat());
        cli(&[
            &["pilot"][..],
            &cont_args,
            &t,
            &["--exposure", "continuous", "--seed", "7", "--n0", "500", "--h-out", &p("h.csv", run)],
            &["--json", &p("pilot.json", run)],
        ]
        .concat());
        cli(&[
            &["tmle-binary"][..],
            &bin_args,
            &t,
            &["--seed", "7", "--n", "800", "--json", &p("tb.json", run), "--dump-nuisances", &p("tb-nu.csv", run)],
        ]
        .concat());
        cli(&[
            &["tmle-continuous"][..],
            &cont_args,
            &t,
            &["--seed", "7", "--n", "800", "--h-file", &p("h.csv", run), "--mc-mode", "--mc-B", "20000"],
            &["--json", &p("tc.json", run), "--dump-nuisances", &p("tc-nu.csv", run)],
        ]
        .concat());
        cli(&[
            &["simulate"][..],
            &t,
            &["--seed", "7", "--big-n", "20000", "-B", "6", "--n", "500", "--dgp", "1,3", "--n0", "500"],
            &["--json", &p("sim.json", run), "--csv", &p("sim.csv", run)],
        ]
        .concat());
        cli(&[
            &["validate"][..],
            &t,
            &["--rejective-draws", "20000", "--mc-draws", "200000", "--json", &p("val.json", run)],
        ]
        .concat());
    }
    let read = |f: &str| std::fs::read(Path::new(f)).unwrap();
    let differing: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| runs.iter().any(|(r, _)| read(&p(n, r)) != read(&p(n, "a"))))
        .collect();
    (
        differing.is_empty(),
        format!(
            "{} output files from 6 commands compared across --threads 1, 3, 1; differing: {differing:?}",
            names.len()
        ),
    )
}
