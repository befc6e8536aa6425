use std::io::Write;
use std::path::Path;

use surveytmle::data::{Dataset, OutcomeRange, OutcomeScale, SamplingFunction, WeightedSample};
use surveytmle::design::{draw_fixed_size, make_plan, FixedSizeDesign};
use surveytmle::io::{self, ExposureType, Schema};
use surveytmle::pilot::{run_pilot, PilotConfig};
use surveytmle::rng::{replicate_stream, Purpose};
use surveytmle::sim::{run_study, HMode, StudyConfig};
use surveytmle::tmle::binary::{estimate_binary_with, BinaryEstimate};
use surveytmle::tmle::continuous::{estimate_continuous_with, ContinuousEstimate, Evaluation};
use surveytmle::tmle::{BinaryConfig, ContinuousConfig, EstimatorKind, TmleReport};
use surveytmle::validate::{run_validation, ValidateConfig};
use surveytmle::{Error, Result};

use crate::args::{
    ContinuousArgs, DataArgs, DesignArg, DrawArgs, ExposureArg, HModeArg, PilotArgs, SampleArgs, SimulateArgs,
    TmleArgs, ValidateArgs,
};
use crate::Outcome;

impl From<DesignArg> for FixedSizeDesign {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Rejective => FixedSizeDesign::Rejective,
            DesignArg::Pareto => FixedSizeDesign::Pareto,
        }
    }
}

fn design_name(d: FixedSizeDesign) -> &'static str {
    match d {
        FixedSizeDesign::Rejective => "rejective",
        FixedSizeDesign::Pareto => "pareto",
    }
}

fn load(data: &DataArgs, exposure: ExposureArg) -> Result<Dataset> {
    let kind = match exposure {
        ExposureArg::Binary => ExposureType::Binary,
        ExposureArg::Continuous => ExposureType::Continuous,
    };
    let mut schema = Schema::new(data.w.clone(), &data.a, &data.y, data.v.as_deref(), kind);
    if let (Some(lo), Some(hi)) = (data.y_min, data.y_max) {
        schema.outcome = OutcomeRange::Fixed(OutcomeScale::new(lo, hi)?);
    }
    let ds = io::load_dataset(&data.data, &schema)?;
    if ds.clipped() > 0 {
        log::warn!("{} outcomes clipped to the declared range", ds.clipped());
    }
    Ok(ds)
}

fn h_summary(ds: &Dataset, h: &SamplingFunction) -> String {
    ds.strata()
        .labels()
        .iter()
        .zip(h.values())
        .map(|(l, v)| format!("{l}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn draw<'d>(ds: &'d Dataset, args: &DrawArgs) -> Result<(SamplingFunction, WeightedSample<'d>)> {
    let h = match &args.h_file {
        Some(path) => {
            let raw = io::read_h_file(path, ds.strata())?;
            let mean = raw.mean_over(ds);
            if (mean - 1.0).abs() > 1e-9 {
                log::info!("h has mean {mean:.6} over the data; rescaled to 1");
            }
            raw.normalized(ds)
        }
        None => SamplingFunction::uniform(ds.strata().len()),
    };
    let sample = match args.n {
        None => {
            log::info!("seed {}, design census, n = N = {}", args.seed, ds.len());
            WeightedSample::census(ds)
        }
        Some(n) => {
            let plan = make_plan(ds, &h, n)?;
            let mut rng = replicate_stream(args.seed, 0, Purpose::MainDraw, 0);
            let d = draw_fixed_size(&plan, args.design.into(), &mut rng, args.max_attempts);
            let s = WeightedSample::new(ds, d)?;
            log::info!(
                "seed {}, design {}, n = {}, N = {}, h: {}, d_N = {:.1}, clipped p: {}",
                args.seed,
                s.design(),
                s.len(),
                ds.len(),
                h_summary(ds, &h),
                plan.d_n(),
                plan.clipped()
            );
            s
        }
    };
    Ok((h, sample))
}

fn emit_report(report: &TmleReport, json: Option<&Path>) -> Result<Outcome> {
    print!("{}", io::report_table(report));
    if let Some(p) = json {
        io::write_json(p, report)?;
    }
    if report.converged {
        Ok(Outcome::Ok)
    } else {
        log::error!("targeting did not converge ({:?})", report.stop_reason);
        Ok(Outcome::NotConverged)
    }
}

pub fn sample(a: SampleArgs) -> Result<Outcome> {
    let ds = load(&a.data, a.exposure)?;
    if a.draw.n.is_none() {
        return Err(Error::InvalidInput("--n is required for sample".into()));
    }
    let (_, s) = draw(&ds, &a.draw)?;
    match &a.out {
        Some(p) => io::write_sample(p, &s)?,
        None => io::write_sample_to(std::io::stdout().lock(), &s)?,
    }
    Ok(Outcome::Ok)
}

pub fn pilot(a: PilotArgs) -> Result<Outcome> {
    let kind = match a.exposure {
        ExposureArg::Binary => EstimatorKind::Binary,
        ExposureArg::Continuous => EstimatorKind::Continuous,
    };
    let ds = load(&a.data, a.exposure)?;
    let mut cfg = PilotConfig::new(a.n0, kind);
    cfg.floor = a.floor;
    cfg.design = a.design.into();
    cfg.binary.g_min = a.g_min;
    cfg.continuous.g_min = a.g_min;
    let mut rng = replicate_stream(a.seed, 0, Purpose::Pilot, 0);
    log::info!("seed {}, design {}, n0 = {}, N = {}", a.seed, design_name(cfg.design), a.n0, ds.len());
    let r = run_pilot(&ds, &cfg, &mut rng)?;
    log::info!("pilot estimate {:.6}; optimized h: {}", r.report.psi, h_summary(&ds, &r.h_opt));
    match &a.h_out {
        Some(p) => io::write_h_file(p, ds.strata(), &r.h_opt)?,
        None => io::write_h_to(std::io::stdout().lock(), ds.strata(), &r.h_opt)?,
    }
    if let Some(p) = &a.json {
        io::write_json(p, &r)?;
    }
    Ok(Outcome::Ok)
}

fn dump_binary(path: &Path, s: &WeightedSample<'_>, est: &BinaryEstimate) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let nu = &est.nuisance;
    let psi = est.report.psi_scaled;
    writeln_csv(&mut wtr, &["unit", "a", "y", "v", "q_initial", "q1_star", "q0_star", "g1", "d"])?;
    for (k, o) in s.iter().enumerate() {
        let mut rec = vec![s.units()[k].to_string()];
        let row = [
            o.a,
            o.y,
            nu.q_initial(o.a, o.w, o.v),
            nu.q_star(1.0, o.w, o.v),
            nu.q_star(0.0, o.w, o.v),
            nu.g_of(1.0, o.w, o.v),
            surveytmle::tmle::influence_b(nu, psi, o),
        ];
        rec.extend(row.map(|x| format!("{x:?}")));
        rec.insert(3, s.dataset().strata().label(o.v).to_string());
        writeln_csv(&mut wtr, &rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn dump_continuous(path: &Path, s: &WeightedSample<'_>, est: &ContinuousEstimate) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let nu = &est.nuisance;
    writeln_csv(
        &mut wtr,
        &["unit", "a", "y", "v", "q_a", "q_0", "mu", "g0", "ratio_weight", "likelihood_ratio", "d1", "d2"],
    )?;
    for (k, o) in s.iter().enumerate() {
        let (qa, q0) = nu.q.eval_pair(o.a, o.w, o.v);
        let (d1, d2) = nu.influence_parts(o);
        let mut rec = vec![s.units()[k].to_string()];
        let row = [
            o.a,
            o.y,
            qa,
            q0,
            nu.mu.eval(0.0, o.w, o.v),
            nu.g0_of(o.w, o.v),
            nu.ratio_weights[k],
            nu.likelihood_ratio[k],
            d1,
            d2,
        ];
        rec.extend(row.map(|x| format!("{x:?}")));
        rec.insert(3, s.dataset().strata().label(o.v).to_string());
        writeln_csv(&mut wtr, &rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn writeln_csv<W: Write, S: AsRef<[u8]>>(wtr: &mut csv::Writer<W>, rec: &[S]) -> Result<()> {
    wtr.write_record(rec).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn tmle_binary(a: TmleArgs) -> Result<Outcome> {
    let ds = load(&a.data, ExposureArg::Binary)?;
    let (h, s) = draw(&ds, &a.draw)?;
    let cfg = BinaryConfig {
        alpha: a.alpha,
        g_min: a.g_min,
        ..BinaryConfig::default()
    };
    let est = estimate_binary_with(&s, &h, &cfg, Default::default())?;
    if let Some(p) = &a.dump_nuisances {
        dump_binary(p, &s, &est)?;
    }
    emit_report(&est.report, a.json.as_deref())
}

pub fn tmle_continuous(a: ContinuousArgs) -> Result<Outcome> {
    let t = &a.tmle;
    let ds = load(&t.data, ExposureArg::Continuous)?;
    let (h, s) = draw(&ds, &t.draw)?;
    let cfg = ContinuousConfig {
        alpha: t.alpha,
        g_min: t.g_min,
        max_iter: a.max_iter,
        evaluation: if a.mc_mode {
            Evaluation::MonteCarlo {
                draws: a.mc_b,
                seed: t.draw.seed,
            }
        } else {
            Evaluation::Atoms
        },
        ..ContinuousConfig::default()
    };
    let est = estimate_continuous_with(&s, &h, &cfg, Default::default())?;
    if let Some(p) = &t.dump_nuisances {
        dump_continuous(p, &s, &est)?;
    }
    emit_report(&est.report, t.json.as_deref())
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let cfg = StudyConfig {
        big_n: a.big_n,
        replicates: a.replicates,
        n_grid: a.n.clone(),
        dgps: a.dgp.clone(),
        h_modes: a
            .h_modes
            .iter()
            .map(|m| match m {
                HModeArg::Pilot => HMode::Pilot,
                HModeArg::Uniform => HMode::Uniform,
            })
            .collect(),
        n0: a.n0,
        floor: a.floor,
        seed: a.seed,
        design: a.design.into(),
        allow_large_fraction: a.allow_large_fraction,
        ..StudyConfig::default()
    };
    cfg.validate()?;
    log::info!(
        "seed {}, design {}, n {:?}, N = {}, B = {}, h {:?}, threads {}",
        cfg.seed,
        design_name(cfg.design),
        cfg.n_grid,
        cfg.big_n,
        cfg.replicates,
        cfg.h_modes,
        rayon::current_num_threads()
    );
    let m = run_study(&cfg)?;
    print!("{}", io::study_table(&m));
    if let Some(p) = &a.json {
        io::write_json(p, &m)?;
    }
    if let Some(p) = &a.csv {
        io::write_study_csv(p, &m)?;
    }
    Ok(Outcome::Ok)
}

pub fn validate(a: ValidateArgs) -> Result<Outcome> {
    let mut cfg = ValidateConfig {
        seed: a.seed,
        rejective_draws: a.rejective_draws,
        mc_draws: a.mc_draws,
        ..ValidateConfig::default()
    };
    if let Some(t) = a.fluctuation_tol {
        cfg.fluctuation_tol = t;
    }
    let r = run_validation(&cfg);
    let width = r.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &r.checks {
        println!("{} {:<width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(p) = &a.json {
        io::write_json(p, &r)?;
    }
    Ok(if r.all_passed() {
        Outcome::Ok
    } else {
        Outcome::OracleFailure
    })
}
