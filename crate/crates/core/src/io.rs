//! CSV ingestion, h-files, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::data::{Dataset, ExposureKind, OutcomeRange, SamplingFunction, StratumDomain, WeightedSample};
use crate::error::{Error, Result};
use crate::sim::StudyMetrics;
use crate::tmle::TmleReport;

/// How the exposure column is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureType {
    Binary,
    /// Range for `μ` taken from the data.
    Continuous,
}

/// Column layout of an input CSV.
#[derive(Debug, Clone)]
pub struct Schema {
    pub w: Vec<String>,
    pub a: String,
    pub y: String,
    /// Stratum column; a single stratum when absent.
    pub v: Option<String>,
    pub exposure: ExposureType,
    pub outcome: OutcomeRange,
}

impl Schema {
    pub fn new(w: Vec<String>, a: &str, y: &str, v: Option<&str>, exposure: ExposureType) -> Self {
        Self {
            w,
            a: a.to_string(),
            y: y.to_string(),
            v: v.map(str::to_string),
            exposure,
            outcome: OutcomeRange::FromData,
        }
    }
}

fn csv_error(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Sorts labels numerically when they all parse as numbers.
fn sort_labels(labels: &mut [String]) {
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        labels.sort();
    }
}

/// Reads a data set. Rows are reported by their line number in the file,
/// the header being line 1.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, "", e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(path, 1, "", e.to_string()))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(path, 1, name, "missing column"))
    };
    let w_idx: Vec<usize> = schema.w.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let a_idx = find(&schema.a)?;
    let y_idx = find(&schema.y)?;
    let v_idx = schema.v.as_deref().map(find).transpose()?;

    let mut rows: Vec<(Vec<f64>, f64, f64, String)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_error(path, line, "", e.to_string()))?;
        let num = |idx: usize, name: &str| -> Result<f64> {
            let cell = rec.get(idx).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(csv_error(path, line, name, format!("expected a number, found `{cell}`"))),
            }
        };
        let w = w_idx
            .iter()
            .zip(&schema.w)
            .map(|(&i, name)| num(i, name))
            .collect::<Result<Vec<_>>>()?;
        let a = num(a_idx, &schema.a)?;
        if schema.exposure == ExposureType::Binary && a != 0.0 && a != 1.0 {
            return Err(csv_error(path, line, &schema.a, format!("binary exposure must be 0 or 1, found {a}")));
        }
        if schema.exposure == ExposureType::Continuous && a < 0.0 {
            return Err(csv_error(path, line, &schema.a, format!("exposure must be non-negative, found {a}")));
        }
        let y = num(y_idx, &schema.y)?;
        let v = match v_idx {
            Some(i) => {
                let cell = rec.get(i).unwrap_or("");
                if cell.is_empty() {
                    return Err(csv_error(path, line, schema.v.as_deref().unwrap_or(""), "empty stratum label"));
                }
                cell.to_string()
            }
            None => String::new(),
        };
        rows.push((w, a, y, v));
    }
    if rows.is_empty() {
        return Err(csv_error(path, 1, "", "file has no data rows"));
    }

    let strata = match &schema.v {
        Some(_) => {
            let mut labels: Vec<String> = rows.iter().map(|r| r.3.clone()).collect();
            sort_labels(&mut labels);
            labels.dedup();
            StratumDomain::new(labels)?
        }
        None => StratumDomain::single(),
    };
    let exposure = match schema.exposure {
        ExposureType::Binary => ExposureKind::Binary,
        ExposureType::Continuous => {
            let lo = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.1));
            let hi = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.1));
            ExposureKind::Continuous { lo, hi }
        }
    };
    let mut b = Dataset::builder(schema.w.len(), exposure, strata.clone()).with_capacity(rows.len());
    for (w, a, y, v) in &rows {
        let id = if schema.v.is_some() {
            strata.id_of(v).expect("label collected above")
        } else {
            0
        };
        b.push_parts(w, *a, *y, id)?;
    }
    let ds = b.build(schema.outcome)?;
    log::info!(
        "loaded {} rows from {}; stratum counts {:?}",
        ds.len(),
        path.display(),
        strata.labels().iter().zip(ds.stratum_counts()).collect::<Vec<_>>()
    );
    Ok(ds)
}

/// Writes a data set in the layout `w1..wd, a, y, v` on the original outcome scale.
pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, "", e.to_string()))?;
    let mut header: Vec<String> = (1..=ds.w_dim()).map(|k| format!("w{k}")).collect();
    header.extend(["a", "y", "v"].map(String::from));
    wtr.write_record(&header).map_err(|e| csv_error(path, 1, "", e.to_string()))?;
    for i in 0..ds.len() {
        let o = ds.obs(i);
        let mut rec: Vec<String> = o.w.iter().map(|x| format!("{x:?}")).collect();
        rec.push(format!("{:?}", o.a));
        rec.push(format!("{:?}", ds.y_original(i)));
        rec.push(ds.strata().label(o.v).to_string());
        wtr.write_record(&rec).map_err(|e| csv_error(path, i + 2, "", e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a two-column `stratum,h` file. Every stratum of `strata` must appear once.
pub fn read_h_file(path: impl AsRef<Path>, strata: &StratumDomain) -> Result<SamplingFunction> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, "", e.to_string()))?;
    let mut values = vec![f64::NAN; strata.len()];
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_error(path, line, "", e.to_string()))?;
        let label = rec.get(0).unwrap_or("");
        let id = strata
            .id_of(label)
            .ok_or_else(|| csv_error(path, line, "stratum", format!("unknown stratum `{label}`")))?;
        let cell = rec.get(1).unwrap_or("");
        let h: f64 = cell
            .parse()
            .map_err(|_| csv_error(path, line, "h", format!("expected a number, found `{cell}`")))?;
        if !values[id as usize].is_nan() {
            return Err(csv_error(path, line, "stratum", format!("stratum `{label}` listed twice")));
        }
        values[id as usize] = h;
    }
    if let Some(missing) = values.iter().position(|h| h.is_nan()) {
        return Err(csv_error(
            path,
            0,
            "stratum",
            format!("no value for stratum `{}`", strata.label(missing as u32)),
        ));
    }
    for (i, &h) in values.iter().enumerate() {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::NonPositiveSamplingFunction {
                stratum: strata.label(i as u32).to_string(),
                value: h,
            });
        }
    }
    SamplingFunction::new(values)
}

pub fn write_h_file(path: impl AsRef<Path>, strata: &StratumDomain, h: &SamplingFunction) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)?;
    write_h_to(file, strata, h).map_err(|e| relocate(e, path))
}

pub fn write_h_to<W: std::io::Write>(out: W, strata: &StratumDomain, h: &SamplingFunction) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["stratum", "h"]).map_err(stream_error)?;
    for (i, label) in strata.labels().iter().enumerate() {
        wtr.write_record([label.clone(), format!("{:?}", h.values()[i])])
            .map_err(stream_error)?;
    }
    wtr.flush()?;
    Ok(())
}

fn stream_error(e: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        row: 0,
        column: String::new(),
        message: e.to_string(),
    }
}

fn relocate(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv { row, column, message, .. } => Error::Csv {
            path: path.display().to_string(),
            row,
            column,
            message,
        },
        e => e,
    }
}

/// Writes `unit,p,weight` for every selected unit; `weight = 1/(N p)`.
pub fn write_sample(path: impl AsRef<Path>, sample: &WeightedSample<'_>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)?;
    write_sample_to(file, sample).map_err(|e| relocate(e, path))
}

pub fn write_sample_to<W: std::io::Write>(out: W, sample: &WeightedSample<'_>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["unit", "p", "weight"]).map_err(stream_error)?;
    for ((unit, p), w) in sample.units().iter().zip(sample.probabilities()).zip(sample.ht_weights()) {
        wtr.write_record([unit.to_string(), format!("{p:?}"), format!("{w:?}")])
            .map_err(stream_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = to_json(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Aligned text rendering of a TMLE report.
pub fn report_table(r: &TmleReport) -> String {
    let level = format!("{}% CI", fmt_level(r.ci_level()));
    let mut rows: Vec<(String, String)> = vec![
        ("estimator".into(), r.estimator.to_string()),
        ("psi".into(), format!("{:.6}", r.psi)),
        (level, format!("[{:.6}, {:.6}]", r.ci[0], r.ci[1])),
        ("sigma_n".into(), format!("{:.6}", r.sigma_n)),
        ("gamma_n".into(), format!("{:.6}", r.gamma_n)),
        ("score".into(), format!("{:.3e}", r.score_residual)),
        ("n".into(), r.n.to_string()),
        ("N".into(), r.big_n.to_string()),
        ("design".into(), format!("{:?}", r.design).to_lowercase()),
        ("iterations".into(), r.iterations.to_string()),
        ("stop".into(), format!("{:?}", r.stop_reason)),
    ];
    for w in &r.warnings {
        rows.push(("warning".into(), w.clone()));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

fn fmt_level(level: f64) -> String {
    let pct = 100.0 * level;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct:.1}")
    }
}

/// One block per distribution and sampling function, one row per `n`.
pub fn study_table(m: &StudyMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "psi_0 = {}, N = {}, B = {}, seed = {}", m.psi_0, m.big_n, m.replicates, m.seed);
    let mut blocks: Vec<(u8, crate::sim::HMode)> = Vec::new();
    for a in &m.arms {
        if !blocks.contains(&(a.j, a.h_mode)) {
            blocks.push((a.j, a.h_mode));
        }
    }
    for (j, mode) in blocks {
        let _ = writeln!(out, "\nj = {j}, h = {mode}");
        let _ = writeln!(
            out,
            "{:>7} {:>8} {:>8} {:>7} {:>9} {:>9} {:>6}",
            "n", "b.", "JB p", "c.", "v.", "e.v.", "fail"
        );
        for a in m.arms.iter().filter(|a| a.j == j && a.h_mode == mode) {
            let _ = writeln!(
                out,
                "{:>7} {:>8.4} {:>8.3} {:>7.3} {:>9.3} {:>9.3} {:>6}",
                a.n, a.bias, a.jb_p_value, a.coverage, a.n_var, a.mean_sigma_n, a.failures
            );
        }
    }
    for p in &m.pilots {
        let _ = writeln!(out, "\npilot h (median), j = {}: {:.3?}", p.j, p.h_median);
    }
    out
}

/// One row per arm.
pub fn write_study_csv(path: impl AsRef<Path>, m: &StudyMetrics) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, "", e.to_string()))?;
    wtr.write_record([
        "j", "h_mode", "n", "bias", "mean_error", "jb_p_value", "coverage", "n_var", "mean_sigma_n", "replicates",
        "failures", "not_converged",
    ])
    .map_err(|e| csv_error(path, 1, "", e.to_string()))?;
    for (k, a) in m.arms.iter().enumerate() {
        wtr.write_record([
            a.j.to_string(),
            a.h_mode.to_string(),
            a.n.to_string(),
            format!("{:?}", a.bias),
            format!("{:?}", a.mean_error),
            format!("{:?}", a.jb_p_value),
            format!("{:?}", a.coverage),
            format!("{:?}", a.n_var),
            format!("{:?}", a.mean_sigma_n),
            a.replicates.to_string(),
            a.failures.to_string(),
            a.not_converged.to_string(),
        ])
        .map_err(|e| csv_error(path, k + 2, "", e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected `key = value`", k + 1)))?;
        let key = key.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(Error::InvalidInput(format!("config line {}: empty key", k + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}
