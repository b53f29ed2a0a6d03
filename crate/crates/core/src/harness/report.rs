//! Experiment reports: per-instance records, box-plot summaries and file writers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::estimator::TraceRecord;

/// Whisker half-width in standard deviations.
pub const WHISKER_SD: f64 = 2.7;

/// Outcome of one estimator on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub omega_hat: Option<Vec<f64>>,
    /// Relative error per parameter.
    pub errors: Option<Vec<f64>>,
    pub prediction_error: Option<f64>,
    pub score: Option<f64>,
    pub n_ode_solves: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Excluded from `report.json` so that reports are byte-reproducible.
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip)]
    pub traces: Vec<Vec<TraceRecord>>,
}

impl MethodRecord {
    pub fn failed(method: &str, reason: String) -> Self {
        Self {
            method: method.to_string(),
            omega_hat: None,
            errors: None,
            prediction_error: None,
            score: None,
            n_ode_solves: 0,
            failure: Some(reason),
            wall_time: 0.0,
            traces: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Unique across the report; used for trace file names.
    pub index: usize,
    /// Repetition number within the group.
    pub instance: usize,
    pub group: String,
    pub seed: u64,
    pub omega_star: Vec<f64>,
    /// True values of parameters that are not estimated.
    pub known: BTreeMap<String, f64>,
    pub x0: Vec<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clipped_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub methods: Vec<MethodRecord>,
}

/// Box-plot statistics of one error population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub method: String,
    /// A parameter name, `overall` (all parameters pooled) or `prediction_error`.
    pub quantity: String,
    pub count: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub whisker_low: Option<f64>,
    pub whisker_high: Option<f64>,
    pub outliers: usize,
}

/// Median error of a baseline relative to the kernel grid method in the same group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRatio {
    pub group: String,
    pub method: String,
    pub reference: String,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub parameter_names: Vec<String>,
    pub records: Vec<InstanceRecord>,
    pub summary: Vec<SummaryRow>,
    pub ratios: Vec<MedianRatio>,
}

/// Quantile with linear interpolation between order statistics (`h = (n−1)p`).
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn describe(group: &str, method: &str, quantity: &str, values: &[f64]) -> SummaryRow {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let mut row = SummaryRow {
        group: group.to_string(),
        method: method.to_string(),
        quantity: quantity.to_string(),
        count: v.len(),
        median: None,
        q1: None,
        q3: None,
        mean: None,
        std: None,
        whisker_low: None,
        whisker_high: None,
        outliers: 0,
    };
    if v.is_empty() {
        return row;
    }
    let m = mean(&v).unwrap();
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (lo, hi) = (m - WHISKER_SD * sd, m + WHISKER_SD * sd);
    row.median = Some(quantile(&v, 0.5));
    row.q1 = Some(quantile(&v, 0.25));
    row.q3 = Some(quantile(&v, 0.75));
    row.mean = Some(m);
    row.std = Some(sd);
    row.whisker_low = Some(lo);
    row.whisker_high = Some(hi);
    row.outliers = v.iter().filter(|&&x| x < lo || x > hi).count();
    row
}

fn ordered_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Errors of `method` within `group`, one vector per successful instance.
pub fn errors_of<'a>(records: &'a [InstanceRecord], group: &'a str, method: &'a str) -> impl Iterator<Item = &'a MethodRecord> {
    records
        .iter()
        .filter(move |r| r.group == group)
        .flat_map(|r| r.methods.iter())
        .filter(move |m| m.method == method)
}

/// Summary rows for every (group, method, quantity), in order of first appearance.
pub fn summarize(records: &[InstanceRecord], parameter_names: &[String]) -> Vec<SummaryRow> {
    let groups = ordered_unique(records.iter().map(|r| r.group.as_str()));
    let methods = ordered_unique(records.iter().flat_map(|r| r.methods.iter().map(|m| m.method.as_str())));
    let mut rows = Vec::new();
    for g in &groups {
        for m in &methods {
            let errs: Vec<&Vec<f64>> = errors_of(records, g, m).filter_map(|r| r.errors.as_ref()).collect();
            for (j, name) in parameter_names.iter().enumerate() {
                let col: Vec<f64> = errs.iter().map(|e| e[j]).collect();
                rows.push(describe(g, m, name, &col));
            }
            let pooled: Vec<f64> = errs.iter().flat_map(|e| e.iter().copied()).collect();
            rows.push(describe(g, m, "overall", &pooled));
            let pred: Vec<f64> = errors_of(records, g, m).filter_map(|r| r.prediction_error).collect();
            rows.push(describe(g, m, "prediction_error", &pred));
        }
    }
    rows
}

/// Overall median ratios of every non-reference method against `reference`.
pub fn median_ratios(summary: &[SummaryRow], reference: &str) -> Vec<MedianRatio> {
    let overall: Vec<&SummaryRow> = summary.iter().filter(|r| r.quantity == "overall").collect();
    let mut out = Vec::new();
    for row in &overall {
        if row.method == reference {
            continue;
        }
        let base = overall.iter().find(|r| r.group == row.group && r.method == reference);
        let ratio = match (row.median, base.and_then(|b| b.median)) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        out.push(MedianRatio {
            group: row.group.clone(),
            method: row.method.clone(),
            reference: reference.to_string(),
            ratio,
        });
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ExperimentReport {
    pub fn summary_row(&self, group: &str, method: &str, quantity: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.group == group && r.method == method && r.quantity == quantity)
    }

    pub fn groups(&self) -> Vec<String> {
        ordered_unique(self.records.iter().map(|r| r.group.as_str()))
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per (instance, method).
    pub fn write_instances_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.parameter_names;
        let mut header = vec!["index".to_string(), "instance".into(), "group".into(), "seed".into(), "method".into()];
        header.extend(p.iter().map(|n| format!("{n}_star")));
        header.extend(p.iter().map(|n| format!("{n}_hat")));
        header.extend(p.iter().map(|n| format!("{n}_error")));
        header.extend(["prediction_error", "score", "n_ode_solves", "wall_time", "failure"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            for m in &r.methods {
                let mut row = vec![
                    r.index.to_string(),
                    r.instance.to_string(),
                    csv_field(&r.group),
                    r.seed.to_string(),
                    m.method.clone(),
                ];
                row.extend(r.omega_star.iter().map(|v| v.to_string()));
                let blank = || vec![String::new(); p.len()];
                row.extend(m.omega_hat.as_ref().map_or_else(blank, |v| v.iter().map(|x| x.to_string()).collect()));
                row.extend(m.errors.as_ref().map_or_else(blank, |v| v.iter().map(|x| x.to_string()).collect()));
                row.push(opt(m.prediction_error));
                row.push(opt(m.score));
                row.push(m.n_ode_solves.to_string());
                row.push(m.wall_time.to_string());
                row.push(csv_field(m.failure.as_deref().or(r.failure.as_deref()).unwrap_or("")));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "group,method,quantity,count,median,q1,q3,mean,std,whisker_low,whisker_high,outliers")?;
        for r in &self.summary {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.group),
                r.method,
                r.quantity,
                r.count,
                opt(r.median),
                opt(r.q1),
                opt(r.q3),
                opt(r.mean),
                opt(r.std),
                opt(r.whisker_low),
                opt(r.whisker_high),
                r.outliers
            )?;
        }
        Ok(())
    }

    /// `start,iter,<params>,score` for every multi-start record of one instance.
    pub fn write_trace_csv<W: Write>(&self, record: &InstanceRecord, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,start,iter,{},score", self.parameter_names.join(","))?;
        for m in &record.methods {
            for (start, trace) in m.traces.iter().enumerate() {
                for t in trace {
                    let omega: Vec<String> = t.omega.iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{},{},{},{},{}", m.method, start, t.iter, omega.join(","), t.score)?;
                }
            }
        }
        Ok(())
    }

    /// Writes `report.json`, `instances.csv`, `summary.csv` and `trace_<i>.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json_string())?;
        let buf = |f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> std::io::Result<Vec<u8>> {
            let mut v = Vec::new();
            f(&mut v)?;
            Ok(v)
        };
        std::fs::write(dir.join("instances.csv"), buf(&|v| self.write_instances_csv(v))?)?;
        std::fs::write(dir.join("summary.csv"), buf(&|v| self.write_summary_csv(v))?)?;
        for r in &self.records {
            if r.methods.iter().any(|m| !m.traces.is_empty()) {
                std::fs::write(
                    dir.join(format!("trace_{}.csv", r.index)),
                    buf(&|v| self.write_trace_csv(r, v))?,
                )?;
            }
        }
        Ok(())
    }
}
