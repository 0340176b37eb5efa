//! Comparison table across runs plus curve and scatter data for plotting.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lazyabc::io::{self, fmt_f64};
use lazyabc::sampler::{ess, evidence_estimate, posterior_mean_sd, Algorithm, CostMode, SampleSet};
use lazyabc::tuning::PilotRecord;
use serde::Serialize;

use crate::commands::{read_run, RunInfo};
use crate::workspace::{write_text, DirLock};

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub iterations: usize,
    pub cost: f64,
    pub accepted: usize,
    pub ess: f64,
    pub relative_efficiency: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub evidence: f64,
}

fn label(dir: &Path) -> String {
    let parts: Vec<String> = dir
        .components()
        .rev()
        .take(2)
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.into_iter().rev().collect::<Vec<_>>().join("/")
}

/// Rows for `sets`, efficiencies relative to the first ABC-IS run (or the
/// first run when there is none).
pub fn tabulate(sets: &[(String, SampleSet)]) -> Result<Vec<Row>> {
    let Some((_, first)) = sets.first() else {
        bail!("report needs at least one run directory");
    };
    for (name, s) in sets {
        if s.model_id != first.model_id {
            bail!(
                "{name} uses model/data {} but {} uses {}; refusing to tabulate them together",
                s.model_id,
                sets[0].0,
                first.model_id
            );
        }
        if s.cost_mode != first.cost_mode {
            bail!(
                "{name} measures cost as {} but {} as {}",
                s.cost_mode.as_str(),
                sets[0].0,
                first.cost_mode.as_str()
            );
        }
        if s.theta_dim() != first.theta_dim() {
            bail!("{name} has a different parameter dimension");
        }
    }
    let efficiency = |s: &SampleSet| ess(s).unwrap_or(f64::NAN) / s.total_cost;
    let base = sets
        .iter()
        .find(|(_, s)| s.algorithm == Algorithm::AbcIs)
        .unwrap_or(&sets[0]);
    let base_eff = efficiency(&base.1);
    Ok(sets
        .iter()
        .map(|(name, s)| {
            let (mean, sd) = (0..s.theta_dim())
                .map(|j| posterior_mean_sd(s, j).unwrap_or((f64::NAN, f64::NAN)))
                .unzip();
            Row {
                label: name.clone(),
                algorithm: s.algorithm,
                epsilon: s.epsilon,
                iterations: s.n_iterations,
                cost: s.total_cost,
                accepted: s.accepted_count(),
                ess: ess(s).unwrap_or(f64::NAN),
                relative_efficiency: efficiency(s) / base_eff,
                mean,
                sd,
                evidence: evidence_estimate(s),
            }
        })
        .collect())
}

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "run",
        "algorithm",
        "epsilon",
        "iterations",
        "cost",
        "accepted",
        "ess",
        "relative_efficiency",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for j in 0..dim {
        h.push(format!("theta{j}_mean"));
        h.push(format!("theta{j}_sd"));
    }
    h.push("evidence".into());
    h
}

fn cells(r: &Row, num: impl Fn(f64) -> String) -> Vec<String> {
    let mut c = vec![
        r.label.clone(),
        r.algorithm.as_str().to_string(),
        num(r.epsilon),
        r.iterations.to_string(),
        num(r.cost),
        r.accepted.to_string(),
        num(r.ess),
        num(r.relative_efficiency),
    ];
    for (m, s) in r.mean.iter().zip(&r.sd) {
        c.push(num(*m));
        c.push(num(*s));
    }
    c.push(num(r.evidence));
    c
}

fn short(v: f64) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-3) {
        format!("{v:.4e}")
    } else if v.is_finite() {
        format!("{v:.4}")
    } else {
        v.to_string()
    }
}

pub fn aligned(rows: &[Row], cost_mode: CostMode) -> String {
    let dim = rows.first().map_or(0, |r| r.mean.len());
    let mut table = vec![header(dim)];
    table.extend(rows.iter().map(|r| cells(r, short)));
    let widths: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &table {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| {
                if j < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    if cost_mode != CostMode::Sim {
        out.push_str(&format!(
            "cost is {} seconds and depends on the machine\n",
            cost_mode.as_str()
        ));
    }
    out
}

#[derive(Serialize)]
struct ReportIndex {
    runs: Vec<IndexEntry>,
}

#[derive(Serialize)]
struct IndexEntry {
    index: usize,
    label: String,
    curves: Option<String>,
    scatter: Option<String>,
}

fn write_scatter(record: &PilotRecord, path: &Path) -> Result<()> {
    let mut header = Vec::new();
    for (c, names) in record.decision_names.iter().enumerate() {
        header.extend(names.iter().map(|n| format!("phi{c}_{n}")));
    }
    header.push("distance".into());
    let rows: Vec<Vec<f64>> = (0..record.len())
        .map(|i| {
            let mut r: Vec<f64> = record.phis[i].iter().flatten().copied().collect();
            r.push(record.distance[i]);
            r
        })
        .collect();
    io::write_table(path, &header, &rows)?;
    Ok(())
}

pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let sets = dirs
        .iter()
        .map(|d| Ok((label(d), read_run(d)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = tabulate(&sets)?;
    let _lock = DirLock::acquire(out)?;
    let dim = rows[0].mean.len();
    let csv_path = out.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    w.write_record(header(dim))?;
    for r in &rows {
        w.write_record(cells(r, fmt_f64))?;
    }
    w.flush()?;
    let txt_path = out.join("report.txt");
    write_text(&txt_path, &aligned(&rows, sets[0].1.cost_mode))?;
    let mut written = vec![csv_path, txt_path];
    let mut index = ReportIndex { runs: Vec::new() };
    for (i, dir) in dirs.iter().enumerate() {
        let mut entry = IndexEntry {
            index: i,
            label: rows[i].label.clone(),
            curves: None,
            scatter: None,
        };
        let info_path = dir.join("run.json");
        if info_path.exists() {
            let info: RunInfo = io::read_json(&info_path)?;
            if let Some(t) = &info.tune_dir {
                let src = dir.join(t).join("curves.csv");
                if src.exists() {
                    let name = format!("curves_{i}.csv");
                    std::fs::copy(&src, out.join(&name))
                        .with_context(|| format!("copying {}", src.display()))?;
                    written.push(out.join(&name));
                    entry.curves = Some(name);
                }
            }
            if let Some(p) = &info.pilot_dir {
                let src = dir.join(p).join("record.csv");
                if src.exists() {
                    let name = format!("scatter_{i}.csv");
                    write_scatter(&PilotRecord::read(&src)?, &out.join(&name))?;
                    written.push(out.join(&name));
                    entry.scatter = Some(name);
                }
            }
        }
        index.runs.push(entry);
    }
    let idx = out.join("index.json");
    io::write_json(&idx, &index)?;
    written.push(idx);
    Ok(written)
}
