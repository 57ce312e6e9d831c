//! Result tables, raw run logs and plot data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::experiment::{summarize, AttackRow, ExperimentConfig, ObfuscationRecord, SimilarityRow, TimingRecord};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(write_err(path))?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(write_err(path))?;
    w.flush().map_err(write_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlotData {
    pub figures: Vec<Figure>,
}

/// Groups `(label, x, y)` points into series, averaging `y` over equal `x`.
fn mean_series(points: impl IntoIterator<Item = (String, f64, f64)>) -> Vec<Series> {
    let mut acc: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for (label, x, y) in points {
        let s = acc.entry(label).or_default();
        match s.iter_mut().find(|p| p.0 == x) {
            Some(p) => {
                p.1 += y;
                p.2 += 1;
            }
            None => s.push((x, y, 1)),
        }
    }
    acc.into_iter()
        .map(|(label, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label,
                x: pts.iter().map(|p| p.0).collect(),
                y: pts.iter().map(|p| p.1 / p.2 as f64).collect(),
            }
        })
        .collect()
}

fn figure(name: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Figure {
    Figure {
        name: name.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
    }
}

pub fn feasibility_figures(records: &[ObfuscationRecord]) -> Vec<Figure> {
    let cells = summarize(records);
    let mut points = Vec::new();
    for c in &cells {
        let tag = format!("{} beta={}", c.instance, c.beta);
        points.push((format!("laplace {tag}"), c.alpha, c.laplace_feasible_pct));
        points.push((format!("plo {tag}"), c.alpha, c.plo_feasible_pct));
    }
    let deltas = records
        .iter()
        .filter_map(|r| Some((format!("{} beta={}", r.instance, r.beta), r.alpha, r.cost_delta_pct?)));
    vec![
        figure("feasibility", "alpha", "feasible runs (%)", mean_series(points)),
        figure("cost_delta", "alpha", "mean cost delta (%)", mean_series(deltas)),
    ]
}

pub fn attack_figure(rows: &[AttackRow]) -> Figure {
    let points = rows.iter().filter_map(|r| {
        Some((
            format!("{} {} alpha={} beta={}", r.instance, r.strategy, r.alpha, r.beta),
            r.k,
            r.restored_pct?,
        ))
    });
    figure("attack_restoration", "budget k (%)", "mean restored load (%)", mean_series(points))
}

pub fn similarity_figure(rows: &[SimilarityRow]) -> Figure {
    let points = rows.iter().filter_map(|r| {
        Some((
            format!("{} k={} alpha={} beta={}", r.instance, r.k, r.alpha, r.beta),
            r.r as f64,
            r.similarity?,
        ))
    });
    figure("attack_similarity", "constrained steps r", "mean similarity (%)", mean_series(points))
}

/// Everything one `experiment` invocation produced.
#[derive(Debug, Default)]
pub struct StudyResults {
    pub obfuscation: Option<(Vec<ObfuscationRecord>, Vec<TimingRecord>)>,
    pub attacks: Option<Vec<AttackRow>>,
    pub similarity: Option<Vec<SimilarityRow>>,
}

/// Writes the tables of `results` into `dir` and returns the files written.
/// Apart from `timing.csv` every file is a function of the configuration.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, results: &StudyResults) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(write_err(dir))?;
    let mut written = Vec::new();
    let mut plots = PlotData::default();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_json(&out("config.json"), cfg)?;
    if let Some((records, timings)) = &results.obfuscation {
        write_jsonl(&out("runs.jsonl"), records)?;
        write_csv(&out("feasibility.csv"), &summarize(records))?;
        write_csv(&out("timing.csv"), timings)?;
        plots.figures.extend(feasibility_figures(records));
    }
    if let Some(rows) = &results.attacks {
        write_csv(&out("attacks.csv"), rows)?;
        plots.figures.push(attack_figure(rows));
    }
    if let Some(rows) = &results.similarity {
        write_csv(&out("similarity.csv"), rows)?;
        plots.figures.push(similarity_figure(rows));
    }
    write_json(&out("plot.json"), &plots)?;
    Ok(written)
}
