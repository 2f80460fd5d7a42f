//! Summaries (CSV), Markdown tables and an SVG line chart of mean score
//! against the number of rewriting rounds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dataset::read_jsonl;
use super::record::{Method, RunRecord};
use super::{config_echo_path, write_config_echo, HarnessError};
use crate::evaluator::{aggregate, mean, GroupKey, RunSummary, ScoreMode};
use crate::taskgen::TaskKind;

/// One CSV row of a summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task_kind: TaskKind,
    pub task_label: Option<String>,
    pub model_id: Option<String>,
    pub method: Option<Method>,
    pub n_iterations: Option<u32>,
    pub mean_score: f64,
    pub samples: usize,
    pub failed: usize,
}

impl From<&RunSummary> for SummaryRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            task_kind: s.task_kind,
            task_label: s.task_label.clone(),
            model_id: s.model_id.clone(),
            method: s.method,
            n_iterations: s.n_iterations,
            mean_score: s.mean_score,
            samples: s.samples,
            failed: s.failed,
        }
    }
}

pub fn read_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>, HarnessError> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_jsonl::<RunRecord>(p)?);
    }
    Ok(all)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| HarnessError::Parse { path: path.to_path_buf(), line: i + 2, message: e.to_string() })
        })
        .collect()
}

fn read_echo(path: &Path) -> Option<Value> {
    let text = fs::read_to_string(config_echo_path(path)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Scores record files into a summary CSV.
pub fn cmd_score(
    records: &[PathBuf],
    out: &Path,
    group_by: &[GroupKey],
    mode: ScoreMode,
) -> Result<Vec<SummaryRow>, HarnessError> {
    let all = read_records(records)?;
    let rows: Vec<SummaryRow> = aggregate(&all, group_by, mode).iter().map(SummaryRow::from).collect();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    write_summary_csv(out, &rows)?;
    let echo = json!({
        "records": records,
        "group_by": group_by,
        "score_mode": mode,
        "run_configs": records.iter().map(|p| read_echo(p)).collect::<Vec<_>>(),
    });
    write_config_echo(out, &echo)?;
    Ok(rows)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

pub fn markdown_table(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| task | model | method | n | mean score | samples | failed |\n|---|---|---|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | {} | {} |",
            opt(&r.task_label),
            opt(&r.model_id),
            opt(&r.method),
            opt(&r.n_iterations),
            r.mean_score,
            r.samples,
            r.failed
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(u32, f64)>,
    pub average: bool,
}

/// One series per (model, task, method) plus, per (model, method), the
/// mean over tasks at each round count.
pub fn chart_series(rows: &[SummaryRow]) -> Vec<Series> {
    let mut per_task: BTreeMap<(String, String, String), BTreeMap<u32, f64>> = BTreeMap::new();
    for r in rows {
        let Some(n) = r.n_iterations else { continue };
        let key = (opt(&r.model_id), opt(&r.task_label), opt(&r.method));
        per_task.entry(key).or_default().insert(n, r.mean_score);
    }
    let mut averages: BTreeMap<(String, String), BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    let mut out = Vec::new();
    for ((model, task, method), points) in &per_task {
        let avg = averages.entry((model.clone(), method.clone())).or_default();
        for (&n, &v) in points {
            avg.entry(n).or_default().push(v);
        }
        out.push(Series {
            name: format!("{task} ({model}, {method})"),
            points: points.iter().map(|(&n, &v)| (n, v)).collect(),
            average: false,
        });
    }
    for ((model, method), points) in averages {
        out.push(Series {
            name: format!("average ({model}, {method})"),
            points: points.into_iter().map(|(n, vs)| (n, mean(&vs))).collect(),
            average: true,
        });
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"];
const AVERAGE_COLOR: &str = "#d62728";

pub fn svg_chart(series: &[Series], description: &str) -> String {
    let (w, h) = (760.0, 440.0);
    let (left, right, top, bottom) = (60.0, 250.0, 30.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let ns: Vec<u32> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let x_min = ns.iter().copied().min().unwrap_or(1);
    let x_max = ns.iter().copied().max().unwrap_or(1).max(x_min + 1);
    let x = |n: u32| left + plot_w * f64::from(n - x_min) / f64::from(x_max - x_min);
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", xml_escape(description));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    for tick in 0..=5 {
        let v = f64::from(tick) / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{x2}" y2="{y:.1}" stroke="#ddd"/><text x="{tx}" y="{ty:.1}" text-anchor="end">{v:.1}</text>"##,
            y = y(v),
            x2 = left + plot_w,
            tx = left - 6.0,
            ty = y(v) + 4.0
        );
    }
    for n in x_min..=x_max {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{n}</text>"#, x(n), top + plot_h + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rewriting iterations</text>"#,
        left + plot_w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">mean score</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let mut color_idx = 0;
    for (i, ser) in series.iter().enumerate() {
        let (color, width) = if ser.average {
            (AVERAGE_COLOR, 3)
        } else {
            let c = PALETTE[color_idx % PALETTE.len()];
            color_idx += 1;
            (c, 2)
        };
        let pts: Vec<String> = ser.points.iter().map(|&(n, v)| format!("{:.1},{:.1}", x(n), y(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
            xml_escape(&ser.name),
            pts.join(" ")
        );
        for &(n, v) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, x(n), y(v));
        }
        let ly = top + 16.0 * i as f64;
        let lx = left + plot_w + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="{width}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub svg: PathBuf,
}

/// Renders summary CSVs into `<out_stem>.md` and `<out_stem>.svg`.
pub fn cmd_report(summaries: &[PathBuf], out_stem: &Path) -> Result<ReportFiles, HarnessError> {
    let mut rows = Vec::new();
    let mut echoes = Vec::new();
    for p in summaries {
        rows.extend(read_summary_csv(p)?);
        echoes.push(json!({"summary": p, "config": read_echo(p)}));
    }
    let series = chart_series(&rows);
    let echo_text = serde_json::to_string_pretty(&echoes).expect("json");

    let mut md = String::from("# Results\n\n");
    md.push_str(&markdown_table(&rows));
    let averages: Vec<&Series> = series.iter().filter(|s| s.average).collect();
    if !averages.is_empty() {
        md.push_str("\n## Average across tasks\n\n| series | n | mean score |\n|---|---:|---:|\n");
        for a in averages {
            for (n, v) in &a.points {
                let _ = writeln!(md, "| {} | {n} | {v:.4} |", a.name);
            }
        }
    }
    let _ = write!(md, "\n## Configuration\n\n```json\n{echo_text}\n```\n");

    let markdown = out_stem.with_extension("md");
    let svg = out_stem.with_extension("svg");
    if let Some(dir) = markdown.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(&markdown, md).map_err(|e| HarnessError::io(&markdown, e))?;
    fs::write(&svg, svg_chart(&series, &echo_text)).map_err(|e| HarnessError::io(&svg, e))?;
    Ok(ReportFiles { markdown, svg })
}

pub fn default_group_by() -> Vec<GroupKey> {
    GroupKey::ALL.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(task: &str, n: u32, score: f64) -> SummaryRow {
        SummaryRow {
            task_kind: TaskKind::MqNiah,
            task_label: Some(task.into()),
            model_id: Some("mock-m3".into()),
            method: Some(Method::Fact),
            n_iterations: Some(n),
            mean_score: score,
            samples: 10,
            failed: 0,
        }
    }

    #[test]
    fn three_tasks_give_three_series_and_an_average() {
        let mut rows = Vec::new();
        for (t, base) in [("a", 0.2), ("b", 0.4), ("c", 0.6)] {
            for n in 1..=3 {
                rows.push(row(t, n, base + 0.1 * f64::from(n)));
            }
        }
        let series = chart_series(&rows);
        assert_eq!(series.len(), 4);
        assert_eq!(series.iter().filter(|s| s.average).count(), 1);
        let avg = series.iter().find(|s| s.average).unwrap();
        assert!((avg.points[0].1 - 0.5).abs() < 1e-12);
        let svg = svg_chart(&series, "cfg");
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains(AVERAGE_COLOR));
    }

    #[test]
    fn single_row_table() {
        let md = markdown_table(&[row("a", 1, 1.0)]);
        assert_eq!(md.lines().count(), 3);
        assert!(md.contains("| a | mock-m3 | fact | 1 | 1.0000 | 10 | 0 |"));
    }

    #[test]
    fn csv_roundtrip_keeps_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut r = row("K1V10Q1@4K, x", 2, 0.6);
        r.method = None;
        write_summary_csv(&p, &[r.clone()]).unwrap();
        assert_eq!(read_summary_csv(&p).unwrap(), vec![r]);
    }
}
