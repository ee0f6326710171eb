//! Delimited-text and TOML file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the one written. Metadata (hashes, run
//! facts) follows the data as `# key=value` lines, which every reader here
//! skips as comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use graphdeepar_core::dataset::{DeclaredKind, DemandRecord, Timeline, TimelineKind};
use graphdeepar_core::graph::{Edge, GraphStats, SimilarityGraph};
use graphdeepar_core::metrics::{ComparisonEntry, Metrics, MetricsReport, MetricsRow, RuntimeRow};
use graphdeepar_core::model::ForecastRecord;
use graphdeepar_core::trainer::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Ordered `# key=value` trailer lines.
pub type Meta = Vec<(String, String)>;

const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => unreachable!(),
};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write through a temporary sibling and rename, so readers never see a
/// half-written artifact.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::parse(path, e))
}

fn headers(path: &Path, r: &mut csv::Reader<fs::File>) -> Result<Vec<String>> {
    Ok(r.headers()
        .map_err(|e| CliError::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> Result<()> {
    if got.iter().map(String::as_str).ne(want.iter().copied()) {
        return Err(CliError::parse(
            path,
            format!("header is `{}`, expected `{}`", got.join(","), want.join(",")),
        ));
    }
    Ok(())
}

fn rows(path: &Path, r: &mut csv::Reader<fs::File>) -> Result<Vec<csv::StringRecord>> {
    r.records()
        .map(|rec| rec.map_err(|e| CliError::parse(path, e)))
        .collect()
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| CliError::parse(path, format!("data row {line}: `{field}` is not a number")))
}

fn parse_usize(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| CliError::parse(path, format!("data row {line}: `{field}` is not a non-negative integer")))
}

fn opt_f64(path: &Path, line: usize, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, line, field).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serialise `rows` under `header`, then the metadata trailer.
fn render(header: &[String], rows: impl IntoIterator<Item = Vec<String>>, meta: &Meta) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Config(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    let mut out = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    for (k, v) in meta {
        out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    Ok(out)
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// The `# key=value` trailer of a delimited file.
pub fn read_meta(path: &Path) -> Result<Meta> {
    Ok(read_text(path)?
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

pub fn meta_value<'a>(meta: &'a Meta, key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

// ---- weeks ----

fn parse_week(s: &str) -> Option<(TimelineKind, i64)> {
    if let Ok(i) = s.parse::<i64>() {
        return Some((TimelineKind::Index, i));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    Some((TimelineKind::Date, (d - EPOCH).num_days()))
}

/// Label of week `t` as written in files: the integer index or an ISO date.
pub fn format_week(timeline: &Timeline, t: usize) -> String {
    let label = timeline.label(t);
    match timeline.kind {
        TimelineKind::Index => label.to_string(),
        TimelineKind::Date => {
            let d = EPOCH + chrono::Duration::days(label);
            format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
        }
    }
}

/// Position of a written week label on `timeline` (may lie past its end).
pub fn week_position(timeline: &Timeline, s: &str) -> Option<usize> {
    let (kind, label) = parse_week(s)?;
    let offset = label - timeline.label(0);
    (kind == timeline.kind && offset >= 0 && offset % kind.step() == 0).then(|| (offset / kind.step()) as usize)
}

// ---- demand / static / schema ----

/// Long-format demand table `article_id,week,demand`. All weeks must be of
/// one kind (integer index or ISO date).
pub fn read_demand(path: &Path) -> Result<(TimelineKind, Vec<DemandRecord>)> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    expect_header(path, &h, &["article_id", "week", "demand"])?;
    let mut kind = None;
    let mut out = Vec::new();
    for (k, rec) in rows(path, &mut r)?.iter().enumerate() {
        let line = k + 1;
        let (wk, week) = parse_week(&rec[1])
            .ok_or_else(|| CliError::parse(path, format!("data row {line}: week `{}` is neither an integer nor an ISO date", &rec[1])))?;
        if *kind.get_or_insert(wk) != wk {
            return Err(CliError::parse(path, format!("data row {line}: integer and date weeks are mixed")));
        }
        out.push(DemandRecord {
            article_id: rec[0].to_string(),
            week,
            demand: parse_f64(path, line, &rec[2])?,
        });
    }
    Ok((kind.unwrap_or(TimelineKind::Index), out))
}

pub fn write_demand(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    let body = render(
        &owned(&["article_id", "week", "demand"]),
        rows.iter().map(|(a, w, d)| vec![a.clone(), w.clone(), d.to_string()]),
        &Meta::new(),
    )?;
    write_bytes(path, &body)
}

/// Static attribute table: header `article_id,<attr>...`, one row per article.
pub struct StaticTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub values: Vec<Vec<String>>,
}

pub fn read_static(path: &Path) -> Result<StaticTable> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    if h.first().map(String::as_str) != Some("article_id") {
        return Err(CliError::parse(path, "first column must be `article_id`"));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = BTreeMap::new();
    for (k, rec) in rows(path, &mut r)?.iter().enumerate() {
        if let Some(prev) = seen.insert(rec[0].to_string(), k + 1) {
            return Err(CliError::parse(path, format!("article `{}` appears in data rows {prev} and {}", &rec[0], k + 1)));
        }
        ids.push(rec[0].to_string());
        values.push(rec.iter().skip(1).map(str::to_string).collect());
    }
    Ok(StaticTable {
        columns: h[1..].to_vec(),
        ids,
        values,
    })
}

impl StaticTable {
    /// Values reordered to follow `names`; every name must be a column.
    pub fn select(&self, path: &Path, names: &[String]) -> Result<Vec<Vec<String>>> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| CliError::parse(path, format!("schema attribute `{n}` is not a column")))
            })
            .collect::<Result<_>>()?;
        if let Some(extra) = self.columns.iter().find(|c| !names.contains(c)) {
            return Err(CliError::parse(path, format!("column `{extra}` is not declared in the schema")));
        }
        Ok(self.values.iter().map(|row| idx.iter().map(|&i| row[i].clone()).collect()).collect())
    }
}

pub fn write_static(path: &Path, columns: &[String], rows: &[(String, Vec<String>)]) -> Result<()> {
    let mut header = vec!["article_id".to_string()];
    header.extend(columns.iter().cloned());
    let body = render(
        &header,
        rows.iter().map(|(id, v)| std::iter::once(id.clone()).chain(v.iter().cloned()).collect()),
        &Meta::new(),
    )?;
    write_bytes(path, &body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindName {
    Categorical,
    Numeric,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaEntry {
    name: String,
    kind: KindName,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    attribute: Vec<SchemaEntry>,
}

/// `[[attribute]]` tables with `name` and `kind = "categorical" | "numeric"`.
pub fn read_schema(path: &Path) -> Result<Vec<(String, DeclaredKind)>> {
    let f: SchemaFile = toml::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e.message()))?;
    Ok(f.attribute
        .into_iter()
        .map(|a| {
            let k = match a.kind {
                KindName::Categorical => DeclaredKind::Categorical,
                KindName::Numeric => DeclaredKind::Numeric,
            };
            (a.name, k)
        })
        .collect())
}

pub fn write_schema(path: &Path, declared: &[(String, DeclaredKind)]) -> Result<()> {
    let f = SchemaFile {
        attribute: declared
            .iter()
            .map(|(n, k)| SchemaEntry {
                name: n.clone(),
                kind: match k {
                    DeclaredKind::Categorical => KindName::Categorical,
                    DeclaredKind::Numeric => KindName::Numeric,
                },
            })
            .collect(),
    };
    let text = toml::to_string(&f).map_err(|e| CliError::Config(e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

// ---- graph ----

/// Facts recorded next to a graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub threshold: f64,
    pub n_nodes: usize,
    pub schema_hash: String,
    pub data_hash: String,
    pub config_hash: String,
}

pub fn write_graph(path: &Path, graph: &SimilarityGraph, meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["src", "dst", "similarity"]),
        graph
            .edges()
            .iter()
            .map(|e| vec![e.src.to_string(), e.dst.to_string(), e.similarity.to_string()]),
        meta,
    )?;
    write_bytes(path, &body)
}

pub fn read_graph(path: &Path, n_nodes: usize, threshold: f64) -> Result<SimilarityGraph> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    expect_header(path, &h, &["src", "dst", "similarity"])?;
    let mut edges = Vec::new();
    for (k, rec) in rows(path, &mut r)?.iter().enumerate() {
        let line = k + 1;
        edges.push(Edge {
            src: parse_usize(path, line, &rec[0])?,
            dst: parse_usize(path, line, &rec[1])?,
            similarity: parse_f64(path, line, &rec[2])?,
        });
    }
    Ok(SimilarityGraph::from_edges(n_nodes, threshold, edges)?)
}

pub fn write_graph_meta(path: &Path, meta: &GraphMeta) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| CliError::Config(e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

pub fn read_graph_meta(path: &Path) -> Result<GraphMeta> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e.message()))
}

pub fn write_graph_stats(path: &Path, s: &GraphStats, meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["n_nodes", "edge_count", "mean_degree", "degree_std", "isolated_fraction"]),
        [vec![
            s.n_nodes.to_string(),
            s.edge_count.to_string(),
            s.mean_degree.to_string(),
            s.degree_std.to_string(),
            s.isolated_fraction.to_string(),
        ]],
        meta,
    )?;
    write_bytes(path, &body)
}

// ---- training / forecasts ----

pub fn write_history(path: &Path, history: &[EpochRecord], meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["epoch", "train_loss", "val_loss"]),
        history
            .iter()
            .map(|e| vec![e.epoch.to_string(), e.train_loss.to_string(), fmt_opt(e.val_loss)]),
        meta,
    )?;
    write_bytes(path, &body)
}

fn quantile_label(q: f64) -> String {
    format!("q{q}")
}

pub fn write_forecasts(
    path: &Path,
    ids: &[String],
    timeline: &Timeline,
    quantiles: &[f64],
    records: &[ForecastRecord],
    meta: &Meta,
) -> Result<()> {
    let mut header = owned(&["article_id", "week"]);
    header.extend(quantiles.iter().map(|&q| quantile_label(q)));
    header.push("mean".into());
    let body = render(
        &header,
        records.iter().map(|r| {
            let mut row = vec![ids[r.article].clone(), format_week(timeline, r.week)];
            row.extend(r.quantiles.iter().map(f64::to_string));
            row.push(r.mean.to_string());
            row
        }),
        meta,
    )?;
    write_bytes(path, &body)
}

/// Forecast rows mapped back onto panel indices. The median comes from a
/// `q0.5` column when present and is NaN otherwise.
pub fn read_forecasts(
    path: &Path,
    index_of: impl Fn(&str) -> Option<usize>,
    timeline: &Timeline,
) -> Result<Vec<ForecastRecord>> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    let n = h.len();
    if n < 3 || h[0] != "article_id" || h[1] != "week" || h[n - 1] != "mean" {
        return Err(CliError::parse(path, "header must be `article_id,week,q...,mean`"));
    }
    let qs: Vec<f64> = h[2..n - 1]
        .iter()
        .map(|c| {
            c.strip_prefix('q')
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::parse(path, format!("column `{c}` is not a quantile")))
        })
        .collect::<Result<_>>()?;
    let median_col = qs.iter().position(|&q| q == 0.5);
    let mut out = Vec::new();
    for (k, rec) in rows(path, &mut r)?.iter().enumerate() {
        let line = k + 1;
        let article = index_of(&rec[0])
            .ok_or_else(|| CliError::parse(path, format!("data row {line}: unknown article `{}`", &rec[0])))?;
        let week = week_position(timeline, &rec[1])
            .ok_or_else(|| CliError::parse(path, format!("data row {line}: week `{}` is off the panel timeline", &rec[1])))?;
        let quantiles: Vec<f64> = (2..n - 1).map(|c| parse_f64(path, line, &rec[c])).collect::<Result<_>>()?;
        out.push(ForecastRecord {
            article,
            week,
            origin: week,
            median: median_col.map_or(f64::NAN, |c| quantiles[c]),
            quantiles,
            mean: parse_f64(path, line, &rec[n - 1])?,
        });
    }
    Ok(out)
}

// ---- embeddings ----

pub fn write_embeddings(path: &Path, header_tail: &[String], rows: Vec<Vec<String>>, meta: &Meta) -> Result<()> {
    let mut header = owned(&["article_id", "week"]);
    header.extend(header_tail.iter().cloned());
    write_bytes(path, &render(&header, rows, meta)?)
}

// ---- reports ----

pub const REPORT_HEADER: [&str; 7] = ["dataset", "group", "model", "rmse", "mae", "wmape", "n_obs"];

/// Metric rows; absent metrics are blank and notes become `# note=` lines.
pub fn write_report(path: &Path, report: &MetricsReport, meta: &Meta) -> Result<()> {
    let mut meta = meta.clone();
    meta.extend(report.notes.iter().map(|n| ("note".to_string(), n.clone())));
    let body = render(
        &owned(&REPORT_HEADER),
        report.rows.iter().map(|r| {
            let m = r.metrics.as_ref();
            vec![
                r.dataset.clone(),
                r.group.clone(),
                r.model.clone(),
                fmt_opt(m.map(|m| m.rmse)),
                fmt_opt(m.map(|m| m.mae)),
                fmt_opt(m.and_then(|m| m.wmape)),
                m.map_or(0, |m| m.n_obs).to_string(),
            ]
        }),
        &meta,
    )?;
    write_bytes(path, &body)
}

pub fn read_report(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    expect_header(path, &h, &REPORT_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rows(path, &mut r)?.iter().enumerate() {
        let line = k + 1;
        let n_obs = parse_usize(path, line, &rec[6])?;
        let metrics = match (opt_f64(path, line, &rec[3])?, opt_f64(path, line, &rec[4])?) {
            (Some(rmse), Some(mae)) => Some(Metrics {
                rmse,
                mae,
                wmape: opt_f64(path, line, &rec[5])?,
                n_obs,
            }),
            _ => None,
        };
        out.push(MetricsRow {
            dataset: rec[0].to_string(),
            group: rec[1].to_string(),
            model: rec[2].to_string(),
            metrics,
            n_articles: 0,
        });
    }
    Ok(out)
}

pub fn write_financial(path: &Path, rows: &[(String, f64, Option<f64>)], meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["model", "financial_loss", "uplift_pct"]),
        rows.iter().map(|(m, l, u)| vec![m.clone(), l.to_string(), fmt_opt(*u)]),
        meta,
    )?;
    write_bytes(path, &body)
}

pub fn write_runtime(path: &Path, rows: &[RuntimeRow], meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["model", "train_minutes", "inference_minutes", "total_minutes", "total_difference_pct"]),
        rows.iter().map(|r| {
            vec![
                r.model.clone(),
                r.timing.train_minutes.to_string(),
                r.timing.inference_minutes.to_string(),
                r.timing.total().to_string(),
                fmt_opt(r.total_difference),
            ]
        }),
        meta,
    )?;
    write_bytes(path, &body)
}

pub fn write_comparison(path: &Path, entries: &[ComparisonEntry], meta: &Meta) -> Result<()> {
    let body = render(
        &owned(&["group", "metric", "model", "value", "delta_pct", "best"]),
        entries.iter().map(|e| {
            vec![
                e.group.clone(),
                e.metric.clone(),
                e.model.clone(),
                fmt_opt(e.value),
                fmt_opt(e.delta_pct),
                e.best.to_string(),
            ]
        }),
        meta,
    )?;
    write_bytes(path, &body)
}

pub fn write_labels(path: &Path, rows: &[(String, usize)]) -> Result<()> {
    let body = render(
        &owned(&["article_id", "cluster"]),
        rows.iter().map(|(a, c)| vec![a.clone(), c.to_string()]),
        &Meta::new(),
    )?;
    write_bytes(path, &body)
}
