//! One function per subcommand. Each reads its inputs from the resolved
//! config and the output directory, and writes its artifacts there.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use graphdeepar_core::dataset::{
    assemble_panel, encode_static_features, DeclaredKind, FeatureSchema, PanelDataset, SplitBounds,
};
use graphdeepar_core::graph::{build_graph, graph_stats, pairwise_similarity, GraphStats, SimilarityGraph};
use graphdeepar_core::metrics::{
    compare_models, group_report, runtime_report, uplift, ComparisonEntry, Costs, MetricsReport, ModelForecasts,
    Timing,
};
use graphdeepar_core::model::{GraphDeepAr, PointForecast};
use graphdeepar_core::projection::project_2d;
use graphdeepar_core::synthetic::generate_synthetic_panel;
use graphdeepar_core::trainer::{train as fit, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, sha256_json, Checkpoint};
use crate::config::{DataConfig, GraphConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, Meta};

/// Artifact locations inside the output directory.
pub struct Paths {
    pub dir: PathBuf,
}

impl Paths {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.csv")
    }
    pub fn graph_meta(&self) -> PathBuf {
        self.dir.join("graph_meta.toml")
    }
    pub fn graph_stats(&self) -> PathBuf {
        self.dir.join("graph_stats.csv")
    }
    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.dir.join(format!("{model}.ckpt.json"))
    }
    pub fn history(&self, model: &str) -> PathBuf {
        self.dir.join(format!("{model}_history.csv"))
    }
    pub fn forecast(&self, model: &str) -> PathBuf {
        self.dir.join(format!("{model}_forecast.csv"))
    }
    pub fn timing(&self, model: &str) -> PathBuf {
        self.dir.join(format!("{model}_timing.toml"))
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.csv")
    }
    pub fn financial(&self) -> PathBuf {
        self.dir.join("financial.csv")
    }
    pub fn runtime(&self) -> PathBuf {
        self.dir.join("runtime.csv")
    }
    pub fn comparison(&self) -> PathBuf {
        self.dir.join("comparison.csv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.dir.join("embeddings.csv")
    }
    pub fn projection(&self) -> PathBuf {
        self.dir.join("embeddings_2d.csv")
    }
}

/// A loaded panel with the hashes that identify it.
pub struct Loaded {
    pub data: PanelDataset,
    pub bounds: SplitBounds,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    /// Covers the assembled panel and the split.
    pub data_hash: String,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_json(&cfg.canonical())
}

pub fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let d = &cfg.data;
    let declared = io::read_schema(&d.schema)?;
    let table = io::read_static(&d.static_file)?;
    let names: Vec<String> = declared.iter().map(|(n, _)| n.clone()).collect();
    let raw = table.select(&d.static_file, &names)?;
    let schema = FeatureSchema::fit(&declared, &raw)?;
    let encoded = encode_static_features(&raw, &schema)?;
    let (kind, records) = io::read_demand(&d.demand)?;
    let mut data = assemble_panel(&records, kind, &table.ids, &encoded.matrix, encoded.width, d.future_weeks)?
        .with_covariates(d.covariates);
    if let Some(min_std) = d.min_demand_std {
        let before = data.n_articles();
        data = data.filter_by_demand_std(min_std);
        log::info!("demand std filter kept {} of {before} articles", data.n_articles());
    }
    let bounds = SplitBounds::new(data.n_weeks(), &cfg.split)?;
    let schema_hash = sha256_json(&schema);
    let data_hash = sha256_json(&(&data, &cfg.split));
    Ok(Loaded {
        data,
        bounds,
        schema,
        schema_hash,
        data_hash,
    })
}

fn hash_meta(cfg: &RunConfig, loaded: &Loaded) -> Meta {
    vec![
        ("config_hash".into(), config_hash(cfg)),
        ("data_hash".into(), loaded.data_hash.clone()),
        ("schema_hash".into(), loaded.schema_hash.clone()),
    ]
}

fn check_schema(left_name: &str, left: &str, right_name: &str, right: &str) -> Result<()> {
    if left != right {
        return Err(CliError::SchemaMismatch {
            left_name: left_name.into(),
            left: left.into(),
            right_name: right_name.into(),
            right: right.into(),
        });
    }
    Ok(())
}

fn check_data(what: &str, theirs: Option<&str>, ours: &str, force: bool) -> Result<()> {
    if theirs != Some(ours) {
        let msg = format!("{what} has data_hash {}, the dataset has {ours}", theirs.unwrap_or("(none)"));
        if !force {
            return Err(CliError::MixedInputs(msg));
        }
        log::warn!("{msg}; continuing because of --force");
    }
    Ok(())
}

/// Graph written by `build-graph`, validated against the loaded dataset.
pub fn load_graph(paths: &Paths, loaded: &Loaded, force: bool) -> Result<SimilarityGraph> {
    let meta_path = paths.graph_meta();
    let meta = io::read_graph_meta(&meta_path)?;
    check_schema(&meta_path.display().to_string(), &meta.schema_hash, "dataset", &loaded.schema_hash)?;
    check_data(&meta_path.display().to_string(), Some(&meta.data_hash), &loaded.data_hash, force)?;
    if meta.n_nodes != loaded.data.n_articles() {
        return Err(CliError::Config(format!(
            "graph has {} nodes, the dataset has {} articles",
            meta.n_nodes,
            loaded.data.n_articles()
        )));
    }
    io::read_graph(&paths.graph(), meta.n_nodes, meta.threshold)
}

// ---- build-graph ----

pub fn build_graph_cmd(cfg: &RunConfig) -> Result<GraphStats> {
    let loaded = load_data(cfg)?;
    let opts = cfg.graph.clone().unwrap_or_default();
    let data = &loaded.data;
    let stream = pairwise_similarity(data.static_matrix(), data.n_static(), opts.chunk_size)?;
    let graph = build_graph(data.n_articles(), stream, opts.threshold)?;
    let stats = graph_stats(&graph);
    let paths = Paths::new(&cfg.out_dir);
    let meta = hash_meta(cfg, &loaded);
    io::write_graph(&paths.graph(), &graph, &meta)?;
    io::write_graph_meta(
        &paths.graph_meta(),
        &io::GraphMeta {
            threshold: opts.threshold,
            n_nodes: data.n_articles(),
            schema_hash: loaded.schema_hash.clone(),
            data_hash: loaded.data_hash.clone(),
            config_hash: config_hash(cfg),
        },
    )?;
    io::write_graph_stats(&paths.graph_stats(), &stats, &meta)?;
    Ok(stats)
}

// ---- train ----

pub fn train_cmd(cfg: &RunConfig, force: bool) -> Result<(Checkpoint, TrainOutcome)> {
    let loaded = load_data(cfg)?;
    let paths = Paths::new(&cfg.out_dir);
    let graph = match cfg.graph_options() {
        Some(_) => Some(load_graph(&paths, &loaded, force)?),
        None => None,
    };
    let data = &loaded.data;
    let model = GraphDeepAr::init(
        cfg.model_config(data.n_static(), data.n_dynamic()),
        GraphDeepAr::demand_level(data, loaded.bounds.train.clone()),
        cfg.seed,
    )?;
    let started = Instant::now();
    let outcome = fit(data, &loaded.bounds, graph.as_ref(), model, &cfg.train_config(), &mut ())?;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let name = cfg.model_name();
    let ck = Checkpoint {
        format: checkpoint::FORMAT.into(),
        version: checkpoint::VERSION,
        model_name: name.clone(),
        config: cfg.canonical(),
        config_hash: config_hash(cfg),
        schema_hash: loaded.schema_hash.clone(),
        data_hash: loaded.data_hash.clone(),
        model: outcome.model.clone(),
        history: outcome.history.clone(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        train_minutes: minutes,
    };
    ck.save(&paths.checkpoint(&name))?;
    io::write_history(&paths.history(&name), &outcome.history, &hash_meta(cfg, &loaded))?;
    Ok((ck, outcome))
}

// ---- forecast ----

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingFile {
    pub train_minutes: f64,
    pub inference_minutes: f64,
}

/// Checkpoint of the configured model, checked against the dataset.
fn load_checkpoint(cfg: &RunConfig, paths: &Paths, loaded: &Loaded, force: bool) -> Result<(Checkpoint, PathBuf)> {
    let path = paths.checkpoint(&cfg.model_name());
    let ck = Checkpoint::load(&path)?;
    check_schema(&path.display().to_string(), &ck.schema_hash, "dataset", &loaded.schema_hash)?;
    check_data(&path.display().to_string(), Some(&ck.data_hash), &loaded.data_hash, force)?;
    Ok((ck, path))
}

/// Forecast the test weeks, or with `future` the weeks after the panel.
pub fn forecast_cmd(cfg: &RunConfig, force: bool, future: bool) -> Result<usize> {
    let loaded = load_data(cfg)?;
    let paths = Paths::new(&cfg.out_dir);
    let (ck, _) = load_checkpoint(cfg, &paths, &loaded, force)?;
    let graph = if ck.model.is_graph() {
        Some(load_graph(&paths, &loaded, force)?)
    } else {
        None
    };
    let data = &loaded.data;
    let weeks = if future {
        let h = ck.model.horizon().min(data.future_weeks());
        if h == 0 {
            return Err(CliError::Config("future forecasts need data.future_weeks > 0".into()));
        }
        data.n_weeks()..data.n_weeks() + h
    } else {
        loaded.bounds.test.clone()
    };
    let settings = cfg.forecast_settings();
    let started = Instant::now();
    let records = ck.model.forecast_range(data, graph.as_ref(), weeks, &settings)?;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let name = cfg.model_name();
    let mut meta = hash_meta(cfg, &loaded);
    meta.push(("model".into(), name.clone()));
    io::write_forecasts(&paths.forecast(&name), &data.article_ids, &data.timeline, &settings.quantiles, &records, &meta)?;
    let timing = TimingFile {
        train_minutes: ck.train_minutes,
        inference_minutes: minutes,
    };
    io::write_bytes(
        &paths.timing(&name),
        toml::to_string(&timing).map_err(|e| CliError::Config(e.to_string()))?.as_bytes(),
    )?;
    Ok(records.len())
}

// ---- evaluate ----

pub fn evaluate_cmd(cfg: &RunConfig, force: bool) -> Result<MetricsReport> {
    let loaded = load_data(cfg)?;
    let paths = Paths::new(&cfg.out_dir);
    let data = &loaded.data;
    let graph = if paths.graph_meta().exists() {
        Some(load_graph(&paths, &loaded, force)?)
    } else {
        None
    };
    let models = &cfg.evaluate.models;
    if models.is_empty() {
        return Err(CliError::Config("evaluate.models is empty".into()));
    }
    let mut all = Vec::new();
    for m in models {
        let path = paths.forecast(m);
        let meta = io::read_meta(&path)?;
        check_data(&path.display().to_string(), io::meta_value(&meta, "data_hash"), &loaded.data_hash, force)?;
        let records = io::read_forecasts(&path, |id| data.index_of(id), &data.timeline)?;
        if cfg.forecast.point == PointForecast::Median && records.iter().any(|r| r.median.is_nan()) {
            return Err(CliError::Config(format!("{} has no q0.5 column for median point forecasts", path.display())));
        }
        all.push(records);
    }
    let forecasts: Vec<ModelForecasts<'_>> = models
        .iter()
        .zip(&all)
        .map(|(m, r)| ModelForecasts { model: m, records: r })
        .collect();
    let costs = match (cfg.evaluate.cost_under, cfg.evaluate.cost_over) {
        (Some(under), Some(over)) => Some(Costs { under, over }),
        _ => None,
    };
    let report = group_report(
        &cfg.data.name,
        data,
        graph.as_ref(),
        loaded.bounds.test.clone(),
        &forecasts,
        cfg.evaluate.top_n,
        cfg.forecast.point,
        costs,
    )?;
    let meta = hash_meta(cfg, &loaded);
    io::write_report(&paths.report(), &report, &meta)?;
    if !report.financial.is_empty() {
        let base = report.financial[0].1;
        let rows: Vec<(String, f64, Option<f64>)> = report
            .financial
            .iter()
            .map(|(m, l)| (m.clone(), *l, uplift(base, *l)))
            .collect();
        io::write_financial(&paths.financial(), &rows, &meta)?;
    }
    let timings: Option<Vec<(String, Timing)>> = models
        .iter()
        .map(|m| {
            let text = std::fs::read_to_string(paths.timing(m)).ok()?;
            let t: TimingFile = toml::from_str(&text).ok()?;
            Some((
                m.clone(),
                Timing {
                    train_minutes: t.train_minutes,
                    inference_minutes: t.inference_minutes,
                },
            ))
        })
        .collect();
    match timings.map(|t| runtime_report(&t)) {
        Some(Ok(rows)) => io::write_runtime(&paths.runtime(), &rows, &meta)?,
        Some(Err(e)) => log::warn!("runtime table skipped: {e}"),
        None => log::info!("runtime table skipped: timing files missing"),
    }
    Ok(report)
}

/// Fixed-width rendering of a report for standard output.
pub fn format_report(report: &MetricsReport) -> String {
    let mut s = format!("{:<12} {:<12} {:<14} {:>12} {:>12} {:>10} {:>7}\n", "dataset", "group", "model", "rmse", "mae", "wmape", "n_obs");
    for r in &report.rows {
        let (rmse, mae, wmape, n) = match &r.metrics {
            Some(m) => (
                format!("{:.4}", m.rmse),
                format!("{:.4}", m.mae),
                m.wmape.map_or("-".into(), |w| format!("{w:.4}")),
                m.n_obs,
            ),
            None => ("-".into(), "-".into(), "-".into(), 0),
        };
        let _ = writeln!(s, "{:<12} {:<12} {:<14} {rmse:>12} {mae:>12} {wmape:>10} {n:>7}", r.dataset, r.group, r.model);
    }
    for note in &report.notes {
        let _ = writeln!(s, "note: {note}");
    }
    s
}

// ---- compare ----

pub fn compare_cmd(cfg: &RunConfig, reports: &[PathBuf], baseline: &str, force: bool) -> Result<Vec<ComparisonEntry>> {
    let paths = Paths::new(&cfg.out_dir);
    let inputs: Vec<PathBuf> = if reports.is_empty() { vec![paths.report()] } else { reports.to_vec() };
    let mut rows = Vec::new();
    let mut first: Option<(PathBuf, Option<String>)> = None;
    for path in &inputs {
        let meta = io::read_meta(path)?;
        let hash = io::meta_value(&meta, "data_hash").map(str::to_string);
        match &first {
            None => first = Some((path.clone(), hash)),
            Some((p0, h0)) if *h0 != hash => {
                let msg = format!(
                    "{} has data_hash {}, {} has {}",
                    p0.display(),
                    h0.as_deref().unwrap_or("(none)"),
                    path.display(),
                    hash.as_deref().unwrap_or("(none)")
                );
                if !force {
                    return Err(CliError::MixedInputs(msg));
                }
                log::warn!("{msg}; continuing because of --force");
            }
            Some(_) => {}
        }
        for r in io::read_report(path)? {
            if rows.iter().any(|x: &graphdeepar_core::metrics::MetricsRow| x.group == r.group && x.model == r.model) {
                log::warn!("{}: duplicate ({}, {}) row ignored", path.display(), r.group, r.model);
                continue;
            }
            rows.push(r);
        }
    }
    let entries = compare_models(&rows, baseline)?;
    let mut meta: Meta = vec![("config_hash".into(), config_hash(cfg))];
    if let Some((_, Some(h))) = &first {
        meta.push(("data_hash".into(), h.clone()));
    }
    meta.push(("baseline".into(), baseline.into()));
    io::write_comparison(&paths.comparison(), &entries, &meta)?;
    Ok(entries)
}

pub fn format_comparison(entries: &[ComparisonEntry]) -> String {
    let mut s = format!("{:<12} {:<6} {:<14} {:>12} {:>9}\n", "group", "metric", "model", "value", "delta%");
    for e in entries {
        let v = e.value.map_or("-".into(), |v| format!("{v:.4}"));
        let d = e.delta_pct.map_or("-".into(), |d| format!("{d:+.2}"));
        let star = if e.best { " *" } else { "" };
        let _ = writeln!(s, "{:<12} {:<6} {:<14} {v:>12} {d:>9}{star}", e.group, e.metric, e.model);
    }
    s
}

// ---- export-embeddings ----

pub fn export_embeddings_cmd(cfg: &RunConfig, force: bool, projection: bool) -> Result<usize> {
    let loaded = load_data(cfg)?;
    let paths = Paths::new(&cfg.out_dir);
    let (ck, path) = load_checkpoint(cfg, &paths, &loaded, force)?;
    if !ck.model.is_graph() {
        return Err(CliError::Config(format!("{} has no graph encoder", path.display())));
    }
    let graph = load_graph(&paths, &loaded, force)?;
    let data = &loaded.data;
    let rows = ck.model.export_embeddings(data, &graph, 0..data.n_weeks())?;
    let d = rows.first().map_or(0, |r| r.2.len());
    let meta = hash_meta(cfg, &loaded);
    let key = |a: usize, w: usize| vec![data.article_ids[a].clone(), io::format_week(&data.timeline, w)];
    io::write_embeddings(
        &paths.embeddings(),
        &(0..d).map(|k| format!("dim_{k}")).collect::<Vec<_>>(),
        rows.iter()
            .map(|(a, w, v)| {
                let mut r = key(*a, *w);
                r.extend(v.iter().map(f64::to_string));
                r
            })
            .collect(),
        &meta,
    )?;
    if projection && !rows.is_empty() {
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.2.iter().copied()).collect();
        let xy = project_2d(&flat, d)?;
        io::write_embeddings(
            &paths.projection(),
            &["x".to_string(), "y".to_string()],
            rows.iter()
                .zip(xy.chunks(2))
                .map(|((a, w, _), p)| {
                    let mut r = key(*a, *w);
                    r.push(p[0].to_string());
                    r.push(p[1].to_string());
                    r
                })
                .collect(),
            &meta,
        )?;
    }
    Ok(rows.len())
}

// ---- synth-data ----

/// Write a synthetic panel (demand, static, schema, cluster labels) and a
/// run config pointing at it.
pub fn synth_data_cmd(cfg: &RunConfig) -> Result<PathBuf> {
    let panel = generate_synthetic_panel(&cfg.synthetic)?;
    let data = &panel.data;
    let dir = &cfg.out_dir;
    let mut demand = Vec::with_capacity(data.n_articles() * data.n_weeks());
    for (i, id) in data.article_ids.iter().enumerate() {
        for w in 0..data.n_weeks() {
            demand.push((id.clone(), io::format_week(&data.timeline, w), data.demand(i, w)));
        }
    }
    io::write_demand(&dir.join("demand.csv"), &demand)?;
    let columns: Vec<String> = (0..data.n_static()).map(|k| format!("f{k}")).collect();
    let statics: Vec<(String, Vec<String>)> = data
        .article_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), data.static_row(i).iter().map(f64::to_string).collect()))
        .collect();
    io::write_static(&dir.join("static.csv"), &columns, &statics)?;
    let declared: Vec<(String, DeclaredKind)> = columns.iter().map(|c| (c.clone(), DeclaredKind::Numeric)).collect();
    io::write_schema(&dir.join("schema.toml"), &declared)?;
    let labels: Vec<(String, usize)> = data.article_ids.iter().cloned().zip(panel.labels.iter().copied()).collect();
    io::write_labels(&dir.join("labels.csv"), &labels)?;

    let mut run = cfg.canonical();
    run.out_dir = PathBuf::from(".");
    run.data = DataConfig {
        name: "synthetic".into(),
        demand: "demand.csv".into(),
        static_file: "static.csv".into(),
        schema: "schema.toml".into(),
        future_weeks: cfg.synthetic.future_weeks,
        min_demand_std: None,
        covariates: data.covariates(),
    };
    if run.graph.is_none() {
        run.graph = Some(GraphConfig::default());
    }
    let path = dir.join("run.toml");
    let text = toml::to_string(&run).map_err(|e| CliError::Config(e.to_string()))?;
    io::write_bytes(&path, text.as_bytes())?;
    Ok(path)
}
