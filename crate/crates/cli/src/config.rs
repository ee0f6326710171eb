//! Run configuration: a TOML document with one section per module.
//!
//! Values resolve as flag > file > default. Every key can be set from the
//! command line with `--set section.key=value`, where the value is parsed as
//! a TOML value (bare words fall back to strings).

use std::path::{Path, PathBuf};

use graphdeepar_core::dataset::{Covariates, SplitSpec};
use graphdeepar_core::decoder::DofMode;
use graphdeepar_core::model::{ForecastSettings, GraphModelConfig, ModelConfig, PointForecast};
use graphdeepar_core::synthetic::SyntheticSpec;
use graphdeepar_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Name used in report rows.
    pub name: String,
    pub demand: PathBuf,
    #[serde(rename = "static")]
    pub static_file: PathBuf,
    pub schema: PathBuf,
    /// Weeks of known covariates generated past the last observed week.
    pub future_weeks: usize,
    /// Drop articles whose demand standard deviation is not above this value.
    pub min_demand_std: Option<f64>,
    pub covariates: Covariates,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            demand: "demand.csv".into(),
            static_file: "static.csv".into(),
            schema: "schema.toml".into(),
            future_weeks: 0,
            min_demand_std: None,
            covariates: Covariates::Calendar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub max_neighbors: usize,
    pub node_lag_depth: usize,
    /// Rows per chunk in the pairwise similarity pass.
    pub chunk_size: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.95,
            max_neighbors: 10,
            node_lag_depth: 1,
            chunk_size: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub layers: Vec<usize>,
    pub dropout: f64,
    pub negative_slope: f64,
    pub bias: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            layers: vec![16, 8],
            dropout: 0.2,
            negative_slope: 0.01,
            bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub hidden: Vec<usize>,
    pub context_length: usize,
    pub horizon: usize,
    pub dropout: f64,
    /// Fixed degrees of freedom; learned when absent.
    pub fixed_dof: Option<f64>,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            context_length: 10,
            horizon: 4,
            dropout: 0.2,
            fixed_dof: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub n_samples: usize,
    pub quantiles: Vec<f64>,
    pub point: PointForecast,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let s = ForecastSettings::default();
        Self {
            n_samples: s.n_samples,
            quantiles: s.quantiles,
            point: PointForecast::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Models whose forecast files are scored; the first is the baseline.
    pub models: Vec<String>,
    pub top_n: usize,
    pub cost_under: Option<f64>,
    pub cost_over: Option<f64>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            models: vec!["deepar".into(), "graphdeepar".into()],
            top_n: 100,
            cost_under: None,
            cost_over: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to `deepar` or `graphdeepar` by mode.
    pub model_name: Option<String>,
    pub data: DataConfig,
    pub split: SplitSpec,
    /// Absent: plain DeepAR.
    pub graph: Option<GraphConfig>,
    pub encoder: EncoderSection,
    pub decoder: DecoderSection,
    pub train: TrainConfig,
    pub forecast: ForecastSection,
    pub evaluate: EvaluateSection,
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: ".".into(),
            model_name: None,
            data: DataConfig::default(),
            split: SplitSpec::default(),
            graph: None,
            encoder: EncoderSection::default(),
            decoder: DecoderSection::default(),
            train: TrainConfig::default(),
            forecast: ForecastSection::default(),
            evaluate: EvaluateSection::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub no_graph: bool,
    /// `dotted.key=value` assignments.
    pub set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn assign(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Load `path` (or defaults), apply overrides, resolve relative paths in
    /// the file against its directory and validate.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let (mut doc, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let doc: toml::Table = text.parse().map_err(|e| CliError::parse(p, e))?;
                (doc, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for s in &overrides.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
            assign(&mut doc, k.trim(), parse_value(v.trim()))?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        for p in [&mut cfg.data.demand, &mut cfg.data.static_file, &mut cfg.data.schema, &mut cfg.out_dir] {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            cfg.out_dir = dir.clone();
        }
        if overrides.no_graph {
            cfg.graph = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.graph_options() {
            if !(g.threshold > -1.0 && g.threshold <= 1.0) {
                return Err(CliError::Config(format!("graph.threshold {} outside (-1, 1]", g.threshold)));
            }
            if g.node_lag_depth == 0 || g.chunk_size == 0 {
                return Err(CliError::Config("graph.node_lag_depth and graph.chunk_size must be positive".into()));
            }
        }
        if self.forecast.n_samples == 0 {
            return Err(CliError::Config("forecast.n_samples must be positive".into()));
        }
        if let Some(q) = self.forecast.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(CliError::Config(format!("quantile {q} outside (0, 1)")));
        }
        if self.evaluate.cost_under.is_some() != self.evaluate.cost_over.is_some() {
            return Err(CliError::Config("set both evaluate.cost_under and evaluate.cost_over".into()));
        }
        self.train.validate(self.graph_options().is_some())?;
        Ok(())
    }

    /// Graph options when graph mode is on.
    pub fn graph_options(&self) -> Option<&GraphConfig> {
        self.graph.as_ref().filter(|g| g.enabled)
    }

    pub fn model_name(&self) -> String {
        match (&self.model_name, self.graph_options()) {
            (Some(n), _) => n.clone(),
            (None, Some(_)) => "graphdeepar".into(),
            (None, None) => "deepar".into(),
        }
    }

    pub fn model_config(&self, n_static: usize, n_dynamic: usize) -> ModelConfig {
        let mut mc = match self.graph_options() {
            Some(g) => ModelConfig::with_graph(n_static, n_dynamic, g.node_lag_depth),
            None => ModelConfig::baseline(n_static, n_dynamic),
        };
        if let Some(GraphModelConfig { encoder, .. }) = &mut mc.graph {
            encoder.layer_sizes = self.encoder.layers.clone();
            encoder.dropout = self.encoder.dropout;
            encoder.negative_slope = self.encoder.negative_slope;
            encoder.bias = self.encoder.bias;
        }
        let d = &mut mc.decoder;
        d.hidden_sizes = self.decoder.hidden.clone();
        d.context_length = self.decoder.context_length;
        d.horizon = self.decoder.horizon;
        d.dropout = self.decoder.dropout;
        d.dof = match self.decoder.fixed_dof {
            Some(nu) => DofMode::Fixed(nu),
            None => DofMode::Learned,
        };
        mc.reconcile();
        mc
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        if let Some(g) = self.graph_options() {
            t.max_neighbors = g.max_neighbors;
        }
        t
    }

    pub fn forecast_settings(&self) -> ForecastSettings {
        ForecastSettings {
            n_samples: self.forecast.n_samples,
            quantiles: self.forecast.quantiles.clone(),
            seed: self.seed,
        }
    }

    /// Copy without fields that do not affect results (output location).
    pub fn canonical(&self) -> Self {
        // file locations are not part of a run's identity; contents are hashed separately
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data.demand = PathBuf::new();
        c.data.static_file = PathBuf::new();
        c.data.schema = PathBuf::new();
        c
    }
}
