//! Training loop with early stopping on validation likelihood.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batching::{make_batches, BatchMode};
use crate::dataset::{make_windows_in, PanelDataset, SplitBounds, Window};
use crate::graph::{sample_neighborhood, SimilarityGraph};
use crate::model::{AccessObserver, GraphDeepAr};
use crate::optim::{clip_global_norm, OptimizerSpec};
use crate::student_t::LossWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub loss_weights: LossWeights,
    /// Incoming-neighbour cap applied afresh each epoch in graph mode.
    pub max_neighbors: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 5,
            learning_rate: 5e-3,
            batch_size: 64,
            batch_mode: BatchMode::Synchronized,
            optimizer: OptimizerSpec::default(),
            seed: 0,
            clip_norm: Some(10.0),
            loss_weights: LossWeights::default(),
            max_neighbors: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, graph_mode: bool) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(alloc::format!(
                "patience {} exceeds max_epochs {}",
                self.patience,
                self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(alloc::format!("learning rate {} must be positive", self.learning_rate)));
        }
        if graph_mode && self.batch_mode != BatchMode::Synchronized {
            return Err(Error::Config("graph training requires synchronized batching".into()));
        }
        Ok(())
    }
}

/// Stops after `patience` consecutive epochs without improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Record an epoch's monitored loss; returns whether it is a new best.
    pub fn update(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.bad_epochs >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (dropout active).
    pub train_loss: f64,
    /// Mean horizon likelihood loss on validation windows.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub model: GraphDeepAr,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Mean loss over training windows before the first update (no dropout).
    pub initial_train_loss: f64,
    /// Same quantity for the returned parameters.
    pub final_train_loss: f64,
    pub stopped_early: bool,
}

fn derive_seed(seed: u64, epoch: usize, stream: u64) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_loss(model: &GraphDeepAr, data: &PanelDataset, graph: Option<&SimilarityGraph>, windows: &[Window], weights: &LossWeights, horizon_only: bool) -> Result<Option<f64>> {
    if windows.is_empty() {
        return Ok(None);
    }
    let (sum, n) = model.evaluate_loss(data, graph, windows, weights, horizon_only)?;
    Ok((n > 0).then(|| sum / n as f64))
}

/// Train `model` on windows whose horizon lies in the training weeks of
/// `bounds`, monitoring the validation weeks. `data` is the full panel.
pub fn train(
    data: &PanelDataset,
    bounds: &SplitBounds,
    graph: Option<&SimilarityGraph>,
    mut model: GraphDeepAr,
    cfg: &TrainConfig,
    observer: &mut dyn AccessObserver,
) -> Result<TrainOutcome> {
    cfg.validate(model.is_graph())?;
    if model.is_graph() && graph.is_none() {
        return Err(Error::Config("graph model needs a graph".into()));
    }
    let graph = if model.is_graph() { graph } else { None };
    let (p, k) = (model.context_length(), model.horizon());
    let train_windows = make_windows_in(data, p, k, bounds.train.clone())?;
    let val_windows = make_windows_in(data, p, k, bounds.val.clone())?;
    if train_windows.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!(
            "no training windows with context {p} and horizon {k}"
        )));
    }
    let weights = cfg.loss_weights;
    let initial_train_loss = mean_loss(&model, data, graph, &train_windows.entries, &weights, false)?.unwrap_or(f64::NAN);

    let mut enc_opt = model
        .encoder
        .as_ref()
        .map(|e| cfg.optimizer.build(cfg.learning_rate, e.values.len()));
    let mut dec_opt = cfg.optimizer.build(cfg.learning_rate, model.decoder.values.len());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let sampled = graph.map(|g| sample_neighborhood(g, cfg.max_neighbors, derive_seed(cfg.seed, epoch, 1)));
        let batches = make_batches(cfg.batch_mode, &train_windows, cfg.batch_size, derive_seed(cfg.seed, epoch, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch, 3));
        let (mut loss_sum, mut n_terms) = (0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let mut g = model.batch_gradients(data, sampled.as_ref(), batch, &weights, &mut rng, observer)?;
            let finite = g.loss_sum.is_finite() && g.encoder.iter().chain(&g.decoder).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Divergence { epoch, batch: b });
            }
            loss_sum += g.loss_sum;
            n_terms += g.n_terms;
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut [&mut g.encoder[..], &mut g.decoder[..]], c);
            }
            if let (Some(opt), Some(enc)) = (&mut enc_opt, &mut model.encoder) {
                opt.step(&mut enc.values, &g.encoder);
            }
            dec_opt.step(&mut model.decoder.values, &g.decoder);
        }
        let train_loss = loss_sum / n_terms.max(1) as f64;
        let val_loss = mean_loss(&model, data, graph, &val_windows.entries, &weights, true)?;
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::Divergence { epoch, batch: batches.len() });
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        history.push(record);
        if stopper.update(epoch, val_loss.unwrap_or(train_loss)) {
            best = model.clone();
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let final_train_loss = mean_loss(&best, data, graph, &train_windows.entries, &weights, false)?.unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: stopper.best_epoch(),
        initial_train_loss,
        final_train_loss,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitSpec;
    use crate::model::ModelConfig;
    use crate::synthetic::{generate_synthetic_panel, SyntheticSpec};
    use alloc::vec;

    #[test]
    fn early_stopping_contract() {
        let mut s = EarlyStopping::new(1);
        assert!(s.update(1, 3.0));
        assert!(!s.should_stop());
        assert!(!s.update(2, 3.5));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn graph_mode_rejects_random_batches() {
        let cfg = TrainConfig {
            batch_mode: BatchMode::Random,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(true).is_err());
        assert!(cfg.validate(false).is_ok());
        let cfg = TrainConfig {
            patience: 60,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(false).is_err());
    }

    #[test]
    fn one_epoch_gives_one_history_entry() {
        let spec = SyntheticSpec {
            n_articles: 4,
            n_clusters: 2,
            n_weeks: 30,
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic_panel(&spec).unwrap().data;
        let bounds = SplitBounds::new(30, &SplitSpec { test_weeks: 5, val_weeks: 5 }).unwrap();
        let mut mc = ModelConfig::baseline(2, 2);
        mc.decoder.hidden_sizes = vec![4, 4];
        mc.decoder.context_length = 4;
        mc.decoder.horizon = 2;
        let model = GraphDeepAr::init(mc, 2.0, 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: 1,
            batch_mode: BatchMode::Random,
            ..TrainConfig::default()
        };
        let out = train(&data, &bounds, None, model, &cfg, &mut ()).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best_epoch, 1);
    }
}
