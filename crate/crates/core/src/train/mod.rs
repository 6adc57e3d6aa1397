//! Training loop: seeded shuffling, batch gradient accumulation, Adam with
//! decoupled weight decay, plateau learning-rate halving, best-by-validation
//! checkpointing and early stopping.

mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cells::ParamGrads;
use crate::expr::LabeledEquation;
use crate::model::{predict, Model, ModelConfig, ModelError};
use crate::seeds::{self, Stream};

pub use optim::{plateau_halve, Adam, AdamConfig, Plateau};

/// Hidden sizes searched by the sweep command.
pub const HIDDEN_GRID: [usize; 11] = [8, 15, 25, 30, 40, 45, 50, 55, 60, 80, 100];
/// Dropout rates searched by the sweep command.
pub const DROPOUT_GRID: [f64; 3] = [0.1, 0.2, 0.3];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("empty sweep grid")]
    EmptyGrid,
}

fn config_err(key: &str, message: impl std::fmt::Display) -> TrainError {
    TrainError::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub adam: AdamConfig,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.1,
            adam: AdamConfig::default(),
            batch: 50,
            max_epochs: 500,
            patience: 10,
            seeds: vec![1],
        }
    }
}

impl TrainConfig {
    /// Config keys, in the order [`TrainConfig::pairs`] lists them.
    pub const KEYS: [&'static str; 9] = [
        "lr",
        "beta1",
        "beta2",
        "eps",
        "weight_decay",
        "batch",
        "max_epochs",
        "patience",
        "seeds",
    ];

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("lr", self.lr0),
            ("beta1", self.adam.beta1),
            ("beta2", self.adam.beta2),
            ("eps", self.adam.eps),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(config_err(k, "must be positive"));
            }
        }
        if !(self.adam.beta1 < 1.0) || !(self.adam.beta2 < 1.0) {
            return Err(config_err("beta1", "betas must be below 1"));
        }
        if !(self.adam.weight_decay >= 0.0) {
            return Err(config_err("weight_decay", "must be non-negative"));
        }
        for (k, v) in [
            ("batch", self.batch),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(config_err(k, "must be at least 1"));
            }
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "needs at least one seed"));
        }
        Ok(())
    }

    /// Sets one key from its text form. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, TrainError> {
        let real = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| config_err(key, format!("expected a number, got `{v}`")))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| config_err(key, format!("expected an integer, got `{v}`")))
        };
        match key {
            "lr" => self.lr0 = real(value)?,
            "beta1" => self.adam.beta1 = real(value)?,
            "beta2" => self.adam.beta2 = real(value)?,
            "eps" => self.adam.eps = real(value)?,
            "weight_decay" => self.adam.weight_decay = real(value)?,
            "batch" => self.batch = int(value)?,
            "max_epochs" => self.max_epochs = int(value)?,
            "patience" => self.patience = int(value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| config_err(key, format!("expected comma-separated integers, got `{value}`")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        vec![
            ("lr", self.lr0.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("eps", self.adam.eps.to_string()),
            ("weight_decay", self.adam.weight_decay.to_string()),
            ("batch", self.batch.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seeds", seeds.join(",")),
        ]
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Wall-clock time of the epoch.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters at the epoch with the best validation accuracy.
    pub best: Model,
    pub best_valid_acc: f64,
    /// Epoch (1-based) at which `best_valid_acc` was first reached.
    pub epochs_to_best: usize,
    pub log: Vec<EpochRecord>,
    pub seed: u64,
}

/// Fraction of `data` the model labels correctly (evaluation mode).
pub fn accuracy(model: &Model, data: &[LabeledEquation]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits = data
        .par_iter()
        .map(|item| Ok(usize::from(predict(&model.output(&item.expr)?) == item.label)))
        .collect::<Result<Vec<usize>, ModelError>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

/// Sum of per-example gradients over `batch`, in batch order, plus the
/// summed loss. `first` numbers the examples for their dropout streams.
pub fn batch_grads(
    model: &Model,
    batch: &[&LabeledEquation],
    seed: u64,
    first: u64,
) -> Result<(f64, ParamGrads), ModelError> {
    let train_mode = model.config().dropout > 0.0;
    let per_example = batch
        .par_iter()
        .enumerate()
        .map(|(k, item)| {
            if train_mode {
                let mut rng = seeds::substream(seed, Stream::Dropout, first + k as u64);
                model.example_grads(&item.expr, item.label, Some(&mut rng))
            } else {
                model.example_grads::<rand_chacha::ChaCha8Rng>(&item.expr, item.label, None)
            }
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut total = ParamGrads::new(model.bank().len());
    let mut loss = 0.0;
    for (l, g) in &per_example {
        loss += l;
        total.merge(g);
    }
    Ok((loss, total))
}

/// Trains a fresh model from `seed` and keeps the best validation snapshot.
/// `on_epoch` sees every log record as soon as it is produced.
pub fn fit(
    train: &[LabeledEquation],
    valid: &[LabeledEquation],
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }
    let mut model = Model::new(model_cfg, seed)?;
    let mut adam = Adam::new(model.bank(), cfg.lr0, cfg.adam);
    let mut plateau = Plateau::new(cfg.patience);
    let mut best: Option<(Model, f64, usize)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut order: Vec<&LabeledEquation> = train.iter().collect();
    let mut seen: u64 = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut seeds::substream(seed, Stream::Shuffle, epoch as u64));
        let lr = adam.lr;
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let (loss, mut grads) = batch_grads(&model, batch, seed, seen)?;
            seen += batch.len() as u64;
            loss_sum += loss;
            grads.scale(1.0 / batch.len() as f64);
            adam.step(model.bank_mut(), &grads);
        }
        let valid_acc = accuracy(&model, valid)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            valid_acc,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} valid {:.4} lr {lr}",
            record.train_loss,
            valid_acc
        );
        on_epoch(&record);
        log.push(record);

        if best.as_ref().is_none_or(|b| valid_acc > b.1) {
            best = Some((model.clone(), valid_acc, epoch));
            since_best = 0;
        } else {
            since_best += 1;
        }
        adam.lr *= plateau.observe(valid_acc);
        if since_best >= 3 * cfg.patience {
            break;
        }
    }
    let (best, best_valid_acc, epochs_to_best) = best.expect("at least one epoch");
    Ok(FitOutcome {
        best,
        best_valid_acc,
        epochs_to_best,
        log,
        seed,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs [`fit`] once per seed of `cfg.seeds`.
pub fn fit_seeds(
    train: &[LabeledEquation],
    valid: &[LabeledEquation],
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<FitOutcome>, TrainError> {
    cfg.seeds
        .iter()
        .map(|&seed| fit(train, valid, model_cfg, cfg, seed, |_| {}))
        .collect()
}

/// One sweep result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
    pub valid_acc: f64,
    pub epochs_to_best: usize,
}

/// Fits every point of `hidden × dropout × cfg.seeds` and returns the rows
/// sorted by descending validation accuracy (grid order among ties).
pub fn sweep(
    train: &[LabeledEquation],
    valid: &[LabeledEquation],
    base: ModelConfig,
    hidden: &[usize],
    dropout: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<SweepRow>, TrainError> {
    if hidden.is_empty() || dropout.is_empty() || cfg.seeds.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let points: Vec<(usize, f64, u64)> = hidden
        .iter()
        .flat_map(|&h| {
            dropout
                .iter()
                .flat_map(move |&d| cfg.seeds.iter().map(move |&s| (h, d, s)))
        })
        .collect();
    let mut rows = points
        .par_iter()
        .map(|&(h, d, s)| {
            let model_cfg = ModelConfig {
                hidden: h,
                dropout: d,
                ..base
            };
            let out = fit(train, valid, model_cfg, cfg, s, |_| {})?;
            Ok(SweepRow {
                hidden: h,
                dropout: d,
                seed: s,
                valid_acc: out.best_valid_acc,
                epochs_to_best: out.epochs_to_best,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    rows.sort_by(|a, b| b.valid_acc.total_cmp(&a.valid_acc));
    Ok(rows)
}
