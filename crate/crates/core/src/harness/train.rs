use serde::Serialize;

use super::{HarnessError, Result};
use crate::autodiff::ParamStore;
use crate::colgen::LabeledRecord;
use crate::par::{self, ExecMode};
use crate::rng;
use crate::talf::{init_params, predict, train_epoch, TalfConfig, TrainCase, TrainOptions};

/// Thresholds scanned when scoring validation accuracy and sweeping α.
pub const ALPHA_GRID: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weighted: bool,
    pub clip_norm: Option<f64>,
    pub mode: ExecMode,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 50,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
            weighted: true,
            clip_norm: Some(1.0),
            mode: ExecMode::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub store: ParamStore,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochLog>,
}

/// Highest mean per-case accuracy over [`ALPHA_GRID`]; returns `(alpha, accuracy)`.
pub fn best_threshold_accuracy(scores: &[Vec<f64>], labels: &[Vec<f64>]) -> (f64, f64) {
    let mut best = (ALPHA_GRID[0], f64::NEG_INFINITY);
    for &a in &ALPHA_GRID {
        let acc: f64 = scores
            .iter()
            .zip(labels)
            .map(|(s, y)| {
                let hits = s.iter().zip(y).filter(|(p, t)| (**p >= a) == (**t >= 0.5)).count();
                hits as f64 / s.len().max(1) as f64
            })
            .sum::<f64>()
            / scores.len().max(1) as f64;
        if acc > best.1 {
            best = (a, acc);
        }
    }
    best
}

/// Best-threshold accuracy of `store` on validation cases.
pub fn validation_accuracy(store: &ParamStore, cfg: &TalfConfig, cases: &[TrainCase], mode: ExecMode) -> Result<f64> {
    let scores: Vec<Vec<f64>> =
        par::map(mode, cases, |c| predict(store, cfg, &c.prep)).into_iter().collect::<std::result::Result<_, _>>()?;
    let labels: Vec<Vec<f64>> = cases.iter().map(|c| c.labels.clone()).collect();
    Ok(best_threshold_accuracy(&scores, &labels).1)
}

pub fn prepare_cases(
    records: &[LabeledRecord],
    cfg: &TalfConfig,
    weighted: bool,
    mode: ExecMode,
) -> Result<Vec<TrainCase>> {
    Ok(par::map(mode, records, |r| TrainCase::from_record(r, cfg, weighted)).into_iter().collect::<std::result::Result<_, _>>()?)
}

/// Trains from fresh parameters and keeps the epoch with the best
/// validation accuracy (epoch 0 is the initialisation).
pub fn train_model(
    cfg: &TalfConfig,
    train: &[LabeledRecord],
    val: &[LabeledRecord],
    s: &TrainSettings,
) -> Result<TrainOutcome> {
    let train = prepare_cases(train, cfg, s.weighted, s.mode)?;
    let val = prepare_cases(val, cfg, s.weighted, s.mode)?;
    train_on_cases(cfg, &train, &val, s)
}

pub fn train_on_cases(cfg: &TalfConfig, train: &[TrainCase], val: &[TrainCase], s: &TrainSettings) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::Invalid("train and validation shards must be non-empty".into()));
    }
    let mut store = init_params(cfg, rng::derive(s.seed, 0))?;
    let opts =
        TrainOptions { lr: s.lr, momentum: s.momentum, batch_size: s.batch_size, clip_norm: s.clip_norm, mode: s.mode };
    let acc0 = validation_accuracy(&store, cfg, val, s.mode)?;
    let mut history = vec![EpochLog { epoch: 0, train_loss: f64::NAN, val_accuracy: acc0 }];
    let (mut best, mut best_epoch, mut best_acc) = (store.clone(), 0, acc0);
    for epoch in 1..=s.epochs {
        let loss = train_epoch(&mut store, cfg, train, &opts, rng::derive(s.seed, 1000 + epoch as u64))
            .map_err(|e| HarnessError::Diverged { epoch, msg: e.to_string() })?;
        if !loss.is_finite() {
            return Err(HarnessError::Diverged { epoch, msg: format!("loss {loss}") });
        }
        let acc = validation_accuracy(&store, cfg, val, s.mode)?;
        log::info!("epoch {epoch}: loss {loss:.5} val_acc {acc:.4}");
        history.push(EpochLog { epoch, train_loss: loss, val_accuracy: acc });
        if acc > best_acc {
            best = store.clone();
            best_epoch = epoch;
            best_acc = acc;
        }
    }
    Ok(TrainOutcome { store: best, best_epoch, best_val_accuracy: best_acc, history })
}
