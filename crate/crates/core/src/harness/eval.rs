use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use super::mlp::MlpModel;
use super::stats::mean_std;
use super::train::{train_on_cases, TrainSettings};
use super::Result;
use crate::autodiff::ParamStore;
use crate::colgen::{ColgenOptions, LabeledRecord};
use crate::netgen::NetworkInstance;
use crate::par::{self, ExecMode};
use crate::pipeline::{evaluate_case, CaseRow, EvalResult, PipelineError, PruneConfig, Reference};
use crate::rng;
use crate::talf::{predict, Prepared, TalfConfig, TrainCase};

/// A test case with link scores from some method.
#[derive(Clone, Debug)]
pub struct ScoredCase {
    pub case_id: usize,
    pub instance: NetworkInstance,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub t_inference: f64,
}

fn load(records: &[LabeledRecord]) -> Result<Vec<NetworkInstance>> {
    Ok(records.iter().map(|r| r.instance()).collect::<std::result::Result<_, _>>()?)
}

fn scored(records: &[LabeledRecord], insts: Vec<NetworkInstance>, scores: Vec<(Vec<f64>, f64)>) -> Vec<ScoredCase> {
    records
        .iter()
        .zip(insts)
        .zip(scores)
        .enumerate()
        .map(|(case_id, ((r, instance), (scores, t_inference)))| ScoredCase {
            case_id,
            instance,
            labels: r.labels.clone(),
            scores,
            t_inference,
        })
        .collect()
}

/// Scores with the trained model; inference time covers feature
/// preparation and the forward pass.
pub fn score_with_model(
    store: &ParamStore,
    cfg: &TalfConfig,
    records: &[LabeledRecord],
    mode: ExecMode,
) -> Result<Vec<ScoredCase>> {
    let insts = load(records)?;
    let scores = par::map(mode, &insts, |inst| -> Result<(Vec<f64>, f64)> {
        let start = Instant::now();
        let prep = Prepared::new(inst, cfg)?;
        let s = predict(store, cfg, &prep)?;
        Ok((s, start.elapsed().as_secs_f64()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(scored(records, insts, scores))
}

pub fn score_with_mlp(model: &MlpModel, records: &[LabeledRecord], mode: ExecMode) -> Result<Vec<ScoredCase>> {
    let insts = load(records)?;
    let scores = par::map(mode, &insts, |inst| -> Result<(Vec<f64>, f64)> {
        let start = Instant::now();
        let s = model.predict(inst)?;
        Ok((s, start.elapsed().as_secs_f64()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(scored(records, insts, scores))
}

/// Uniform(0, 1) scores per link; the stream of case `i` derives from `seed`.
pub fn score_random(records: &[LabeledRecord], seed: u64) -> Result<Vec<ScoredCase>> {
    let insts = load(records)?;
    let scores = insts
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut r = rng::from_seed(rng::derive(seed, i as u64));
            ((0..inst.link_count()).map(|_| r.random::<f64>()).collect(), 0.0)
        })
        .collect();
    Ok(scored(records, insts, scores))
}

/// Scores equal to the teacher's labels.
pub fn score_oracle(records: &[LabeledRecord]) -> Result<Vec<ScoredCase>> {
    let insts = load(records)?;
    let scores = records.iter().map(|r| (r.labels.iter().map(|&y| f64::from(y)).collect(), 0.0)).collect();
    Ok(scored(records, insts, scores))
}

/// Re-solves each original instance in this process for throughput and
/// `t_original`.
pub fn references(cases: &[ScoredCase], opts: &ColgenOptions, mode: ExecMode) -> Result<Vec<Reference>> {
    Ok(par::map(mode, cases, |c| Reference::solve(&c.instance, opts)).into_iter().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug)]
pub struct CaseEval {
    pub case_id: usize,
    pub result: EvalResult,
}

/// Evaluates every case at `alpha`; zero-throughput cases are dropped.
pub fn evaluate_scored(
    cases: &[ScoredCase],
    refs: &[Reference],
    alpha: f64,
    opts: &ColgenOptions,
    mode: ExecMode,
) -> Result<Vec<CaseEval>> {
    let cfg = PruneConfig::with_alpha(alpha);
    let idx: Vec<usize> = (0..cases.len()).collect();
    let out = par::map(mode, &idx, |&i| {
        let c = &cases[i];
        evaluate_case(&c.instance, &c.labels, &c.scores, &refs[i], &cfg, c.t_inference, opts)
    });
    let mut evals = Vec::with_capacity(cases.len());
    for (c, r) in cases.iter().zip(out) {
        match r {
            Ok(result) => evals.push(CaseEval { case_id: c.case_id, result }),
            Err(PipelineError::ZeroThroughput) => log::warn!("case {} excluded: zero throughput", c.case_id),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(evals)
}

/// Aggregate of one method at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub alpha: f64,
    pub n_cases: usize,
    pub kept_fraction_mean: f64,
    pub kept_fraction_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub approx_ratio_mean: f64,
    pub approx_ratio_std: f64,
}

/// Threshold sweep points share the summary layout.
pub type SweepPoint = SummaryRow;

pub fn summarize(method: &str, alpha: f64, evals: &[CaseEval]) -> SummaryRow {
    let col = |f: fn(&EvalResult) -> f64| mean_std(&evals.iter().map(|e| f(&e.result)).collect::<Vec<_>>());
    let (km, ks) = col(|r| r.kept_link_fraction);
    let (am, as_) = col(|r| r.accuracy);
    let (pm, ps) = col(|r| r.precision);
    let (rm, rs) = col(|r| r.recall);
    let (xm, xs) = col(|r| r.approximation_ratio);
    SummaryRow {
        method: method.to_string(),
        alpha,
        n_cases: evals.len(),
        kept_fraction_mean: km,
        kept_fraction_std: ks,
        accuracy_mean: am,
        accuracy_std: as_,
        precision_mean: pm,
        precision_std: ps,
        recall_mean: rm,
        recall_std: rs,
        approx_ratio_mean: xm,
        approx_ratio_std: xs,
    }
}

/// Per-α aggregates over an ascending threshold grid.
pub fn threshold_sweep(
    method: &str,
    cases: &[ScoredCase],
    refs: &[Reference],
    grid: &[f64],
    opts: &ColgenOptions,
    mode: ExecMode,
) -> Result<Vec<(SweepPoint, Vec<CaseEval>)>> {
    grid.iter()
        .map(|&a| {
            let ev = evaluate_scored(cases, refs, a, opts, mode)?;
            Ok((summarize(method, a, &ev), ev))
        })
        .collect()
}

/// Among points pruning at least `min_pruned` of the links with a mean
/// approximation ratio of at least `min_ratio`, the most accurate one
/// (ties go to the higher ratio, then the smaller α). Without such a
/// point, the highest ratio among those that prune enough.
pub fn select_alpha(points: &[SweepPoint], min_pruned: f64, min_ratio: f64) -> Option<f64> {
    let pruning: Vec<&SweepPoint> = points.iter().filter(|p| 1.0 - p.kept_fraction_mean >= min_pruned).collect();
    let by_accuracy = |a: &&&SweepPoint, b: &&&SweepPoint| {
        a.accuracy_mean
            .total_cmp(&b.accuracy_mean)
            .then(a.approx_ratio_mean.total_cmp(&b.approx_ratio_mean))
            .then(b.alpha.total_cmp(&a.alpha))
    };
    let by_ratio = |a: &&&SweepPoint, b: &&&SweepPoint| {
        a.approx_ratio_mean
            .total_cmp(&b.approx_ratio_mean)
            .then(a.accuracy_mean.total_cmp(&b.accuracy_mean))
            .then(b.alpha.total_cmp(&a.alpha))
    };
    pruning
        .iter()
        .filter(|p| p.approx_ratio_mean >= min_ratio)
        .max_by(by_accuracy)
        .or_else(|| pruning.iter().max_by(by_ratio))
        .map(|p| p.alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchPoint {
    pub batch_size: usize,
    pub loss: String,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

/// Trains one model per (batch size, loss variant) with identical seed
/// and epochs and reports the best validation accuracy.
pub fn batch_size_sweep(
    cfg: &TalfConfig,
    train: &[LabeledRecord],
    val: &[LabeledRecord],
    sizes: &[usize],
    settings: &TrainSettings,
) -> Result<Vec<BatchPoint>> {
    let mut out = Vec::new();
    for weighted in [true, false] {
        let tr: Vec<TrainCase> = super::train::prepare_cases(train, cfg, weighted, settings.mode)?;
        let va: Vec<TrainCase> = super::train::prepare_cases(val, cfg, weighted, settings.mode)?;
        for &b in sizes {
            let s = TrainSettings { batch_size: b, weighted, ..*settings };
            let o = train_on_cases(cfg, &tr, &va, &s)?;
            let loss = if weighted { "weighted" } else { "unweighted" };
            log::info!("batch {b} {loss}: val_acc {:.4} (epoch {})", o.best_val_accuracy, o.best_epoch);
            out.push(BatchPoint { batch_size: b, loss: loss.into(), val_accuracy: o.best_val_accuracy, best_epoch: o.best_epoch });
        }
    }
    Ok(out)
}

pub fn write_case_csv(path: &Path, family: &str, cases: &[ScoredCase], evals: &[CaseEval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in evals {
        let c = cases.iter().find(|c| c.case_id == e.case_id).expect("evaluated case exists");
        w.serialize(CaseRow::new(e.case_id, family, &c.instance, &e.result))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
