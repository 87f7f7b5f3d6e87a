use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{HarnessError, Result};
use crate::colgen::{run_colgen, ColgenOptions, LabeledRecord};
use crate::netgen::{generate, perturb_rates, Family, GeneratorConfig, NetworkInstance};
use crate::par::{self, ExecMode};
use crate::rng;

/// Dataset recipe. `cases` counts base topologies; each contributes
/// `augment` records (variant 0 unperturbed, the rest with multiplicative
/// rate noise).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub family: Family,
    pub nodes: usize,
    pub cases: usize,
    pub demands: (usize, usize),
    pub augment: usize,
    pub rate_noise: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(family: Family, nodes: usize, cases: usize, seed: u64) -> Self {
        DatasetSpec { family, nodes, cases, demands: (1, 3), augment: 1, rate_noise: 0.1, seed }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.demands;
        if self.cases == 0 || self.augment == 0 || lo == 0 || lo > hi {
            return Err(HarnessError::Invalid(format!("bad dataset spec {self:?}")));
        }
        GeneratorConfig { demand_count: lo, rate_noise: self.rate_noise, ..GeneratorConfig::desk(self.family, self.nodes) }
            .validate()?;
        Ok(())
    }
}

/// Generates the instances of `spec` in deterministic order. Base
/// topologies whose placement fails are skipped; returns the skip count.
pub fn generate_instances(spec: &DatasetSpec, mode: ExecMode) -> Result<(Vec<NetworkInstance>, usize)> {
    spec.validate()?;
    let (lo, hi) = spec.demands;
    let bases = par::map_range(mode, spec.cases, |i| {
        let seed = rng::derive(spec.seed, i as u64);
        let demand_count = lo + (rng::derive(seed, 0xD) % (hi - lo + 1) as u64) as usize;
        let cfg = GeneratorConfig { demand_count, ..GeneratorConfig::desk(spec.family, spec.nodes) };
        generate(&cfg, seed).map(|inst| (seed, inst))
    });
    let mut out = Vec::with_capacity(spec.cases * spec.augment);
    let mut skipped = 0;
    for (i, b) in bases.into_iter().enumerate() {
        match b {
            Ok((seed, base)) => {
                out.push(base.clone());
                for v in 1..spec.augment {
                    out.push(perturb_rates(&base, spec.rate_noise, rng::derive(seed, 0x100 + v as u64)));
                }
            }
            Err(e) => {
                log::warn!("case {i}: generation failed: {e}");
                skipped += 1;
            }
        }
    }
    Ok((out, skipped))
}

/// Solves every instance with the teacher; failures are skipped and
/// counted.
pub fn label_instances(
    instances: &[NetworkInstance],
    opts: &ColgenOptions,
    mode: ExecMode,
) -> (Vec<LabeledRecord>, usize) {
    let solved = par::map(mode, instances, |inst| run_colgen(inst, opts).map(|sol| LabeledRecord::new(inst, &sol)));
    let mut out = Vec::with_capacity(instances.len());
    let mut skipped = 0;
    for (i, r) in solved.into_iter().enumerate() {
        match r {
            Ok(rec) => out.push(rec),
            Err(e) => {
                log::warn!("case {i}: teacher failed: {e}");
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

/// Generates and labels a dataset in one go.
pub fn generate_dataset(
    spec: &DatasetSpec,
    opts: &ColgenOptions,
    mode: ExecMode,
) -> Result<(Vec<LabeledRecord>, usize)> {
    let (insts, gen_skipped) = generate_instances(spec, mode)?;
    let (recs, solve_skipped) = label_instances(&insts, opts, mode);
    Ok((recs, gen_skipped + solve_skipped))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(|e| HarnessError::Json { line: 0, msg: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Json { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Index shards of a seeded shuffle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// `train_frac` of the cases go to train+val, of which `val_frac` is
/// held out for validation (counts rounded to nearest).
pub fn split_indices(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&train_frac) || !(0.0..1.0).contains(&val_frac) || train_frac == 0.0 || val_frac == 0.0 {
        return Err(HarnessError::Invalid("fractions must lie in (0, 1)".into()));
    }
    let train_all = (n as f64 * train_frac).round() as usize;
    let val = (train_all as f64 * val_frac).round() as usize;
    let train = train_all.saturating_sub(val);
    let test = n - train_all;
    if train == 0 || val == 0 || test == 0 {
        return Err(HarnessError::TooFewCases(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::from_seed(seed));
    Ok(Split { train: idx[..train].to_vec(), val: idx[train..train_all].to_vec(), test: idx[train_all..].to_vec() })
}

/// Shards records by [`split_indices`]; each shard keeps file order.
pub fn split_dataset<T: Clone>(items: &[T], train_frac: f64, val_frac: f64, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let s = split_indices(items.len(), train_frac, val_frac, seed)?;
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.iter().map(|&i| items[i].clone()).collect::<Vec<T>>()
    };
    Ok((pick(&s.train), pick(&s.val), pick(&s.test)))
}
