use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use talf_core::colgen::{ColgenOptions, LabeledRecord};
use talf_core::harness::{self, Checkpoint, DatasetSpec, MlpModel, MlpVariant, TrainSettings, TrainingMeta};
use talf_core::netgen::{Family, InstanceFile, NetworkInstance};
use talf_core::talf::TalfConfig;
use talf_core::ExecMode;

const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(name = "talf", version, about = "Wireless flow teacher, link scorer and pruning pipeline")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Grid,
    Random,
    Waxman,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Grid => Family::Grid,
            FamilyArg::Random => Family::RandomGeometric,
            FamilyArg::Waxman => Family::Waxman,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Alpha,
    Batch,
}

#[derive(Subcommand)]
enum Command {
    /// Generate unlabeled instances as JSON lines.
    Generate {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        cases: usize,
        /// Demand count per case, `k` or `lo..hi`.
        #[arg(long, default_value = "1..3", value_parser = parse_range)]
        demands: (usize, usize),
        /// Records per base topology (extra ones get perturbed rates).
        #[arg(long, default_value_t = 1)]
        augment: usize,
        #[arg(long, default_value_t = 0.1)]
        rate_noise: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label instances with the column-generation teacher.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle and shard a labeled file into train/val/test.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        val_frac: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the link scorer and write the best-validation checkpoint.
    Train {
        #[command(flatten)]
        t: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score, prune and re-solve a test shard.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// Family label written to the per-case rows.
        #[arg(long, default_value = "unknown")]
        family: String,
        /// Training shard for the perceptron baselines (skipped if absent).
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        mlp_hidden: usize,
        #[arg(long, default_value_t = 30)]
        mlp_epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold or batch-size sweep.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        t: OptTrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Gradient-norm cap per step; 0 disables it.
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
    /// Plain BCE instead of flow-weighted BCE.
    #[arg(long)]
    unweighted: bool,
    /// Leave out the endpoints' demand flags from the link features.
    #[arg(long)]
    no_endpoint_flags: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct OptTrainArgs {
    #[arg(long = "train")]
    train_file: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Gradient-norm cap per step; 0 disables it.
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
    #[arg(long)]
    no_endpoint_flags: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn clip(max: f64) -> Option<f64> {
    (max > 0.0).then_some(max)
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let k = parse(s)?;
            (k, k)
        }
    };
    if lo == 0 || lo > hi {
        return Err(format!("empty or zero range {s:?}"));
    }
    Ok((lo, hi))
}

/// Explicit flag, then `TALF_SEED`, then the built-in default.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("TALF_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("TALF_SEED={v:?} is not an unsigned integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn read_records(path: &Path) -> Result<Vec<LabeledRecord>> {
    harness::read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let colgen = ColgenOptions::default();

    match cli.command {
        Command::Generate { family, nodes, cases, demands, augment, rate_noise, seed, out } => {
            let spec = DatasetSpec {
                family: family.into(),
                nodes,
                cases,
                demands,
                augment,
                rate_noise,
                seed: resolve_seed(seed)?,
            };
            let (insts, skipped) = harness::generate_instances(&spec, mode)?;
            let files: Vec<InstanceFile> = insts.iter().map(InstanceFile::from).collect();
            harness::write_jsonl(&out, &files)?;
            log::info!("wrote {} instances to {} ({skipped} skipped)", files.len(), out.display());
        }
        Command::Solve { input, out } => {
            let files: Vec<InstanceFile> = harness::read_jsonl(&input)?;
            let insts: Vec<NetworkInstance> =
                files.into_iter().map(NetworkInstance::try_from).collect::<Result<_, _>>()?;
            let (recs, skipped) = harness::label_instances(&insts, &colgen, mode);
            harness::write_jsonl(&out, &recs)?;
            log::info!("labeled {} instances ({skipped} skipped)", recs.len());
        }
        Command::Split { input, train_frac, val_frac, seed, out_dir } => {
            let recs = read_records(&input)?;
            let (tr, va, te) = harness::split_dataset(&recs, train_frac, val_frac, resolve_seed(seed)?)?;
            std::fs::create_dir_all(&out_dir)?;
            for (name, shard) in [("train", &tr), ("val", &va), ("test", &te)] {
                harness::write_jsonl(&out_dir.join(format!("{name}.jsonl")), shard)?;
            }
            log::info!("split {} cases into {}/{}/{}", recs.len(), tr.len(), va.len(), te.len());
        }
        Command::Train { t, out } => {
            let seed = resolve_seed(t.seed)?;
            let cfg = TalfConfig { dropout: t.dropout, endpoint_flags: !t.no_endpoint_flags, ..TalfConfig::with_dims(t.dim, t.rounds) };
            cfg.validate()?;
            let settings = TrainSettings {
                epochs: t.epochs,
                lr: t.lr,
                momentum: t.momentum,
                batch_size: t.batch,
                seed,
                weighted: !t.unweighted,
                clip_norm: clip(t.clip_norm),
                mode,
            };
            let o = harness::train_model(&cfg, &read_records(&t.train)?, &read_records(&t.val)?, &settings)?;
            let meta = TrainingMeta {
                epochs: t.epochs,
                lr: t.lr,
                momentum: t.momentum,
                batch_size: t.batch,
                seed,
                weighted_loss: !t.unweighted,
                clip_norm: clip(t.clip_norm),
                best_epoch: o.best_epoch,
                best_val_accuracy: o.best_val_accuracy,
            };
            Checkpoint::new(&cfg, &o.store, Some(meta)).save(&out)?;
            harness::write_summary_csv(&with_suffix(&out, ".history.csv"), &o.history)?;
            log::info!("best epoch {} (val accuracy {:.4})", o.best_epoch, o.best_val_accuracy);
        }
        Command::Evaluate { ckpt, test, alpha, family, train, mlp_hidden, mlp_epochs, seed, out } => {
            let seed = resolve_seed(seed)?;
            let ck = Checkpoint::load(&ckpt)?;
            let store = ck.store()?;
            let recs = read_records(&test)?;
            let talf = harness::score_with_model(&store, &ck.config.model, &recs, mode)?;
            let refs = harness::references(&talf, &colgen, mode)?;
            let evals = harness::evaluate_scored(&talf, &refs, alpha, &colgen, mode)?;
            harness::write_case_csv(&out, &family, &talf, &evals)?;
            let mut rows = vec![harness::summarize("TALF", alpha, &evals)];
            if let Some(train) = train {
                let tr = read_records(&train)?;
                let s = TrainSettings { epochs: mlp_epochs, seed, mode, ..TrainSettings::default() };
                for v in [MlpVariant::Plain, MlpVariant::Adjacency] {
                    let m = MlpModel::train(&tr, v, mlp_hidden, &s)?;
                    let sc = harness::score_with_mlp(&m, &recs, mode)?;
                    rows.push(harness::summarize(v.label(), alpha, &harness::evaluate_scored(&sc, &refs, alpha, &colgen, mode)?));
                }
            }
            let rand = harness::score_random(&recs, seed)?;
            rows.push(harness::summarize("RAND", alpha, &harness::evaluate_scored(&rand, &refs, alpha, &colgen, mode)?));
            let oracle = harness::score_oracle(&recs)?;
            rows.push(harness::summarize("ORACLE", alpha, &harness::evaluate_scored(&oracle, &refs, alpha, &colgen, mode)?));
            harness::write_summary_csv(&with_suffix(&out, ".summary.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{:8} acc {:.3}±{:.3} prec {:.3}±{:.3} rec {:.3}±{:.3} ratio {:.3}±{:.3} kept {:.3}",
                    r.method,
                    r.accuracy_mean,
                    r.accuracy_std,
                    r.precision_mean,
                    r.precision_std,
                    r.recall_mean,
                    r.recall_std,
                    r.approx_ratio_mean,
                    r.approx_ratio_std,
                    r.kept_fraction_mean
                );
            }
        }
        Command::Sweep { axis, grid, ckpt, test, t, out } => match axis {
            Axis::Alpha => {
                let (Some(ckpt), Some(test)) = (ckpt, test) else {
                    bail!("--axis alpha needs --ckpt and --test");
                };
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    bail!("alpha grid must be strictly ascending");
                }
                let ck = Checkpoint::load(&ckpt)?;
                let recs = read_records(&test)?;
                let cases = harness::score_with_model(&ck.store()?, &ck.config.model, &recs, mode)?;
                let refs = harness::references(&cases, &colgen, mode)?;
                let pts = harness::threshold_sweep("TALF", &cases, &refs, &grid, &colgen, mode)?;
                let rows: Vec<_> = pts.into_iter().map(|(p, _)| p).collect();
                harness::write_summary_csv(&out, &rows)?;
                let a: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
                let x: Vec<f64> = rows.iter().map(|r| r.approx_ratio_mean).collect();
                println!("spearman(approx_ratio, alpha) = {:.4}", harness::spearman(&x, &a));
            }
            Axis::Batch => {
                let (Some(train), Some(val)) = (t.train_file, t.val) else {
                    bail!("--axis batch needs --train and --val");
                };
                let sizes: Vec<usize> = grid
                    .iter()
                    .map(|&g| if g >= 1.0 && g.fract() == 0.0 { Ok(g as usize) } else { Err(anyhow::anyhow!("bad batch size {g}")) })
                    .collect::<Result<_>>()?;
                let cfg = TalfConfig { dropout: t.dropout, endpoint_flags: !t.no_endpoint_flags, ..TalfConfig::with_dims(t.dim, t.rounds) };
                let settings = TrainSettings {
                    epochs: t.epochs,
                    lr: t.lr,
                    momentum: t.momentum,
                    seed: resolve_seed(t.seed)?,
                    clip_norm: clip(t.clip_norm),
                    mode,
                    ..TrainSettings::default()
                };
                let pts = harness::batch_size_sweep(&cfg, &read_records(&train)?, &read_records(&val)?, &sizes, &settings)?;
                harness::write_summary_csv(&out, &pts)?;
            }
        },
    }
    Ok(())
}
