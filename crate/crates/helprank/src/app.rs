//! Subcommands of the `helprank` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use helprank_core::data::{generate, split, Dataset, SplitTag};
use helprank_core::kernel::Rng;
use helprank_core::objectives::LossKind;
use helprank_core::theoria::{
    base10_list_remark, check_bound_monotonicity, check_concave_probe, check_convexity,
    check_gradient_bounds, check_loss_bounds, generalization_bound, leaf_routing_stats,
    loss_bounds, total_variation, BoundInputs, PropertyReport,
};
use helprank_core::trainer::{ablation_grid, evaluate, train, AblationRow, Splits, TrainConfig};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfigFile;
use crate::error::{AppError, AppResult};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "helprank",
    version,
    about = "Multimodal review helpfulness ranking experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Overrides the config seed.
    #[arg(long, env = "HELPRANK_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and write train/val/test JSONL files.
    Gen {
        /// Run config (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; falls back to the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train a model and write its checkpoint, epoch table and metrics.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train.jsonl, val.jsonl and test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Score a JSONL dataset with a checkpoint and write ranking metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL dataset file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the 16-variant ablation grid and write one row per variant.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train.jsonl, val.jsonl and test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run the numerical loss-property checks and write a property table.
    Verify {
        /// Sampled instances per property.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Average leaf-reach probabilities per label class.
    Routing {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL dataset file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(
    config: Option<&Path>,
    seed: &SeedArg,
    out: Option<PathBuf>,
) -> AppResult<(RunConfigFile, PathBuf)> {
    let mut cfg = RunConfigFile::load(config)?;
    if let Some(s) = seed.seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone().ok_or_else(|| {
        AppError::validation("no output directory: pass --out or set out_dir in the config")
    })?;
    println!("seed: {}", cfg.seed);
    Ok((cfg, out))
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::write(dir, e))
}

fn write_config(dir: &Path, cfg: &RunConfigFile) -> AppResult<()> {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).map_err(|e| AppError::write(&path, e))
}

fn read_splits(dir: &Path) -> AppResult<[Dataset; 3]> {
    let read = |name: &str, tag: SplitTag| -> AppResult<Dataset> {
        let mut d = read_jsonl(&dir.join(name))?;
        d.split = tag;
        Ok(d)
    };
    Ok([
        read("train.jsonl", SplitTag::Train)?,
        read("val.jsonl", SplitTag::Val)?,
        read("test.jsonl", SplitTag::Test)?,
    ])
}

/// Empty splits take the training widths so width checks compare real data.
fn align_widths(sets: &mut [Dataset; 3]) {
    let (t, m) = (sets[0].d_tok, sets[0].d_img);
    for d in sets.iter_mut().skip(1) {
        if d.is_empty() {
            d.d_tok = t;
            d.d_img = m;
        }
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Gen { config, out, seed } => cmd_gen(config.as_deref(), out, &seed),
        Command::Train {
            config,
            data,
            out,
            seed,
        } => cmd_train(config.as_deref(), &data, out, &seed),
        Command::Eval {
            checkpoint,
            data,
            out,
        } => cmd_eval(&checkpoint, &data, &out),
        Command::Ablate {
            config,
            data,
            out,
            seed,
        } => cmd_ablate(config.as_deref(), &data, out, &seed),
        Command::Verify { trials, out, seed } => cmd_verify(trials, &out, &seed),
        Command::Routing {
            checkpoint,
            data,
            out,
        } => cmd_routing(&checkpoint, &data, &out),
    }
}

pub fn cmd_gen(config: Option<&Path>, out: Option<PathBuf>, seed: &SeedArg) -> AppResult<()> {
    let (cfg, out) = resolve(config, seed, out)?;
    let data = generate(&cfg.gen_config())?;
    let (tr, va, te) = split(&data, cfg.split, cfg.seed)?;
    ensure_dir(&out)?;
    for (name, d) in [
        ("train.jsonl", &tr),
        ("val.jsonl", &va),
        ("test.jsonl", &te),
    ] {
        write_jsonl(d, &out.join(name))?;
    }
    write_config(&out, &cfg)?;
    println!(
        "generated {} products ({} reviews): train {}, val {}, test {}",
        data.len(),
        data.review_count(),
        tr.len(),
        va.len(),
        te.len()
    );
    Ok(())
}

pub fn cmd_train(
    config: Option<&Path>,
    data: &Path,
    out: Option<PathBuf>,
    seed: &SeedArg,
) -> AppResult<()> {
    let (cfg, out) = resolve(config, seed, out)?;
    let mut sets = read_splits(data)?;
    align_widths(&mut sets);
    let [tr, va, te] = &sets;
    let train_cfg = cfg.train_config();
    let run = train(
        Splits {
            train: tr,
            val: va,
            test: te,
        },
        &train_cfg,
    )?;
    ensure_dir(&out)?;
    write_config(&out, &cfg)?;
    Checkpoint::new(&train_cfg, &run.model, run.best_epoch).save(&out.join("checkpoint.json"))?;
    report::write_epochs(&out.join("epochs.csv"), &run.reports)?;
    report::write_run_metrics(&out.join("metrics.csv"), &run)?;
    report::write_summary(&out.join("summary.csv"), cfg.seed, &run)?;
    println!(
        "trained {} epochs; best epoch {}; test MAP {:.4} NDCG@3 {:.4} NDCG@5 {:.4}; delta MAP {:.4}",
        run.reports.len(),
        run.best_epoch.map_or_else(|| "none".to_string(), |e| e.to_string()),
        run.test.metrics.map,
        run.test.metrics.ndcg3,
        run.test.metrics.ndcg5,
        run.delta_map
    );
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path) -> AppResult<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    println!("seed: {}", ckpt.train.seed);
    let model = ckpt.to_model()?;
    let dataset = read_jsonl(data)?;
    check_widths(&ckpt, &dataset)?;
    let e = evaluate(&model, &dataset, ckpt.train.loss, ckpt.train.metrics)?;
    ensure_dir(out)?;
    report::write_evaluations(&out.join("metrics.csv"), &[("eval", e)])?;
    println!(
        "evaluated {} products: MAP {:.4} NDCG@3 {:.4} NDCG@5 {:.4}",
        dataset.len(),
        e.metrics.map,
        e.metrics.ndcg3,
        e.metrics.ndcg5
    );
    Ok(())
}

fn check_widths(ckpt: &Checkpoint, data: &Dataset) -> AppResult<()> {
    let enc = &ckpt.model.encoder;
    if !data.is_empty() && (data.d_tok != enc.d_tok || data.d_img != enc.d_img) {
        return Err(AppError::validation(format!(
            "schema error: dataset d_tok={} d_img={} but the checkpoint expects d_tok={} d_img={}",
            data.d_tok, data.d_img, enc.d_tok, enc.d_img
        )));
    }
    Ok(())
}

/// Trains every grid variant, spreading runs over the available cores.
/// Rows come back in grid order regardless of scheduling.
pub fn run_ablation(splits: Splits<'_>, base: &TrainConfig) -> AppResult<Vec<AblationRow>> {
    let grid = ablation_grid(base);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(grid.len());
    let mut results: Vec<Option<AppResult<AblationRow>>> = (0..grid.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let grid = &grid;
                s.spawn(move || {
                    (w..grid.len())
                        .step_by(workers)
                        .map(|i| {
                            let row = train(splits, &grid[i])
                                .map(|run| AblationRow::from_run(&grid[i], &run))
                                .map_err(AppError::from);
                            (i, row)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, row) in h.join().expect("ablation worker panicked") {
                results[i] = Some(row);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every variant ran"))
        .collect()
}

pub fn cmd_ablate(
    config: Option<&Path>,
    data: &Path,
    out: Option<PathBuf>,
    seed: &SeedArg,
) -> AppResult<()> {
    let (cfg, out) = resolve(config, seed, out)?;
    let mut sets = read_splits(data)?;
    align_widths(&mut sets);
    let [tr, va, te] = &sets;
    let rows = run_ablation(
        Splits {
            train: tr,
            val: va,
            test: te,
        },
        &cfg.train_config(),
    )?;
    ensure_dir(&out)?;
    write_config(&out, &cfg)?;
    report::write_ablation(&out.join("ablation.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:<22} {:<9} lan={:<5} val MAP {:.4}  test MAP {:.4}",
            r.regressor.short_name(),
            format!("{:?}", r.loss).to_lowercase(),
            r.listwise_attention,
            r.val_map,
            r.test.map
        );
    }
    Ok(())
}

/// Runs every loss-property check. The concave probe is returned
/// separately: it is expected to fail.
pub fn verify_properties(
    trials: usize,
    seed: u64,
) -> AppResult<(Vec<PropertyReport>, PropertyReport)> {
    if trials == 0 {
        return Err(AppError::validation("--trials must be at least 1"));
    }
    let root = Rng::new(seed);
    let mut reports = vec![
        check_convexity(LossKind::Listwise, trials, &mut root.split(0)),
        check_convexity(LossKind::Pairwise, trials, &mut root.split(1)),
    ];
    let grads = check_gradient_bounds(trials, &mut root.split(2))?;
    reports.push(grads.report.clone());
    reports.push(check_loss_bounds(trials, -5.0, 5.0, &mut root.split(3))?);
    reports.push(check_bound_monotonicity(trials, &mut root.split(4))?);

    let (log10, ok) = base10_list_remark(2043);
    reports.push(PropertyReport {
        property: "base10_list_remark".into(),
        trials: 1,
        violations: usize::from(!ok),
        worst_margin: 4.0 - log10,
        pass: ok,
    });

    // Bound comparison at desk scale: 30 reviews, scores in a width-10 box,
    // labels spanning 0..4.
    let (l_list, l_pair) = loss_bounds(30, 10.0, 4.0);
    let bound = |gamma: f64, l: f64| {
        generalization_bound(&BoundInputs::constant_rate(gamma, l, 1000, 1e-3, 200, 0.05))
    };
    let margin = bound(grads.gamma_pair, l_pair)? - bound(grads.gamma_list, l_list)?;
    let ordered = grads.gamma_list < grads.gamma_pair && l_list < l_pair;
    let strict = margin > 0.0;
    reports.push(PropertyReport {
        property: "bound_ordering".into(),
        trials: 1,
        violations: usize::from(!(ordered && strict)),
        worst_margin: margin,
        pass: ordered && strict,
    });

    let probe = check_concave_probe(trials.min(100), &mut root.split(5));
    Ok((reports, probe))
}

pub fn cmd_verify(trials: usize, out: &Path, seed: &SeedArg) -> AppResult<()> {
    let seed = seed.seed.unwrap_or(RunConfigFile::default().seed);
    println!("seed: {seed}");
    let (reports, probe) = verify_properties(trials, seed)?;
    if probe.violations == 0 {
        return Err(AppError::runtime(
            "harness self-test failed: the concave probe was not flagged",
        ));
    }
    ensure_dir(out)?;
    report::write_properties(&out.join("properties.csv"), &reports)?;
    println!(
        "harness self-test: concave probe flagged {} violations",
        probe.violations
    );
    for r in &reports {
        println!(
            "{:<20} {:>6} trials  {:>4} violations  {}",
            r.property,
            r.trials,
            r.violations,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(bad) = reports.iter().find(|r| !r.pass) {
        return Err(AppError::runtime(format!(
            "property `{}` failed",
            bad.property
        )));
    }
    Ok(())
}

pub fn cmd_routing(checkpoint: &Path, data: &Path, out: &Path) -> AppResult<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    println!("seed: {}", ckpt.train.seed);
    let model = ckpt.to_model()?;
    let dataset = read_jsonl(data)?;
    check_widths(&ckpt, &dataset)?;
    let stats = leaf_routing_stats(&model, &dataset)?;
    ensure_dir(out)?;
    report::write_routing(&out.join("routing.csv"), &stats)?;
    for c in stats.empty_classes() {
        println!("label {c}: no reviews, row marked NaN");
    }
    if stats.counts[0] > 0 && stats.counts[4] > 0 {
        println!(
            "total variation between label 0 and label 4 routing: {:.4}",
            total_variation(stats.mean.row(0), stats.mean.row(4))
        );
    }
    Ok(())
}
