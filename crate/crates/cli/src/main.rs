//! `comet`: shuffle data into blocks, train distributed forests, predict
//! lazily and run the stopping-rule experiments.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use comet_core::data::{load_block, shuffle_split, synth_generate, write_block, SynthSpec};
use comet_core::engine::{block_files, load_ensemble, merge_partitions, train_distributed, TrainConfig};
use comet_core::ivoting::Sampler;
use comet_core::lazy::Committee;
use comet_core::metrics::{
    bite_size_sweep, bite_sweep_csv, evaluate, evaluate_committee, loglog_slope, EvalMode, EvalReport,
};
use comet_core::sim::{simulate, sweep_csv, SimConfig, SimReport};
use comet_core::stopping::{StopConfig, StoppingTable};
use comet_core::{Error, Rule};

/// Largest MLEE table built without `--force`.
const MLEE_LIMIT: usize = 200_000;

#[derive(Parser)]
#[command(
    name = "comet",
    version,
    about = "Distributed random forests with lazy ensemble evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CSV file into randomly assigned blocks.
    Shuffle(ShuffleArgs),
    /// Write a synthetic Gaussian-mixture dataset.
    Synth(SynthArgs),
    /// Train one local ensemble per block and write the merged partitions.
    Train(TrainArgs),
    /// Score ensemble partitions on a labelled test file.
    Predict(PredictArgs),
    /// Compare stopping rules on simulated votes.
    Simulate(SimulateArgs),
    /// Build a stopping-threshold table and export it as CSV.
    Table(TableArgs),
    /// Time table construction across ensemble sizes.
    BenchTable(BenchTableArgs),
    /// Held-out accuracy of IVoting as a function of bite size.
    BiteSweep(BiteSweepArgs),
}

#[derive(Args)]
struct ShuffleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    blocks_dir: PathBuf,
    #[arg(long, default_value = "ivoting", value_parser = parse_sampler)]
    sampler: Sampler,
    #[arg(long, default_value_t = 100)]
    trees_per_block: usize,
    /// Defaults to 10% of each block, capped at 10,000.
    #[arg(long)]
    bite_size: Option<usize>,
    #[arg(long, default_value_t = 10)]
    min_leaf_size: usize,
    #[arg(long)]
    attrs_per_node: Option<usize>,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "COMET_WORKERS")]
    workers: Option<usize>,
    /// Overrides the class count inferred from the labels.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Partition files; repeat the flag or separate with commas.
    #[arg(long, required = true, value_delimiter = ',')]
    ensemble: Vec<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "full", value_parser = parse_rule)]
    rule: Rule,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate one random partition first and escalate when unsure.
    #[arg(long)]
    committee: bool,
    /// Per-example predictions CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_value = "10000")]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    alpha: Vec<f64>,
    /// Rule names, or `all` for the five lazy rules.
    #[arg(long, value_delimiter = ',', default_value = "g1-fpc")]
    rule: Vec<String>,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Votes-used histogram CSV; needs a single configuration.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// `paper-sim`: every lazy rule over an ensemble-size grid at alpha
    /// 0.01, then an alpha grid at m = 10000.
    #[arg(long, conflicts_with_all = ["m", "alpha", "rule"])]
    preset: Option<String>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value = "g1-fpc", value_parser = parse_rule)]
    rule: Rule,
    #[arg(long)]
    out: PathBuf,
    /// Allow MLEE tables above 200,000 members.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BenchTableArgs {
    /// Defaults to 1e3,1e4,1e5 for Gaussian rules and 1e2,1e3,1e4 for MLEE.
    #[arg(long, value_delimiter = ',')]
    m_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "g1-fpc,mlee", value_parser = parse_rule)]
    rules: Vec<Rule>,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Builds per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BiteSweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    holdout: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sampler(s: &str) -> Result<Sampler, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A bad flag combination caught after parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Validation(_) | Error::Unsupported(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Shuffle(a) => shuffle(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Table(a) => table(a),
        Command::BenchTable(a) => bench_table(a),
        Command::BiteSweep(a) => bite_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn guard_mlee(rule: Rule, m: usize, force: bool) -> anyhow::Result<()> {
    if rule == Rule::Mlee && m > MLEE_LIMIT && !force {
        return Err(usage(format!(
            "an MLEE table for m = {m} takes quadratic time; pass --force to build it anyway"
        )));
    }
    Ok(())
}

fn shuffle(a: ShuffleArgs) -> anyhow::Result<()> {
    if a.blocks == 0 {
        return Err(usage("--blocks must be at least 1"));
    }
    for p in shuffle_split(&a.input, a.blocks, a.seed, &a.out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        c: a.classes,
        class_separation: a.separation,
        noise_rate: a.noise,
    };
    let block = synth_generate::<f64>(&spec, a.seed)?;
    write_block(&block, &a.out)?;
    println!("wrote {} examples to {}", block.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    if !a.blocks_dir.is_dir() {
        bail!(Error::Validation(format!(
            "blocks directory {} not found",
            a.blocks_dir.display()
        )));
    }
    let paths = block_files(&a.blocks_dir)?;
    if paths.is_empty() {
        return Err(usage(format!("no .csv blocks in {}", a.blocks_dir.display())));
    }
    let workers = match a.workers {
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let cfg = TrainConfig {
        bite_size: a.bite_size,
        min_leaf_size: a.min_leaf_size,
        attrs_per_node: a.attrs_per_node,
        partitions: a.partitions,
        seed: a.seed,
        workers,
        num_classes: a.classes,
        ..TrainConfig::new(paths, a.sampler, a.trees_per_block)
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let start = Instant::now();
    let summary = train_distributed::<f64>(&cfg, &a.out_dir)?;
    for b in &summary.blocks {
        println!(
            "block {} {}: {} examples, {} trees, {:.3}s",
            b.block_id,
            b.path.display(),
            b.examples,
            b.trees,
            b.train_time.as_secs_f64()
        );
    }
    for (p, size) in summary.partition_paths.iter().zip(&summary.partition_sizes) {
        println!("{}: {size} trees", p.display());
    }
    println!("total trees: {}", summary.total_trees());
    println!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!("examples: {}", report.predictions.len());
    println!("accuracy: {}", report.accuracy);
    println!("mean votes: {}", report.mean_votes);
    println!("eval time: {:.3}s", report.wall_time.as_secs_f64());
    println!("confusion (rows = truth):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        println!("  {}", cells.join(" "));
    }
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let report = if a.committee {
        let parts = a
            .ensemble
            .iter()
            .map(|p| load_ensemble::<f64>(p))
            .collect::<comet_core::Result<Vec<_>>>()?;
        let first = parts.first().expect("clap requires one ensemble");
        let test = load_block::<f64>(&a.test, Some(first.num_classes()))?;
        let committee = Committee::new(&parts, a.rule, a.alpha, a.seed)?;
        println!(
            "committee: {} partitions, {} trees",
            parts.len(),
            committee.total_members()
        );
        evaluate_committee(&committee, &test, a.seed)?
    } else {
        let ensemble = merge_partitions::<f64>(&a.ensemble)?;
        let test = load_block::<f64>(&a.test, Some(ensemble.num_classes()))?;
        let mode = match a.rule {
            Rule::Full => EvalMode::Full,
            rule => EvalMode::Lazy {
                table: StoppingTable::build(&StopConfig::new(rule, a.alpha, ensemble.len())?)?,
                seed: a.seed,
            },
        };
        println!("ensemble: {} trees", ensemble.len());
        evaluate(&ensemble, &test, &mode)?
    };
    print_report(&report);
    if let Some(out) = &a.out {
        write_file(out, &report.predictions_csv())?;
    }
    Ok(())
}

fn expand_rules(names: &[String]) -> anyhow::Result<Vec<Rule>> {
    let mut rules = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            rules.extend(Rule::LAZY);
        } else {
            rules.push(name.parse::<Rule>()?);
        }
    }
    Ok(rules)
}

/// `(rule, m, alpha)` triples of the `paper-sim` preset.
fn paper_sim_grid() -> Vec<(Rule, usize, f64)> {
    let mut grid = Vec::new();
    for rule in Rule::LAZY {
        for m in [100, 250, 500, 1000, 2500, 5000, 10_000] {
            grid.push((rule, m, 0.01));
        }
        for alpha in [0.05, 0.001, 0.0001] {
            grid.push((rule, 10_000, alpha));
        }
    }
    grid
}

fn simulate_cmd(a: SimulateArgs) -> anyhow::Result<()> {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let grid = match a.preset.as_deref() {
        Some("paper-sim") => paper_sim_grid(),
        Some(other) => return Err(usage(format!("unknown preset `{other}`"))),
        None => {
            let rules = expand_rules(&a.rule)?;
            let mut grid = Vec::new();
            for &rule in &rules {
                for &m in &a.m {
                    for &alpha in &a.alpha {
                        grid.push((rule, m, alpha));
                    }
                }
            }
            grid
        }
    };
    if a.histogram.is_some() && grid.len() != 1 {
        return Err(usage("--histogram needs exactly one rule, m and alpha"));
    }
    let mut reports: Vec<SimReport> = Vec::with_capacity(grid.len());
    for (rule, m, alpha) in grid {
        guard_mlee(rule, m, a.force)?;
        let start = Instant::now();
        let r = simulate(&SimConfig {
            ensemble_size: m,
            alpha,
            rule,
            trials: a.trials,
            seed: a.seed,
        })?;
        println!(
            "{rule} m={m} alpha={alpha}: frac_evaluated={:.5} rel_error={:.6} lazy_acc={:.6} full_acc={:.6} ({:.2}s)",
            r.mean_fraction,
            r.relative_error,
            r.lazy_accuracy,
            r.full_accuracy,
            start.elapsed().as_secs_f64()
        );
        reports.push(r);
    }
    if let Some(out) = &a.out {
        write_file(out, &sweep_csv(&reports))?;
    }
    if let Some(path) = &a.histogram {
        write_file(path, &reports[0].histogram_csv())?;
    }
    Ok(())
}

fn table(a: TableArgs) -> anyhow::Result<()> {
    guard_mlee(a.rule, a.m, a.force)?;
    let start = Instant::now();
    let t = StoppingTable::build(&StopConfig::new(a.rule, a.alpha, a.m)?)?;
    let built = start.elapsed();
    t.write_csv(&a.out)?;
    println!(
        "{} m={} alpha={}: {} rows, built in {:.3}s",
        a.rule,
        a.m,
        a.alpha,
        a.m - t.min_votes().min(a.m) + 1,
        built.as_secs_f64()
    );
    Ok(())
}

fn bench_table(a: BenchTableArgs) -> anyhow::Result<()> {
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    for &rule in &a.rules {
        let sizes = if !a.m_list.is_empty() {
            a.m_list.clone()
        } else if rule == Rule::Mlee {
            vec![100, 1_000, 10_000]
        } else {
            vec![1_000, 10_000, 100_000]
        };
        let mut points = Vec::with_capacity(sizes.len());
        for m in sizes {
            guard_mlee(rule, m, a.force)?;
            let cfg = StopConfig::new(rule, a.alpha, m)?;
            let mut best = f64::INFINITY;
            for _ in 0..a.repeats {
                let start = Instant::now();
                let t = StoppingTable::build(&cfg)?;
                best = best.min(start.elapsed().as_secs_f64());
                std::hint::black_box(t);
            }
            println!("{rule} m={m}: {:.6}s", best);
            points.push((m as f64, best));
        }
        if points.len() >= 2 {
            match loglog_slope(&points) {
                Ok(s) => println!("{rule} log-log slope: {s:.3}"),
                Err(e) => println!("{rule} log-log slope: n/a ({e})"),
            }
        }
    }
    Ok(())
}

fn bite_sweep(a: BiteSweepArgs) -> anyhow::Result<()> {
    let train = load_block::<f64>(&a.train, None)?;
    let holdout = load_block::<f64>(&a.holdout, Some(train.num_classes()))?;
    let rows = bite_size_sweep(&train, &holdout, &a.sizes, a.iterations, a.seed)?;
    for r in &rows {
        println!(
            "bite {}: accuracy {:.5} ({:.2}s)",
            r.bite_size,
            r.accuracy,
            r.train_time.as_secs_f64()
        );
    }
    if let Some(out) = &a.out {
        write_file(out, &bite_sweep_csv(&rows))?;
    }
    Ok(())
}
