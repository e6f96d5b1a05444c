//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so every line reaches stdout in order.

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use comet_core::data::{synth_generate, write_block, SynthSpec};
use comet_core::engine::{load_ensemble, merge_partitions, train_distributed, TrainConfig};
use comet_core::ivoting::Sampler;
use comet_core::metrics::{bite_size_sweep, loglog_slope};
use comet_core::sim::{simulate, SimConfig};
use comet_core::stopping::{mlee_prob_leading_wins, should_stop, LnFactorial, StopConfig, StoppingTable};
use comet_core::{Block, Rule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn comet(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_comet"))
        .args(args)
        .output()
        .expect("spawn comet");
    assert!(
        out.status.success(),
        "comet {args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn report_value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{stdout}"))
        .trim()
        .parse()
        .expect("numeric report value")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The seeded synthetic benchmark: 50,000 training rows in 20 dimensions,
/// two classes, 15% label noise, split into five blocks; 10,000 test rows.
const BENCH_N: usize = 50_000;
const BENCH_TEST_N: usize = 10_000;
const BENCH_SPEC: SynthSpec = SynthSpec {
    n: BENCH_N,
    d: 20,
    c: 2,
    class_separation: 0.5,
    noise_rate: 0.15,
};

struct Ctx {
    root: tempfile::TempDir,
    /// (seed, sampler) -> (ensemble files, test file)
    trained: HashMap<(u64, &'static str), (Vec<PathBuf>, PathBuf)>,
}

impl Ctx {
    /// Generates, shuffles and trains the benchmark through the CLI.
    fn benchmark(&mut self, seed: u64, sampler: &'static str) -> (Vec<PathBuf>, PathBuf) {
        if let Some(hit) = self.trained.get(&(seed, sampler)) {
            return hit.clone();
        }
        let dir = self.root.path().join(format!("bench-{seed}"));
        let data = dir.join("train.csv");
        let test = dir.join("test.csv");
        let blocks = dir.join("blocks");
        if !data.exists() {
            fs::create_dir_all(&dir).unwrap();
            let s = seed.to_string();
            let t = (10_000 + seed).to_string();
            let (n, tn) = (BENCH_N.to_string(), BENCH_TEST_N.to_string());
            let sep = BENCH_SPEC.class_separation.to_string();
            let noise = BENCH_SPEC.noise_rate.to_string();
            let common = ["--d", "20", "--classes", "2", "--separation", &sep, "--noise", &noise];
            let mut a = vec!["synth", "--n", &n, "--seed", &s, "--out", path(&data)];
            a.extend(common);
            comet(&a);
            let mut a = vec!["synth", "--n", &tn, "--seed", &t, "--out", path(&test)];
            a.extend(common);
            comet(&a);
            comet(&[
                "shuffle",
                "--input",
                path(&data),
                "--blocks",
                "5",
                "--seed",
                &s,
                "--out-dir",
                path(&blocks),
            ]);
        }
        let out = dir.join(sampler);
        comet(&[
            "train",
            "--blocks-dir",
            path(&blocks),
            "--sampler",
            sampler,
            "--trees-per-block",
            "100",
            "--bite-size",
            "1000",
            "--partitions",
            "1",
            "--seed",
            &seed.to_string(),
            "--out-dir",
            path(&out),
        ]);
        let hit = (vec![out.join("part-1.ensemble")], test);
        self.trained.insert((seed, sampler), hit.clone());
        hit
    }
}

fn criterion_1(ctx: &mut Ctx) -> Outcome {
    let out = ctx.root.path().join("c1.csv");
    let start = Instant::now();
    comet(&[
        "simulate",
        "--m",
        "10000",
        "--alpha",
        "0.01",
        "--rule",
        "g1-fpc",
        "--trials",
        "100000",
        "--out",
        path(&out),
    ]);
    let elapsed = start.elapsed().as_secs_f64();
    let csv = fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).expect("one data row").split(',').collect();
    let frac: f64 = row[3].parse().unwrap();
    let rel: f64 = row[4].parse().unwrap();
    check(
        frac < 0.03 && rel < 0.01,
        format!("frac_evaluated={frac:.5} (< 0.03), rel_error={rel:.5} (< 0.01), {elapsed:.1}s"),
    )
}

fn criterion_2(_: &mut Ctx) -> Outcome {
    let trials = 100_000u64;
    let mut worst = String::new();
    let mut failures = Vec::new();
    let mut max_ratio = f64::NEG_INFINITY;
    for alpha in [1e-2, 1e-3, 1e-4] {
        let bound = alpha + 2.576 * (alpha * (1.0 - alpha) / trials as f64).sqrt();
        for rule in Rule::LAZY {
            let r = simulate(&SimConfig {
                ensemble_size: 10_000,
                alpha,
                rule,
                trials,
                seed: 11,
            })
            .unwrap();
            let ratio = r.relative_error / bound;
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = format!(
                    "{rule} alpha={alpha}: rel_error={:.6} bound={bound:.6}",
                    r.relative_error
                );
            }
            if r.relative_error > bound {
                failures.push(format!("{rule} alpha={alpha}: {:.6} > {bound:.6}", r.relative_error));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("15 configurations within bound; tightest {worst}"))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_3(_: &mut Ctx) -> Outcome {
    let frac = |m| {
        simulate(&SimConfig {
            ensemble_size: m,
            alpha: 1e-4,
            rule: Rule::G1Fpc,
            trials: 100_000,
            seed: 3,
        })
        .unwrap()
        .mean_fraction
    };
    let (f100, f500, f10k) = (frac(100), frac(500), frac(10_000));
    check(
        f10k < f500 && f500 < f100,
        format!("frac(10000)={f10k:.5} < frac(500)={f500:.5} < frac(100)={f100:.5}"),
    )
}

fn criterion_4(_: &mut Ctx) -> Outcome {
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for m in [31usize, 64, 128, 512] {
        for rule in [Rule::G1, Rule::G2, Rule::G1Fpc, Rule::G2Fpc, Rule::Mlee] {
            for alpha in [1e-2, 1e-3, 1e-4] {
                let cfg = StopConfig::new(rule, alpha, m).unwrap();
                let table = StoppingTable::build(&cfg).unwrap();
                for n in 1..=m {
                    for lead in n.div_ceil(2)..=n {
                        checked += 1;
                        if table.should_stop(lead, n - lead) != should_stop(lead, n - lead, &cfg).unwrap() {
                            mismatches.push(format!("{rule} m={m} alpha={alpha} n={n} lead={lead}"));
                        }
                    }
                }
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "{} mismatches in {checked} (n, v_lead) pairs {:?}",
            mismatches.len(),
            mismatches.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn build_seconds(rule: Rule, m: usize, repeats: usize) -> f64 {
    let cfg = StopConfig::new(rule, 0.01, m).unwrap();
    (0..repeats)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(StoppingTable::build(&cfg).unwrap());
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_5(_: &mut Ctx) -> Outcome {
    let glee: Vec<(f64, f64)> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&m| (m as f64, build_seconds(Rule::G1Fpc, m, 7)))
        .collect();
    let mlee: Vec<(f64, f64)> = [100usize, 1_000, 10_000]
        .iter()
        .map(|&m| (m as f64, build_seconds(Rule::Mlee, m, 3)))
        .collect();
    let gs = loglog_slope(&glee).unwrap();
    let ms = loglog_slope(&mlee).unwrap();
    let g100k = glee[2].1;
    check(
        gs <= 1.3 && (1.5..=2.5).contains(&ms) && g100k < 1.0,
        format!(
            "GLEE slope {gs:.3} (<= 1.3), m=1e5 in {:.1}ms (< 1s); MLEE slope {ms:.3} (in [1.5, 2.5]), m=1e4 in {:.2}s",
            g100k * 1e3,
            mlee[2].1
        ),
    )
}

/// Composite Simpson rule on `[0, 1]`.
fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..intervals {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

fn criterion_6(_: &mut Ctx) -> Outcome {
    // Hand enumeration: a = 3, b = 1, two votes left, the leader needs one.
    // P = 1 - C(2,0) B(3,3) / B(3,1) = 1 - (1/30) / (1/3) = 0.9.
    let p: f64 = mlee_prob_leading_wins(2, 0, 4).unwrap();
    if (p - 0.9).abs() > 1e-9 {
        return Err(format!("P(2, 0, m=4) = {p}, expected 0.9"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sum = 0.0f64;
    let mut worst_pmf = 0.0f64;
    let mut worst_win = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(2..=200usize);
        let n = rng.random_range(1..m);
        let v_run = rng.random_range(0..=n / 2);
        let v_lead = n - v_run;
        let (r, a, b) = (m - n, v_lead + 1, v_run + 1);
        let fact = LnFactorial::<f64>::new(m + 2);
        let pmf: Vec<f64> = (0..=r).map(|j| fact.beta_binomial_pmf(j, r, a, b)).collect();
        worst_sum = worst_sum.max((pmf.iter().sum::<f64>() - 1.0).abs());

        // Oracle: integrate the binomial likelihood against the Beta(a, b)
        // posterior, normalising the density numerically as well.
        let grid = 20_000;
        // p^x (1 - p)^y, with 0^0 = 1 at the endpoints.
        let kernel = |p: f64, x: usize, y: usize| {
            let mut ln = 0.0;
            if x > 0 {
                ln += x as f64 * p.ln();
            }
            if y > 0 {
                ln += y as f64 * (1.0 - p).ln();
            }
            ln.exp()
        };
        let choose: Vec<f64> = (0..=r).map(|j| ln_choose(r, j).exp()).collect();
        let norm = simpson(|p| kernel(p, a - 1, b - 1), grid);
        for (j, &value) in pmf.iter().enumerate() {
            let oracle = choose[j] * simpson(|p| kernel(p, j + a - 1, r - j + b - 1), grid) / norm;
            worst_pmf = worst_pmf.max((value - oracle).abs());
        }
        let need = (m / 2 + 1).saturating_sub(v_lead);
        let oracle_win: f64 = if need == 0 {
            1.0
        } else {
            simpson(
                |p| {
                    let tail: f64 = (need..=r).map(|j| choose[j] * kernel(p, j, r - j)).sum();
                    tail * kernel(p, a - 1, b - 1)
                },
                grid,
            ) / norm
        };
        let ours: f64 = mlee_prob_leading_wins(v_lead, v_run, m).unwrap();
        worst_win = worst_win.max((ours - oracle_win).abs());
    }
    check(
        worst_sum <= 1e-9 && worst_pmf <= 1e-9 && worst_win <= 1e-9,
        format!(
            "P(2,0,4)=0.9 exactly to {:.1e}; over 100 triples max |sum-1|={worst_sum:.1e}, max pmf error={worst_pmf:.1e}, max P(win) error={worst_win:.1e}",
            (p - 0.9).abs()
        ),
    )
}

fn full_accuracy(ensembles: &[PathBuf], test: &Path) -> f64 {
    let mut args = vec!["predict", "--test", path(test), "--rule", "full"];
    for e in ensembles {
        args.extend(["--ensemble", path(e)]);
    }
    report_value(&comet(&args), "accuracy:")
}

fn criterion_7(ctx: &mut Ctx) -> Outcome {
    let mut rows = Vec::new();
    let mut diffs = Vec::new();
    for seed in 0..5u64 {
        let (iv, test) = ctx.benchmark(seed, "ivoting");
        let (bag, _) = ctx.benchmark(seed, "bagging");
        let a_iv = full_accuracy(&iv, &test);
        let a_bag = full_accuracy(&bag, &test);
        diffs.push(a_iv - a_bag);
        rows.push(format!("seed {seed}: {a_iv:.4} vs {a_bag:.4}"));
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let all_ge = diffs.iter().all(|&d| d >= 0.0);
    check(
        all_ge && mean > 0.0,
        format!("ivoting vs bagging {}; mean difference {mean:+.5}", rows.join(", ")),
    )
}

fn criterion_8(ctx: &mut Ctx) -> Outcome {
    let (parts, test) = ctx.benchmark(0, "ivoting");
    let trees: usize = parts.iter().map(|p| load_ensemble::<f64>(p).unwrap().len()).sum();
    let dir = ctx.root.path().join("c8");
    fs::create_dir_all(&dir).unwrap();
    let predictions = |rule: &str| {
        let out = dir.join(format!("{rule}.csv"));
        let mut args = vec![
            "predict",
            "--test",
            path(&test),
            "--rule",
            rule,
            "--alpha",
            "0.01",
            "--seed",
            "8",
        ];
        for p in &parts {
            args.extend(["--ensemble", path(p)]);
        }
        args.extend(["--out", path(&out)]);
        let stdout = comet(&args);
        let rows: Vec<(String, usize)> = fs::read_to_string(&out)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1].to_string(), f[2].parse().unwrap())
            })
            .collect();
        (rows, report_value(&stdout, "mean votes:"))
    };
    let (lazy, lazy_votes) = predictions("g1-fpc");
    let (full, _) = predictions("full");
    let n = lazy.len();
    let differ = lazy.iter().zip(&full).filter(|(a, b)| a.0 != b.0).count();
    let rate = differ as f64 / n as f64;
    let bound = 0.01 + 3.0 * (0.01 * 0.99 / n as f64).sqrt();
    check(
        trees >= 500 && n >= 10_000 && rate <= bound,
        format!("{trees} trees, {n} points: disagreement {rate:.5} (<= {bound:.5}), mean votes {lazy_votes:.1}"),
    )
}

fn criterion_9(ctx: &mut Ctx) -> Outcome {
    let dir = ctx.root.path().join("c9");
    let blocks: Vec<PathBuf> = (0..4u64)
        .map(|b| {
            let spec = SynthSpec {
                n: 1_500,
                d: 6,
                c: 3,
                class_separation: 0.7,
                noise_rate: 0.1,
            };
            let block: Block = synth_generate(&spec, 900 + b).unwrap();
            let p = dir.join("blocks").join(format!("block-{b}.csv"));
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            write_block(&block, &p).unwrap();
            p
        })
        .collect();
    let test: Block = synth_generate(
        &SynthSpec {
            n: 1_000,
            d: 6,
            c: 3,
            class_separation: 0.7,
            noise_rate: 0.1,
        },
        999,
    )
    .unwrap();

    let run = |p: usize, workers: usize, tag: &str| {
        let cfg = TrainConfig {
            partitions: p,
            seed: 42,
            workers,
            ..TrainConfig::new(blocks.clone(), Sampler::IVoting, 50)
        };
        let out = dir.join(tag);
        fs::create_dir_all(&out).unwrap();
        train_distributed::<f64>(&cfg, &out).unwrap()
    };
    let one = run(1, 2, "p1");
    let four = run(4, 2, "p4");
    let again = run(4, 1, "p4-rerun");
    let merged1 = merge_partitions::<f64>(&one.partition_paths).unwrap();
    let merged4 = merge_partitions::<f64>(&four.partition_paths).unwrap();
    let same_predictions = test
        .examples()
        .iter()
        .all(|ex| merged1.predict(&ex.features).unwrap() == merged4.predict(&ex.features).unwrap());
    let bytes_equal = four
        .partition_paths
        .iter()
        .zip(&again.partition_paths)
        .all(|(a, b)| fs::read(a).unwrap() == fs::read(b).unwrap());
    check(
        one.total_trees() == 200 && four.total_trees() == 200 && merged1.len() == 200 && merged4.len() == 200 && same_predictions && bytes_equal,
        format!(
            "trees p=1: {}, p=4: {} {:?}; identical predictions on 1000 points: {same_predictions}; byte-identical rerun: {bytes_equal}",
            one.total_trees(),
            four.total_trees(),
            four.partition_sizes
        ),
    )
}

fn criterion_10(_: &mut Ctx) -> Outcome {
    // One benchmark-sized block (a fifth of the training rows) and a holdout.
    let train: Block = synth_generate(
        &SynthSpec {
            n: BENCH_N / 5,
            ..BENCH_SPEC
        },
        100,
    )
    .unwrap();
    let holdout: Block = synth_generate(
        &SynthSpec {
            n: BENCH_TEST_N,
            ..BENCH_SPEC
        },
        101,
    )
    .unwrap();
    let sizes = [20, 50, 100, 200, 500, 1000, 2000, 4000];
    let rows = bite_size_sweep(&train, &holdout, &sizes, 100, 10).unwrap();
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let best = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Twice the binomial standard error of a holdout accuracy.
    let band = 2.0 * (best * (1.0 - best) / BENCH_TEST_N as f64).sqrt();
    // No size does worse than a smaller one beyond the band...
    let no_drop = (0..acc.len()).all(|j| (0..j).all(|i| acc[j] >= acc[i] - band));
    // ...the curve rises overall, and the largest sizes sit on the plateau.
    let rises = best - acc[0] > band;
    let plateau = acc[acc.len() - 2..].iter().all(|&a| best - a <= band);
    let curve: Vec<String> = sizes.iter().zip(&acc).map(|(s, a)| format!("{s}:{a:.4}")).collect();
    check(
        no_drop && rises && plateau,
        format!("band {band:.4}; {}", curve.join(" ")),
    )
}

fn main() {
    let mut ctx = Ctx {
        root: tempfile::tempdir().expect("temp dir"),
        trained: HashMap::new(),
    };
    type Criterion = fn(&mut Ctx) -> Outcome;
    let criteria: [(&str, Criterion); 10] = [
        ("simulation savings", criterion_1),
        ("error bound across rules", criterion_2),
        ("savings grow with ensemble size", criterion_3),
        ("table/direct-rule equivalence", criterion_4),
        ("precompute scaling", criterion_5),
        ("MLEE correctness oracle", criterion_6),
        ("IVoting beats bagging", criterion_7),
        ("lazy/full disagreement", criterion_8),
        ("engine conservation", criterion_9),
        ("bite-sweep shape", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
