//! Test-set evaluation shared by the experiments.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Block;
use crate::engine::Ensemble;
use crate::error::{Error, Result};
use crate::ivoting::{ivote, IVoteParams};
use crate::lazy::{Committee, LazyEvaluator, Stage};
use crate::scalar::{Feature, Probability};
use crate::stopping::StoppingTable;
use crate::tree::{attr_sample_size, TreeParams};

#[derive(Debug, Clone)]
pub enum EvalMode<P> {
    Full,
    /// Lazy evaluation; `seed` fixes the query order and the start offsets.
    Lazy {
        table: StoppingTable<P>,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: usize,
    pub votes_used: usize,
    /// `lazy` or `full` for single-ensemble modes, or the committee stage.
    pub stage: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_votes: f64,
    pub wall_time: Duration,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    fn from_predictions<T: Feature>(test: &Block<T>, predictions: Vec<Prediction>, wall_time: Duration) -> Self {
        let c = test.num_classes();
        let mut confusion = vec![vec![0u64; c]; c];
        let mut correct = 0usize;
        let mut votes = 0usize;
        for (p, truth) in predictions.iter().zip(test.labels()) {
            if p.class < c {
                confusion[truth][p.class] += 1;
            }
            correct += usize::from(p.class == truth);
            votes += p.votes_used;
        }
        let n = predictions.len() as f64;
        EvalReport {
            accuracy: correct as f64 / n,
            mean_votes: votes as f64 / n,
            wall_time,
            confusion,
            predictions,
        }
    }

    /// CSV `id,prediction,votes_used,stage`.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("id,prediction,votes_used,stage\n");
        for (i, p) in self.predictions.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", p.class, p.votes_used, p.stage);
        }
        out
    }
}

fn check<T: Feature>(ensemble: &Ensemble<T>, test: &Block<T>) -> Result<()> {
    if test.is_empty() {
        return Err(Error::validation("test block is empty"));
    }
    if test.num_features() != ensemble.num_features() {
        return Err(Error::validation(format!(
            "test block has {} features, ensemble expects {}",
            test.num_features(),
            ensemble.num_features()
        )));
    }
    Ok(())
}

/// Predicts every test example with full or lazy evaluation.
pub fn evaluate<T: Feature, P: Probability>(
    ensemble: &Ensemble<T>,
    test: &Block<T>,
    mode: &EvalMode<P>,
) -> Result<EvalReport> {
    check(ensemble, test)?;
    let start = Instant::now();
    let predictions: Vec<Prediction> = match mode {
        EvalMode::Full => {
            let m = ensemble.len();
            test.examples()
                .par_iter()
                .map(|ex| {
                    ensemble.predict(&ex.features).map(|class| Prediction {
                        class,
                        votes_used: m,
                        stage: "full",
                    })
                })
                .collect::<Result<_>>()?
        }
        EvalMode::Lazy { table, seed } => {
            let evaluator = LazyEvaluator::new(ensemble, table.clone(), *seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(1);
            let starts: Vec<usize> = (0..test.len()).map(|_| rng.random_range(0..ensemble.len())).collect();
            test.examples()
                .par_iter()
                .zip(starts)
                .map(|(ex, s)| {
                    evaluator.evaluate(&ex.features, s).map(|r| Prediction {
                        class: r.class,
                        votes_used: r.votes_used,
                        stage: if r.stopped_early { "lazy" } else { "full" },
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(EvalReport::from_predictions(test, predictions, start.elapsed()))
}

/// Two-stage committee evaluation of every test example.
pub fn evaluate_committee<T: Feature, P: Probability>(
    committee: &Committee<'_, T, P>,
    test: &Block<T>,
    seed: u64,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::validation("test block is empty"));
    }
    let start = Instant::now();
    let predictions: Vec<Prediction> = test
        .examples()
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            committee.evaluate(&ex.features, &mut rng).map(|r| Prediction {
                class: r.class,
                votes_used: r.votes_used,
                stage: match r.stage {
                    Stage::Subcommittee => Stage::Subcommittee.name(),
                    Stage::Full => Stage::Full.name(),
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_predictions(test, predictions, start.elapsed()))
}

/// Fraction of positions where two prediction lists disagree.
pub fn disagreement(a: &[Prediction], b: &[Prediction]) -> f64 {
    let differ = a.iter().zip(b).filter(|(x, y)| x.class != y.class).count();
    differ as f64 / a.len().min(b.len()).max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiteSweepRow {
    pub bite_size: usize,
    pub accuracy: f64,
    pub train_time: Duration,
}

/// Trains one IVoting ensemble of `iterations` trees per bite size on
/// `train` and scores each on `holdout` with full evaluation.
pub fn bite_size_sweep<T: Feature>(
    train: &Block<T>,
    holdout: &Block<T>,
    sizes: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<Vec<BiteSweepRow>> {
    if holdout.num_features() != train.num_features() {
        return Err(Error::validation("holdout and training blocks differ in feature count"));
    }
    let d = train.num_features();
    let tree = TreeParams {
        min_leaf_size: 10,
        attrs_per_node: attr_sample_size(d)?,
        seed,
    };
    sizes
        .iter()
        .map(|&b| {
            let params = IVoteParams {
                ensemble_size: iterations,
                bite_size: b,
                tree,
                seed,
            };
            let start = Instant::now();
            let trees = ivote(train, &params)?;
            let train_time = start.elapsed();
            let ensemble = Ensemble::from_trees(trees, d, train.num_classes(), train.block_id as u64, seed)?;
            let report = evaluate::<T, f64>(&ensemble, holdout, &EvalMode::Full)?;
            Ok(BiteSweepRow {
                bite_size: b,
                accuracy: report.accuracy,
                train_time,
            })
        })
        .collect()
}

pub fn bite_sweep_csv(rows: &[BiteSweepRow]) -> String {
    let mut out = String::from("bite_size,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.bite_size, r.accuracy);
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::validation("slope needs two or more positive points"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("slope needs two distinct x values"));
    }
    Ok(sxy / sxx)
}
