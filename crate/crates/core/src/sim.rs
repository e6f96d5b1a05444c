//! Monte-Carlo comparison of stopping rules on simulated binary ensembles.
//!
//! Each trial draws a vote share `p ~ U[0, 1]`; the true label is 1 iff
//! `p >= 0.5`, and every member votes 1 with probability `p`. Votes are
//! generated one at a time until the rule stops. The full-ensemble outcome
//! extends the same vote stream: the unqueried members' votes are a single
//! Binomial(m - n, p) draw, which has the same law as generating them one
//! by one. Lazy and full predictions are therefore paired per trial.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Probability;
use crate::stopping::{Rule, StopConfig, StoppingTable};

/// Trials are split into this many independently seeded chunks regardless
/// of the thread count, so results do not depend on the machine.
const CHUNKS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<P> {
    pub ensemble_size: usize,
    pub alpha: P,
    pub rule: Rule,
    pub trials: u64,
    pub seed: u64,
}

impl<P: Probability> SimConfig<P> {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trial count must be at least 1"));
        }
        StopConfig::new(self.rule, self.alpha, self.ensemble_size).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub rule: Rule,
    pub ensemble_size: usize,
    pub alpha: f64,
    pub trials: u64,
    /// Mean of `votes_used / m`.
    pub mean_fraction: f64,
    pub mean_votes: f64,
    pub lazy_accuracy: f64,
    pub full_accuracy: f64,
    pub relative_error: f64,
    /// Fraction of trials where lazy and full predictions differ.
    pub disagreement: f64,
    /// `(votes_used, trials)` for every stopping point that occurred, ascending.
    pub histogram: Vec<(usize, u64)>,
}

impl SimReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("votes_used,count\n");
        for (v, c) in &self.histogram {
            let _ = writeln!(out, "{v},{c}");
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    trials: u64,
    votes: u64,
    lazy_correct: u64,
    full_correct: u64,
    disagree: u64,
    histogram: Vec<u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.trials += other.trials;
        self.votes += other.votes;
        self.lazy_correct += other.lazy_correct;
        self.full_correct += other.full_correct;
        self.disagree += other.disagree;
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self
    }
}

/// Outcome of one simulated prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub truth: usize,
    pub lazy: usize,
    pub full: usize,
    pub votes_used: usize,
}

/// Simulates one prediction with vote share `p`.
pub fn simulate_trial<P: Probability, R: Rng + ?Sized>(table: &StoppingTable<P>, p: f64, rng: &mut R) -> Trial {
    let m = table.ensemble_size();
    let mut ones = 0usize;
    let mut n = 0usize;
    while n < m {
        n += 1;
        if rng.random::<f64>() < p {
            ones += 1;
        }
        let zeros = n - ones;
        if n < m && table.should_stop(ones.max(zeros), ones.min(zeros)) {
            break;
        }
    }
    let lazy = usize::from(ones > n - ones);
    let rest = m - n;
    let more = if rest == 0 {
        0
    } else {
        Binomial::new(rest as u64, p).expect("p in [0, 1]").sample(rng) as usize
    };
    let total = ones + more;
    Trial {
        truth: usize::from(p >= 0.5),
        lazy,
        full: usize::from(total > m - total),
        votes_used: n,
    }
}

/// Runs `cfg.trials` simulated predictions, in parallel, deterministically in `cfg.seed`.
pub fn simulate<P: Probability>(cfg: &SimConfig<P>) -> Result<SimReport> {
    cfg.validate()?;
    let table = StoppingTable::build(&StopConfig::new(cfg.rule, cfg.alpha, cfg.ensemble_size)?)?;
    Ok(simulate_with_table(&table, cfg.trials, cfg.seed))
}

/// Like [`simulate`] with a prebuilt table.
pub fn simulate_with_table<P: Probability>(table: &StoppingTable<P>, trials: u64, seed: u64) -> SimReport {
    let m = table.ensemble_size();
    let chunks = (CHUNKS as u64).min(trials);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let count = trials / chunks + u64::from(chunk < trials % chunks);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut t = Tally {
                histogram: vec![0; m + 1],
                ..Tally::default()
            };
            for _ in 0..count {
                let p: f64 = rng.random();
                let r = simulate_trial(table, p, &mut rng);
                t.trials += 1;
                t.votes += r.votes_used as u64;
                t.lazy_correct += u64::from(r.lazy == r.truth);
                t.full_correct += u64::from(r.full == r.truth);
                t.disagree += u64::from(r.lazy != r.full);
                t.histogram[r.votes_used] += 1;
            }
            t
        })
        .reduce(Tally::default, Tally::merge);

    let n = tally.trials as f64;
    let lazy_accuracy = tally.lazy_correct as f64 / n;
    let full_accuracy = tally.full_correct as f64 / n;
    SimReport {
        rule: table.rule(),
        ensemble_size: m,
        alpha: table.alpha().to_f64().unwrap_or(f64::NAN),
        trials: tally.trials,
        mean_fraction: tally.votes as f64 / n / m as f64,
        mean_votes: tally.votes as f64 / n,
        lazy_accuracy,
        full_accuracy,
        relative_error: relative_error(lazy_accuracy, full_accuracy).unwrap_or(f64::NAN),
        disagreement: tally.disagree as f64 / n,
        histogram: tally
            .histogram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(v, &c)| (v, c))
            .collect(),
    }
}

/// Relative increase in error rate, `1 - lazy / full`.
pub fn relative_error(lazy_accuracy: f64, full_accuracy: f64) -> Result<f64> {
    if full_accuracy.is_nan() || full_accuracy <= 0.0 {
        return Err(Error::validation("relative error is undefined when full accuracy is 0"));
    }
    Ok(1.0 - lazy_accuracy / full_accuracy)
}

pub const SWEEP_HEADER: &str = "rule,m,alpha,frac_evaluated,rel_error,lazy_acc,full_acc";

/// Simulates every `(rule, m, alpha)` combination with the same seed, in
/// rule-major order.
pub fn sweep(rules: &[Rule], m_values: &[usize], alphas: &[f64], trials: u64, seed: u64) -> Result<Vec<SimReport>> {
    let mut out = Vec::with_capacity(rules.len() * m_values.len() * alphas.len());
    for &rule in rules {
        for &m in m_values {
            for &alpha in alphas {
                out.push(simulate(&SimConfig {
                    ensemble_size: m,
                    alpha,
                    rule,
                    trials,
                    seed,
                })?);
            }
        }
    }
    Ok(out)
}

pub fn sweep_csv(reports: &[SimReport]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.rule, r.ensemble_size, r.alpha, r.mean_fraction, r.relative_error, r.lazy_accuracy, r.full_accuracy
        );
    }
    out
}
