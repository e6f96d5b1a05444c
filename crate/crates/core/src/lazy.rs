//! Lazy ensemble evaluation and two-stage committee evaluation.
//!
//! Members are queried in a fixed order that is shuffled once when the
//! evaluator is built. Each prediction starts at its own offset into that
//! order and wraps around, so sampling members without replacement costs a
//! single random number per input.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Ensemble;
use crate::error::{Error, Result};
use crate::scalar::{Feature, Probability};
use crate::stopping::{Rule, StopConfig, StoppingTable};
use crate::tree::argmax;

/// Running per-class vote counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    counts: Vec<u32>,
    cast: usize,
}

impl VoteTally {
    pub fn new(num_classes: usize) -> Self {
        VoteTally {
            counts: vec![0; num_classes],
            cast: 0,
        }
    }

    pub fn add(&mut self, class: usize) {
        self.counts[class] += 1;
        self.cast += 1;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn cast(&self) -> usize {
        self.cast
    }

    pub fn leader(&self) -> usize {
        argmax(&self.counts)
    }

    /// Votes for the leading and the runner-up class.
    pub fn lead_and_runner_up(&self) -> (usize, usize) {
        let (mut first, mut second) = (0u32, 0u32);
        for &c in &self.counts {
            if c > first {
                second = first;
                first = c;
            } else if c > second {
                second = c;
            }
        }
        (first as usize, second as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LazyResult {
    pub class: usize,
    pub votes_used: usize,
    /// The rule stopped before every member voted.
    pub stopped_early: bool,
}

/// An ensemble paired with its stopping table and a query order.
#[derive(Debug, Clone)]
pub struct LazyEvaluator<'a, T, P> {
    ensemble: &'a Ensemble<T>,
    table: StoppingTable<P>,
    order: Vec<usize>,
}

impl<'a, T: Feature, P: Probability> LazyEvaluator<'a, T, P> {
    /// Checks the table against the ensemble and shuffles the query order
    /// with `permutation_seed`.
    pub fn new(ensemble: &'a Ensemble<T>, table: StoppingTable<P>, permutation_seed: u64) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::validation("cannot evaluate an empty ensemble"));
        }
        if table.ensemble_size() != ensemble.len() {
            return Err(Error::validation(format!(
                "stopping table is for {} members, ensemble has {}",
                table.ensemble_size(),
                ensemble.len()
            )));
        }
        if table.rule() == Rule::Mlee && ensemble.num_classes() > 2 {
            return Err(Error::Unsupported(format!(
                "MLEE needs a binary problem, ensemble has {} classes",
                ensemble.num_classes()
            )));
        }
        let mut order: Vec<usize> = (0..ensemble.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(permutation_seed));
        Ok(LazyEvaluator { ensemble, table, order })
    }

    /// Builds the table for `rule` and `alpha` at this ensemble's size.
    pub fn with_rule(ensemble: &'a Ensemble<T>, rule: Rule, alpha: P, permutation_seed: u64) -> Result<Self> {
        let table = StoppingTable::build(&StopConfig::new(rule, alpha, ensemble.len())?)?;
        Self::new(ensemble, table, permutation_seed)
    }

    pub fn ensemble(&self) -> &Ensemble<T> {
        self.ensemble
    }

    pub fn table(&self) -> &StoppingTable<P> {
        &self.table
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Queries members from `start_index` in the shuffled order until the
    /// table allows stopping or all have voted.
    pub fn evaluate(&self, x: &[T], start_index: usize) -> Result<LazyResult> {
        self.ensemble.check_input(x)?;
        let m = self.order.len();
        let mut tally = VoteTally::new(self.ensemble.num_classes());
        for step in 0..m {
            let member = self.order[(start_index + step) % m];
            tally.add(self.ensemble.tree(member).predict_unchecked(x));
            let (lead, run) = tally.lead_and_runner_up();
            if step + 1 < m && self.table.should_stop(lead, run) {
                return Ok(LazyResult {
                    class: tally.leader(),
                    votes_used: step + 1,
                    stopped_early: true,
                });
            }
        }
        Ok(LazyResult {
            class: tally.leader(),
            votes_used: m,
            stopped_early: false,
        })
    }

    /// Draws the one random start offset and evaluates.
    pub fn evaluate_with<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<LazyResult> {
        let start = rng.random_range(0..self.order.len());
        self.evaluate(x, start)
    }
}

/// Lazy evaluation with a one-off evaluator.
pub fn lazy_evaluate<T: Feature, P: Probability>(
    ensemble: &Ensemble<T>,
    x: &[T],
    table: &StoppingTable<P>,
    permutation_seed: u64,
    start_index: usize,
) -> Result<LazyResult> {
    LazyEvaluator::new(ensemble, table.clone(), permutation_seed)?.evaluate(x, start_index)
}

/// Majority over every member, lowest class on ties.
pub fn full_evaluate<T: Feature>(ensemble: &Ensemble<T>, x: &[T]) -> Result<usize> {
    ensemble.predict(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Subcommittee,
    Full,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Subcommittee => "subcommittee",
            Stage::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitteeResult {
    pub class: usize,
    pub stage: Stage,
    /// Subcommittee votes plus, on escalation, one vote per member of every partition.
    pub votes_used: usize,
    pub partition: usize,
}

/// Partitions of a mega-ensemble, each able to act as a lazy subcommittee.
#[derive(Debug)]
pub struct Committee<'a, T, P> {
    partitions: &'a [Ensemble<T>],
    evaluators: Vec<Option<LazyEvaluator<'a, T, P>>>,
    usable: Vec<usize>,
}

impl<'a, T: Feature, P: Probability> Committee<'a, T, P> {
    /// One shared table; every non-empty partition must match its size.
    pub fn with_table(partitions: &'a [Ensemble<T>], table: &StoppingTable<P>, permutation_seed: u64) -> Result<Self> {
        Self::build(partitions, permutation_seed, |_| Ok(table.clone()))
    }

    /// Builds a table per distinct partition size.
    pub fn new(partitions: &'a [Ensemble<T>], rule: Rule, alpha: P, permutation_seed: u64) -> Result<Self> {
        let mut cache: BTreeMap<usize, StoppingTable<P>> = BTreeMap::new();
        Self::build(partitions, permutation_seed, |size| {
            if let Some(t) = cache.get(&size) {
                return Ok(t.clone());
            }
            let t = StoppingTable::build(&StopConfig::new(rule, alpha, size)?)?;
            cache.insert(size, t.clone());
            Ok(t)
        })
    }

    fn build(
        partitions: &'a [Ensemble<T>],
        permutation_seed: u64,
        mut table_for: impl FnMut(usize) -> Result<StoppingTable<P>>,
    ) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::validation("committee needs at least one partition"));
        }
        let (d, c) = (partitions[0].num_features(), partitions[0].num_classes());
        let mut evaluators = Vec::with_capacity(partitions.len());
        let mut usable = Vec::new();
        for (i, part) in partitions.iter().enumerate() {
            if part.num_features() != d || part.num_classes() != c {
                return Err(Error::validation(format!("partition {i} has a different shape")));
            }
            if part.is_empty() {
                evaluators.push(None);
                continue;
            }
            let table = table_for(part.len())?;
            let seed = permutation_seed.wrapping_add(i as u64);
            evaluators.push(Some(LazyEvaluator::new(part, table, seed)?));
            usable.push(i);
        }
        if usable.is_empty() {
            return Err(Error::validation("every partition is empty"));
        }
        Ok(Committee {
            partitions,
            evaluators,
            usable,
        })
    }

    pub fn total_members(&self) -> usize {
        self.partitions.iter().map(Ensemble::len).sum()
    }

    /// Picks a random non-empty partition and evaluates it lazily; if it does
    /// not stop early, every member of every partition votes once.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<CommitteeResult> {
        let partition = self.usable[rng.random_range(0..self.usable.len())];
        let sub = self.evaluators[partition].as_ref().expect("usable partition");
        let first = sub.evaluate_with(x, rng)?;
        if first.stopped_early {
            return Ok(CommitteeResult {
                class: first.class,
                stage: Stage::Subcommittee,
                votes_used: first.votes_used,
                partition,
            });
        }
        let mut votes = vec![0u32; self.partitions[0].num_classes()];
        for part in self.partitions {
            for (v, add) in votes.iter_mut().zip(part.votes(x)?) {
                *v += add;
            }
        }
        Ok(CommitteeResult {
            class: argmax(&votes),
            stage: Stage::Full,
            votes_used: first.votes_used + self.total_members(),
            partition,
        })
    }
}

/// Two-stage evaluation of `x` with one table shared by all partitions.
pub fn committee_evaluate<T: Feature, P: Probability>(
    partitions: &[Ensemble<T>],
    x: &[T],
    table_sub: &StoppingTable<P>,
    seed: u64,
) -> Result<CommitteeResult> {
    let committee = Committee::with_table(partitions, table_sub, seed)?;
    committee.evaluate(x, &mut ChaCha8Rng::seed_from_u64(seed))
}
