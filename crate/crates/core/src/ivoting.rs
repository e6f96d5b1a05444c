//! Per-block ensemble construction: IVoting (importance-sampled voting) and
//! the bagging baseline.
//!
//! IVoting draws each bite half from the examples the running out-of-bag
//! vote classifies correctly and half from those it gets wrong, so later
//! trees concentrate on the hard part of the block. Every tree keeps equal
//! weight, which is what lets independently trained blocks merge by plain
//! concatenation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Block;
use crate::error::{Error, Result};
use crate::scalar::Feature;
use crate::tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampler {
    IVoting,
    Bagging,
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ivoting" | "ivote" => Ok(Sampler::IVoting),
            "bagging" | "bag" => Ok(Sampler::Bagging),
            other => Err(Error::validation(format!("unknown sampler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IVoteParams {
    /// Number of trees `m`.
    pub ensemble_size: usize,
    /// Examples per bite `b`; even so both halves are equal.
    pub bite_size: usize,
    /// Leaf rule and attribute sample size. The seed field is ignored: each
    /// tree gets its own seed from the sampler's stream.
    pub tree: TreeParams,
    pub seed: u64,
}

impl IVoteParams {
    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::validation("ensemble size must be at least 1"));
        }
        if self.bite_size < 2 || !self.bite_size.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "bite size {} must be an even number >= 2",
                self.bite_size
            )));
        }
        self.tree.validate(num_features)
    }
}

/// 10% of the block, capped at 10,000 and rounded down to an even number >= 2.
pub fn default_bite_size(block_len: usize) -> usize {
    let b = (block_len / 10).min(10_000);
    (b - b % 2).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OobClass {
    Correct,
    Incorrect,
}

/// Out-of-bag vote counts, one row of `c` counters per example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OobTally {
    counts: Vec<u32>,
    num_classes: usize,
}

impl OobTally {
    pub fn new(num_examples: usize, num_classes: usize) -> Self {
        OobTally {
            counts: vec![0; num_examples * num_classes],
            num_classes,
        }
    }

    pub fn row(&self, j: usize) -> &[u32] {
        &self.counts[j * self.num_classes..(j + 1) * self.num_classes]
    }

    pub fn record(&mut self, j: usize, class: usize) {
        self.counts[j * self.num_classes + class] += 1;
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// An example is correct only when its label is the unique arg max of a
    /// non-zero row. Ties and never-out-of-bag rows count as incorrect.
    pub fn classify(&self, j: usize, label: usize) -> OobClass {
        let row = self.row(j);
        let top = row.iter().copied().max().unwrap_or(0);
        if top == 0 || row[label] != top || row.iter().filter(|&&v| v == top).count() > 1 {
            OobClass::Incorrect
        } else {
            OobClass::Correct
        }
    }
}

/// Stepwise IVoting over one block. [`ivote`] drives it to completion; the
/// step interface exposes the intermediate partitions.
pub struct IVoting<'a, T> {
    block: &'a Block<T>,
    params: IVoteParams,
    rng: ChaCha8Rng,
    tally: OobTally,
    correct: Vec<usize>,
    incorrect: Vec<usize>,
    bite: Vec<usize>,
    bite_stamp: Vec<usize>,
    iteration: usize,
    trees: Vec<DecisionTree<T>>,
}

impl<'a, T: Feature> IVoting<'a, T> {
    pub fn new(block: &'a Block<T>, params: IVoteParams) -> Result<Self> {
        params.validate(block.num_features())?;
        let all: Vec<usize> = (0..block.len()).collect();
        Ok(IVoting {
            block,
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            tally: OobTally::new(block.len(), block.num_classes()),
            correct: all.clone(),
            incorrect: all,
            bite: Vec::with_capacity(params.bite_size),
            bite_stamp: vec![0; block.len()],
            iteration: 0,
            trees: Vec::with_capacity(params.ensemble_size),
        })
    }

    /// Runs one iteration: draw a bite, grow a tree, update the out-of-bag
    /// votes and repartition the block.
    pub fn step(&mut self) -> Result<&DecisionTree<T>> {
        self.iteration += 1;
        let half = self.params.bite_size / 2;
        self.bite.clear();
        for pool in [&self.correct, &self.incorrect] {
            // An exhausted side falls back to the whole block.
            for _ in 0..half {
                let j = if pool.is_empty() {
                    self.rng.random_range(0..self.block.len())
                } else {
                    pool[self.rng.random_range(0..pool.len())]
                };
                self.bite.push(j);
            }
        }
        let tree_params = TreeParams {
            seed: self.rng.next_u64(),
            ..self.params.tree
        };
        let tree = DecisionTree::fit(
            self.block.examples(),
            &self.bite,
            self.block.num_features(),
            self.block.num_classes(),
            &tree_params,
        )?;

        for &j in &self.bite {
            self.bite_stamp[j] = self.iteration;
        }
        for (j, ex) in self.block.examples().iter().enumerate() {
            if self.bite_stamp[j] != self.iteration {
                self.tally.record(j, tree.predict_unchecked(&ex.features));
            }
        }

        self.correct.clear();
        self.incorrect.clear();
        for (j, label) in self.block.labels().enumerate() {
            match self.tally.classify(j, label) {
                OobClass::Correct => self.correct.push(j),
                OobClass::Incorrect => self.incorrect.push(j),
            }
        }
        self.trees.push(tree);
        Ok(self.trees.last().expect("just pushed"))
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.params.ensemble_size
    }

    pub fn tally(&self) -> &OobTally {
        &self.tally
    }

    /// Examples the out-of-bag vote currently classifies correctly.
    pub fn correct_set(&self) -> &[usize] {
        &self.correct
    }

    pub fn incorrect_set(&self) -> &[usize] {
        &self.incorrect
    }

    /// Block indices drawn for the most recent tree; the first half came
    /// from the correct set and the second half from the incorrect set.
    pub fn last_bite(&self) -> &[usize] {
        &self.bite
    }

    pub fn into_trees(self) -> Vec<DecisionTree<T>> {
        self.trees
    }
}

/// Trains `params.ensemble_size` trees on `block` with IVoting, in training order.
pub fn ivote<T: Feature>(block: &Block<T>, params: &IVoteParams) -> Result<Vec<DecisionTree<T>>> {
    let mut iv = IVoting::new(block, *params)?;
    while !iv.is_done() {
        iv.step()?;
    }
    Ok(iv.into_trees())
}

/// Trains `params.ensemble_size` trees, each on `bite_size` uniform draws
/// with replacement from the block.
pub fn bag<T: Feature>(block: &Block<T>, params: &IVoteParams) -> Result<Vec<DecisionTree<T>>> {
    params.validate(block.num_features())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut bite = Vec::with_capacity(params.bite_size);
    (0..params.ensemble_size)
        .map(|_| {
            bite.clear();
            bite.extend((0..params.bite_size).map(|_| rng.random_range(0..block.len())));
            let tree_params = TreeParams {
                seed: rng.next_u64(),
                ..params.tree
            };
            DecisionTree::fit(
                block.examples(),
                &bite,
                block.num_features(),
                block.num_classes(),
                &tree_params,
            )
        })
        .collect()
}

/// Dispatches to [`ivote`] or [`bag`].
pub fn train_local<T: Feature>(
    sampler: Sampler,
    block: &Block<T>,
    params: &IVoteParams,
) -> Result<Vec<DecisionTree<T>>> {
    match sampler {
        Sampler::IVoting => ivote(block, params),
        Sampler::Bagging => bag(block, params),
    }
}
