//! Single-pass distributed training on a local worker pool.
//!
//! The dataflow follows one map/reduce round. Each block is a map task that
//! loads its data, trains a local ensemble and tags every tree with a
//! uniformly random partition key. The reduce side groups trees by key and
//! writes one ensemble file per partition. Only trees cross the boundary
//! between the two sides.

mod format;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use format::{from_text, load_ensemble, save_ensemble, to_text, MAGIC, VERSION};

use crate::data::{load_block, Block};
use crate::error::{Error, Result};
use crate::ivoting::{default_bite_size, train_local, IVoteParams, Sampler};
use crate::scalar::Feature;
use crate::tree::{argmax, attr_sample_size, DecisionTree, TreeParams};

/// Where a tree came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    /// Position in its block's training order.
    pub id: u64,
    pub block: u64,
    /// Seed of the block's sampler.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member<T> {
    pub tree: DecisionTree<T>,
    pub provenance: Provenance,
}

/// A flat, equally weighted list of trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    num_features: usize,
    num_classes: usize,
    members: Vec<Member<T>>,
}

impl<T: Feature> Ensemble<T> {
    pub fn new(num_features: usize, num_classes: usize) -> Self {
        Ensemble {
            num_features,
            num_classes,
            members: Vec::new(),
        }
    }

    /// Wraps trees trained on one block, recording their provenance.
    pub fn from_trees(
        trees: Vec<DecisionTree<T>>,
        num_features: usize,
        num_classes: usize,
        block: u64,
        seed: u64,
    ) -> Result<Self> {
        let mut e = Ensemble::new(num_features, num_classes);
        for (id, tree) in trees.into_iter().enumerate() {
            e.push(Member {
                tree,
                provenance: Provenance {
                    id: id as u64,
                    block,
                    seed,
                },
            })?;
        }
        Ok(e)
    }

    pub fn push(&mut self, member: Member<T>) -> Result<()> {
        if member.tree.num_features() != self.num_features || member.tree.num_classes() != self.num_classes {
            return Err(Error::validation(format!(
                "tree shape {}x{} does not match ensemble shape {}x{}",
                member.tree.num_features(),
                member.tree.num_classes(),
                self.num_features,
                self.num_classes
            )));
        }
        self.members.push(member);
        Ok(())
    }

    /// Appends every member of `other`, after checking both shapes agree.
    pub fn extend(&mut self, other: Ensemble<T>) -> Result<()> {
        if other.num_features != self.num_features || other.num_classes != self.num_classes {
            return Err(Error::validation(format!(
                "cannot merge a {}-feature/{}-class ensemble into a {}-feature/{}-class one",
                other.num_features, other.num_classes, self.num_features, self.num_classes
            )));
        }
        self.members.extend(other.members);
        Ok(())
    }

    pub fn members(&self) -> &[Member<T>] {
        &self.members
    }

    pub fn tree(&self, i: usize) -> &DecisionTree<T> {
        &self.members[i].tree
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.num_features {
            return Err(Error::validation(format!(
                "input has {} features, ensemble expects {}",
                x.len(),
                self.num_features
            )));
        }
        Ok(())
    }

    /// Votes of every member for `x`.
    pub fn votes(&self, x: &[T]) -> Result<Vec<u32>> {
        self.check_input(x)?;
        let mut v = vec![0u32; self.num_classes];
        for m in &self.members {
            v[m.tree.predict_unchecked(x)] += 1;
        }
        Ok(v)
    }

    /// Plurality vote of all members, lowest class on ties.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::validation("cannot predict with an empty ensemble"));
        }
        self.votes(x).map(|v| argmax(&v))
    }
}

/// Concatenates partition files in the given order.
pub fn merge_partitions<T: Feature>(paths: &[PathBuf]) -> Result<Ensemble<T>> {
    let mut parts = paths.iter().map(|p| load_ensemble::<T>(p));
    let mut merged = match parts.next() {
        Some(first) => first?,
        None => return Err(Error::validation("no ensemble files to merge")),
    };
    for (part, path) in parts.zip(&paths[1..]) {
        merged
            .extend(part?)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// One CSV file per block; block ids follow this order.
    pub block_paths: Vec<PathBuf>,
    pub sampler: Sampler,
    /// Trees trained per block.
    pub trees_per_block: usize,
    /// Bite size; `None` uses each block's default.
    pub bite_size: Option<usize>,
    pub min_leaf_size: usize,
    /// Features tried per node; `None` uses `floor(1 + log2 d)`.
    pub attrs_per_node: Option<usize>,
    /// Number of output partitions `p`.
    pub partitions: usize,
    pub seed: u64,
    pub workers: usize,
    /// Class count; `None` infers it from the largest label in any block.
    pub num_classes: Option<usize>,
}

impl TrainConfig {
    pub fn new(block_paths: Vec<PathBuf>, sampler: Sampler, trees_per_block: usize) -> Self {
        TrainConfig {
            block_paths,
            sampler,
            trees_per_block,
            bite_size: None,
            min_leaf_size: 10,
            attrs_per_node: None,
            partitions: 1,
            seed: 0,
            workers: 1,
            num_classes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_paths.is_empty() {
            return Err(Error::validation("no training blocks given"));
        }
        if self.partitions == 0 {
            return Err(Error::validation("partition count must be at least 1"));
        }
        if self.trees_per_block == 0 {
            return Err(Error::validation("trees per block must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::validation("worker count must be at least 1"));
        }
        Ok(())
    }

    /// Seed of block `block_id`'s sampler.
    pub fn block_seed(&self, block_id: usize) -> u64 {
        self.seed ^ block_id as u64
    }
}

/// Timing and size of one map task.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block_id: usize,
    pub path: PathBuf,
    pub examples: usize,
    pub trees: usize,
    pub train_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// `part-<r>.ensemble` for `r` in `1..=p`.
    pub partition_paths: Vec<PathBuf>,
    pub partition_sizes: Vec<usize>,
    pub blocks: Vec<BlockReport>,
}

impl TrainSummary {
    pub fn total_trees(&self) -> usize {
        self.partition_sizes.iter().sum()
    }
}

/// Lists the `*.csv` files of a directory in name order.
pub fn block_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn partition_path(out_dir: &Path, r: usize) -> PathBuf {
    out_dir.join(format!("part-{r}.ensemble"))
}

struct MapOutput<T> {
    keyed: Vec<(usize, Member<T>)>,
    report: BlockReport,
}

fn map_block<T: Feature>(cfg: &TrainConfig, block_id: usize, block: &Block<T>, path: &Path) -> Result<MapOutput<T>> {
    let seed = cfg.block_seed(block_id);
    let d = block.num_features();
    let params = IVoteParams {
        ensemble_size: cfg.trees_per_block,
        bite_size: cfg.bite_size.unwrap_or_else(|| default_bite_size(block.len())),
        tree: TreeParams {
            min_leaf_size: cfg.min_leaf_size,
            attrs_per_node: match cfg.attrs_per_node {
                Some(a) => a,
                None => attr_sample_size(d)?,
            },
            seed,
        },
        seed,
    };
    let start = Instant::now();
    let trees = train_local(cfg.sampler, block, &params)?;
    let train_time = start.elapsed();

    // Partition keys come from a second stream of the block's generator.
    let mut keys = ChaCha8Rng::seed_from_u64(seed);
    keys.set_stream(1);
    let keyed = trees
        .into_iter()
        .enumerate()
        .map(|(id, tree)| {
            let r = keys.random_range(0..cfg.partitions);
            let provenance = Provenance {
                id: id as u64,
                block: block_id as u64,
                seed,
            };
            (r, Member { tree, provenance })
        })
        .collect();
    Ok(MapOutput {
        keyed,
        report: BlockReport {
            block_id,
            path: path.to_path_buf(),
            examples: block.len(),
            trees: cfg.trees_per_block,
            train_time,
        },
    })
}

/// Trains every block in parallel and writes `p` partition files to `out_dir`.
///
/// Output is a deterministic function of `cfg` (the worker count included
/// or not). On failure no partition files are left behind.
pub fn train_distributed<T: Feature>(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;

    let job_error = |path: &Path, e: Error| Error::Job {
        block: path.display().to_string(),
        source: Box::new(e),
    };

    let loaded: Vec<Block<T>> = pool.install(|| {
        cfg.block_paths
            .par_iter()
            .map(|p| load_block::<T>(p, cfg.num_classes).map_err(|e| job_error(p, e)))
            .collect::<Result<_>>()
    })?;

    let d = loaded[0].num_features();
    let c = match cfg.num_classes {
        Some(c) => c,
        None => loaded.iter().map(Block::num_classes).max().unwrap_or(2),
    };
    let mut blocks = Vec::with_capacity(loaded.len());
    for (id, (b, path)) in loaded.into_iter().zip(&cfg.block_paths).enumerate() {
        if b.num_features() != d {
            return Err(job_error(
                path,
                Error::validation(format!("{} features, first block has {d}", b.num_features())),
            ));
        }
        let examples = b.examples().to_vec();
        blocks.push(Block::new(examples, d, c, id).map_err(|e| job_error(path, e))?);
    }

    let mapped: Vec<MapOutput<T>> = pool.install(|| {
        blocks
            .par_iter()
            .zip(cfg.block_paths.par_iter())
            .map(|(b, p)| map_block(cfg, b.block_id, b, p).map_err(|e| job_error(p, e)))
            .collect::<Result<_>>()
    })?;

    // Reduce: group by key in block order, then training order.
    let mut partitions: Vec<Ensemble<T>> = (0..cfg.partitions).map(|_| Ensemble::new(d, c)).collect();
    let mut reports = Vec::with_capacity(mapped.len());
    for out in mapped {
        for (r, member) in out.keyed {
            partitions[r].push(member)?;
        }
        reports.push(out.report);
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(cfg.partitions);
    for (r, part) in partitions.iter().enumerate() {
        let path = partition_path(out_dir, r + 1);
        if let Err(e) = save_ensemble(part, &path) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        written.push(path);
    }

    Ok(TrainSummary {
        partition_paths: written,
        partition_sizes: partitions.iter().map(Ensemble::len).collect(),
        blocks: reports,
    })
}
