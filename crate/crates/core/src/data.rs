//! Labeled datasets, CSV blocks, random repartitioning and synthetic data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Feature;

/// Name of the mandatory class column.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub features: Vec<T>,
    pub label: usize,
}

/// An in-memory partition of labeled examples; the unit one mapper trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    examples: Vec<Example<T>>,
    num_features: usize,
    num_classes: usize,
    pub block_id: usize,
}

impl<T: Feature> Block<T> {
    pub fn new(examples: Vec<Example<T>>, num_features: usize, num_classes: usize, block_id: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyBlock(format!("block {block_id} has no examples")));
        }
        if num_features == 0 {
            return Err(Error::validation("blocks need at least one feature"));
        }
        if num_classes < 2 {
            return Err(Error::validation(format!(
                "blocks need at least two classes, got {num_classes}"
            )));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != num_features {
                return Err(Error::validation(format!(
                    "example {i} has {} features, expected {num_features}",
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::validation(format!(
                    "example {i} has label {} outside [0, {num_classes})",
                    ex.label
                )));
            }
        }
        Ok(Block {
            examples,
            num_features,
            num_classes,
            block_id,
        })
    }

    pub fn examples(&self) -> &[Example<T>] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.examples.iter().map(|e| e.label)
    }
}

/// Loads a CSV block. The class count is `max(label) + 1` unless `num_classes`
/// overrides it (useful when a block happens to miss the top class).
pub fn load_block<T: Feature>(path: &Path, num_classes: Option<usize>) -> Result<Block<T>> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(&shown, e))?;

    let headers = reader.headers().map_err(|e| csv_error(&shown, e))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == LABEL_COLUMN)
        .ok_or_else(|| Error::parse(&shown, 1, "header has no `label` column"))?;
    let arity = headers.len();
    let num_features = arity - 1;
    if num_features == 0 {
        return Err(Error::parse(&shown, 1, "header has no feature columns"));
    }

    let mut examples = Vec::new();
    let mut max_label = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&shown, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != arity {
            return Err(Error::parse(
                &shown,
                line,
                format!("expected {arity} fields, found {}", record.len()),
            ));
        }
        let mut features = Vec::with_capacity(num_features);
        let mut label = 0usize;
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if col == label_col {
                label = field.parse::<usize>().map_err(|_| {
                    Error::parse(&shown, line, format!("label `{field}` is not a non-negative integer"))
                })?;
            } else {
                let v = field.parse::<T>().map_err(|_| {
                    Error::parse(
                        &shown,
                        line,
                        format!("column `{}`: `{field}` is not numeric", &headers[col]),
                    )
                })?;
                features.push(v);
            }
        }
        max_label = max_label.max(label);
        examples.push(Example { features, label });
    }

    if examples.is_empty() {
        return Err(Error::EmptyBlock(shown));
    }
    let c = match num_classes {
        Some(c) if c <= max_label => {
            return Err(Error::validation(format!(
                "{shown}: label {max_label} does not fit {c} classes"
            )))
        }
        Some(c) => c,
        None => (max_label + 1).max(2),
    };
    Block::new(examples, num_features, c, 0)
}

/// Writes `block` as CSV with header `f0,...,f{d-1},label`.
pub fn write_block<T: Feature>(block: &Block<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for i in 0..block.num_features() {
            write!(out, "f{i},")?;
        }
        writeln!(out, "{LABEL_COLUMN}")?;
        for ex in block.examples() {
            for v in &ex.features {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", ex.label)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Assigns every row of `input` to one of `num_blocks` CSV files chosen
/// uniformly at random. Rows are copied verbatim under the input's header.
/// Returns the output paths `block-<i>.csv` in block order.
pub fn shuffle_split(input: &Path, num_blocks: usize, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if num_blocks == 0 {
        return Err(Error::validation("number of blocks must be at least 1"));
    }
    // Validate the whole dataset before writing anything.
    load_block::<f64>(input, None)?;

    let shown = input.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)
        .map_err(|e| csv_error(&shown, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&shown, e))?.clone();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths: Vec<PathBuf> = (0..num_blocks)
        .map(|i| out_dir.join(format!("block-{i}.csv")))
        .collect();
    let mut writers = Vec::with_capacity(num_blocks);
    for p in &paths {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(p)
            .map_err(|e| csv_error(&p.display().to_string(), e))?;
        w.write_record(&headers)
            .map_err(|e| csv_error(&p.display().to_string(), e))?;
        writers.push(w);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&shown, e))?;
        let k = rng.random_range(0..num_blocks);
        writers[k]
            .write_record(&record)
            .map_err(|e| csv_error(&paths[k].display().to_string(), e))?;
    }
    for (w, p) in writers.iter_mut().zip(&paths) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(paths)
}

/// Parameters of the Gaussian-mixture generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    /// Offset between consecutive class centers, applied on every axis.
    pub class_separation: f64,
    /// Probability that a label is replaced by a uniformly chosen other class.
    pub noise_rate: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::validation("synthetic data needs n >= 1 and d >= 1"));
        }
        if self.c < 2 {
            return Err(Error::validation("synthetic data needs c >= 2"));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::validation(format!(
                "noise rate {} outside [0, 1)",
                self.noise_rate
            )));
        }
        if !self.class_separation.is_finite() {
            return Err(Error::validation("class separation must be finite"));
        }
        Ok(())
    }
}

/// Draws `spec.n` examples from a mixture of unit-variance Gaussians. Class
/// `k` is centered at `k * class_separation` on every axis; classes are
/// equiprobable. Labels are then flipped with probability `noise_rate`.
pub fn synth_generate<T: Feature>(spec: &SynthSpec, seed: u64) -> Result<Block<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..spec.n)
        .map(|_| {
            let class = rng.random_range(0..spec.c);
            let center = class as f64 * spec.class_separation;
            let features = (0..spec.d)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    T::from_f64(center + z).unwrap_or_else(T::zero)
                })
                .collect();
            let label = if rng.random::<f64>() < spec.noise_rate {
                let other = rng.random_range(0..spec.c - 1);
                if other >= class {
                    other + 1
                } else {
                    other
                }
            } else {
                class
            };
            Example { features, label }
        })
        .collect();
    Block::new(examples, spec.d, spec.c, 0)
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}
