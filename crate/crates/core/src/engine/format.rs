//! Line-oriented text format for ensembles.
//!
//! ```text
//! COMET-ENSEMBLE v1 trees=<t> features=<d> classes=<c>
//! TREE id=<i> block=<b> seed=<s> nodes=<k>
//! N <feature> <threshold> skip=<left-subtree-node-count>
//! L <count_0> ... <count_{c-1}>
//! ```
//!
//! Nodes are listed in preorder, left subtree first. Thresholds use the
//! shortest decimal form that parses back to the same float.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Ensemble, Member, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Feature;
use crate::tree::{DecisionTree, Node};

pub const MAGIC: &str = "COMET-ENSEMBLE";
pub const VERSION: &str = "v1";

pub fn to_text<T: Feature>(ensemble: &Ensemble<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} trees={} features={} classes={}",
        ensemble.len(),
        ensemble.num_features(),
        ensemble.num_classes()
    );
    for member in ensemble.members() {
        let p = member.provenance;
        let nodes = member.tree.nodes();
        let _ = writeln!(
            out,
            "TREE id={} block={} seed={} nodes={}",
            p.id,
            p.block,
            p.seed,
            nodes.len()
        );
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Internal {
                    feature,
                    threshold,
                    right,
                } => {
                    let _ = writeln!(out, "N {feature} {threshold} skip={}", right - i - 1);
                }
                Node::Leaf { counts } => {
                    out.push('L');
                    for c in counts {
                        let _ = write!(out, " {c}");
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

pub fn save_ensemble<T: Feature>(ensemble: &Ensemble<T>, path: &Path) -> Result<()> {
    fs::write(path, to_text(ensemble)).map_err(|e| Error::io(path, e))
}

pub fn load_ensemble<T: Feature>(path: &Path) -> Result<Ensemble<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, &path.display().to_string())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    source: &'a str,
    last: u64,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(u64, &'a str)> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i as u64 + 1;
                Ok((self.last, line))
            }
            None => Err(Error::parse(
                self.source,
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }
}

fn field<'a>(token: Option<&'a str>, key: &str, source: &str, line: u64) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::parse(source, line, format!("expected `{key}=<value>`")))
}

fn number<N: std::str::FromStr>(s: &str, what: &str, source: &str, line: u64) -> Result<N> {
    s.parse()
        .map_err(|_| Error::parse(source, line, format!("invalid {what} `{s}`")))
}

pub fn from_text<T: Feature>(text: &str, source: &str) -> Result<Ensemble<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        source,
        last: 0,
    };
    let (ln, header) = lines.next("header")?;
    let mut tok = header.split_ascii_whitespace();
    if tok.next() != Some(MAGIC) {
        return Err(Error::parse(source, ln, "not an ensemble file"));
    }
    match tok.next() {
        Some(VERSION) => {}
        other => {
            return Err(Error::parse(
                source,
                ln,
                format!("unsupported version `{}`", other.unwrap_or("")),
            ))
        }
    }
    let trees: usize = number(field(tok.next(), "trees", source, ln)?, "tree count", source, ln)?;
    let d: usize = number(field(tok.next(), "features", source, ln)?, "feature count", source, ln)?;
    let c: usize = number(field(tok.next(), "classes", source, ln)?, "class count", source, ln)?;
    if tok.next().is_some() {
        return Err(Error::parse(source, ln, "trailing fields in header"));
    }
    if d == 0 || c < 2 {
        return Err(Error::parse(source, ln, "need features >= 1 and classes >= 2"));
    }

    let mut ensemble = Ensemble::new(d, c);
    for _ in 0..trees {
        let (tree_line, line) = lines.next("TREE line")?;
        let mut tok = line.split_ascii_whitespace();
        if tok.next() != Some("TREE") {
            return Err(Error::parse(source, tree_line, "expected TREE line"));
        }
        let id = number(field(tok.next(), "id", source, tree_line)?, "id", source, tree_line)?;
        let block = number(
            field(tok.next(), "block", source, tree_line)?,
            "block",
            source,
            tree_line,
        )?;
        let seed = number(field(tok.next(), "seed", source, tree_line)?, "seed", source, tree_line)?;
        let k: usize = number(
            field(tok.next(), "nodes", source, tree_line)?,
            "node count",
            source,
            tree_line,
        )?;
        if tok.next().is_some() {
            return Err(Error::parse(source, tree_line, "trailing fields in TREE line"));
        }
        if k == 0 {
            return Err(Error::parse(source, tree_line, "tree with zero nodes"));
        }

        let mut nodes = Vec::with_capacity(k);
        for i in 0..k {
            let (ln, line) = lines.next("node line")?;
            let mut tok = line.split_ascii_whitespace();
            let node = match tok.next() {
                Some("N") => {
                    let feature = number(tok.next().unwrap_or(""), "feature index", source, ln)?;
                    let threshold: T = number(tok.next().unwrap_or(""), "threshold", source, ln)?;
                    let skip: usize = number(field(tok.next(), "skip", source, ln)?, "skip", source, ln)?;
                    if tok.next().is_some() {
                        return Err(Error::parse(source, ln, "internal node has extra fields"));
                    }
                    Node::Internal {
                        feature,
                        threshold,
                        right: i + 1 + skip,
                    }
                }
                Some("L") => {
                    let counts = tok
                        .map(|t| number::<u32>(t, "class count", source, ln))
                        .collect::<Result<Vec<_>>>()?;
                    if counts.len() != c {
                        return Err(Error::parse(
                            source,
                            ln,
                            format!("leaf has {} counts, expected {c}", counts.len()),
                        ));
                    }
                    Node::Leaf { counts }
                }
                _ => return Err(Error::parse(source, ln, "expected `N` or `L` node line")),
            };
            nodes.push(node);
        }
        let tree = DecisionTree::from_nodes(nodes, d, c)
            .map_err(|e| Error::parse(source, tree_line, format!("malformed tree: {e}")))?;
        ensemble.push(Member {
            tree,
            provenance: Provenance { id, block, seed },
        })?;
    }
    if let Some((i, _)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(source, i as u64 + 1, "content after the last tree"));
    }
    Ok(ensemble)
}
