//! Recurrent cell genomes.
//!
//! A cell with `L` nodes has a fixed node 0 (the input/state blend) and
//! `L - 1` intermediate nodes. Each intermediate node `l` picks one earlier
//! node as its ancestor and one activation, so a genome is the ordered list
//! of those `(ancestor, op)` choices.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Activation applied by an intermediate node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Tanh, OpKind::Relu, OpKind::Sigmoid, OpKind::Identity];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Identity => "identity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        OpKind::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

impl Serialize for OpKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for OpKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One intermediate node: `s_l = op(W_l s_ancestor)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeGene {
    pub ancestor: usize,
    pub op: OpKind,
}

impl NodeGene {
    pub fn new(ancestor: usize, op: OpKind) -> Self {
        NodeGene { ancestor, op }
    }
}

/// A ancestor-bound or length problem found by [`Genome::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewLevels { levels: usize },
    Length { levels: usize, genes: usize },
    Ancestor { level: usize, ancestor: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewLevels { levels } => {
                write!(f, "levels {levels} < 2")
            }
            Violation::Length { levels, genes } => {
                write!(f, "expected {} genes for {levels} levels, found {genes}", levels.saturating_sub(1))
            }
            Violation::Ancestor { level, ancestor } => {
                write!(f, "ancestor {ancestor} ≥ level {level}")
            }
        }
    }
}

/// Cell description: `genes[l - 1]` defines intermediate node `l`.
///
/// Ordering is lexicographic over `(levels, [(ancestor, op index)...])`,
/// which is the canonical order used for tie-breaking.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    pub levels: usize,
    pub genes: Vec<NodeGene>,
}

#[derive(Serialize, Deserialize)]
struct GenomeFile {
    version: u32,
    levels: usize,
    nodes: Vec<NodeGene>,
}

pub const GENOME_FORMAT_VERSION: u32 = 1;

impl Genome {
    /// Builds a genome and validates it.
    pub fn new(levels: usize, genes: Vec<NodeGene>) -> Result<Self> {
        let g = Genome { levels, genes };
        g.check()?;
        Ok(g)
    }

    /// Builds a genome from `(op, ancestor)` pairs in the order the cell
    /// literature prints them, e.g. `[("relu", 0), ("tanh", 1)]`.
    pub fn from_pairs(pairs: &[(&str, usize)]) -> Result<Self> {
        let genes = pairs
            .iter()
            .map(|&(op, ancestor)| {
                op.parse()
                    .map(|op| NodeGene::new(ancestor, op))
                    .map_err(|m| Error::InvalidGenome(vec![m]))
            })
            .collect::<Result<Vec<_>>>()?;
        Genome::new(pairs.len() + 1, genes)
    }

    pub fn intermediate_nodes(&self) -> usize {
        self.genes.len()
    }

    /// Every violation; empty when the genome is valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.levels < 2 {
            out.push(Violation::TooFewLevels {
                levels: self.levels,
            });
        }
        if self.genes.len() + 1 != self.levels {
            out.push(Violation::Length {
                levels: self.levels,
                genes: self.genes.len(),
            });
        }
        for (i, gene) in self.genes.iter().enumerate() {
            let level = i + 1;
            if gene.ancestor >= level {
                out.push(Violation::Ancestor {
                    level,
                    ancestor: gene.ancestor,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.validate()
            .map_err(|v| Error::InvalidGenome(v.iter().map(ToString::to_string).collect()))
    }

    /// Canonical compact JSON: `{"version":1,"levels":L,"nodes":[...]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GenomeFile {
            version: GENOME_FORMAT_VERSION,
            levels: self.levels,
            nodes: self.genes.clone(),
        })
        .expect("genome serialization cannot fail")
    }

    /// Parses the JSON genome format and validates the result.
    ///
    /// Unknown top-level keys (such as an embedded run configuration) are
    /// ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GenomeFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        if file.version != GENOME_FORMAT_VERSION {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("unsupported genome version {}", file.version),
            });
        }
        let g = Genome {
            levels: file.levels,
            genes: file.nodes,
        };
        g.check()?;
        Ok(g)
    }

    /// The `[('relu', 0), ('tanh', 1)]` notation.
    pub fn to_pairs_string(&self) -> String {
        let items: Vec<String> = self
            .genes
            .iter()
            .map(|g| format!("('{}', {})", g.op, g.ancestor))
            .collect();
        format!("[{}]", items.join(", "))
    }

    /// Parses the `[('relu', 0), ('tanh', 1)]` notation.
    pub fn parse_pairs(text: &str) -> Result<Self> {
        let err = |column: usize, message: &str| Error::Parse {
            line: 1,
            column,
            message: message.to_string(),
        };
        let trimmed = text.trim();
        let inner = trimmed
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| err(1, "expected a bracketed list"))?;
        let mut pairs = Vec::new();
        let mut rest = inner;
        let mut offset = text.find('[').unwrap_or(0) + 2;
        loop {
            let skipped = rest.len() - rest.trim_start_matches([' ', ',']).len();
            rest = &rest[skipped..];
            offset += skipped;
            if rest.is_empty() {
                break;
            }
            let close = rest
                .find(')')
                .ok_or_else(|| err(offset, "unterminated pair"))?;
            let body = rest
                .strip_prefix('(')
                .ok_or_else(|| err(offset, "expected `(`"))?;
            let body = &body[..close - 1];
            let (op, anc) = body
                .split_once(',')
                .ok_or_else(|| err(offset, "expected `(op, ancestor)`"))?;
            let op = op.trim().trim_matches(|c| c == '\'' || c == '"');
            let op: OpKind = op.parse().map_err(|m: String| err(offset, &m))?;
            let ancestor: usize = anc
                .trim()
                .parse()
                .map_err(|_| err(offset, "ancestor is not a nonnegative integer"))?;
            pairs.push(NodeGene::new(ancestor, op));
            rest = &rest[close + 1..];
            offset += close + 1;
        }
        Genome::new(pairs.len() + 1, pairs)
    }
}

impl Serialize for Genome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GenomeFile {
            version: GENOME_FORMAT_VERSION,
            levels: self.levels,
            nodes: self.genes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = GenomeFile::deserialize(d)?;
        let g = Genome {
            levels: file.levels,
            genes: file.nodes,
        };
        g.check().map_err(serde::de::Error::custom)?;
        Ok(g)
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_pairs_string())
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels < 2 {
        return Err(Error::config(format!(
            "a cell needs at least 2 levels, got {levels}"
        )));
    }
    Ok(())
}

/// Samples one genome: for each level `l` in `1..levels`, the ancestor is
/// uniform over `0..l` and the op uniform over the four activations.
pub fn random_genome<R: Rng + ?Sized>(levels: usize, rng: &mut R) -> Result<Genome> {
    check_levels(levels)?;
    let genes = (1..levels)
        .map(|l| {
            let ancestor = rng.gen_range(0..l);
            let op = OpKind::ALL[rng.gen_range(0..OpKind::ALL.len())];
            NodeGene::new(ancestor, op)
        })
        .collect();
    Ok(Genome { levels, genes })
}

/// Samples `count` genomes. With `dedupe`, duplicates are rejected and
/// resampled so the pool is pairwise distinct.
pub fn random_pool<R: Rng + ?Sized>(
    count: usize,
    levels: usize,
    rng: &mut R,
    dedupe: bool,
) -> Result<Vec<Genome>> {
    check_levels(levels)?;
    if dedupe {
        if let Ok(size) = search_space_size(levels) {
            if count as u128 > size {
                return Err(Error::config(format!(
                    "cannot draw {count} distinct genomes: the space for {levels} levels has only {size}"
                )));
            }
        }
    }
    let mut pool = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    while pool.len() < count {
        let g = random_genome(levels, rng)?;
        if dedupe && !seen.insert(g.clone()) {
            continue;
        }
        pool.push(g);
    }
    Ok(pool)
}

/// Number of distinct genomes: `prod_{l=1}^{L-1} (l * 4)`.
pub fn search_space_size(levels: usize) -> Result<u128> {
    check_levels(levels)?;
    (1..levels).try_fold(1u128, |acc, l| {
        acc.checked_mul(l as u128 * OpKind::ALL.len() as u128)
            .ok_or_else(|| Error::config(format!("search space for {levels} levels overflows u128")))
    })
}

/// Enumerates every genome with `levels` nodes in canonical order.
pub fn enumerate(levels: usize) -> Result<impl Iterator<Item = Genome>> {
    check_levels(levels)?;
    let n = levels - 1;
    // Mixed-radix counter: digit l has radix (l + 1) * 4.
    let mut digits = vec![0usize; n];
    let mut done = false;
    Ok(std::iter::from_fn(move || {
        if done {
            return None;
        }
        let genes = digits
            .iter()
            .map(|&d| NodeGene::new(d / 4, OpKind::ALL[d % 4]))
            .collect();
        let mut i = n;
        loop {
            if i == 0 {
                done = true;
                break;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < (i + 1) * 4 {
                break;
            }
            digits[i] = 0;
        }
        Some(Genome { levels, genes })
    }))
}
