//! Isolation forest over 45-dimensional gradient features.
//!
//! Trees are stored as preorder node lists. An internal node's left child
//! is the next node; its right child index is stored explicitly. The
//! canonical byte form (see [`JudgeForest::to_bytes`]) omits the right
//! index because preorder already fixes the shape.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Error, Result};
use crate::gradfeat::{GradFeature45, FEATURE_DIM};
use crate::util::{self, Digest32, Reader};

const EULER_GAMMA: f64 = 0.5772156649;

/// Extra dimension draws allowed when the drawn dimension has no spread.
const ZERO_SPREAD_RETRIES: usize = 45;

const FOREST_MAGIC: &[u8; 4] = b"IFR1";

/// Average path length of an unsuccessful search in a BST of `n` points.
pub fn c_norm(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal { dim: usize, split: f64, right: usize },
    Leaf { size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    /// Depth of the leaf reached by `x` plus the `c(size)` correction.
    pub fn path_length(&self, x: &[f64; FEATURE_DIM]) -> f64 {
        let mut at = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[at] {
                Node::Internal { dim, split, right } => {
                    at = if x[dim] < split { at + 1 } else { right };
                    depth += 1;
                }
                Node::Leaf { size } => return depth as f64 + c_norm(size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Internal { right, .. } => 1 + walk(nodes, at + 1).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.nodes.len() as u64).to_le_bytes());
        for node in &self.nodes {
            match *node {
                Node::Internal { dim, split, .. } => {
                    out.push(1);
                    out.extend_from_slice(&(dim as u16).to_le_bytes());
                    out.extend_from_slice(&split.to_le_bytes());
                }
                Node::Leaf { size } => {
                    out.push(0);
                    out.extend_from_slice(&(size as u64).to_le_bytes());
                }
            }
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let count = r.u64()? as usize;
        let mut raw = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            raw.push(match r.u8()? {
                0 => Node::Leaf {
                    size: r.u64()? as usize,
                },
                1 => {
                    let dim = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
                    if dim >= FEATURE_DIM {
                        return Err(Error::Decode(format!("split dimension {dim} out of range")));
                    }
                    Node::Internal {
                        dim,
                        split: r.f64()?,
                        right: 0,
                    }
                }
                tag => return Err(Error::Decode(format!("unknown node tag {tag}"))),
            });
        }
        // recover right-child links from the preorder shape
        fn link(nodes: &mut [Node], at: usize) -> Result<usize> {
            let Some(node) = nodes.get(at).copied() else {
                return Err(Error::Decode("truncated tree".into()));
            };
            match node {
                Node::Leaf { .. } => Ok(at + 1),
                Node::Internal { dim, split, .. } => {
                    let right = link(nodes, at + 1)?;
                    nodes[at] = Node::Internal { dim, split, right };
                    link(nodes, right)
                }
            }
        }
        if link(&mut raw, 0)? != raw.len() {
            return Err(Error::Decode("trailing nodes after tree".into()));
        }
        Ok(Self { nodes: raw })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` means `min(64, rows)`.
    pub subsample: Option<usize>,
    pub score_threshold: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample: None,
            score_threshold: 0.5,
        }
    }
}

impl ForestParams {
    pub fn resolve_subsample(&self, rows: usize) -> usize {
        self.subsample.unwrap_or(64.min(rows))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return config_err("n_trees must be at least 1");
        }
        if matches!(self.subsample, Some(s) if s < 2) {
            return config_err("subsample must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return config_err(format!(
                "score_threshold must lie in [0, 1], got {}",
                self.score_threshold
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeForest {
    pub trees: Vec<IsolationTree>,
    pub subsample: usize,
    pub n_trees: usize,
    pub score_threshold: f64,
    /// SHA-256 of the training matrix (rows as little-endian f64).
    pub train_digest: Digest32,
}

/// Benign (+1) or anomalous (-1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Anomalous,
}

impl Verdict {
    pub fn as_i8(self) -> i8 {
        match self {
            Verdict::Benign => 1,
            Verdict::Anomalous => -1,
        }
    }
}

pub fn matrix_digest(rows: &[GradFeature45]) -> Digest32 {
    let mut bytes = Vec::with_capacity(8 + rows.len() * FEATURE_DIM * 8);
    bytes.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for r in rows {
        bytes.extend_from_slice(&r.to_bytes());
    }
    util::sha256(&bytes)
}

fn height_limit(subsample: usize) -> usize {
    (subsample as f64).log2().ceil() as usize
}

struct Builder<'a, R> {
    rows: &'a [GradFeature45],
    limit: usize,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn spread(&self, idx: &[usize], dim: usize) -> (f64, f64) {
        idx.iter()
            .map(|&i| self.rows[i].0[dim])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) {
        if idx.len() <= 1 || depth >= self.limit {
            self.nodes.push(Node::Leaf { size: idx.len() });
            return;
        }
        let mut chosen = None;
        for _ in 0..=ZERO_SPREAD_RETRIES {
            let dim = self.rng.gen_range(0..FEATURE_DIM);
            let (lo, hi) = self.spread(idx, dim);
            if hi > lo {
                chosen = Some((dim, lo, hi));
                break;
            }
        }
        let Some((dim, lo, hi)) = chosen else {
            self.nodes.push(Node::Leaf { size: idx.len() });
            return;
        };
        let split = self.rng.gen_range(lo..hi);
        let mut cut = 0;
        for k in 0..idx.len() {
            if self.rows[idx[k]].0[dim] < split {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Internal {
            dim,
            split,
            right: 0,
        });
        let (left, right) = idx.split_at_mut(cut);
        self.build(left, depth + 1);
        let right_at = self.nodes.len();
        self.nodes[at] = Node::Internal {
            dim,
            split,
            right: right_at,
        };
        self.build(right, depth + 1);
    }
}

/// Fits `params.n_trees` trees, each on its own seeded subsample.
pub fn fit(rows: &[GradFeature45], params: &ForestParams, seed: u64) -> Result<JudgeForest> {
    params.validate()?;
    if rows.len() < 2 {
        return input_err(format!(
            "isolation forest needs at least 2 rows, got {}",
            rows.len()
        ));
    }
    let subsample = params.resolve_subsample(rows.len());
    if subsample > rows.len() {
        return input_err(format!(
            "subsample {subsample} exceeds the {} available rows",
            rows.len()
        ));
    }
    if let Some(bad) = rows.iter().position(|r| !r.0.iter().all(|v| v.is_finite())) {
        return input_err(format!("feature row {bad} is not finite"));
    }
    let limit = height_limit(subsample);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = util::rng_from(util::sub_seed(seed, t as u64));
            let mut idx = index::sample(&mut rng, rows.len(), subsample).into_vec();
            let mut b = Builder {
                rows,
                limit,
                rng,
                nodes: Vec::with_capacity(2 * subsample),
            };
            b.build(&mut idx, 0);
            IsolationTree { nodes: b.nodes }
        })
        .collect();
    Ok(JudgeForest {
        trees,
        subsample,
        n_trees: params.n_trees,
        score_threshold: params.score_threshold,
        train_digest: matrix_digest(rows),
    })
}

impl JudgeForest {
    pub fn mean_path_length(&self, x: &GradFeature45) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.path_length(&x.0)).sum();
        total / self.trees.len() as f64
    }

    /// `2^(-E[h(x)] / c(subsample))`; larger is more anomalous.
    pub fn anomaly_score(&self, x: &GradFeature45) -> f64 {
        (-self.mean_path_length(x) / c_norm(self.subsample)).exp2()
    }

    /// Anomalous only when the score is strictly above the threshold.
    pub fn predict(&self, x: &GradFeature45) -> Verdict {
        if self.anomaly_score(x) > self.score_threshold {
            Verdict::Anomalous
        } else {
            Verdict::Benign
        }
    }

    pub fn with_threshold(&self, score_threshold: f64) -> Self {
        Self {
            score_threshold,
            ..self.clone()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FOREST_MAGIC);
        out.extend_from_slice(&(self.n_trees as u64).to_le_bytes());
        out.extend_from_slice(&(self.subsample as u64).to_le_bytes());
        out.extend_from_slice(&self.score_threshold.to_le_bytes());
        out.extend_from_slice(&self.train_digest);
        for tree in &self.trees {
            tree.write(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != FOREST_MAGIC {
            return Err(Error::Decode("not a serialized forest".into()));
        }
        let n_trees = r.u64()? as usize;
        let subsample = r.u64()? as usize;
        let score_threshold = r.f64()?;
        let train_digest = r.digest()?;
        let trees = (0..n_trees)
            .map(|_| IsolationTree::read(&mut r))
            .collect::<Result<Vec<_>>>()?;
        if !r.is_empty() {
            return Err(Error::Decode("trailing bytes after forest".into()));
        }
        Ok(Self {
            trees,
            subsample,
            n_trees,
            score_threshold,
            train_digest,
        })
    }

    pub fn digest(&self) -> Digest32 {
        util::sha256(&self.to_bytes())
    }
}
