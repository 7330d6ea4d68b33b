//! Seeded train/validation/test partition of supervision edges and
//! neighbor-sampled mini-batches around seed edges.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Hkg, MessageGraph, MessageRelation, NodeType};
use crate::model::{EdgeKind, LocalEdges, Subgraph};
use crate::tensor::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("need at least {min} supervision edges, got {found}")]
    TooFewEdges { found: usize, min: usize },
    #[error("invalid split ratios {0:?}")]
    Ratios([f64; 3]),
    #[error("seed edge {0} out of range")]
    SeedEdge(usize),
}

pub const MIN_SPLIT_EDGES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Shuffle supervision edges and slice.
    #[default]
    Edge,
    /// Shuffle students and slice; all edges of a student share a partition.
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ratios: [0.8, 0.1, 0.1],
            mode: SplitMode::Edge,
        }
    }
}

/// Disjoint index lists into the supervision edge table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl LinkSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `⌊r·n⌋` with a small guard against products like `0.1 * 30 = 3.0000000000000004`
/// landing on the wrong side of an integer.
fn floor_share(n: usize, r: f64) -> usize {
    let x = r * n as f64;
    let rounded = x.round();
    if (x - rounded).abs() < 1e-9 * n.max(1) as f64 {
        rounded as usize
    } else {
        x.floor() as usize
    }
}

fn check_ratios(ratios: [f64; 3]) -> Result<(), SplitError> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(SplitError::Ratios(ratios))
    }
}

/// Shuffles `0..n` with `seed` and slices it into sizes `⌊r₀n⌋`, `⌊r₁n⌋` and
/// the remainder.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<LinkSplit, SplitError> {
    check_ratios(ratios)?;
    if n < MIN_SPLIT_EDGES {
        return Err(SplitError::TooFewEdges {
            found: n,
            min: MIN_SPLIT_EDGES,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed));
    let n_train = floor_share(n, ratios[0]);
    let n_val = floor_share(n, ratios[1]);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(LinkSplit {
        train: idx,
        val,
        test,
        seed,
    })
}

pub fn random_link_split(hkg: &Hkg, ratios: [f64; 3], seed: u64) -> Result<LinkSplit, SplitError> {
    split_indices(hkg.supervision().len(), ratios, seed)
}

/// Per-student split: students are shuffled and sliced by the ratios, and
/// each student's supervision edges follow them.
pub fn user_link_split(hkg: &Hkg, ratios: [f64; 3], seed: u64) -> Result<LinkSplit, SplitError> {
    check_ratios(ratios)?;
    let sup = hkg.supervision();
    if sup.len() < MIN_SPLIT_EDGES {
        return Err(SplitError::TooFewEdges {
            found: sup.len(),
            min: MIN_SPLIT_EDGES,
        });
    }
    let mut students: Vec<usize> = sup.src.clone();
    students.dedup();
    students.shuffle(&mut RngStream::new(seed));
    let n = students.len();
    let n_train = floor_share(n, ratios[0]);
    let n_val = floor_share(n, ratios[1]);
    let mut part = vec![2u8; hkg.count(NodeType::Student)];
    for (rank, &s) in students.iter().enumerate() {
        part[s] = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
    }
    let mut out = LinkSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (e, &s) in sup.src.iter().enumerate() {
        match part[s] {
            0 => out.train.push(e),
            1 => out.val.push(e),
            _ => out.test.push(e),
        }
    }
    Ok(out)
}

pub fn split_with(hkg: &Hkg, cfg: &SplitConfig) -> Result<LinkSplit, SplitError> {
    match cfg.mode {
        SplitMode::Edge => random_link_split(hkg, cfg.ratios, cfg.seed),
        SplitMode::User => user_link_split(hkg, cfg.ratios, cfg.seed),
    }
}

/// Seed edges plus their sampled message-passing neighborhood.
#[derive(Debug, Clone)]
pub struct LinkBatch {
    /// Indices into the supervision edge table.
    pub edges: Vec<usize>,
    pub labels: Vec<u8>,
    /// Seed endpoints as local `(student, page)` indices.
    pub pairs: Vec<(usize, usize)>,
    /// Local-to-global node indices live in `subgraph.nodes`.
    pub subgraph: Subgraph,
    pub global_to_local: [HashMap<usize, usize>; 4],
}

impl LinkBatch {
    pub fn local(&self, t: NodeType, global: usize) -> Option<usize> {
        self.global_to_local[t.index()].get(&global).copied()
    }
}

/// Breadth-first neighbor sampling from the endpoints of `seed_edges`.
///
/// At hop `k` every node first reached at hop `k` draws, for each message
/// relation into its type, `min(fanouts[k], degree)` distinct in-neighbors.
/// Only sampled edges enter the subgraph.
pub fn sample_link_batch(
    hkg: &Hkg,
    mg: &MessageGraph,
    seed_edges: &[usize],
    fanouts: &[usize],
    rng: &mut RngStream,
) -> Result<LinkBatch, SplitError> {
    let sup = hkg.supervision();
    let labels_all = hkg.labels();
    let mut sub = Subgraph::default();
    let mut g2l: [HashMap<usize, usize>; 4] = Default::default();

    let add = |sub: &mut Subgraph, g2l: &mut [HashMap<usize, usize>; 4], t: NodeType, g: usize, depth: u8| {
        let i = t.index();
        *g2l[i].entry(g).or_insert_with(|| {
            sub.nodes[i].push(g);
            sub.depth[i].push(depth);
            sub.nodes[i].len() - 1
        })
    };

    let mut labels = Vec::with_capacity(seed_edges.len());
    let mut pairs = Vec::with_capacity(seed_edges.len());
    for &e in seed_edges {
        if e >= sup.len() {
            return Err(SplitError::SeedEdge(e));
        }
        let s = add(&mut sub, &mut g2l, NodeType::Student, sup.src[e], 0);
        let p = add(&mut sub, &mut g2l, NodeType::Page, sup.dst[e], 0);
        pairs.push((s, p));
        labels.push(labels_all[e]);
    }

    let mut edges: HashMap<MessageRelation, LocalEdges> = HashMap::new();
    for (hop, &fanout) in fanouts.iter().enumerate() {
        let depth = hop as u8;
        for t in NodeType::ALL {
            let i = t.index();
            let start = sub.depth[i].partition_point(|&d| d < depth);
            let end = sub.depth[i].partition_point(|&d| d <= depth);
            for local_v in start..end {
                let v = sub.nodes[i][local_v];
                for rel in MessageRelation::into_type(t) {
                    let (src, w) = mg.relation(rel).in_edges(v);
                    let take = fanout.min(src.len());
                    if take == 0 {
                        continue;
                    }
                    let mut picked = sample(rng, src.len(), take).into_vec();
                    picked.sort_unstable();
                    for k in picked {
                        let u = add(&mut sub, &mut g2l, rel.src_type(), src[k], depth + 1);
                        edges.entry(rel).or_default().push(u, local_v, w[k]);
                    }
                }
            }
        }
    }
    sub.edges = edges
        .into_iter()
        .map(|(rel, e)| (EdgeKind::Message(rel), e))
        .collect();
    Ok(LinkBatch {
        edges: seed_edges.to_vec(),
        labels,
        pairs,
        subgraph: sub,
        global_to_local: g2l,
    })
}
