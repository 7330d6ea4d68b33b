//! Heterogeneous two-layer GraphSAGE encoder with per-type input transforms
//! and a dot-product edge decoder.
//!
//! For a node `v` of type `t` at layer `l`:
//!
//! ```text
//! h_v^l = Σ_{r into t} ( h_v^{l-1} · W_self^l(r) + mean_{u ∈ N_r(v)} (w_uv · h_u^{l-1}) · W_neigh^l(r) )
//! ```
//!
//! with ReLU after the first layer only. Layer-0 inputs are a learned
//! per-node embedding plus a linear transform of the raw node features.
//! A supervision edge (student, page) scores `⟨h_student², h_page²⟩`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::graph::{Hkg, MessageGraph, MessageRelation, NodeType};
use crate::tensor::{
    dot, gemm_nn, gemm_nt, gemm_tn, glorot_init, relu_in_place, relu_mask_in_place, Matrix,
    Parameter, RngStream, TensorError,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("message-passing edges include supervision edges")]
    LabelLeakage,
    #[error("backward called without a matching forward pass")]
    StaleCache,
    #[error("model does not match graph: {0}")]
    GraphMismatch(String),
    #[error("invalid subgraph: {0}")]
    Subgraph(String),
    #[error("checkpoint: {0}")]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    /// Weight neighbor messages by watch fraction / final grade.
    pub use_edge_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            out_dim: 4,
            embed_dim: 16,
            num_layers: 2,
            use_edge_weights: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.out_dim == 0 || self.embed_dim == 0 {
            return Err(ModelError::Config("all dimensions must be >= 1".into()));
        }
        if self.num_layers != 2 {
            return Err(ModelError::Config(format!(
                "num_layers must be 2, got {}",
                self.num_layers
            )));
        }
        Ok(())
    }
}

/// Node types whose final representations feed the decoder.
const DECODED: [NodeType; 2] = [NodeType::Student, NodeType::Page];

/// Which stored edges a subgraph edge list carries. Only message relations
/// may take part in encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Message(MessageRelation),
    Supervision,
}

/// Edges in local node indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
}

impl LocalEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn push(&mut self, src: usize, dst: usize, weight: f64) {
        self.src.push(src);
        self.dst.push(dst);
        self.weight.push(weight);
    }
}

/// A node-induced piece of the graph used for one forward pass.
///
/// Nodes of each type are listed in non-decreasing hop distance from the
/// seeds (`depth`). Layer `l` is evaluated for nodes with
/// `depth <= num_layers - l`, so every node whose output is needed sees all
/// of its sampled in-edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Subgraph {
    pub nodes: [Vec<usize>; 4],
    pub depth: [Vec<u8>; 4],
    pub edges: BTreeMap<EdgeKind, LocalEdges>,
}

impl Subgraph {
    /// Every node at depth 0 and every message edge.
    pub fn full(hkg: &Hkg, mg: &MessageGraph) -> Self {
        let nodes: [Vec<usize>; 4] = NodeType::ALL.map(|t| (0..hkg.count(t)).collect());
        let depth = NodeType::ALL.map(|t| vec![0u8; hkg.count(t)]);
        let mut edges = BTreeMap::new();
        for rel in MessageRelation::ALL {
            let csr = mg.relation(rel);
            let mut le = LocalEdges::default();
            for v in 0..hkg.count(rel.dst_type()) {
                let (src, w) = csr.in_edges(v);
                for (&u, &wt) in src.iter().zip(w) {
                    le.push(u, v, wt);
                }
            }
            if !le.is_empty() {
                edges.insert(EdgeKind::Message(rel), le);
            }
        }
        Self {
            nodes,
            depth,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn message_edges(&self, rel: MessageRelation) -> Option<&LocalEdges> {
        self.edges.get(&EdgeKind::Message(rel))
    }

    /// Leakage guard plus index/ordering checks.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self
            .edges
            .get(&EdgeKind::Supervision)
            .is_some_and(|e| !e.is_empty())
        {
            return Err(ModelError::LabelLeakage);
        }
        for t in NodeType::ALL {
            let i = t.index();
            if self.depth[i].len() != self.nodes[i].len() {
                return Err(ModelError::Subgraph(format!("{} depth length", t.name())));
            }
            if self.depth[i].windows(2).any(|w| w[0] > w[1]) {
                return Err(ModelError::Subgraph(format!("{} nodes not depth-ordered", t.name())));
            }
        }
        for (kind, e) in &self.edges {
            let EdgeKind::Message(rel) = kind else { continue };
            let (ns, nd) = (
                self.nodes[rel.src_type().index()].len(),
                self.nodes[rel.dst_type().index()].len(),
            );
            if e.dst.len() != e.len() || e.weight.len() != e.len() {
                return Err(ModelError::Subgraph(format!("{} ragged", rel.name())));
            }
            if e.src.iter().any(|&s| s >= ns) || e.dst.iter().any(|&d| d >= nd) {
                return Err(ModelError::Subgraph(format!("{} index out of range", rel.name())));
            }
        }
        Ok(())
    }

    /// Number of nodes of type `t` with `depth <= max_depth` (a prefix).
    fn prefix(&self, t: NodeType, max_depth: u8) -> usize {
        self.depth[t.index()].partition_point(|&d| d <= max_depth)
    }
}

/// Parameter registry indices for one layer, per message relation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct LayerParams {
    self_w: [Option<usize>; 8],
    neigh_w: [Option<usize>; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroSageModel {
    cfg: ModelConfig,
    node_counts: [usize; 4],
    feature_dims: [usize; 4],
    params: Vec<Parameter>,
    embed: [Option<usize>; 4],
    feat: [Option<usize>; 4],
    layers: [LayerParams; 2],
    version: u64,
}

/// Activations retained for one backward pass.
#[derive(Debug)]
pub struct ForwardCache {
    version: u64,
    gathered_features: [Option<Matrix>; 4],
    x0: [Option<Matrix>; 4],
    layer1: LayerCache,
    layer2: LayerCache,
    seeds: Vec<(usize, usize)>,
}

#[derive(Debug, Default)]
struct LayerCache {
    targets: [usize; 4],
    /// Per relation: the mean neighbor input (targets × in_dim) and, for
    /// each contributing edge, `(edge index, w / deg)`.
    agg: BTreeMap<MessageRelation, (Matrix, Vec<(usize, f64)>)>,
    pre: [Option<Matrix>; 4],
    out: [Option<Matrix>; 4],
}

impl HeteroSageModel {
    /// Builds the model for `hkg`, Glorot-initializing every parameter from
    /// `seed`. Node types with no nodes, and relations touching them, are
    /// omitted.
    pub fn init(cfg: ModelConfig, hkg: &Hkg, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let node_counts = NodeType::ALL.map(|t| hkg.count(t));
        let feature_dims = NodeType::ALL.map(|t| hkg.table(t).dim());
        let mut rng = RngStream::new(seed);
        let mut params = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, rng: &mut RngStream| {
            params.push(Parameter::new(name, glorot_init(rows, cols, rng)));
            Some(params.len() - 1)
        };
        let mut embed = [None; 4];
        let mut feat = [None; 4];
        for t in NodeType::ALL {
            let i = t.index();
            if node_counts[i] == 0 {
                continue;
            }
            embed[i] = add(format!("embed.{}", t.name()), node_counts[i], cfg.embed_dim, &mut rng);
            feat[i] = add(format!("feat.{}", t.name()), feature_dims[i], cfg.embed_dim, &mut rng);
        }
        let present = |rel: MessageRelation| {
            node_counts[rel.src_type().index()] > 0 && node_counts[rel.dst_type().index()] > 0
        };
        let mut layers = [LayerParams::default(); 2];
        let dims = [
            (cfg.embed_dim, cfg.hidden_dim),
            (cfg.hidden_dim, cfg.out_dim),
        ];
        for (l, &(din, dout)) in dims.iter().enumerate() {
            for rel in MessageRelation::ALL {
                if !present(rel) || (l == 1 && !DECODED.contains(&rel.dst_type())) {
                    continue;
                }
                let r = rel.index();
                layers[l].self_w[r] = add(format!("conv{}.self.{}", l + 1, rel.name()), din, dout, &mut rng);
                layers[l].neigh_w[r] = add(format!("conv{}.neigh.{}", l + 1, rel.name()), din, dout, &mut rng);
            }
        }
        Ok(Self {
            cfg,
            node_counts,
            feature_dims,
            params,
            embed,
            feat,
            layers,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    /// Mutable registry access. Invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        self.version += 1;
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.version += 1;
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    fn check_graph(&self, hkg: &Hkg) -> Result<(), ModelError> {
        for t in NodeType::ALL {
            let i = t.index();
            if hkg.count(t) != self.node_counts[i] || hkg.table(t).dim() != self.feature_dims[i] {
                return Err(ModelError::GraphMismatch(format!(
                    "{}: model {}x{}, graph {}x{}",
                    t.name(),
                    self.node_counts[i],
                    self.feature_dims[i],
                    hkg.count(t),
                    hkg.table(t).dim()
                )));
            }
        }
        Ok(())
    }

    fn value(&self, idx: usize) -> &Matrix {
        &self.params[idx].value
    }

    /// Final representations for the depth-0 student and page nodes of the
    /// subgraph, as `(students, pages)`.
    pub fn encode(&self, hkg: &Hkg, sub: &Subgraph) -> Result<(Matrix, Matrix), ModelError> {
        let cache = self.forward_encode(hkg, sub)?;
        let take = |t: NodeType| {
            cache.layer2.out[t.index()]
                .clone()
                .unwrap_or_else(|| Matrix::zeros(0, self.cfg.out_dim))
        };
        Ok((take(NodeType::Student), take(NodeType::Page)))
    }

    /// Logits for `seeds` given as local `(student, page)` indices into the
    /// subgraph's depth-0 nodes.
    pub fn forward(
        &self,
        hkg: &Hkg,
        sub: &Subgraph,
        seeds: &[(usize, usize)],
    ) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        let mut cache = self.forward_encode(hkg, sub)?;
        let s_out = cache.layer2.out[NodeType::Student.index()].as_ref();
        let p_out = cache.layer2.out[NodeType::Page.index()].as_ref();
        let (Some(s_out), Some(p_out)) = (s_out, p_out) else {
            return if seeds.is_empty() {
                Ok((Vec::new(), cache))
            } else {
                Err(ModelError::Subgraph("seed endpoints missing".into()))
            };
        };
        let mut logits = Vec::with_capacity(seeds.len());
        for &(s, p) in seeds {
            if s >= s_out.rows() || p >= p_out.rows() {
                return Err(ModelError::Subgraph(format!("seed ({s}, {p}) not at depth 0")));
            }
            logits.push(decode(s_out.row(s), p_out.row(p))?);
        }
        cache.seeds = seeds.to_vec();
        Ok((logits, cache))
    }

    fn forward_encode(&self, hkg: &Hkg, sub: &Subgraph) -> Result<ForwardCache, ModelError> {
        self.check_graph(hkg)?;
        sub.validate()?;
        let e = self.cfg.embed_dim;

        // layer 0: embedding + feature transform
        let mut gathered_features: [Option<Matrix>; 4] = Default::default();
        let mut x0: [Option<Matrix>; 4] = Default::default();
        for t in NodeType::ALL {
            let i = t.index();
            let nodes = &sub.nodes[i];
            if nodes.is_empty() {
                continue;
            }
            let (Some(ei), Some(fi)) = (self.embed[i], self.feat[i]) else {
                return Err(ModelError::Subgraph(format!("{} nodes in subgraph", t.name())));
            };
            let emb = self.value(ei);
            let raw = &hkg.table(t).features;
            let fdim = raw.cols();
            let mut feats = Matrix::zeros(nodes.len(), fdim);
            let mut x = Matrix::zeros(nodes.len(), e);
            for (row, &g) in nodes.iter().enumerate() {
                if g >= self.node_counts[i] {
                    return Err(ModelError::Subgraph(format!("{} node {g} out of range", t.name())));
                }
                feats.row_mut(row).copy_from_slice(raw.row(g));
                x.row_mut(row).copy_from_slice(emb.row(g));
            }
            gemm_nn(nodes.len(), fdim, e, feats.data(), self.value(fi).data(), x.data_mut());
            gathered_features[i] = Some(feats);
            x0[i] = Some(x);
        }

        let layer1 = self.layer_forward(0, sub, &x0, 1, true)?;
        let layer2 = self.layer_forward(1, sub, &layer1.out, 0, false)?;
        Ok(ForwardCache {
            version: self.version,
            gathered_features,
            x0,
            layer1,
            layer2,
            seeds: Vec::new(),
        })
    }

    fn layer_forward(
        &self,
        l: usize,
        sub: &Subgraph,
        input: &[Option<Matrix>; 4],
        max_depth: u8,
        activate: bool,
    ) -> Result<LayerCache, ModelError> {
        let lp = &self.layers[l];
        let (din, dout) = if l == 0 {
            (self.cfg.embed_dim, self.cfg.hidden_dim)
        } else {
            (self.cfg.hidden_dim, self.cfg.out_dim)
        };
        let mut cache = LayerCache::default();
        for t in NodeType::ALL {
            let i = t.index();
            if l == 1 && !DECODED.contains(&t) {
                continue;
            }
            let n = sub.prefix(t, max_depth);
            let rels: Vec<MessageRelation> = MessageRelation::into_type(t)
                .filter(|r| lp.self_w[r.index()].is_some())
                .collect();
            if n == 0 || rels.is_empty() {
                continue;
            }
            cache.targets[i] = n;
            let x = input[i].as_ref().expect("input rows for targets");
            let mut z = Matrix::zeros(n, dout);

            // Σ_r W_self(r) applied once
            let mut self_sum = Matrix::zeros(din, dout);
            for r in &rels {
                self_sum.add_assign(self.value(lp.self_w[r.index()].expect("present")))?;
            }
            gemm_nn(n, din, dout, &x.data()[..n * din], self_sum.data(), z.data_mut());

            for &rel in &rels {
                let Some(edges) = sub.message_edges(rel) else { continue };
                let src_in = match input[rel.src_type().index()].as_ref() {
                    Some(m) => m,
                    None => continue,
                };
                let mut deg = vec![0usize; n];
                for &d in &edges.dst {
                    if d < n {
                        deg[d] += 1;
                    }
                }
                let mut mean = Matrix::zeros(n, din);
                let mut contrib = Vec::new();
                for (k, (&s, &d)) in edges.src.iter().zip(&edges.dst).enumerate() {
                    if d >= n {
                        continue;
                    }
                    if s >= src_in.rows() {
                        return Err(ModelError::Subgraph(format!(
                            "{} source {s} has no layer-{l} input",
                            rel.name()
                        )));
                    }
                    let coef = edges.weight[k] / deg[d] as f64;
                    for (m, &h) in mean.row_mut(d).iter_mut().zip(src_in.row(s)) {
                        *m += coef * h;
                    }
                    contrib.push((k, coef));
                }
                let wn = self.value(lp.neigh_w[rel.index()].expect("present"));
                gemm_nn(n, din, dout, mean.data(), wn.data(), z.data_mut());
                cache.agg.insert(rel, (mean, contrib));
            }
            let mut h = z.clone();
            if activate {
                relu_in_place(&mut h);
            }
            cache.pre[i] = Some(z);
            cache.out[i] = Some(h);
        }
        Ok(cache)
    }

    /// Accumulates parameter gradients for upstream logit gradients
    /// `dlogits` (one per seed of the cached forward pass).
    pub fn backward(
        &mut self,
        sub: &Subgraph,
        cache: &ForwardCache,
        dlogits: &[f64],
    ) -> Result<(), ModelError> {
        if cache.version != self.version || dlogits.len() != cache.seeds.len() {
            return Err(ModelError::StaleCache);
        }
        let out_dim = self.cfg.out_dim;
        let si = NodeType::Student.index();
        let pi = NodeType::Page.index();

        // decoder
        let mut d_out: [Option<Matrix>; 4] = Default::default();
        if !cache.seeds.is_empty() {
            let s_out = cache.layer2.out[si].as_ref().expect("student outputs");
            let p_out = cache.layer2.out[pi].as_ref().expect("page outputs");
            let mut ds = Matrix::zeros(s_out.rows(), out_dim);
            let mut dp = Matrix::zeros(p_out.rows(), out_dim);
            for (&(s, p), &g) in cache.seeds.iter().zip(dlogits) {
                if g == 0.0 {
                    continue;
                }
                for (d, &o) in ds.row_mut(s).iter_mut().zip(p_out.row(p)) {
                    *d += g * o;
                }
                for (d, &o) in dp.row_mut(p).iter_mut().zip(s_out.row(s)) {
                    *d += g * o;
                }
            }
            d_out[si] = Some(ds);
            d_out[pi] = Some(dp);
        }

        let mut d_h1 = self.layer_backward(1, sub, &cache.layer1.out, &cache.layer2, &d_out)?;
        for t in NodeType::ALL {
            let i = t.index();
            if let (Some(d), Some(pre)) = (d_h1[i].as_mut(), cache.layer1.pre[i].as_ref()) {
                relu_mask_in_place(pre, d);
            }
        }
        let d_x0 = self.layer_backward(0, sub, &cache.x0, &cache.layer1, &d_h1)?;

        let e = self.cfg.embed_dim;
        for t in NodeType::ALL {
            let i = t.index();
            let (Some(dx), Some(feats)) = (d_x0[i].as_ref(), cache.gathered_features[i].as_ref()) else {
                continue;
            };
            let ei = self.embed[i].expect("embedding");
            let grad = &mut self.params[ei].grad;
            for (row, &g) in sub.nodes[i].iter().enumerate() {
                for (a, &b) in grad.row_mut(g).iter_mut().zip(dx.row(row)) {
                    *a += b;
                }
            }
            let fi = self.feat[i].expect("feature transform");
            gemm_tn(
                feats.rows(),
                feats.cols(),
                e,
                feats.data(),
                dx.data(),
                self.params[fi].grad.data_mut(),
            );
        }
        Ok(())
    }

    /// Backpropagates through layer `l`, returning gradients w.r.t. its
    /// inputs (rows aligned with `input`).
    fn layer_backward(
        &mut self,
        l: usize,
        sub: &Subgraph,
        input: &[Option<Matrix>; 4],
        cache: &LayerCache,
        d_out: &[Option<Matrix>; 4],
    ) -> Result<[Option<Matrix>; 4], ModelError> {
        let lp = self.layers[l];
        let (din, dout) = if l == 0 {
            (self.cfg.embed_dim, self.cfg.hidden_dim)
        } else {
            (self.cfg.hidden_dim, self.cfg.out_dim)
        };
        let mut d_in: [Option<Matrix>; 4] =
            NodeType::ALL.map(|t| input[t.index()].as_ref().map(|m| Matrix::zeros(m.rows(), din)));

        for t in NodeType::ALL {
            let i = t.index();
            let n = cache.targets[i];
            let Some(dz) = d_out[i].as_ref() else { continue };
            if n == 0 {
                continue;
            }
            debug_assert_eq!(dz.rows(), n);
            let x = input[i].as_ref().expect("layer input");
            let rels: Vec<MessageRelation> = MessageRelation::into_type(t)
                .filter(|r| lp.self_w[r.index()].is_some())
                .collect();

            // self path: shared gradient for every W_self(r)
            let mut g_self = Matrix::zeros(din, dout);
            gemm_tn(n, din, dout, &x.data()[..n * din], dz.data(), g_self.data_mut());
            let mut self_sum = Matrix::zeros(din, dout);
            for r in &rels {
                let idx = lp.self_w[r.index()].expect("present");
                self.params[idx].grad.add_assign(&g_self)?;
                self_sum.add_assign(&self.params[idx].value)?;
            }
            let dx = d_in[i].as_mut().expect("input grad");
            gemm_nt(n, dout, din, dz.data(), self_sum.data(), &mut dx.data_mut()[..n * din]);

            // neighbor path
            for &rel in &rels {
                let Some((mean, contrib)) = cache.agg.get(&rel) else { continue };
                let idx = lp.neigh_w[rel.index()].expect("present");
                gemm_tn(n, din, dout, mean.data(), dz.data(), self.params[idx].grad.data_mut());
                let mut d_mean = Matrix::zeros(n, din);
                gemm_nt(n, dout, din, dz.data(), self.params[idx].value.data(), d_mean.data_mut());
                let edges = sub.message_edges(rel).expect("cached relation has edges");
                let d_src = d_in[rel.src_type().index()].as_mut().expect("source grad");
                for &(k, coef) in contrib {
                    let (s, d) = (edges.src[k], edges.dst[k]);
                    for (a, &b) in d_src.row_mut(s).iter_mut().zip(d_mean.row(d)) {
                        *a += coef * b;
                    }
                }
            }
        }
        Ok(d_in)
    }

    const CKPT_MAGIC: &'static [u8; 8] = b"HKGMODEL";
    const CKPT_VERSION: u64 = 1;

    /// Checkpoint layout: magic `HKGMODEL`, version, config (hidden, out,
    /// embed, layers, edge-weight flag), node counts and feature dims per
    /// type, parameter count, then per parameter: name, rows, cols, values.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.magic(Self::CKPT_MAGIC);
        w.u64(Self::CKPT_VERSION);
        w.usize(self.cfg.hidden_dim);
        w.usize(self.cfg.out_dim);
        w.usize(self.cfg.embed_dim);
        w.usize(self.cfg.num_layers);
        w.u8(self.cfg.use_edge_weights as u8);
        for i in 0..4 {
            w.usize(self.node_counts[i]);
            w.usize(self.feature_dims[i]);
        }
        w.usize(self.params.len());
        for p in &self.params {
            w.str(&p.name);
            w.usize(p.value.rows());
            w.usize(p.value.cols());
            w.f64s(p.value.data());
        }
        w.finish()
    }

    /// Restores a checkpoint against the graph it was trained on.
    pub fn from_checkpoint(bytes: &[u8], hkg: &Hkg) -> Result<Self, ModelError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(Self::CKPT_MAGIC)?;
        r.expect_version(Self::CKPT_VERSION)?;
        let cfg = ModelConfig {
            hidden_dim: r.usize()?,
            out_dim: r.usize()?,
            embed_dim: r.usize()?,
            num_layers: r.usize()?,
            use_edge_weights: r.u8()? == 1,
        };
        let mut model = Self::init(cfg, hkg, 0)?;
        for i in 0..4 {
            let (n, f) = (r.usize()?, r.usize()?);
            if (n, f) != (model.node_counts[i], model.feature_dims[i]) {
                return Err(ModelError::GraphMismatch(format!(
                    "{}: checkpoint {n}x{f}",
                    NodeType::ALL[i].name()
                )));
            }
        }
        let count = r.usize()?;
        if count != model.params.len() {
            return Err(ModelError::GraphMismatch(format!(
                "checkpoint has {count} parameters, model {}",
                model.params.len()
            )));
        }
        for p in &mut model.params {
            let name = r.str()?;
            let (rows, cols) = (r.usize()?, r.usize()?);
            if name != p.name || (rows, cols) != p.value.shape() {
                return Err(ModelError::GraphMismatch(format!("parameter {name}")));
            }
            p.value = Matrix::from_vec(rows, cols, r.f64s(rows * cols)?)?;
        }
        r.finish()?;
        Ok(model)
    }
}

/// Edge logit `⟨h_student, h_page⟩`.
pub fn decode(student: &[f64], page: &[f64]) -> Result<f64, ModelError> {
    if student.len() != page.len() {
        return Err(TensorError::Shape {
            op: "decode",
            lhs: (1, student.len()),
            rhs: (1, page.len()),
        }
        .into());
    }
    Ok(dot(student, page))
}
