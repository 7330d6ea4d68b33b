//! Heterogeneous knowledge graph assembly: typed node tables with features,
//! content→page edges, student→content edges with interaction features, and
//! binary student→page supervision labels.
//!
//! # Container layout (`graph.hkg`)
//!
//! All integers are little-endian `u64`, all reals little-endian IEEE-754
//! `f64`, strings are a `u64` byte length followed by UTF-8 bytes.
//!
//! ```text
//! magic "HKGGRAPH" | version = 1
//! header: for each node type (Student, Video, Assessment, Page): count, dim
//!         for each relation (watches, attempts, video-on-page,
//!         assessment-on-page, passes): edge count, feature dim, has_labels (u8)
//!         coverage: linked, total
//! body:   for each node type: ids, then count*dim features (row-major)
//!         for each relation: src[], dst[], features (row-major), labels (u8) if present
//! ```

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::engage::{DomainError, EngagementLevel, EngagementThresholds};
use crate::ingest::{
    aggregate_user_stats, is_kept, sessionize, sort_events, user_runs, ClickEvent, EventType,
    IngestError, Payload, DEFAULT_SESSION_GAP_MS,
};
use crate::tensor::Matrix;

/// Watch-fraction and page-mean pass threshold (strict).
pub const PASS_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no supervision labels")]
    EmptyGraph,
    #[error("page has no linked content")]
    EmptyPage,
    #[error("user {0} added twice")]
    DuplicateUser(String),
    #[error("content id {0} is both a video and an assessment")]
    ContentKindConflict(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Engagement(#[from] DomainError),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph container: {0}")]
    Codec(#[from] CodecError),
    #[error("catalog: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Student,
    Video,
    Assessment,
    Page,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Student,
        NodeType::Video,
        NodeType::Assessment,
        NodeType::Page,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Student => "student",
            NodeType::Video => "video",
            NodeType::Assessment => "assessment",
            NodeType::Page => "page",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
}

/// The five stored relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    StudentWatchesVideo,
    StudentAttemptsAssessment,
    VideoOnPage,
    AssessmentOnPage,
    StudentPassesPage,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::StudentWatchesVideo,
        Relation::StudentAttemptsAssessment,
        Relation::VideoOnPage,
        Relation::AssessmentOnPage,
        Relation::StudentPassesPage,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn endpoints(self) -> (NodeType, NodeType) {
        match self {
            Relation::StudentWatchesVideo => (NodeType::Student, NodeType::Video),
            Relation::StudentAttemptsAssessment => (NodeType::Student, NodeType::Assessment),
            Relation::VideoOnPage => (NodeType::Video, NodeType::Page),
            Relation::AssessmentOnPage => (NodeType::Assessment, NodeType::Page),
            Relation::StudentPassesPage => (NodeType::Student, NodeType::Page),
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Relation::StudentWatchesVideo => 1,
            Relation::StudentAttemptsAssessment => 3,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::StudentWatchesVideo => "student_watches_video",
            Relation::StudentAttemptsAssessment => "student_attempts_assessment",
            Relation::VideoOnPage => "video_on_page",
            Relation::AssessmentOnPage => "assessment_on_page",
            Relation::StudentPassesPage => "student_passes_page",
        }
    }
}

/// Directed relations used for message passing: the four stored non-label
/// relations plus their reverses. `StudentPassesPage` never appears here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageRelation {
    StudentToVideo,
    VideoToStudent,
    StudentToAssessment,
    AssessmentToStudent,
    VideoToPage,
    PageToVideo,
    AssessmentToPage,
    PageToAssessment,
}

impl MessageRelation {
    pub const ALL: [MessageRelation; 8] = [
        MessageRelation::StudentToVideo,
        MessageRelation::VideoToStudent,
        MessageRelation::StudentToAssessment,
        MessageRelation::AssessmentToStudent,
        MessageRelation::VideoToPage,
        MessageRelation::PageToVideo,
        MessageRelation::AssessmentToPage,
        MessageRelation::PageToAssessment,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn base(self) -> Relation {
        use MessageRelation::*;
        match self {
            StudentToVideo | VideoToStudent => Relation::StudentWatchesVideo,
            StudentToAssessment | AssessmentToStudent => Relation::StudentAttemptsAssessment,
            VideoToPage | PageToVideo => Relation::VideoOnPage,
            AssessmentToPage | PageToAssessment => Relation::AssessmentOnPage,
        }
    }

    pub fn is_reverse(self) -> bool {
        self.index() % 2 == 1
    }

    pub fn src_type(self) -> NodeType {
        let (s, d) = self.base().endpoints();
        if self.is_reverse() {
            d
        } else {
            s
        }
    }

    pub fn dst_type(self) -> NodeType {
        let (s, d) = self.base().endpoints();
        if self.is_reverse() {
            s
        } else {
            d
        }
    }

    pub fn into_type(t: NodeType) -> impl Iterator<Item = MessageRelation> {
        Self::ALL.into_iter().filter(move |r| r.dst_type() == t)
    }

    pub fn name(self) -> &'static str {
        use MessageRelation::*;
        match self {
            StudentToVideo => "student_to_video",
            VideoToStudent => "video_to_student",
            StudentToAssessment => "student_to_assessment",
            AssessmentToStudent => "assessment_to_student",
            VideoToPage => "video_to_page",
            PageToVideo => "page_to_video",
            AssessmentToPage => "assessment_to_page",
            PageToAssessment => "page_to_assessment",
        }
    }
}

/// Node ids and the feature matrix for one node type.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub node_type: NodeType,
    pub ids: Vec<String>,
    pub features: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    pub relation: Relation,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// One row per edge; `relation.feature_dim()` columns.
    pub features: Matrix,
    /// Present only for `StudentPassesPage`.
    pub labels: Option<Vec<u8>>,
}

impl EdgeTable {
    pub fn empty(relation: Relation) -> Self {
        Self {
            relation,
            src: Vec::new(),
            dst: Vec::new(),
            features: Matrix::zeros(0, relation.feature_dim()),
            labels: (relation == Relation::StudentPassesPage).then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Weight used when aggregating messages over this edge: the watch
    /// fraction for watch edges, the final grade for assessment edges, 1
    /// otherwise.
    pub fn message_weight(&self, e: usize) -> f64 {
        match self.relation {
            Relation::StudentWatchesVideo => self.features.get(e, 0),
            Relation::StudentAttemptsAssessment => self.features.get(e, 1),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Coverage {
    pub linked: usize,
    pub total: usize,
}

impl Coverage {
    /// Linked content over total content; 1 when there is no content.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.linked as f64 / self.total as f64
        }
    }
}

/// The heterogeneous knowledge graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Hkg {
    pub nodes: [FeatureTable; 4],
    pub edges: [EdgeTable; 5],
    pub coverage: Coverage,
}

impl Hkg {
    pub fn table(&self, t: NodeType) -> &FeatureTable {
        &self.nodes[t.index()]
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.nodes[t.index()].len()
    }

    pub fn edges(&self, r: Relation) -> &EdgeTable {
        &self.edges[r.index()]
    }

    pub fn supervision(&self) -> &EdgeTable {
        self.edges(Relation::StudentPassesPage)
    }

    pub fn labels(&self) -> &[u8] {
        self.supervision().labels.as_deref().unwrap_or(&[])
    }

    pub fn node_ref(&self, t: NodeType, id: &str) -> Option<NodeRef> {
        self.table(t)
            .ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
            .map(|index| NodeRef { node_type: t, index })
    }

    /// Replaces the supervision labels, e.g. with a permutation of themselves.
    pub fn set_labels(&mut self, labels: Vec<u8>) -> Result<(), GraphError> {
        if labels.len() != self.supervision().len() || labels.iter().any(|&l| l > 1) {
            return Err(GraphError::Invalid("label vector".into()));
        }
        self.edges[Relation::StudentPassesPage.index()].labels = Some(labels);
        Ok(())
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Invalid(m));
        for (i, t) in NodeType::ALL.iter().enumerate() {
            let table = &self.nodes[i];
            if table.node_type != *t {
                return bad(format!("node table {i} has type {:?}", table.node_type));
            }
            if table.features.rows() != table.ids.len() || table.features.cols() == 0 {
                return bad(format!("{} feature shape", t.name()));
            }
            if !table.features.is_finite() {
                return bad(format!("{} features not finite", t.name()));
            }
            if table.ids.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{} ids not strictly sorted", t.name()));
            }
        }
        for (i, r) in Relation::ALL.iter().enumerate() {
            let e = &self.edges[i];
            if e.relation != *r {
                return bad(format!("edge table {i} has relation {:?}", e.relation));
            }
            let (s, d) = r.endpoints();
            let n = e.src.len();
            if e.dst.len() != n || e.features.shape() != (n, r.feature_dim()) {
                return bad(format!("{} shape", r.name()));
            }
            if e.src.iter().any(|&x| x >= self.count(s)) || e.dst.iter().any(|&x| x >= self.count(d))
            {
                return bad(format!("{} endpoint out of range", r.name()));
            }
            let pairs: Vec<(usize, usize)> = e.src.iter().copied().zip(e.dst.iter().copied()).collect();
            if pairs.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{} edges not canonical (sorted, unique)", r.name()));
            }
            match (r, &e.labels) {
                (Relation::StudentPassesPage, Some(l)) if l.len() == n && l.iter().all(|&x| x <= 1) => {}
                (Relation::StudentPassesPage, _) => return bad("supervision labels".into()),
                (_, None) => {}
                (_, Some(_)) => return bad(format!("{} carries labels", r.name())),
            }
            for row in 0..n {
                let f = e.features.row(row);
                let ok = match r {
                    Relation::StudentWatchesVideo => (0.0..=1.0).contains(&f[0]),
                    Relation::StudentAttemptsAssessment => {
                        (0.0..=1.0).contains(&f[0]) && (0.0..=1.0).contains(&f[1]) && f[2] >= 1.0
                    }
                    _ => true,
                };
                if !ok {
                    return bad(format!("{} edge {row} feature out of range", r.name()));
                }
            }
        }
        // supervision edges only touch linked pages
        let mut linked = vec![false; self.count(NodeType::Page)];
        for r in [Relation::VideoOnPage, Relation::AssessmentOnPage] {
            for &p in &self.edges(r).dst {
                linked[p] = true;
            }
        }
        if self.supervision().dst.iter().any(|&p| !linked[p]) {
            return bad("supervision edge to unlinked page".into());
        }
        if self.coverage.linked > self.coverage.total {
            return bad("coverage".into());
        }
        Ok(())
    }

    /// Bitwise equality of every feature value, id and edge.
    pub fn bit_identical(&self, other: &Hkg) -> bool {
        self.coverage == other.coverage
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| {
                a.node_type == b.node_type && a.ids == b.ids && a.features.bit_eq(&b.features)
            })
            && self.edges.iter().zip(&other.edges).all(|(a, b)| {
                a.relation == b.relation
                    && a.src == b.src
                    && a.dst == b.dst
                    && a.labels == b.labels
                    && a.features.bit_eq(&b.features)
            })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.magic(GRAPH_MAGIC);
        w.u64(GRAPH_VERSION);
        for t in &self.nodes {
            w.usize(t.len());
            w.usize(t.dim());
        }
        for e in &self.edges {
            w.usize(e.len());
            w.usize(e.features.cols());
            w.u8(e.labels.is_some() as u8);
        }
        w.usize(self.coverage.linked);
        w.usize(self.coverage.total);
        for t in &self.nodes {
            for id in &t.ids {
                w.str(id);
            }
            w.f64s(t.features.data());
        }
        for e in &self.edges {
            for &s in &e.src {
                w.usize(s);
            }
            for &d in &e.dst {
                w.usize(d);
            }
            w.f64s(e.features.data());
            if let Some(labels) = &e.labels {
                for &l in labels {
                    w.u8(l);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(GRAPH_MAGIC)?;
        r.expect_version(GRAPH_VERSION)?;
        let mut node_shapes = [(0, 0); 4];
        for s in &mut node_shapes {
            *s = (r.len(8)?, r.len(8)?);
        }
        let mut edge_shapes = [(0, 0, false); 5];
        for s in &mut edge_shapes {
            *s = (r.len(16)?, r.len(0)?, r.u8()? == 1);
        }
        let coverage = Coverage {
            linked: r.usize()?,
            total: r.usize()?,
        };
        let mut nodes = Vec::with_capacity(4);
        for (t, (n, dim)) in NodeType::ALL.into_iter().zip(node_shapes) {
            let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
            let data = r.f64s(n.checked_mul(dim).ok_or(CodecError::Truncated(0))?)?;
            nodes.push(FeatureTable {
                node_type: t,
                ids,
                features: Matrix::from_vec(n, dim, data)
                    .map_err(|e| GraphError::Invalid(e.to_string()))?,
            });
        }
        let mut edges = Vec::with_capacity(5);
        for (rel, (n, dim, has_labels)) in Relation::ALL.into_iter().zip(edge_shapes) {
            let src = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
            let dst = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
            let data = r.f64s(n.checked_mul(dim).ok_or(CodecError::Truncated(0))?)?;
            let labels = if has_labels {
                Some((0..n).map(|_| r.u8()).collect::<Result<Vec<_>, _>>()?)
            } else {
                None
            };
            edges.push(EdgeTable {
                relation: rel,
                src,
                dst,
                features: Matrix::from_vec(n, dim, data)
                    .map_err(|e| GraphError::Invalid(e.to_string()))?,
                labels,
            });
        }
        r.finish()?;
        let hkg = Hkg {
            nodes: nodes.try_into().expect("four node tables"),
            edges: edges.try_into().expect("five edge tables"),
            coverage,
        };
        hkg.validate()?;
        Ok(hkg)
    }

    /// Human-readable JSON export.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: serde_json::Map<String, serde_json::Value> = self
            .nodes
            .iter()
            .map(|t| {
                let rows: Vec<&[f64]> = (0..t.len()).map(|i| t.features.row(i)).collect();
                (
                    t.node_type.name().to_string(),
                    serde_json::json!({ "ids": t.ids, "features": rows }),
                )
            })
            .collect();
        let edges: serde_json::Map<String, serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                let rows: Vec<&[f64]> = (0..e.len()).map(|i| e.features.row(i)).collect();
                (
                    e.relation.name().to_string(),
                    serde_json::json!({
                        "src": e.src, "dst": e.dst, "features": rows, "labels": e.labels,
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "schema_version": GRAPH_VERSION,
            "nodes": nodes,
            "edges": edges,
            "coverage": { "linked": self.coverage.linked, "total": self.coverage.total,
                          "fraction": self.coverage.fraction() },
        })
    }
}

const GRAPH_MAGIC: &[u8; 8] = b"HKGGRAPH";
const GRAPH_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Video,
    Assessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub kind: ContentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

/// Course content metadata (`catalog.json`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub content: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Catalog(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

/// Result of [`watch_fraction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatchFraction {
    pub weight: f64,
    /// No duration was known; the fallback rule was applied.
    pub no_duration: bool,
}

/// Watch fraction for one (user, video) event set: furthest playback
/// position over duration, clamped to `[0, 1]`. Without any known duration
/// the weight is 1 if a stop was observed and 0.5 otherwise.
pub fn watch_fraction(events: &[ClickEvent]) -> WatchFraction {
    let agg = VideoAgg::from_events(events);
    agg.fraction(None)
}

/// Per (user, video) aggregate; the raw material of [`watch_fraction`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct VideoAgg {
    max_position: f64,
    duration: Option<f64>,
    stopped: bool,
}

impl VideoAgg {
    fn from_events(events: &[ClickEvent]) -> Self {
        let mut agg = VideoAgg::default();
        for e in events {
            agg.observe(e);
        }
        agg
    }

    fn observe(&mut self, e: &ClickEvent) {
        if let Payload::Video(v) = &e.payload {
            self.max_position = self.max_position.max(v.position_s);
            if let Some(d) = v.duration_s {
                self.duration = Some(self.duration.map_or(d, |x: f64| x.max(d)));
            }
        }
        if e.event_type == EventType::VideoStop {
            self.stopped = true;
        }
    }

    fn fraction(&self, fallback_duration: Option<f64>) -> WatchFraction {
        match self.duration.or(fallback_duration) {
            Some(d) => WatchFraction {
                weight: (self.max_position / d).clamp(0.0, 1.0),
                no_duration: false,
            },
            None => WatchFraction {
                weight: if self.stopped { 1.0 } else { 0.5 },
                no_duration: true,
            },
        }
    }
}

/// `(first_grade, final_grade, attempts)` for one (user, assessment) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssessmentFeatures {
    pub first_grade: f64,
    pub final_grade: f64,
    pub attempts: u32,
}

/// Features from the time-sorted submissions of one (user, assessment)
/// pair; `None` when there are no submissions.
pub fn assessment_edge_features<'a>(
    events: impl IntoIterator<Item = &'a ClickEvent>,
) -> Option<AssessmentFeatures> {
    let mut out: Option<AssessmentFeatures> = None;
    for e in events {
        if let Payload::Assessment(a) = &e.payload {
            let g = a.fraction();
            match &mut out {
                None => {
                    out = Some(AssessmentFeatures {
                        first_grade: g,
                        final_grade: g,
                        attempts: 1,
                    })
                }
                Some(f) => {
                    f.final_grade = g;
                    f.attempts += 1;
                }
            }
        }
    }
    out
}

/// Content linked to one page, as node indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PageContent {
    pub videos: Vec<usize>,
    pub assessments: Vec<usize>,
}

/// Pass label for one student on one page.
///
/// Pages with assessments pass when the mean final grade over all page
/// assessments (unattempted ones count 0) exceeds 0.7. Video-only pages pass
/// when the share of page videos watched beyond 0.7 exceeds 0.7.
pub fn page_pass_label(
    page: &PageContent,
    watch: impl Fn(usize) -> Option<f64>,
    final_grade: impl Fn(usize) -> Option<f64>,
) -> Result<bool, GraphError> {
    if !page.assessments.is_empty() {
        let total: f64 = page
            .assessments
            .iter()
            .map(|&a| final_grade(a).unwrap_or(0.0))
            .sum();
        Ok(total / page.assessments.len() as f64 > PASS_THRESHOLD)
    } else if !page.videos.is_empty() {
        let watched = page
            .videos
            .iter()
            .filter(|&&v| watch(v).is_some_and(|w| w > PASS_THRESHOLD))
            .count();
        Ok(watched as f64 / page.videos.len() as f64 > PASS_THRESHOLD)
    } else {
        Err(GraphError::EmptyPage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub session_gap_ms: i64,
    pub engage: EngagementThresholds,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            session_gap_ms: DEFAULT_SESSION_GAP_MS,
            engage: EngagementThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub students: usize,
    pub videos: usize,
    pub assessments: usize,
    pub pages: usize,
    pub watch_edges: usize,
    pub attempt_edges: usize,
    pub supervision_edges: usize,
    pub positive_labels: usize,
    /// Watch edges whose weight came from the no-duration fallback.
    pub no_duration_edges: usize,
    pub linked_content: usize,
    pub total_content: usize,
}

#[derive(Debug, Clone)]
pub struct Built {
    pub hkg: Hkg,
    pub report: BuildReport,
}

/// Per-student raw aggregates kept until global content metadata is known.
#[derive(Debug)]
struct UserRecord {
    stats: crate::ingest::StudentStats,
    videos: BTreeMap<String, VideoAgg>,
    assessments: BTreeMap<String, AssessmentFeatures>,
}

#[derive(Debug, Default)]
struct ContentSeen {
    kind: Option<ContentKind>,
    duration: Option<f64>,
    /// Smallest page id observed in events, for order independence.
    event_page: Option<String>,
}

/// Incremental graph assembly. Users may be added in any order; the result
/// only depends on the set of events.
#[derive(Debug)]
pub struct GraphBuilder {
    cfg: GraphConfig,
    catalog: Catalog,
    users: BTreeMap<String, UserRecord>,
    content: BTreeMap<String, ContentSeen>,
}

impl GraphBuilder {
    pub fn new(catalog: Catalog, cfg: GraphConfig) -> Self {
        Self {
            cfg,
            catalog,
            users: BTreeMap::new(),
            content: BTreeMap::new(),
        }
    }

    /// Adds one user's filtered events, sorted by timestamp.
    pub fn add_user(&mut self, events: &[ClickEvent]) -> Result<(), GraphError> {
        let Some(first) = events.first() else {
            return Ok(());
        };
        if self.users.contains_key(&first.user_id) {
            return Err(GraphError::DuplicateUser(first.user_id.clone()));
        }
        let sessions = sessionize(events, self.cfg.session_gap_ms)?;
        let stats = aggregate_user_stats(events, &sessions)?;
        let mut videos: BTreeMap<String, VideoAgg> = BTreeMap::new();
        let mut submits: BTreeMap<String, Vec<&ClickEvent>> = BTreeMap::new();
        for e in events {
            let (id, kind) = match &e.payload {
                Payload::Video(v) => {
                    videos.entry(v.video_id.clone()).or_default().observe(e);
                    (&v.video_id, ContentKind::Video)
                }
                Payload::Assessment(a) => {
                    submits.entry(a.assessment_id.clone()).or_default().push(e);
                    (&a.assessment_id, ContentKind::Assessment)
                }
                Payload::None => continue,
            };
            let seen = self.content.entry(id.clone()).or_default();
            match seen.kind {
                Some(k) if k != kind => return Err(GraphError::ContentKindConflict(id.clone())),
                _ => seen.kind = Some(kind),
            }
            if let Payload::Video(v) = &e.payload {
                if let Some(d) = v.duration_s {
                    seen.duration = Some(seen.duration.map_or(d, |x| x.max(d)));
                }
            }
            if let Some(p) = &e.page_id {
                if seen.event_page.as_ref().is_none_or(|cur| p < cur) {
                    seen.event_page = Some(p.clone());
                }
            }
        }
        let assessments = submits
            .into_iter()
            .filter_map(|(id, evs)| assessment_edge_features(evs).map(|f| (id, f)))
            .collect();
        self.users.insert(
            first.user_id.clone(),
            UserRecord {
                stats,
                videos,
                assessments,
            },
        );
        Ok(())
    }

    pub fn finish(self) -> Result<Built, GraphError> {
        let GraphBuilder {
            cfg,
            catalog,
            users,
            mut content,
        } = self;

        // content metadata: catalog wins over event-derived values
        let mut catalog_page: HashMap<&str, Option<&str>> = HashMap::new();
        for entry in &catalog.content {
            let seen = content.entry(entry.id.clone()).or_default();
            match seen.kind {
                Some(k) if k != entry.kind => {
                    return Err(GraphError::ContentKindConflict(entry.id.clone()))
                }
                _ => seen.kind = Some(entry.kind),
            }
            if let Some(d) = entry.duration_s.filter(|d| d.is_finite() && *d > 0.0) {
                seen.duration = Some(d);
            }
            catalog_page.insert(entry.id.as_str(), entry.page.as_deref());
        }
        let page_of = |id: &str, seen: &ContentSeen| -> Option<String> {
            match catalog_page.get(id) {
                Some(Some(p)) => Some(p.to_string()),
                _ => seen.event_page.clone(),
            }
        };

        let video_ids: Vec<&String> = content
            .iter()
            .filter(|(_, s)| s.kind == Some(ContentKind::Video))
            .map(|(id, _)| id)
            .collect();
        let assessment_ids: Vec<&String> = content
            .iter()
            .filter(|(_, s)| s.kind == Some(ContentKind::Assessment))
            .map(|(id, _)| id)
            .collect();
        let video_index: HashMap<&str, usize> =
            video_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let assessment_index: HashMap<&str, usize> = assessment_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let video_pages: Vec<Option<String>> =
            video_ids.iter().map(|id| page_of(id, &content[*id])).collect();
        let assessment_pages: Vec<Option<String>> =
            assessment_ids.iter().map(|id| page_of(id, &content[*id])).collect();
        let page_ids: Vec<String> = video_pages
            .iter()
            .chain(&assessment_pages)
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let page_index: HashMap<&str, usize> =
            page_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

        let mut pages = vec![PageContent::default(); page_ids.len()];
        let mut video_on_page = Vec::new();
        for (v, p) in video_pages.iter().enumerate() {
            if let Some(p) = p {
                let pi = page_index[p.as_str()];
                pages[pi].videos.push(v);
                video_on_page.push((v, pi));
            }
        }
        let mut assessment_on_page = Vec::new();
        for (a, p) in assessment_pages.iter().enumerate() {
            if let Some(p) = p {
                let pi = page_index[p.as_str()];
                pages[pi].assessments.push(a);
                assessment_on_page.push((a, pi));
            }
        }
        let video_page_idx: Vec<Option<usize>> = video_pages
            .iter()
            .map(|p| p.as_ref().map(|p| page_index[p.as_str()]))
            .collect();
        let assessment_page_idx: Vec<Option<usize>> = assessment_pages
            .iter()
            .map(|p| p.as_ref().map(|p| page_index[p.as_str()]))
            .collect();

        let durations: Vec<Option<f64>> = video_ids.iter().map(|id| content[*id].duration).collect();
        let max_duration = durations.iter().flatten().copied().fold(0.0, f64::max);
        let video_features: Vec<f64> = durations
            .iter()
            .map(|d| match d {
                Some(d) if max_duration > 0.0 => d / max_duration,
                _ => 0.0,
            })
            .collect();

        let mut report = BuildReport::default();
        let mut watch = Vec::new();
        let mut attempts = Vec::new();
        let mut supervision = Vec::new();
        let mut raw_student = Vec::with_capacity(users.len() * STUDENT_NUMERIC_DIMS);
        let mut levels = Vec::with_capacity(users.len());

        for (s, rec) in users.values().enumerate() {
            let mut watched: BTreeMap<usize, f64> = BTreeMap::new();
            for (id, agg) in &rec.videos {
                let v = video_index[id.as_str()];
                let wf = agg.fraction(durations[v]);
                if wf.no_duration {
                    report.no_duration_edges += 1;
                }
                watched.insert(v, wf.weight);
            }
            let mut graded: BTreeMap<usize, AssessmentFeatures> = BTreeMap::new();
            for (id, f) in &rec.assessments {
                graded.insert(assessment_index[id.as_str()], *f);
            }

            let mean_watch = mean(watched.values().copied());
            let mean_grade = mean(graded.values().map(|f| f.final_grade));
            levels.push(cfg.engage.label(mean_watch, mean_grade)?);

            let st = &rec.stats;
            raw_student.extend_from_slice(&[
                st.session_count as f64,
                st.count(EventType::VideoPlay) as f64,
                st.count(EventType::VideoPause) as f64,
                st.count(EventType::VideoSeek) as f64,
                st.count(EventType::VideoStop) as f64,
                st.count(EventType::ProblemSubmit) as f64,
                st.active_days(),
            ]);

            let touched: BTreeSet<usize> = watched
                .keys()
                .filter_map(|&v| video_page_idx[v])
                .chain(graded.keys().filter_map(|&a| assessment_page_idx[a]))
                .collect();
            for p in touched {
                let pass = page_pass_label(
                    &pages[p],
                    |v| watched.get(&v).copied(),
                    |a| graded.get(&a).map(|f| f.final_grade),
                )?;
                supervision.push((s, p, pass as u8));
            }
            watch.extend(watched.into_iter().map(|(v, w)| (s, v, w)));
            attempts.extend(graded.into_iter().map(|(a, f)| (s, a, f)));
        }

        if supervision.is_empty() {
            return Err(GraphError::EmptyGraph);
        }

        let n_students = users.len();
        let student_features = student_feature_matrix(n_students, raw_student, &levels);

        report.students = n_students;
        report.videos = video_ids.len();
        report.assessments = assessment_ids.len();
        report.pages = page_ids.len();
        report.watch_edges = watch.len();
        report.attempt_edges = attempts.len();
        report.supervision_edges = supervision.len();
        report.positive_labels = supervision.iter().filter(|x| x.2 == 1).count();
        report.total_content = video_ids.len() + assessment_ids.len();
        report.linked_content = video_on_page.len() + assessment_on_page.len();

        let coverage = Coverage {
            linked: report.linked_content,
            total: report.total_content,
        };
        let nodes = [
            FeatureTable {
                node_type: NodeType::Student,
                ids: users.keys().cloned().collect(),
                features: student_features,
            },
            FeatureTable {
                node_type: NodeType::Video,
                ids: video_ids.iter().map(|s| s.to_string()).collect(),
                features: Matrix::from_vec(video_ids.len(), 1, video_features)
                    .expect("one duration per video"),
            },
            FeatureTable {
                node_type: NodeType::Assessment,
                ids: assessment_ids.iter().map(|s| s.to_string()).collect(),
                features: Matrix::zeros(assessment_ids.len(), 1),
            },
            FeatureTable {
                node_type: NodeType::Page,
                ids: page_ids,
                features: Matrix::zeros(pages.len(), 1),
            },
        ];
        let edges = [
            edge_table(
                Relation::StudentWatchesVideo,
                watch.into_iter().map(|(s, v, w)| (s, v, vec![w])),
                None,
            ),
            edge_table(
                Relation::StudentAttemptsAssessment,
                attempts.into_iter().map(|(s, a, f)| {
                    (s, a, vec![f.first_grade, f.final_grade, f.attempts as f64])
                }),
                None,
            ),
            edge_table(
                Relation::VideoOnPage,
                video_on_page.into_iter().map(|(v, p)| (v, p, vec![])),
                None,
            ),
            edge_table(
                Relation::AssessmentOnPage,
                assessment_on_page.into_iter().map(|(a, p)| (a, p, vec![])),
                None,
            ),
            {
                let labels = supervision.iter().map(|x| x.2).collect();
                edge_table(
                    Relation::StudentPassesPage,
                    supervision.into_iter().map(|(s, p, _)| (s, p, vec![])),
                    Some(labels),
                )
            },
        ];
        let hkg = Hkg {
            nodes,
            edges,
            coverage,
        };
        debug_assert!(hkg.validate().is_ok(), "{:?}", hkg.validate());
        Ok(Built { hkg, report })
    }
}

/// Numeric student columns before the engagement one-hot block.
pub const STUDENT_NUMERIC_DIMS: usize = 7;
/// Total student feature width.
pub const STUDENT_FEATURE_DIMS: usize = STUDENT_NUMERIC_DIMS + 4;

/// Scales each numeric column by its maximum and appends the engagement
/// one-hot.
fn student_feature_matrix(n: usize, raw: Vec<f64>, levels: &[EngagementLevel]) -> Matrix {
    let mut col_max = [0.0f64; STUDENT_NUMERIC_DIMS];
    for row in raw.chunks_exact(STUDENT_NUMERIC_DIMS) {
        for (m, &x) in col_max.iter_mut().zip(row) {
            *m = m.max(x);
        }
    }
    let mut m = Matrix::zeros(n, STUDENT_FEATURE_DIMS);
    for (i, row) in raw.chunks_exact(STUDENT_NUMERIC_DIMS).enumerate() {
        let out = m.row_mut(i);
        for c in 0..STUDENT_NUMERIC_DIMS {
            out[c] = if col_max[c] > 0.0 { row[c] / col_max[c] } else { 0.0 };
        }
        out[STUDENT_NUMERIC_DIMS + levels[i].one_hot_index()] = 1.0;
    }
    m
}

fn edge_table(
    relation: Relation,
    rows: impl Iterator<Item = (usize, usize, Vec<f64>)>,
    labels: Option<Vec<u8>>,
) -> EdgeTable {
    let dim = relation.feature_dim();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut data = Vec::new();
    let mut rows: Vec<_> = rows.collect();
    let mut labels = labels;
    if let Some(l) = &mut labels {
        let mut joined: Vec<_> = rows.into_iter().zip(l.iter().copied()).collect();
        joined.sort_by_key(|((s, d, _), _)| (*s, *d));
        *l = joined.iter().map(|(_, x)| *x).collect();
        rows = joined.into_iter().map(|(r, _)| r).collect();
    } else {
        rows.sort_by_key(|(s, d, _)| (*s, *d));
    }
    for (s, d, f) in rows {
        debug_assert_eq!(f.len(), dim);
        src.push(s);
        dst.push(d);
        data.extend(f);
    }
    let n = src.len();
    EdgeTable {
        relation,
        src,
        dst,
        features: Matrix::from_vec(n, dim, data).expect("edge feature rows"),
        labels,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Assembles the graph from filtered events. Unsorted input is sorted by
/// `(user, timestamp)` first; non-kept events are ignored.
pub fn assemble_hkg(
    events: &[ClickEvent],
    catalog: &Catalog,
    cfg: &GraphConfig,
) -> Result<Built, GraphError> {
    let sorted_kept = events.iter().all(is_kept)
        && events.windows(2).all(|w| {
            (w[0].user_id.as_str(), w[0].timestamp) <= (w[1].user_id.as_str(), w[1].timestamp)
        });
    let events: Cow<[ClickEvent]> = if sorted_kept {
        Cow::Borrowed(events)
    } else {
        let mut v: Vec<ClickEvent> = events.iter().filter(|e| is_kept(e)).cloned().collect();
        sort_events(&mut v);
        Cow::Owned(v)
    };
    let mut builder = GraphBuilder::new(catalog.clone(), *cfg);
    for run in user_runs(&events) {
        builder.add_user(run)?;
    }
    builder.finish()
}

/// In-neighbor lists (CSR keyed by destination) for every message relation.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    adj: Vec<Csr>,
}

#[derive(Debug, Clone, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    src: Vec<usize>,
    weight: Vec<f64>,
}

impl Csr {
    pub fn degree(&self, dst: usize) -> usize {
        self.offsets[dst + 1] - self.offsets[dst]
    }

    /// `(sources, weights)` of edges into `dst`.
    pub fn in_edges(&self, dst: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[dst], self.offsets[dst + 1]);
        (&self.src[a..b], &self.weight[a..b])
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }
}

impl MessageGraph {
    /// With `use_weights = false` every message weight is 1.
    pub fn from_hkg(hkg: &Hkg, use_weights: bool) -> Self {
        let adj = MessageRelation::ALL
            .iter()
            .map(|&rel| {
                let table = hkg.edges(rel.base());
                let n_dst = hkg.count(rel.dst_type());
                let (from, to) = if rel.is_reverse() {
                    (&table.dst, &table.src)
                } else {
                    (&table.src, &table.dst)
                };
                let mut offsets = vec![0usize; n_dst + 1];
                for &d in to {
                    offsets[d + 1] += 1;
                }
                for i in 0..n_dst {
                    offsets[i + 1] += offsets[i];
                }
                let mut cursor = offsets.clone();
                let mut src = vec![0; table.len()];
                let mut weight = vec![0.0; table.len()];
                // edge tables are sorted by (src, dst); filling in that order
                // keeps each in-list sorted for forward relations
                let mut order: Vec<usize> = (0..table.len()).collect();
                order.sort_by_key(|&e| (to[e], from[e]));
                for e in order {
                    let slot = cursor[to[e]];
                    src[slot] = from[e];
                    weight[slot] = if use_weights { table.message_weight(e) } else { 1.0 };
                    cursor[to[e]] += 1;
                }
                Csr {
                    offsets,
                    src,
                    weight,
                }
            })
            .collect();
        Self { adj }
    }

    pub fn relation(&self, rel: MessageRelation) -> &Csr {
        &self.adj[rel.index()]
    }

    pub fn max_in_degree(&self) -> usize {
        self.adj
            .iter()
            .map(|c| c.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AssessmentPayload, Source, Timestamp, VideoPayload};

    fn video(user: &str, id: &str, page: Option<&str>, t: EventType, pos: f64, dur: Option<f64>, ms: i64) -> ClickEvent {
        ClickEvent {
            user_id: user.into(),
            event_type: t,
            page_id: page.map(Into::into),
            content_id: Some(id.into()),
            timestamp: Timestamp(ms),
            source: Source::Browser,
            payload: Payload::Video(VideoPayload {
                video_id: id.into(),
                position_s: pos,
                duration_s: dur,
            }),
        }
    }

    fn submit(user: &str, id: &str, page: Option<&str>, grade: f64, max: f64, attempt: u32, ms: i64) -> ClickEvent {
        ClickEvent {
            user_id: user.into(),
            event_type: EventType::ProblemSubmit,
            page_id: page.map(Into::into),
            content_id: Some(id.into()),
            timestamp: Timestamp(ms),
            source: Source::Browser,
            payload: Payload::Assessment(AssessmentPayload {
                assessment_id: id.into(),
                grade,
                max_grade: max,
                attempt,
            }),
        }
    }

    #[test]
    fn watch_fraction_cases() {
        let evs = [video("u", "v", None, EventType::VideoPause, 30.0, Some(60.0), 0)];
        assert_eq!(watch_fraction(&evs).weight, 0.5);
        let evs = [video("u", "v", None, EventType::VideoSeek, 70.0, Some(60.0), 0)];
        assert_eq!(watch_fraction(&evs).weight, 1.0);
        let evs: Vec<_> = [10.0, 45.0, 20.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| video("u", "v", None, EventType::VideoPause, p, Some(90.0), i as i64))
            .collect();
        assert_eq!(watch_fraction(&evs).weight, 0.5);
    }

    #[test]
    fn watch_fraction_without_duration_falls_back() {
        let paused = [video("u", "v", None, EventType::VideoPause, 30.0, None, 0)];
        assert_eq!(
            watch_fraction(&paused),
            WatchFraction { weight: 0.5, no_duration: true }
        );
        let stopped = [
            paused[0].clone(),
            video("u", "v", None, EventType::VideoStop, 40.0, None, 1),
        ];
        assert_eq!(watch_fraction(&stopped).weight, 1.0);
    }

    #[test]
    fn assessment_feature_cases() {
        let f = assessment_edge_features(&[
            submit("u", "a", None, 40.0, 100.0, 1, 0),
            submit("u", "a", None, 80.0, 100.0, 2, 1),
        ])
        .unwrap();
        assert_eq!((f.first_grade, f.final_grade, f.attempts), (0.4, 0.8, 2));
        let f = assessment_edge_features(&[submit("u", "a", None, 100.0, 100.0, 1, 0)]).unwrap();
        assert_eq!((f.first_grade, f.final_grade, f.attempts), (1.0, 1.0, 1));
        let f = assessment_edge_features(&[
            submit("u", "a", None, 80.0, 100.0, 1, 0),
            submit("u", "a", None, 40.0, 100.0, 2, 1),
        ])
        .unwrap();
        assert_eq!((f.first_grade, f.final_grade, f.attempts), (0.8, 0.4, 2));
        assert!(assessment_edge_features(&[]).is_none());
    }

    #[test]
    fn page_label_rules() {
        let page = PageContent {
            videos: vec![0],
            assessments: vec![0, 1],
        };
        // mean final grade 0.75 passes even though the video was skipped
        let grades = [0.8, 0.7];
        assert!(page_pass_label(&page, |_| None, |a| Some(grades[a])).unwrap());
        // exactly 0.70 fails
        let single = PageContent {
            videos: vec![],
            assessments: vec![0],
        };
        assert!(!page_pass_label(&single, |_| None, |_| Some(0.7)).unwrap());
        assert!(page_pass_label(&single, |_| None, |_| Some(0.7000001)).unwrap());
        // missing attempts count as 0: (1.0 + 0) / 2 = 0.5
        assert!(!page_pass_label(&page, |_| Some(1.0), |a| (a == 0).then_some(1.0)).unwrap());

        let videos = PageContent {
            videos: (0..5).collect(),
            assessments: vec![],
        };
        let w = [0.9, 0.8, 0.95, 0.71, 0.2];
        assert!(page_pass_label(&videos, |v| Some(w[v]), |_| None).unwrap());
        let w = [0.9, 0.8, 0.95, 0.7, 0.2];
        assert!(!page_pass_label(&videos, |v| Some(w[v]), |_| None).unwrap());
        assert!(matches!(
            page_pass_label(&PageContent::default(), |_| None, |_| None),
            Err(GraphError::EmptyPage)
        ));
    }

    fn fixture_events() -> Vec<ClickEvent> {
        let h = 3_600_000;
        vec![
            // alice: watches v1 fully, aces a1 on p1; watches v3 (unlinked)
            video("alice", "v1", Some("p1"), EventType::VideoPlay, 0.0, Some(100.0), 0),
            video("alice", "v1", Some("p1"), EventType::VideoStop, 100.0, Some(100.0), 1000),
            submit("alice", "a1", Some("p1"), 9.0, 10.0, 1, 2000),
            video("alice", "v3", None, EventType::VideoPlay, 0.0, Some(50.0), 5 * h),
            video("alice", "v3", None, EventType::VideoPause, 10.0, Some(50.0), 5 * h + 1000),
            // bob: fails a1 twice; watches v2 on p2 (video-only page)
            submit("bob", "a1", Some("p1"), 2.0, 10.0, 1, 0),
            submit("bob", "a1", Some("p1"), 5.0, 10.0, 2, 60_000),
            video("bob", "v2", Some("p2"), EventType::VideoPlay, 0.0, Some(200.0), 2 * h),
            video("bob", "v2", Some("p2"), EventType::VideoPause, 190.0, Some(200.0), 2 * h + 5000),
            // carol: half-watches v2
            video("carol", "v2", Some("p2"), EventType::VideoPause, 100.0, Some(200.0), 0),
        ]
    }

    #[test]
    fn assemble_fixture() {
        let built = assemble_hkg(&fixture_events(), &Catalog::default(), &GraphConfig::default()).unwrap();
        let g = &built.hkg;
        g.validate().unwrap();
        assert_eq!(g.table(NodeType::Student).ids, ["alice", "bob", "carol"]);
        assert_eq!(g.table(NodeType::Video).ids, ["v1", "v2", "v3"]);
        assert_eq!(g.table(NodeType::Assessment).ids, ["a1"]);
        assert_eq!(g.table(NodeType::Page).ids, ["p1", "p2"]);
        assert_eq!(g.coverage, Coverage { linked: 3, total: 4 });
        assert_eq!(g.coverage.fraction(), 0.75);

        let w = g.edges(Relation::StudentWatchesVideo);
        // (alice,v1)=1.0 (alice,v3)=0.2 (bob,v2)=0.95 (carol,v2)=0.5
        assert_eq!(w.src, [0, 0, 1, 2]);
        assert_eq!(w.dst, [0, 2, 1, 1]);
        assert_eq!(w.features.data(), &[1.0, 0.2, 0.95, 0.5]);

        let a = g.edges(Relation::StudentAttemptsAssessment);
        assert_eq!(a.src, [0, 1]);
        assert_eq!(a.features.row(0), &[0.9, 0.9, 1.0]);
        assert_eq!(a.features.row(1), &[0.2, 0.5, 2.0]);

        let sup = g.supervision();
        // alice->p1 pass (0.9), bob->p1 fail (0.5), bob->p2 pass (1/1 videos > 0.7), carol->p2 fail
        assert_eq!(sup.src, [0, 1, 1, 2]);
        assert_eq!(sup.dst, [0, 0, 1, 1]);
        assert_eq!(g.labels(), [1, 0, 1, 0]);

        let sf = &g.table(NodeType::Student).features;
        assert_eq!(sf.shape(), (3, STUDENT_FEATURE_DIMS));
        // alice has two sessions (5h gap), the max: normalized to 1
        assert_eq!(sf.get(0, 0), 1.0);
        assert_eq!(sf.get(1, 0), 1.0);
        assert_eq!(sf.get(2, 0), 0.5);
        // alice: mean watch 0.6, mean grade 0.9 -> Normal
        assert_eq!(sf.get(0, STUDENT_NUMERIC_DIMS + 1), 1.0);
        // carol: watch 0.5, grade 0 -> PotentialAtRisk
        assert_eq!(sf.get(2, STUDENT_NUMERIC_DIMS + 2), 1.0);
        // video durations normalized by the longest
        assert_eq!(g.table(NodeType::Video).features.data(), &[0.5, 1.0, 0.25]);
        assert_eq!(built.report.supervision_edges, 4);
        assert_eq!(built.report.positive_labels, 2);
    }

    #[test]
    fn assembly_is_order_independent() {
        let events = fixture_events();
        let mut reversed = events.clone();
        reversed.reverse();
        let a = assemble_hkg(&events, &Catalog::default(), &GraphConfig::default()).unwrap();
        let b = assemble_hkg(&reversed, &Catalog::default(), &GraphConfig::default()).unwrap();
        assert!(a.hkg.bit_identical(&b.hkg));
    }

    #[test]
    fn catalog_links_and_adds_content() {
        let catalog = Catalog {
            content: vec![
                CatalogEntry {
                    id: "v3".into(),
                    kind: ContentKind::Video,
                    page: Some("p1".into()),
                    duration_s: None,
                },
                CatalogEntry {
                    id: "a9".into(),
                    kind: ContentKind::Assessment,
                    page: Some("p1".into()),
                    duration_s: None,
                },
            ],
        };
        let g = assemble_hkg(&fixture_events(), &catalog, &GraphConfig::default())
            .unwrap()
            .hkg;
        assert_eq!(g.coverage, Coverage { linked: 5, total: 5 });
        // p1 now has two assessments; alice's mean is 0.45 -> fail
        assert_eq!(g.labels()[0], 0);
        // alice now also touches p1 through v3, still a single supervision edge
        assert_eq!(g.supervision().len(), 4);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            assemble_hkg(&[], &Catalog::default(), &GraphConfig::default()),
            Err(GraphError::EmptyGraph)
        ));
        // content with no page at all gives zero pages and no labels
        let evs = [video("u", "v", None, EventType::VideoPlay, 0.0, Some(1.0), 0)];
        assert!(matches!(
            assemble_hkg(&evs, &Catalog::default(), &GraphConfig::default()),
            Err(GraphError::EmptyGraph)
        ));
    }

    #[test]
    fn video_and_assessment_share_page() {
        let evs = [
            video("u", "v1", Some("p1"), EventType::VideoPlay, 0.0, Some(1.0), 0),
            submit("u", "a1", Some("p1"), 1.0, 1.0, 1, 1),
        ];
        let g = assemble_hkg(&evs, &Catalog::default(), &GraphConfig::default()).unwrap().hkg;
        assert_eq!(g.count(NodeType::Page), 1);
        assert_eq!(g.edges(Relation::VideoOnPage).len() + g.edges(Relation::AssessmentOnPage).len(), 2);
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let g = assemble_hkg(&fixture_events(), &Catalog::default(), &GraphConfig::default())
            .unwrap()
            .hkg;
        let bytes = g.to_bytes();
        let back = Hkg::from_bytes(&bytes).unwrap();
        assert!(back.bit_identical(&g));
        assert_eq!(back.to_bytes(), bytes);
        assert!(Hkg::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let json = g.to_json();
        assert_eq!(json["nodes"]["page"]["ids"][1], "p2");
    }

    #[test]
    fn message_graph_reverses_edges() {
        let g = assemble_hkg(&fixture_events(), &Catalog::default(), &GraphConfig::default())
            .unwrap()
            .hkg;
        let mg = MessageGraph::from_hkg(&g, true);
        // v2 is watched by bob (0.95) and carol (0.5)
        let (src, w) = mg.relation(MessageRelation::StudentToVideo).in_edges(1);
        assert_eq!(src, [1, 2]);
        assert_eq!(w, [0.95, 0.5]);
        // alice receives v1 and v3
        let (src, _) = mg.relation(MessageRelation::VideoToStudent).in_edges(0);
        assert_eq!(src, [0, 2]);
        // final grade weights on assessment edges
        let (_, w) = mg.relation(MessageRelation::AssessmentToStudent).in_edges(1);
        assert_eq!(w, [0.5]);
        let unweighted = MessageGraph::from_hkg(&g, false);
        assert_eq!(unweighted.relation(MessageRelation::StudentToVideo).in_edges(1).1, [1.0, 1.0]);
        for rel in MessageRelation::ALL {
            assert_eq!(mg.relation(rel).edge_count(), g.edges(rel.base()).len());
        }
    }
}
