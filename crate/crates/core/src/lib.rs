//! Clickstream logs to a heterogeneous knowledge graph of students, videos,
//! assessments and pages, and a two-layer heterogeneous GraphSAGE link
//! classifier predicting whether a student passes each page.

pub mod codec;
pub mod config;
pub mod engage;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod report;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod train;

pub use config::RunConfig;
pub use engage::{EngagementLevel, EngagementThresholds};
pub use graph::{
    assemble_hkg, page_pass_label, Catalog, GraphBuilder, GraphConfig, GraphError, Hkg,
    MessageGraph, MessageRelation, NodeType, PageContent, Relation,
};
pub use ingest::{ClickEvent, EventType, IngestError, ParseError};
pub use model::{HeteroSageModel, ModelConfig, ModelError, Subgraph};
pub use report::{compare, write_report, ReportError, Summary};
pub use split::{random_link_split, sample_link_batch, LinkBatch, LinkSplit, SplitConfig, SplitError};
pub use synth::{emit_event_log, generate, Preset, Signal, SynthConfig, SynthError};
pub use tensor::{Matrix, Parameter, RngStream, TensorError};
pub use train::{
    bce_with_logits, evaluate_auc, run_repeated, train_model, RunMetrics, TrainConfig, TrainError,
};
