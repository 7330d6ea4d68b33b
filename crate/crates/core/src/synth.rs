//! Synthetic course and learner generator.
//!
//! Each student has a latent skill `s` and diligence `d`, both uniform on
//! `[0, 1]`. Students visit pages with probability rising in `d`, watch
//! every video on a visited page to a fraction near `d`, and submit every
//! assessment with a final grade near `s` minus a per-page difficulty. The
//! resulting click events go through the real graph builder, so page labels
//! are always produced by the pass rule and never assigned directly.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    Built, Catalog, CatalogEntry, ContentKind, GraphBuilder, GraphConfig, GraphError, NodeType,
};
use crate::ingest::{
    AssessmentPayload, ClickEvent, EventType, Payload, Source, Timestamp, VideoPayload,
};
use crate::tensor::RngStream;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    #[default]
    Planted,
    /// Labels are permuted uniformly after the graph is built.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Campus,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub students: usize,
    pub videos: usize,
    pub ungraded: usize,
    pub coding: usize,
    pub graded: usize,
    pub chapters: usize,
    /// The first page of each chapter holds only videos.
    pub pages_per_chapter: usize,
    pub sigma: f64,
    /// Page visit probability is `visit_base + visit_diligence * d`.
    pub visit_base: f64,
    pub visit_diligence: f64,
    /// Page difficulty offsets are uniform on `±difficulty`.
    pub difficulty: f64,
    pub signal: Signal,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::preset(Preset::Campus, 0)
    }
}

/// Course start, Monday 2021-01-11 00:00 UTC.
const COURSE_START_MS: i64 = 1_610_323_200_000;
const MIN: i64 = 60_000;
const HOUR: i64 = 60 * MIN;

impl SynthConfig {
    pub fn preset(p: Preset, seed: u64) -> Self {
        Self {
            students: match p {
                Preset::Campus => 2000,
                Preset::Online => 20_000,
            },
            videos: 442,
            ungraded: 216,
            coding: 235,
            graded: 295,
            chapters: 20,
            pages_per_chapter: 3,
            sigma: 0.15,
            visit_base: 0.05,
            visit_diligence: 0.25,
            difficulty: 0.1,
            signal: Signal::Planted,
            seed,
        }
    }

    pub fn assessments(&self) -> usize {
        self.ungraded + self.coding + self.graded
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.chapters == 0 || self.pages_per_chapter == 0 {
            return bad("chapters and pages_per_chapter must be >= 1".into());
        }
        if self.pages_per_chapter < 2 && self.assessments() > 0 {
            return bad("assessments need at least 2 pages per chapter".into());
        }
        for (name, p) in [("visit_base", self.visit_base), ("visit_diligence", self.visit_diligence)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return bad(format!("difficulty must lie in [0, 1], got {}", self.difficulty));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentStudent {
    pub skill: f64,
    pub diligence: f64,
}

#[derive(Debug, Clone)]
struct SynthVideo {
    id: String,
    duration_s: f64,
}

#[derive(Debug, Clone)]
struct SynthAssessment {
    id: String,
    max_grade: f64,
}

#[derive(Debug, Clone, Default)]
struct SynthPage {
    id: String,
    videos: Vec<SynthVideo>,
    assessments: Vec<SynthAssessment>,
    difficulty: f64,
}

/// Pages in course order.
#[derive(Debug, Clone)]
struct Course {
    pages: Vec<SynthPage>,
}

/// Splits `n` items into `k` contiguous blocks whose sizes differ by at
/// most one; returns the block of item `i`.
fn block_of(i: usize, n: usize, k: usize) -> usize {
    (i * k) / n.max(1)
}

impl Course {
    fn layout(cfg: &SynthConfig, rng: &mut RngStream) -> Course {
        let ppc = cfg.pages_per_chapter;
        let mut pages: Vec<SynthPage> = (0..cfg.chapters * ppc)
            .map(|i| SynthPage {
                id: format!("ch{:02}-p{}", i / ppc, i % ppc),
                difficulty: rng.random_range(-cfg.difficulty..=cfg.difficulty),
                ..SynthPage::default()
            })
            .collect();

        // videos: contiguous per chapter, then spread over the chapter's pages
        let mut per_chapter = vec![Vec::new(); cfg.chapters];
        for v in 0..cfg.videos {
            per_chapter[block_of(v, cfg.videos, cfg.chapters)].push(v);
        }
        for (c, vids) in per_chapter.iter().enumerate() {
            for (k, &v) in vids.iter().enumerate() {
                let p = c * ppc + block_of(k, vids.len(), ppc);
                pages[p].videos.push(SynthVideo {
                    id: format!("v{v:04}"),
                    duration_s: rng.random_range(60..=900) as f64,
                });
            }
        }

        // assessments: each kind spread over chapters, then over pages 1..
        let kinds = [("ug", cfg.ungraded, 1.0), ("cd", cfg.coding, 10.0), ("gr", cfg.graded, 5.0)];
        for (prefix, n, max_grade) in kinds {
            let mut per_chapter = vec![Vec::new(); cfg.chapters];
            for a in 0..n {
                per_chapter[block_of(a, n, cfg.chapters)].push(a);
            }
            for (c, items) in per_chapter.iter().enumerate() {
                for (k, &a) in items.iter().enumerate() {
                    let p = c * ppc + 1 + k % (ppc - 1);
                    pages[p].assessments.push(SynthAssessment {
                        id: format!("{prefix}{a:04}"),
                        max_grade,
                    });
                }
            }
        }
        Course { pages }
    }

    fn catalog(&self) -> Catalog {
        let mut content = Vec::new();
        for p in &self.pages {
            for v in &p.videos {
                content.push(CatalogEntry {
                    id: v.id.clone(),
                    kind: ContentKind::Video,
                    page: Some(p.id.clone()),
                    duration_s: Some(v.duration_s),
                });
            }
            for a in &p.assessments {
                content.push(CatalogEntry {
                    id: a.id.clone(),
                    kind: ContentKind::Assessment,
                    page: Some(p.id.clone()),
                    duration_s: None,
                });
            }
        }
        Catalog { content }
    }
}

fn user_id(i: usize) -> String {
    format!("u{i:06}")
}

/// One student's kept events in time order.
fn student_events(
    cfg: &SynthConfig,
    course: &Course,
    index: usize,
    rng: &mut RngStream,
) -> (LatentStudent, Vec<ClickEvent>) {
    let latent = LatentStudent {
        skill: rng.random::<f64>(),
        diligence: rng.random::<f64>(),
    };
    let noise = Normal::new(0.0, cfg.sigma).expect("sigma validated");
    let retries = Geometric::new(0.6).expect("valid p");
    let p_visit = (cfg.visit_base + cfg.visit_diligence * latent.diligence).clamp(0.0, 1.0);
    let user = user_id(index);

    let mut t = COURSE_START_MS + rng.random_range(0..72 * HOUR);
    let mut events = Vec::new();
    let push = |events: &mut Vec<ClickEvent>, t: i64, ty: EventType, page: &str, id: &str, payload: Payload| {
        events.push(ClickEvent {
            user_id: user.clone(),
            event_type: ty,
            page_id: Some(page.to_string()),
            content_id: Some(id.to_string()),
            timestamp: Timestamp(t),
            source: Source::Browser,
            payload,
        });
    };

    for page in &course.pages {
        if !rng.random_bool(p_visit) {
            continue;
        }
        t += rng.random_range(10 * MIN..72 * HOUR);
        for v in &page.videos {
            let w = (latent.diligence + noise.sample(rng)).clamp(0.0, 1.0);
            let video = |pos: f64| {
                Payload::Video(VideoPayload {
                    video_id: v.id.clone(),
                    position_s: pos,
                    duration_s: Some(v.duration_s),
                })
            };
            t += rng.random_range(5_000..60_000);
            push(&mut events, t, EventType::VideoPlay, &page.id, &v.id, video(0.0));
            let end = w * v.duration_s;
            if rng.random_bool(0.3) {
                t += rng.random_range(5_000..60_000);
                let to = rng.random_range(0.0..=1.0) * end;
                push(&mut events, t, EventType::VideoSeek, &page.id, &v.id, video(to));
            }
            t += (end * 1000.0) as i64 + 1_000;
            let ty = if w >= 1.0 {
                EventType::VideoStop
            } else {
                EventType::VideoPause
            };
            push(&mut events, t, ty, &page.id, &v.id, video(end));
        }
        for a in &page.assessments {
            let final_frac =
                (latent.skill - page.difficulty + noise.sample(rng)).clamp(0.0, 1.0);
            let attempts = 1 + retries.sample(rng).min(4) as u32;
            let first_frac = if attempts > 1 {
                final_frac * rng.random_range(0.4..=1.0)
            } else {
                final_frac
            };
            for k in 1..=attempts {
                let frac = if attempts == 1 {
                    final_frac
                } else {
                    first_frac + (final_frac - first_frac) * (k - 1) as f64 / (attempts - 1) as f64
                };
                t += rng.random_range(30_000..600_000);
                push(
                    &mut events,
                    t,
                    EventType::ProblemSubmit,
                    &page.id,
                    &a.id,
                    Payload::Assessment(AssessmentPayload {
                        assessment_id: a.id.clone(),
                        grade: frac * a.max_grade,
                        max_grade: a.max_grade,
                        attempt: k,
                    }),
                );
            }
        }
    }
    (latent, events)
}

/// Records that ingestion must drop: mobile copies of kept events and
/// browser events of unsupported types.
fn distractors(events: &[ClickEvent], rng: &mut RngStream) -> Vec<ClickEvent> {
    let mut out = Vec::new();
    for e in events {
        if rng.random_bool(0.05) {
            out.push(ClickEvent {
                source: Source::Mobile,
                ..e.clone()
            });
        }
        if rng.random_bool(0.05) {
            out.push(ClickEvent {
                event_type: EventType::Other,
                payload: Payload::None,
                timestamp: Timestamp(e.timestamp.0 + 1),
                ..e.clone()
            });
        }
    }
    out
}

const STREAM_COURSE: u64 = 1;
const STREAM_STUDENTS: u64 = 2;
const STREAM_LABELS: u64 = 3;
const STREAM_DISTRACTORS: u64 = 4;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub built: Built,
    pub catalog: Catalog,
    /// Latent variables by user id, for students with at least one event.
    pub latents: Vec<(String, LatentStudent)>,
}

/// Generates the course, its students and the graph.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let course = Course::layout(cfg, &mut root.derive(STREAM_COURSE));
    let catalog = course.catalog();
    let students = root.derive(STREAM_STUDENTS);
    let mut builder = GraphBuilder::new(catalog.clone(), GraphConfig::default());
    let mut latents = Vec::new();
    for i in 0..cfg.students {
        let (latent, events) = student_events(cfg, &course, i, &mut students.derive(i as u64));
        if events.is_empty() {
            continue;
        }
        builder.add_user(&events)?;
        latents.push((user_id(i), latent));
    }
    let mut built = builder.finish()?;
    if cfg.signal == Signal::Shuffled {
        let mut labels = built.hkg.labels().to_vec();
        labels.shuffle(&mut root.derive(STREAM_LABELS));
        built.hkg.set_labels(labels)?;
    }
    Ok(SynthOutput {
        built,
        catalog,
        latents,
    })
}

/// Writes newline-delimited log records for `cfg` and returns the catalog.
/// Ingesting the log and building a graph over it with the catalog
/// reproduces [`generate`] exactly in planted mode.
pub fn write_event_log(cfg: &SynthConfig, out: &mut impl Write) -> io::Result<Catalog> {
    cfg.validate()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let root = RngStream::new(cfg.seed);
    let course = Course::layout(cfg, &mut root.derive(STREAM_COURSE));
    let students = root.derive(STREAM_STUDENTS);
    let noise = root.derive(STREAM_DISTRACTORS);
    for i in 0..cfg.students {
        let (_, mut events) = student_events(cfg, &course, i, &mut students.derive(i as u64));
        let extra = distractors(&events, &mut noise.derive(i as u64));
        events.extend(extra);
        events.sort_by_key(|e| e.timestamp);
        for e in &events {
            writeln!(out, "{}", e.to_json_line())?;
        }
    }
    Ok(course.catalog())
}

/// In-memory form of [`write_event_log`].
pub fn emit_event_log(cfg: &SynthConfig) -> Result<(String, Catalog), SynthError> {
    let mut buf = Vec::new();
    let catalog = write_event_log(cfg, &mut buf).map_err(|e| SynthError::Config(e.to_string()))?;
    Ok((String::from_utf8(buf).expect("log lines are UTF-8"), catalog))
}

/// Pearson correlation between each supervision label and the skill of
/// its student (point-biserial).
pub fn label_skill_correlation(out: &SynthOutput) -> Option<f64> {
    let hkg = &out.built.hkg;
    let ids = &hkg.table(NodeType::Student).ids;
    let mut skill = vec![f64::NAN; ids.len()];
    for (id, l) in &out.latents {
        if let Ok(i) = ids.binary_search(id) {
            skill[i] = l.skill;
        }
    }
    let sup = hkg.supervision();
    let xs: Vec<f64> = sup.src.iter().map(|&s| skill[s]).collect();
    let ys: Vec<f64> = hkg.labels().iter().map(|&y| y as f64).collect();
    pearson(&xs, &ys)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
