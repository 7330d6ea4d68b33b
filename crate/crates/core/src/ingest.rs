//! Clickstream log parsing, filtering, sessionization and per-student
//! summary statistics.
//!
//! Input is newline-delimited JSON, one event per line:
//!
//! ```text
//! {"username":"u1","event_type":"play_video","time":"2021-01-11T10:00:00.000Z",
//!  "page":"https://courses.example/p1","agent":"Mozilla/5.0",
//!  "event":{"id":"v1","currentTime":0.0,"duration":120.0}}
//! ```
//!
//! `event` may also be a JSON-encoded string holding the same object.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};

/// Default sessionization gap.
pub const DEFAULT_SESSION_GAP_MS: i64 = 30 * 60 * 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("invalid json: {0}")]
    Json(String),
    #[error("record is not a json object")]
    NotAnObject,
    #[error("missing or invalid field `{0}`")]
    Field(&'static str),
    #[error("empty user id")]
    EmptyUser,
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
    #[error("invalid payload: {0}")]
    Payload(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("events are not sorted by timestamp at position {0}")]
    UnsortedInput(usize),
    #[error("events belong to more than one user")]
    MixedUsers,
    #[error("no events for user")]
    EmptyInput,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no log files found in {0}")]
    NoLogs(PathBuf),
    #[error("event container: {0}")]
    Codec(#[from] CodecError),
}

/// UTC instant with millisecond precision, stored as milliseconds since the
/// Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self, ParseError> {
        let bad = || ParseError::Timestamp(s.to_string());
        let dt = match DateTime::parse_from_rfc3339(s) {
            Ok(dt) => dt.with_timezone(&Utc),
            Err(_) => DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f%:z")
                .map(|d| d.with_timezone(&Utc))
                .or_else(|_| {
                    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc())
                })
                .map_err(|_| bad())?,
        };
        Ok(Timestamp(dt.timestamp_millis()))
    }

    pub fn to_rfc3339(self) -> String {
        match DateTime::<Utc>::from_timestamp_millis(self.0) {
            Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
            None => format!("{}ms", self.0),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventType {
    VideoPlay,
    VideoPause,
    VideoSeek,
    VideoStop,
    ProblemSubmit,
    Other,
}

impl EventType {
    pub const KEPT: [EventType; 5] = [
        EventType::VideoPlay,
        EventType::VideoPause,
        EventType::VideoSeek,
        EventType::VideoStop,
        EventType::ProblemSubmit,
    ];

    pub fn from_log_name(name: &str) -> Self {
        match name {
            "play_video" | "edx.video.played" => EventType::VideoPlay,
            "pause_video" | "edx.video.paused" => EventType::VideoPause,
            "seek_video" | "edx.video.position.changed" => EventType::VideoSeek,
            "stop_video" | "edx.video.stopped" => EventType::VideoStop,
            "problem_check" | "edx.problem.submitted" => EventType::ProblemSubmit,
            _ => EventType::Other,
        }
    }

    pub fn log_name(self) -> &'static str {
        match self {
            EventType::VideoPlay => "play_video",
            EventType::VideoPause => "pause_video",
            EventType::VideoSeek => "seek_video",
            EventType::VideoStop => "stop_video",
            EventType::ProblemSubmit => "problem_check",
            EventType::Other => "other",
        }
    }

    pub fn is_video(self) -> bool {
        matches!(
            self,
            EventType::VideoPlay | EventType::VideoPause | EventType::VideoSeek | EventType::VideoStop
        )
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => EventType::VideoPlay,
            1 => EventType::VideoPause,
            2 => EventType::VideoSeek,
            3 => EventType::VideoStop,
            4 => EventType::ProblemSubmit,
            5 => EventType::Other,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Browser,
    Mobile,
    Server,
}

impl Source {
    const BROWSER_AGENT: &'static str = "Mozilla/5.0 (X11; Linux x86_64)";
    const MOBILE_AGENT: &'static str = "edX/org.edx.mobile/2.26.1";
    const SERVER_AGENT: &'static str = "python-requests/2.25";

    /// Classifies from the user agent, falling back to the optional
    /// `event_source` field.
    pub fn classify(agent: Option<&str>, event_source: Option<&str>) -> Self {
        let agent = agent.unwrap_or("");
        let lower = agent.to_ascii_lowercase();
        if lower.contains("org.edx.mobile") || lower.starts_with("edx/") || lower.contains("okhttp")
        {
            return Source::Mobile;
        }
        match event_source {
            Some("mobile") => Source::Mobile,
            Some("server") => Source::Server,
            _ if agent.is_empty() && event_source.is_none() => Source::Server,
            _ => Source::Browser,
        }
    }

    fn canonical(self) -> (&'static str, &'static str) {
        match self {
            Source::Browser => (Self::BROWSER_AGENT, "browser"),
            Source::Mobile => (Self::MOBILE_AGENT, "mobile"),
            Source::Server => (Self::SERVER_AGENT, "server"),
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Source::Browser,
            1 => Source::Mobile,
            2 => Source::Server,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoPayload {
    pub video_id: String,
    pub position_s: f64,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentPayload {
    pub assessment_id: String,
    pub grade: f64,
    pub max_grade: f64,
    pub attempt: u32,
}

impl AssessmentPayload {
    /// Grade as a fraction of the maximum, in `[0, 1]`.
    pub fn fraction(&self) -> f64 {
        (self.grade / self.max_grade).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Video(VideoPayload),
    Assessment(AssessmentPayload),
    None,
}

/// One parsed log record.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickEvent {
    pub user_id: String,
    pub event_type: EventType,
    pub page_id: Option<String>,
    pub content_id: Option<String>,
    pub timestamp: Timestamp,
    pub source: Source,
    pub payload: Payload,
}

impl ClickEvent {
    /// Serializes to the canonical log schema. Parsing the result yields an
    /// identical event.
    pub fn to_json_line(&self) -> String {
        let (agent, event_source) = self.source.canonical();
        let event = match &self.payload {
            Payload::Video(v) => {
                let mut m = Map::new();
                m.insert("id".into(), json!(v.video_id));
                m.insert("currentTime".into(), json!(v.position_s));
                if let Some(d) = v.duration_s {
                    m.insert("duration".into(), json!(d));
                }
                Value::Object(m)
            }
            Payload::Assessment(a) => json!({
                "id": a.assessment_id,
                "grade": a.grade,
                "max_grade": a.max_grade,
                "attempts": a.attempt,
            }),
            Payload::None => match &self.content_id {
                Some(id) => json!({ "id": id }),
                None => json!({}),
            },
        };
        let mut m = Map::new();
        m.insert("username".into(), json!(self.user_id));
        m.insert("event_type".into(), json!(self.event_type.log_name()));
        m.insert("event".into(), event);
        if let Some(p) = &self.page_id {
            m.insert("page".into(), json!(p));
        }
        m.insert("time".into(), json!(self.timestamp.to_rfc3339()));
        m.insert("agent".into(), json!(agent));
        m.insert("event_source".into(), json!(event_source));
        Value::Object(m).to_string()
    }
}

fn field_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str)
}

fn field_f64(obj: &Map<String, Value>, key: &str) -> Option<f64> {
    match obj.get(key)? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses one log record.
pub fn parse_event_line(line: &str) -> Result<ClickEvent, ParseError> {
    let value: Value =
        serde_json::from_str(line.trim()).map_err(|e| ParseError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or(ParseError::NotAnObject)?;

    let user_id = field_str(obj, "username").ok_or(ParseError::Field("username"))?;
    if user_id.trim().is_empty() {
        return Err(ParseError::EmptyUser);
    }
    let name = field_str(obj, "event_type").ok_or(ParseError::Field("event_type"))?;
    let event_type = EventType::from_log_name(name);
    let time = field_str(obj, "time").ok_or(ParseError::Field("time"))?;
    let timestamp = Timestamp::parse(time)?;
    let page_id = field_str(obj, "page")
        .filter(|p| !p.is_empty())
        .map(str::to_string);
    let source = Source::classify(field_str(obj, "agent"), field_str(obj, "event_source"));

    // browser events carry `event` as a JSON-encoded string
    let decoded;
    let event = match obj.get("event") {
        Some(Value::Object(m)) => Some(m),
        Some(Value::String(s)) if !s.is_empty() => {
            decoded = serde_json::from_str::<Value>(s).ok();
            decoded.as_ref().and_then(Value::as_object)
        }
        _ => None,
    };
    let content = event.and_then(|e| field_str(e, "id")).filter(|s| !s.is_empty());

    let payload = if event_type.is_video() {
        let e = event.ok_or(ParseError::Field("event"))?;
        let video_id = content.ok_or(ParseError::Field("event.id"))?;
        let position_s = field_f64(e, "currentTime")
            .or_else(|| field_f64(e, "new_time"))
            .ok_or(ParseError::Field("event.currentTime"))?;
        if !position_s.is_finite() || position_s < 0.0 {
            return Err(ParseError::Payload(format!("position {position_s}")));
        }
        let duration_s = field_f64(e, "duration").filter(|d| d.is_finite() && *d > 0.0);
        Payload::Video(VideoPayload {
            video_id: video_id.to_string(),
            position_s,
            duration_s,
        })
    } else if event_type == EventType::ProblemSubmit {
        let e = event.ok_or(ParseError::Field("event"))?;
        let assessment_id = content.ok_or(ParseError::Field("event.id"))?;
        let max_grade = field_f64(e, "max_grade").ok_or(ParseError::Field("event.max_grade"))?;
        if !max_grade.is_finite() || max_grade <= 0.0 {
            return Err(ParseError::Payload(format!("max_grade {max_grade}")));
        }
        let grade = field_f64(e, "grade").ok_or(ParseError::Field("event.grade"))?;
        if !grade.is_finite() {
            return Err(ParseError::Payload(format!("grade {grade}")));
        }
        let attempt = field_f64(e, "attempts").unwrap_or(1.0);
        if !attempt.is_finite() || attempt < 1.0 || attempt.fract() != 0.0 {
            return Err(ParseError::Payload(format!("attempts {attempt}")));
        }
        Payload::Assessment(AssessmentPayload {
            assessment_id: assessment_id.to_string(),
            grade: grade.clamp(0.0, max_grade),
            max_grade,
            attempt: attempt as u32,
        })
    } else {
        Payload::None
    };

    Ok(ClickEvent {
        user_id: user_id.to_string(),
        event_type,
        page_id,
        content_id: content.map(str::to_string),
        timestamp,
        source,
        payload,
    })
}

/// Keeps browser-originated video interactions and assessment submissions,
/// preserving order.
pub fn filter_events(events: Vec<ClickEvent>) -> Vec<ClickEvent> {
    events.into_iter().filter(is_kept).collect()
}

pub fn is_kept(e: &ClickEvent) -> bool {
    e.source == Source::Browser && e.event_type != EventType::Other
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub event_count: usize,
}

/// Splits one user's time-sorted events into sessions, starting a new
/// session whenever the gap to the previous event exceeds `gap_ms`.
pub fn sessionize(events: &[ClickEvent], gap_ms: i64) -> Result<Vec<Session>, IngestError> {
    let mut sessions: Vec<Session> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match sessions.last_mut() {
            Some(cur) => {
                if e.user_id != cur.user_id {
                    return Err(IngestError::MixedUsers);
                }
                if e.timestamp < cur.end {
                    return Err(IngestError::UnsortedInput(i));
                }
                if e.timestamp.0 - cur.end.0 > gap_ms {
                    sessions.push(Session {
                        user_id: e.user_id.clone(),
                        start: e.timestamp,
                        end: e.timestamp,
                        event_count: 1,
                    });
                } else {
                    cur.end = e.timestamp;
                    cur.event_count += 1;
                }
            }
            None => sessions.push(Session {
                user_id: e.user_id.clone(),
                start: e.timestamp,
                end: e.timestamp,
                event_count: 1,
            }),
        }
    }
    Ok(sessions)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentStats {
    pub session_count: usize,
    pub event_counts: BTreeMap<EventType, u64>,
    pub first_access: Timestamp,
    pub last_access: Timestamp,
}

impl StudentStats {
    pub fn count(&self, t: EventType) -> u64 {
        self.event_counts.get(&t).copied().unwrap_or(0)
    }

    pub fn total_events(&self) -> u64 {
        self.event_counts.values().sum()
    }

    /// Whole days between first and last access.
    pub fn active_days(&self) -> f64 {
        (self.last_access.0 - self.first_access.0) as f64 / 86_400_000.0
    }
}

pub fn aggregate_user_stats(
    events: &[ClickEvent],
    sessions: &[Session],
) -> Result<StudentStats, IngestError> {
    let first = events.first().ok_or(IngestError::EmptyInput)?;
    let mut event_counts = BTreeMap::new();
    let mut first_access = first.timestamp;
    let mut last_access = first.timestamp;
    for e in events {
        if e.user_id != first.user_id {
            return Err(IngestError::MixedUsers);
        }
        *event_counts.entry(e.event_type).or_insert(0) += 1;
        first_access = first_access.min(e.timestamp);
        last_access = last_access.max(e.timestamp);
    }
    Ok(StudentStats {
        session_count: sessions.len().max(1),
        event_counts,
        first_access,
        last_access,
    })
}

/// Stable sort by `(user_id, timestamp)`; ties keep input order.
pub fn sort_events(events: &mut [ClickEvent]) {
    events.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
}

/// Iterates contiguous per-user runs of a sorted event slice.
pub fn user_runs(events: &[ClickEvent]) -> impl Iterator<Item = &[ClickEvent]> {
    events.chunk_by(|a, b| a.user_id == b.user_id)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub parsed: usize,
    pub skipped: usize,
    pub kept_after_filter: usize,
    pub users: usize,
    pub sessions: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    /// Filtered events sorted by `(user_id, timestamp, input order)`.
    pub events: Vec<ClickEvent>,
    pub report: IngestReport,
    pub gap_ms: i64,
}

/// Parses, filters and sorts a set of log texts, in the order given.
pub fn ingest_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    gap_ms: i64,
) -> Result<IngestOutput, IngestError> {
    let mut report = IngestReport::default();
    let mut events = Vec::new();
    for text in texts {
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_event_line(line) {
                Ok(e) => {
                    report.parsed += 1;
                    if is_kept(&e) {
                        events.push(e);
                    }
                }
                Err(_) => report.skipped += 1,
            }
        }
    }
    sort_events(&mut events);
    report.kept_after_filter = events.len();
    for run in user_runs(&events) {
        report.users += 1;
        report.sessions += sessionize(run, gap_ms)?.len();
    }
    Ok(IngestOutput {
        events,
        report,
        gap_ms,
    })
}

/// Ingests every regular file in `dir` (sorted by file name).
pub fn ingest_dir(dir: &Path, gap_ms: i64) -> Result<IngestOutput, IngestError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IngestError::Io { path, source }
    };
    let mut files: BTreeSet<PathBuf> = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        if entry.file_type().map_err(io(dir))?.is_file() {
            files.insert(entry.path());
        }
    }
    if files.is_empty() {
        return Err(IngestError::NoLogs(dir.to_path_buf()));
    }
    let texts = files
        .iter()
        .map(|p| std::fs::read_to_string(p).map_err(io(p)))
        .collect::<Result<Vec<_>, _>>()?;
    ingest_texts(texts.iter().map(String::as_str), gap_ms)
}

const EVENTS_MAGIC: &[u8; 8] = b"HKGEVNTS";
const EVENTS_VERSION: u64 = 1;

/// Encodes the sorted event list as an `events.bin` container.
pub fn encode_events(events: &[ClickEvent], gap_ms: i64) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.magic(EVENTS_MAGIC);
    w.u64(EVENTS_VERSION);
    w.i64(gap_ms);
    w.usize(events.len());
    for e in events {
        w.str(&e.user_id);
        w.u8(e.event_type.code());
        w.u8(e.source.code());
        w.opt_str(e.page_id.as_deref());
        w.opt_str(e.content_id.as_deref());
        w.i64(e.timestamp.0);
        match &e.payload {
            Payload::None => w.u8(0),
            Payload::Video(v) => {
                w.u8(1);
                w.str(&v.video_id);
                w.f64(v.position_s);
                w.opt_f64(v.duration_s);
            }
            Payload::Assessment(a) => {
                w.u8(2);
                w.str(&a.assessment_id);
                w.f64(a.grade);
                w.f64(a.max_grade);
                w.u64(a.attempt as u64);
            }
        }
    }
    w.finish()
}

/// Decodes an `events.bin` container, returning the events and session gap.
pub fn decode_events(bytes: &[u8]) -> Result<(Vec<ClickEvent>, i64), CodecError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(EVENTS_MAGIC)?;
    r.expect_version(EVENTS_VERSION)?;
    let gap_ms = r.i64()?;
    let n = r.len(16)?;
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let user_id = r.str()?;
        let event_type = EventType::from_code(r.u8()?)
            .ok_or_else(|| CodecError::Invalid("event type".into()))?;
        let source =
            Source::from_code(r.u8()?).ok_or_else(|| CodecError::Invalid("source".into()))?;
        let page_id = r.opt_str()?;
        let content_id = r.opt_str()?;
        let timestamp = Timestamp(r.i64()?);
        let payload = match r.u8()? {
            0 => Payload::None,
            1 => Payload::Video(VideoPayload {
                video_id: r.str()?,
                position_s: r.f64()?,
                duration_s: r.opt_f64()?,
            }),
            2 => Payload::Assessment(AssessmentPayload {
                assessment_id: r.str()?,
                grade: r.f64()?,
                max_grade: r.f64()?,
                attempt: u32::try_from(r.u64()?)
                    .map_err(|_| CodecError::Invalid("attempt".into()))?,
            }),
            t => return Err(CodecError::Invalid(format!("payload tag {t}"))),
        };
        events.push(ClickEvent {
            user_id,
            event_type,
            page_id,
            content_id,
            timestamp,
            source,
            payload,
        });
    }
    r.finish()?;
    Ok((events, gap_ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PLAY: &str = r#"{"username":"alice","event_type":"play_video","time":"2021-01-11T10:00:00.000Z","page":"p1","agent":"Mozilla/5.0","event":{"id":"v1","currentTime":0.0,"duration":60.0}}"#;

    fn ev(user: &str, t: EventType, minute: i64, source: Source) -> ClickEvent {
        let payload = if t.is_video() {
            Payload::Video(VideoPayload {
                video_id: "v".into(),
                position_s: 1.0,
                duration_s: Some(10.0),
            })
        } else if t == EventType::ProblemSubmit {
            Payload::Assessment(AssessmentPayload {
                assessment_id: "a".into(),
                grade: 1.0,
                max_grade: 2.0,
                attempt: 1,
            })
        } else {
            Payload::None
        };
        ClickEvent {
            user_id: user.into(),
            event_type: t,
            page_id: None,
            content_id: None,
            timestamp: Timestamp(minute * 60_000),
            source,
            payload,
        }
    }

    #[test]
    fn parses_video_play() {
        let e = parse_event_line(PLAY).unwrap();
        assert_eq!(e.event_type, EventType::VideoPlay);
        assert_eq!(e.source, Source::Browser);
        assert_eq!(e.page_id.as_deref(), Some("p1"));
        assert_eq!(e.content_id.as_deref(), Some("v1"));
        match e.payload {
            Payload::Video(v) => {
                assert_eq!(v.position_s, 0.0);
                assert_eq!(v.duration_s, Some(60.0));
            }
            other => panic!("unexpected payload {other:?}"),
        }
        assert_eq!(e.timestamp.to_rfc3339(), "2021-01-11T10:00:00.000Z");
    }

    #[test]
    fn mobile_agent_is_classified() {
        let line = PLAY.replace("Mozilla/5.0", "edX/org.edx.mobile/2.24 (Android)");
        assert_eq!(parse_event_line(&line).unwrap().source, Source::Mobile);
    }

    #[test]
    fn truncated_line_is_error() {
        assert!(matches!(
            parse_event_line(&PLAY[..PLAY.len() / 2]),
            Err(ParseError::Json(_))
        ));
    }

    #[test]
    fn malformed_fields_are_errors() {
        let no_user = PLAY.replace("\"alice\"", "\"\"");
        assert_eq!(parse_event_line(&no_user), Err(ParseError::EmptyUser));
        let bad_time = PLAY.replace("2021-01-11T10:00:00.000Z", "yesterday");
        assert!(matches!(
            parse_event_line(&bad_time),
            Err(ParseError::Timestamp(_))
        ));
        let no_payload = PLAY.replace(r#""event":{"id":"v1","currentTime":0.0,"duration":60.0}"#, r#""event":{}"#);
        assert!(parse_event_line(&no_payload).is_err());
        assert_eq!(parse_event_line("[1,2]"), Err(ParseError::NotAnObject));
    }

    #[test]
    fn unknown_events_map_to_other_and_string_payloads_decode() {
        let line = r#"{"username":"bob","event_type":"seq_goto","time":"2021-01-11 10:00:00.5+00:00","agent":"Mozilla"}"#;
        let e = parse_event_line(line).unwrap();
        assert_eq!(e.event_type, EventType::Other);
        assert_eq!(e.timestamp.to_rfc3339(), "2021-01-11T10:00:00.500Z");

        let line = r#"{"username":"bob","event_type":"problem_check","time":"2021-01-11T10:00:00Z","agent":"Mozilla","event":"{\"id\":\"a1\",\"grade\":12,\"max_grade\":10,\"attempts\":2}"}"#;
        match parse_event_line(line).unwrap().payload {
            Payload::Assessment(a) => {
                assert_eq!(a.grade, 10.0, "grade clamps to max");
                assert_eq!(a.attempt, 2);
            }
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn filter_cases() {
        let kept = filter_events(vec![ev("u", EventType::ProblemSubmit, 0, Source::Browser)]);
        assert_eq!(kept.len(), 1);
        let dropped = filter_events(vec![
            ev("u", EventType::Other, 0, Source::Browser),
            ev("u", EventType::VideoPlay, 1, Source::Mobile),
        ]);
        assert!(dropped.is_empty());
        assert!(filter_events(vec![]).is_empty());
    }

    #[test]
    fn sessionize_cases() {
        let two_close = [
            ev("u", EventType::VideoPlay, 0, Source::Browser),
            ev("u", EventType::VideoPause, 10, Source::Browser),
        ];
        assert_eq!(sessionize(&two_close, DEFAULT_SESSION_GAP_MS).unwrap().len(), 1);
        let two_far = [
            ev("u", EventType::VideoPlay, 0, Source::Browser),
            ev("u", EventType::VideoPause, 31, Source::Browser),
        ];
        assert_eq!(sessionize(&two_far, DEFAULT_SESSION_GAP_MS).unwrap().len(), 2);
        let single = sessionize(&two_far[..1], DEFAULT_SESSION_GAP_MS).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].event_count, 1);

        let backwards = [two_far[1].clone(), two_far[0].clone()];
        assert!(matches!(
            sessionize(&backwards, DEFAULT_SESSION_GAP_MS),
            Err(IngestError::UnsortedInput(1))
        ));
    }

    #[test]
    fn stats_cases() {
        let events = [
            ev("u", EventType::VideoPlay, 0, Source::Browser),
            ev("u", EventType::VideoPlay, 5, Source::Browser),
            ev("u", EventType::ProblemSubmit, 60, Source::Browser),
        ];
        let sessions = sessionize(&events, DEFAULT_SESSION_GAP_MS).unwrap();
        let stats = aggregate_user_stats(&events, &sessions).unwrap();
        assert_eq!(stats.session_count, 2);
        assert_eq!(stats.total_events(), 3);
        assert_eq!(stats.count(EventType::VideoPlay), 2);
        assert_eq!(stats.count(EventType::ProblemSubmit), 1);
        assert_eq!(stats.event_counts.len(), 2);

        let one = aggregate_user_stats(&events[..1], &sessions[..1]).unwrap();
        assert_eq!(one.first_access, one.last_access);
        assert!(matches!(
            aggregate_user_stats(&[], &[]),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn ingest_counts_and_sorts() {
        let text = format!(
            "{}\n{}\nnot json\n\n{}\n",
            PLAY.replace("10:00:00", "11:00:00"),
            PLAY,
            PLAY.replace("Mozilla/5.0", "edX/org.edx.mobile")
        );
        let out = ingest_texts([text.as_str()], DEFAULT_SESSION_GAP_MS).unwrap();
        assert_eq!(
            out.report,
            IngestReport {
                parsed: 3,
                skipped: 1,
                kept_after_filter: 2,
                users: 1,
                sessions: 2
            }
        );
        assert!(out.events[0].timestamp < out.events[1].timestamp);
    }

    #[test]
    fn events_container_round_trips() {
        let events = vec![
            parse_event_line(PLAY).unwrap(),
            ev("z", EventType::ProblemSubmit, 3, Source::Browser),
        ];
        let bytes = encode_events(&events, 123);
        assert_eq!(decode_events(&bytes).unwrap(), (events, 123));
        assert!(decode_events(&bytes[..bytes.len() - 1]).is_err());
    }

    fn arb_event() -> impl Strategy<Value = ClickEvent> {
        let payload = prop_oneof![
            Just(Payload::None),
            ("[a-z0-9]{1,6}", 0.0f64..5000.0, proptest::option::of(1.0f64..5000.0)).prop_map(
                |(id, p, d)| Payload::Video(VideoPayload {
                    video_id: id,
                    position_s: p,
                    duration_s: d
                })
            ),
            ("[a-z0-9]{1,6}", 0.0f64..1.0, 0.5f64..100.0, 1u32..9).prop_map(|(id, g, m, a)| {
                Payload::Assessment(AssessmentPayload {
                    assessment_id: id,
                    grade: g * m,
                    max_grade: m,
                    attempt: a,
                })
            }),
        ];
        (
            "[a-z][a-z0-9_]{0,8}",
            proptest::option::of("[a-z0-9/:._-]{1,12}"),
            0i64..4_000_000_000_000,
            0u8..3,
            payload,
            0usize..4,
        )
            .prop_map(|(user, page, ms, src, payload, video_kind)| {
                let (event_type, content_id) = match &payload {
                    Payload::Video(v) => (EventType::KEPT[video_kind], Some(v.video_id.clone())),
                    Payload::Assessment(a) => {
                        (EventType::ProblemSubmit, Some(a.assessment_id.clone()))
                    }
                    Payload::None => (EventType::Other, None),
                };
                ClickEvent {
                    user_id: user,
                    event_type,
                    page_id: page,
                    content_id,
                    timestamp: Timestamp(ms),
                    source: Source::from_code(src).unwrap(),
                    payload,
                }
            })
    }

    proptest! {
        #[test]
        fn canonical_json_round_trips(e in arb_event()) {
            let back = parse_event_line(&e.to_json_line()).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn filter_is_idempotent(events in proptest::collection::vec(arb_event(), 0..30)) {
            let once = filter_events(events);
            prop_assert_eq!(filter_events(once.clone()), once);
        }

        #[test]
        fn sessions_partition_and_shrink_with_gap(
            mut minutes in proptest::collection::vec(0i64..2_000, 1..40),
            gap_a in 0i64..120,
            gap_b in 0i64..120,
        ) {
            minutes.sort();
            let events: Vec<ClickEvent> = minutes
                .iter()
                .map(|&m| ev("u", EventType::VideoPlay, m, Source::Browser))
                .collect();
            let (lo, hi) = (gap_a.min(gap_b) * 60_000, gap_a.max(gap_b) * 60_000);
            let s_lo = sessionize(&events, lo).unwrap();
            let s_hi = sessionize(&events, hi).unwrap();
            prop_assert_eq!(s_lo.iter().map(|s| s.event_count).sum::<usize>(), events.len());
            prop_assert!(s_hi.len() <= s_lo.len());
            for s in &s_lo {
                prop_assert!(s.end >= s.start);
            }
        }

        #[test]
        fn stats_ignore_input_order(
            minutes in proptest::collection::vec((0i64..5_000, 0usize..5), 1..30),
            seed in any::<u64>(),
        ) {
            let events: Vec<ClickEvent> = minutes
                .iter()
                .map(|&(m, k)| ev("u", EventType::KEPT[k], m, Source::Browser))
                .collect();
            let mut shuffled = events.clone();
            // deterministic Fisher-Yates driven by the proptest seed
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let stats = |mut evs: Vec<ClickEvent>| {
                sort_events(&mut evs);
                let sessions = sessionize(&evs, DEFAULT_SESSION_GAP_MS).unwrap();
                aggregate_user_stats(&evs, &sessions).unwrap()
            };
            prop_assert_eq!(stats(events), stats(shuffled));
        }
    }
}
