//! Talk metadata and transcript acquisition.
//!
//! A [`VideoSource`] lists videos and fetches transcripts. Two sources ship:
//! [`FixtureSource`] reads a directory of recorded videos, and
//! [`YouTubeSource`] calls the live APIs and can record what it sees into
//! the same fixture layout.

mod fixture;
mod youtube;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::RateLimiter;
use crate::Dataset;

pub use fixture::{FixtureSource, FixtureVideo, MemorySource};
pub use youtube::{parse_iso8601_duration, parse_timedtext, YouTubeSource};

/// YouTube channel id of the TED channel.
pub const TED_CHANNEL_ID: &str = "UCAuUUnT6oDeKwE6v1NGQxug";

/// Shortest usable talk, in seconds (inclusive).
pub const MIN_DURATION_SECS: u32 = 240;
/// Longest usable talk, in seconds (inclusive).
pub const MAX_DURATION_SECS: u32 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkipReason {
    NoTranscript,
    MemberOnly,
    NonEnglish,
    OutOfWindow,
    BadDuration,
    /// Set by the annotation stage after a failed corrective re-prompt.
    AnnotationFailed,
    /// The provider refused to summarise the transcript.
    SafetyBlocked,
}

impl SkipReason {
    pub const ALL: [SkipReason; 7] = [
        SkipReason::NoTranscript,
        SkipReason::MemberOnly,
        SkipReason::NonEnglish,
        SkipReason::OutOfWindow,
        SkipReason::BadDuration,
        SkipReason::AnnotationFailed,
        SkipReason::SafetyBlocked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::NoTranscript => "NoTranscript",
            SkipReason::MemberOnly => "MemberOnly",
            SkipReason::NonEnglish => "NonEnglish",
            SkipReason::OutOfWindow => "OutOfWindow",
            SkipReason::BadDuration => "BadDuration",
            SkipReason::AnnotationFailed => "AnnotationFailed",
            SkipReason::SafetyBlocked => "SafetyBlocked",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkipReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SkipReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown skip reason {s:?}"))
    }
}

/// Listing entry before any transcript work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub title: String,
    pub published_at: DateTime<Utc>,
    pub duration_secs: u32,
    pub channel: String,
}

/// Outcome of a transcript lookup for one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscriptFetch {
    Found { language: String, text: String },
    MemberOnly,
    NoCaptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TalkRecord {
    pub video_id: String,
    pub title: String,
    pub published_at: DateTime<Utc>,
    pub duration_secs: u32,
    pub transcript: Option<String>,
    pub channel: String,
    pub usable: bool,
    pub skip_reason: Option<SkipReason>,
}

impl TalkRecord {
    pub fn from_meta(meta: VideoMeta) -> Self {
        TalkRecord {
            video_id: meta.video_id,
            title: meta.title,
            published_at: meta.published_at,
            duration_secs: meta.duration_secs,
            transcript: None,
            channel: meta.channel,
            usable: true,
            skip_reason: None,
        }
    }

    pub fn skip(&mut self, reason: SkipReason) {
        self.usable = false;
        self.skip_reason = Some(reason);
    }

    /// Checks the record-level invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.usable {
            if self.transcript.as_deref().is_none_or(|t| t.trim().is_empty()) {
                return Err(format!("{} is usable without a transcript", self.video_id));
            }
            if !duration_ok(self.duration_secs) {
                return Err(format!("{} is usable with duration {}", self.video_id, self.duration_secs));
            }
            if self.skip_reason.is_some() {
                return Err(format!("{} is usable but has a skip reason", self.video_id));
            }
        } else if self.skip_reason.is_none() {
            return Err(format!("{} is unusable without a reason", self.video_id));
        }
        Ok(())
    }
}

pub fn duration_ok(secs: u32) -> bool {
    (MIN_DURATION_SECS..=MAX_DURATION_SECS).contains(&secs)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("credentials rejected: {0}")]
    Auth(String),
    #[error("API quota exceeded (retry after {retry_after_secs:?} s)")]
    QuotaExceeded { retry_after_secs: Option<u64> },
    #[error("network error: {0}")]
    Network(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

/// Inclusive date range that a dataset draws from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: Dataset,
}

impl CorpusWindow {
    pub fn new(start: NaiveDate, end: NaiveDate, label: Dataset) -> Result<Self, IngestError> {
        if start >= end {
            return Err(IngestError::InvalidWindow(format!("{start} is not before {end}")));
        }
        Ok(CorpusWindow { start, end, label })
    }

    /// Calendar year 2023.
    pub fn preliminary() -> Self {
        Self::fixed(2023, 1, 1, 2023, 12, 31, Dataset::Preliminary)
    }

    /// January 2020 through April 2024.
    pub fn formal() -> Self {
        Self::fixed(2020, 1, 1, 2024, 4, 30, Dataset::Formal)
    }

    fn fixed(y0: i32, m0: u32, d0: u32, y1: i32, m1: u32, d1: u32, label: Dataset) -> Self {
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid constant date");
        CorpusWindow {
            start: date(y0, m0, d0),
            end: date(y1, m1, d1),
            label,
        }
    }

    /// Default window for a dataset label; custom labels have none.
    pub fn for_dataset(dataset: &Dataset) -> Option<Self> {
        match dataset {
            Dataset::Preliminary => Some(Self::preliminary()),
            Dataset::Formal => Some(Self::formal()),
            Dataset::Custom(_) => None,
        }
    }

    /// Parses `YYYY-MM-DD..YYYY-MM-DD`.
    pub fn parse(spec: &str, label: Dataset) -> Result<Self, IngestError> {
        let (a, b) = spec
            .split_once("..")
            .ok_or_else(|| IngestError::InvalidWindow(format!("{spec:?} is not START..END")))?;
        let date = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|e| IngestError::InvalidWindow(format!("{s:?}: {e}")))
        };
        Self::new(date(a)?, date(b)?, label)
    }

    pub fn contains(&self, ts: &DateTime<Utc>) -> bool {
        let day = ts.date_naive();
        self.start <= day && day <= self.end
    }

    /// First instant of the window.
    pub fn start_utc(&self) -> DateTime<Utc> {
        Utc.from_utc_datetime(&self.start.and_hms_opt(0, 0, 0).expect("midnight"))
    }

    /// First instant after the window.
    pub fn end_utc(&self) -> DateTime<Utc> {
        let next = self.end.succ_opt().unwrap_or(self.end);
        Utc.from_utc_datetime(&next.and_hms_opt(0, 0, 0).expect("midnight"))
    }
}

/// Video listing and transcript lookup.
pub trait VideoSource: Send + Sync {
    /// Videos of `channel` published inside `window`. `page_limit` bounds
    /// the number of 50-item result pages; 0 means no bound.
    fn list_videos(
        &self,
        channel: &str,
        window: &CorpusWindow,
        page_limit: usize,
    ) -> Result<Vec<VideoMeta>, IngestError>;

    fn transcript(&self, video_id: &str) -> Result<TranscriptFetch, IngestError>;
}

pub const PAGE_SIZE: usize = 50;

/// Lists a channel and applies the window and duration filters. Records
/// outside the window are dropped; records with a bad duration are kept
/// but marked unusable.
pub fn fetch_metadata(
    source: &dyn VideoSource,
    channel: &str,
    window: &CorpusWindow,
    page_limit: usize,
) -> Result<Vec<TalkRecord>, IngestError> {
    let mut metas = source.list_videos(channel, window, page_limit)?;
    metas.sort_by(|a, b| {
        a.published_at
            .cmp(&b.published_at)
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    metas.dedup_by(|a, b| a.video_id == b.video_id);
    let mut out = Vec::with_capacity(metas.len());
    for meta in metas {
        if !window.contains(&meta.published_at) {
            log::debug!("{} published outside {}..{}", meta.video_id, window.start, window.end);
            continue;
        }
        let mut record = TalkRecord::from_meta(meta);
        if !duration_ok(record.duration_secs) {
            record.skip(SkipReason::BadDuration);
        }
        out.push(record);
    }
    Ok(out)
}

/// Attaches the transcript or records why none is usable. Only transport
/// failures are errors; unusable records pass through untouched.
pub fn fetch_transcript(
    source: &dyn VideoSource,
    mut record: TalkRecord,
) -> Result<TalkRecord, IngestError> {
    if !record.usable {
        return Ok(record);
    }
    match source.transcript(&record.video_id)? {
        TranscriptFetch::Found { language, text } => {
            let lang = language.to_ascii_lowercase();
            if !(lang == "en" || lang.starts_with("en-") || lang.starts_with("en_")) {
                record.skip(SkipReason::NonEnglish);
            } else if text.trim().is_empty() {
                record.skip(SkipReason::NoTranscript);
            } else {
                record.transcript = Some(text);
            }
        }
        TranscriptFetch::MemberOnly => record.skip(SkipReason::MemberOnly),
        TranscriptFetch::NoCaptions => record.skip(SkipReason::NoTranscript),
    }
    Ok(record)
}

/// Lists and fetches a whole window. Transcript lookups run in parallel,
/// bounded by `limiter` when given. Output order matches the listing.
pub fn ingest(
    source: &dyn VideoSource,
    channel: &str,
    window: &CorpusWindow,
    page_limit: usize,
    limiter: Option<&RateLimiter>,
) -> Result<Vec<TalkRecord>, IngestError> {
    let records = fetch_metadata(source, channel, window, page_limit)?;
    records
        .into_par_iter()
        .map(|r| {
            if r.usable {
                if let Some(l) = limiter {
                    l.acquire();
                }
            }
            fetch_transcript(source, r)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub collected: usize,
    pub usable: usize,
    pub skipped_by_reason: BTreeMap<SkipReason, usize>,
}

/// Counts usable and skipped records.
pub fn summarize<'a>(records: impl IntoIterator<Item = &'a TalkRecord>) -> CorpusSummary {
    let mut summary = CorpusSummary::default();
    for r in records {
        summary.collected += 1;
        if r.usable {
            summary.usable += 1;
        } else if let Some(reason) = r.skip_reason {
            *summary.skipped_by_reason.entry(reason).or_default() += 1;
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap()
    }

    fn video(id: &str, secs: u32, fetch: TranscriptFetch) -> FixtureVideo {
        FixtureVideo {
            meta: VideoMeta {
                video_id: id.into(),
                title: format!("Talk {id}"),
                published_at: ts(2023, 5, 1),
                duration_secs: secs,
                channel: "TED".into(),
            },
            fetch,
        }
    }

    fn english(text: &str) -> TranscriptFetch {
        TranscriptFetch::Found { language: "en".into(), text: text.into() }
    }

    #[test]
    fn duration_filter_is_closed_interval() {
        assert!(!duration_ok(239));
        assert!(duration_ok(240));
        assert!(duration_ok(1200));
        assert!(!duration_ok(1201));
    }

    #[test]
    fn long_video_is_skipped_for_duration() {
        let src = MemorySource::new(vec![
            video("a", 600, english("x")),
            video("b", 25 * 60, english("y")),
            video("c", 300, english("z")),
        ]);
        let recs = fetch_metadata(&src, "TED", &CorpusWindow::preliminary(), 0).unwrap();
        assert_eq!(recs.len(), 3);
        let skipped: Vec<_> = recs.iter().filter(|r| !r.usable).collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].skip_reason, Some(SkipReason::BadDuration));
    }

    #[test]
    fn empty_channel_lists_nothing() {
        let src = MemorySource::new(vec![video("a", 600, english("x"))]);
        assert!(fetch_metadata(&src, "Other", &CorpusWindow::preliminary(), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn transcript_outcomes() {
        let src = MemorySource::new(vec![
            video("ok", 600, english("hello world")),
            video("member", 600, TranscriptFetch::MemberOnly),
            video("none", 600, TranscriptFetch::NoCaptions),
            video("fr", 600, TranscriptFetch::Found { language: "fr".into(), text: "bonjour".into() }),
            video("blank", 600, english("  ")),
            video("gb", 600, TranscriptFetch::Found { language: "en-GB".into(), text: "hi".into() }),
        ]);
        let recs = ingest(&src, "TED", &CorpusWindow::preliminary(), 0, None).unwrap();
        let reason = |id: &str| recs.iter().find(|r| r.video_id == id).unwrap().skip_reason;
        assert_eq!(reason("ok"), None);
        assert_eq!(reason("member"), Some(SkipReason::MemberOnly));
        assert_eq!(reason("none"), Some(SkipReason::NoTranscript));
        assert_eq!(reason("fr"), Some(SkipReason::NonEnglish));
        assert_eq!(reason("blank"), Some(SkipReason::NoTranscript));
        assert_eq!(reason("gb"), None);
        for r in &recs {
            r.check().unwrap();
        }
        let s = summarize(&recs);
        assert_eq!((s.collected, s.usable), (6, 2));
        assert_eq!(s.skipped_by_reason[&SkipReason::NoTranscript], 2);
    }

    #[test]
    fn window_bounds_are_inclusive_days() {
        let w = CorpusWindow::preliminary();
        assert!(w.contains(&Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()));
        assert!(w.contains(&Utc.with_ymd_and_hms(2023, 12, 31, 23, 59, 59).unwrap()));
        assert!(!w.contains(&Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()));
        assert!(CorpusWindow::parse("2023-02-01..2023-01-01", Dataset::Preliminary).is_err());
        let f = CorpusWindow::parse("2020-01-01..2024-04-30", Dataset::Formal).unwrap();
        assert_eq!(f, CorpusWindow::formal());
    }

    #[test]
    fn out_of_window_records_are_dropped() {
        let mut v = video("old", 600, english("x"));
        v.meta.published_at = ts(2019, 6, 1);
        let src = MemorySource::new(vec![v, video("new", 600, english("y"))]);
        let recs = fetch_metadata(&src, "TED", &CorpusWindow::preliminary(), 0).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].video_id, "new");
    }

    #[test]
    fn skip_reason_round_trips_through_text() {
        for r in SkipReason::ALL {
            assert_eq!(r.as_str().parse::<SkipReason>().unwrap(), r);
        }
    }
}
