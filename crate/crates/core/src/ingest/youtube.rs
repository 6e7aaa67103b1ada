//! Live listing through the YouTube Data API and caption download through
//! the public timed-text endpoint.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde_json::Value;

use super::fixture::{FixtureSource, FixtureVideo};
use super::{CorpusWindow, IngestError, TranscriptFetch, VideoMeta, VideoSource, PAGE_SIZE};

const API_BASE: &str = "https://www.googleapis.com/youtube/v3";
const CAPTION_BASE: &str = "https://video.google.com/timedtext";

pub struct YouTubeSource {
    client: reqwest::blocking::Client,
    api_key: String,
    record_dir: Option<PathBuf>,
    seen: Mutex<HashMap<String, VideoMeta>>,
}

impl YouTubeSource {
    pub fn new(api_key: impl Into<String>, timeout: Duration) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        Ok(YouTubeSource {
            client,
            api_key: api_key.into(),
            record_dir: None,
            seen: Mutex::new(HashMap::new()),
        })
    }

    /// Reads the key from `YOUTUBE_API_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self, IngestError> {
        let key = std::env::var("YOUTUBE_API_KEY")
            .map_err(|_| IngestError::Auth("YOUTUBE_API_KEY is not set".into()))?;
        Self::new(key, timeout)
    }

    /// Records every fetched video into `dir` in the fixture layout, so the
    /// run can be replayed offline with `FixtureSource`.
    pub fn recording_to(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    fn get_json(&self, url: &str, query: &[(&str, String)]) -> Result<Value, IngestError> {
        let resp = self
            .client
            .get(url)
            .query(query)
            .query(&[("key", &self.api_key)])
            .send()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after_secs = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        let body = resp.text().map_err(|e| IngestError::Network(e.to_string()))?;
        match status {
            200..=299 => {
                serde_json::from_str(&body).map_err(|e| IngestError::Network(format!("bad JSON: {e}")))
            }
            401 => Err(IngestError::Auth(body.chars().take(200).collect())),
            403 if body.contains("quotaExceeded") || body.contains("rateLimitExceeded") => {
                Err(IngestError::QuotaExceeded { retry_after_secs })
            }
            403 => Err(IngestError::Auth(body.chars().take(200).collect())),
            429 => Err(IngestError::QuotaExceeded { retry_after_secs }),
            _ => Err(IngestError::Network(format!("HTTP {status}"))),
        }
    }
}

/// Parses an ISO 8601 duration such as `PT14M5S` or `P0DT1H2S` into seconds.
pub fn parse_iso8601_duration(s: &str) -> Option<u32> {
    let rest = s.strip_prefix('P')?;
    let (date, time) = match rest.split_once('T') {
        Some((d, t)) => (d, t),
        None => (rest, ""),
    };
    let mut total: u64 = 0;
    let mut scan = |part: &str, units: &[(char, u64)]| -> Option<()> {
        let mut num = String::new();
        for c in part.chars() {
            if c.is_ascii_digit() {
                num.push(c);
            } else {
                let mult = units.iter().find(|(u, _)| *u == c)?.1;
                total += num.parse::<u64>().ok()? * mult;
                num.clear();
            }
        }
        num.is_empty().then_some(())
    };
    scan(date, &[('W', 604_800), ('D', 86_400)])?;
    scan(time, &[('H', 3600), ('M', 60), ('S', 1)])?;
    u32::try_from(total).ok()
}

/// Joins the text of a timed-text XML document into one transcript,
/// decoding the common character entities.
pub fn parse_timedtext(xml: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut rest = xml;
    while let Some(open) = rest.find("<text") {
        let Some(gt) = rest[open..].find('>') else { break };
        let body_start = open + gt + 1;
        let Some(close) = rest[body_start..].find("</text>") else { break };
        let raw = &rest[body_start..body_start + close];
        let decoded = decode_entities(&decode_entities(raw));
        let line = decoded.split_whitespace().collect::<Vec<_>>().join(" ");
        if !line.is_empty() {
            out.push(line);
        }
        rest = &rest[body_start + close + "</text>".len()..];
    }
    out.join(" ")
}

fn decode_entities(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

/// Video ids and the next page token from a search.list response.
fn parse_search_page(v: &Value) -> (Vec<String>, Option<String>) {
    let ids = v
        .get("items")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|i| i.pointer("/id/videoId").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let next = v
        .get("nextPageToken")
        .and_then(Value::as_str)
        .map(str::to_string);
    (ids, next)
}

/// Listing metadata from a videos.list response (snippet + contentDetails).
fn parse_videos(v: &Value) -> Vec<VideoMeta> {
    let Some(items) = v.get("items").and_then(Value::as_array) else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|i| {
            let published_at = i
                .pointer("/snippet/publishedAt")
                .and_then(Value::as_str)
                .and_then(|s| DateTime::parse_from_rfc3339(s).ok())?
                .with_timezone(&Utc);
            Some(VideoMeta {
                video_id: i.get("id")?.as_str()?.to_string(),
                title: i.pointer("/snippet/title")?.as_str()?.to_string(),
                published_at,
                duration_secs: i
                    .pointer("/contentDetails/duration")
                    .and_then(Value::as_str)
                    .and_then(parse_iso8601_duration)
                    .unwrap_or(0),
                channel: i
                    .pointer("/snippet/channelId")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            })
        })
        .collect()
}

impl VideoSource for YouTubeSource {
    fn list_videos(
        &self,
        channel: &str,
        window: &CorpusWindow,
        page_limit: usize,
    ) -> Result<Vec<VideoMeta>, IngestError> {
        let mut ids = Vec::new();
        let mut token: Option<String> = None;
        let mut pages = 0;
        loop {
            let mut query = vec![
                ("part", "id".to_string()),
                ("channelId", channel.to_string()),
                ("type", "video".to_string()),
                ("order", "date".to_string()),
                // "medium" is 4 to 20 minutes, the same bounds as the local filter.
                ("videoDuration", "medium".to_string()),
                ("maxResults", PAGE_SIZE.to_string()),
                ("publishedAfter", window.start_utc().to_rfc3339()),
                ("publishedBefore", window.end_utc().to_rfc3339()),
            ];
            if let Some(t) = &token {
                query.push(("pageToken", t.clone()));
            }
            let page = self.get_json(&format!("{API_BASE}/search"), &query)?;
            let (page_ids, next) = parse_search_page(&page);
            ids.extend(page_ids);
            pages += 1;
            token = next;
            if token.is_none() || (page_limit > 0 && pages >= page_limit) {
                break;
            }
        }
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(PAGE_SIZE) {
            let resp = self.get_json(
                &format!("{API_BASE}/videos"),
                &[
                    ("part", "snippet,contentDetails".to_string()),
                    ("id", chunk.join(",")),
                ],
            )?;
            out.extend(parse_videos(&resp));
        }
        let mut seen = self.seen.lock();
        for m in &out {
            seen.insert(m.video_id.clone(), m.clone());
        }
        Ok(out)
    }

    fn transcript(&self, video_id: &str) -> Result<TranscriptFetch, IngestError> {
        let resp = self
            .client
            .get(CAPTION_BASE)
            .query(&[("lang", "en"), ("v", video_id)])
            .send()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| IngestError::Network(e.to_string()))?;
        let fetch = match status {
            200 => {
                let text = parse_timedtext(&body);
                if text.is_empty() {
                    TranscriptFetch::NoCaptions
                } else {
                    TranscriptFetch::Found { language: "en".into(), text }
                }
            }
            401 | 403 => TranscriptFetch::MemberOnly,
            404 => TranscriptFetch::NoCaptions,
            _ => return Err(IngestError::Network(format!("captions HTTP {status}"))),
        };
        if let Some(dir) = &self.record_dir {
            if let Some(meta) = self.seen.lock().get(video_id).cloned() {
                FixtureSource::write(dir, &FixtureVideo { meta, fetch: fetch.clone() })?;
            }
        }
        Ok(fetch)
    }
}
