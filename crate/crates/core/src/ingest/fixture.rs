use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusWindow, IngestError, TranscriptFetch, VideoMeta, VideoSource, PAGE_SIZE};

/// One recorded video: listing metadata plus the transcript outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureVideo {
    pub meta: VideoMeta,
    pub fetch: TranscriptFetch,
}

/// On-disk metadata document, `<video_id>.json`.
#[derive(Debug, Serialize, Deserialize)]
struct MetaDoc {
    #[serde(flatten)]
    meta: VideoMeta,
    #[serde(default)]
    member_only: bool,
    #[serde(default = "default_language")]
    caption_language: String,
}

fn default_language() -> String {
    "en".into()
}

/// In-memory source, used by tests and as the backing store of
/// [`FixtureSource`].
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    videos: BTreeMap<String, FixtureVideo>,
}

impl MemorySource {
    pub fn new(videos: impl IntoIterator<Item = FixtureVideo>) -> Self {
        MemorySource {
            videos: videos
                .into_iter()
                .map(|v| (v.meta.video_id.clone(), v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn videos(&self) -> impl Iterator<Item = &FixtureVideo> {
        self.videos.values()
    }
}

impl VideoSource for MemorySource {
    fn list_videos(
        &self,
        channel: &str,
        window: &CorpusWindow,
        page_limit: usize,
    ) -> Result<Vec<VideoMeta>, IngestError> {
        let mut out: Vec<VideoMeta> = self
            .videos
            .values()
            .filter(|v| v.meta.channel == channel && window.contains(&v.meta.published_at))
            .map(|v| v.meta.clone())
            .collect();
        out.sort_by(|a, b| {
            b.published_at
                .cmp(&a.published_at)
                .then_with(|| a.video_id.cmp(&b.video_id))
        });
        if page_limit > 0 {
            out.truncate(page_limit * PAGE_SIZE);
        }
        Ok(out)
    }

    fn transcript(&self, video_id: &str) -> Result<TranscriptFetch, IngestError> {
        Ok(self
            .videos
            .get(video_id)
            .map(|v| v.fetch.clone())
            .unwrap_or(TranscriptFetch::NoCaptions))
    }
}

/// Directory of recorded videos: `<id>.json` metadata and an optional
/// `<id>.txt` transcript per video.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    dir: PathBuf,
    inner: MemorySource,
}

fn fixture_err(path: &Path, message: impl ToString) -> IngestError {
    IngestError::Fixture {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

impl FixtureSource {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        let entries = std::fs::read_dir(&dir).map_err(|e| fixture_err(&dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut videos = Vec::with_capacity(paths.len());
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| fixture_err(&path, e))?;
            let doc: MetaDoc = serde_json::from_str(&text).map_err(|e| fixture_err(&path, e))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if stem != doc.meta.video_id {
                return Err(fixture_err(
                    &path,
                    format!("file name does not match video_id {:?}", doc.meta.video_id),
                ));
            }
            let txt = path.with_extension("txt");
            let fetch = if doc.member_only {
                TranscriptFetch::MemberOnly
            } else if txt.exists() {
                TranscriptFetch::Found {
                    language: doc.caption_language,
                    text: std::fs::read_to_string(&txt).map_err(|e| fixture_err(&txt, e))?,
                }
            } else {
                TranscriptFetch::NoCaptions
            };
            videos.push(FixtureVideo { meta: doc.meta, fetch });
        }
        Ok(FixtureSource {
            dir,
            inner: MemorySource::new(videos),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// Writes one video in the fixture layout, replacing earlier copies.
    pub fn write(dir: &Path, video: &FixtureVideo) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|e| fixture_err(dir, e))?;
        let id = &video.meta.video_id;
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(fixture_err(dir, format!("unsafe video id {id:?}")));
        }
        let (member_only, language, text) = match &video.fetch {
            TranscriptFetch::Found { language, text } => (false, language.clone(), Some(text)),
            TranscriptFetch::MemberOnly => (true, default_language(), None),
            TranscriptFetch::NoCaptions => (false, default_language(), None),
        };
        let doc = MetaDoc {
            meta: video.meta.clone(),
            member_only,
            caption_language: language,
        };
        let json_path = dir.join(format!("{id}.json"));
        let body = serde_json::to_string_pretty(&doc).expect("metadata serialises");
        std::fs::write(&json_path, body + "\n").map_err(|e| fixture_err(&json_path, e))?;
        let txt_path = dir.join(format!("{id}.txt"));
        match text {
            Some(t) => std::fs::write(&txt_path, t).map_err(|e| fixture_err(&txt_path, e))?,
            None if txt_path.exists() => {
                std::fs::remove_file(&txt_path).map_err(|e| fixture_err(&txt_path, e))?
            }
            None => {}
        }
        Ok(())
    }
}

impl VideoSource for FixtureSource {
    fn list_videos(
        &self,
        channel: &str,
        window: &CorpusWindow,
        page_limit: usize,
    ) -> Result<Vec<VideoMeta>, IngestError> {
        self.inner.list_videos(channel, window, page_limit)
    }

    fn transcript(&self, video_id: &str) -> Result<TranscriptFetch, IngestError> {
        self.inner.transcript(video_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn sample(id: &str, fetch: TranscriptFetch) -> FixtureVideo {
        FixtureVideo {
            meta: VideoMeta {
                video_id: id.into(),
                title: "A talk".into(),
                published_at: Utc.with_ymd_and_hms(2023, 3, 4, 5, 6, 7).unwrap(),
                duration_secs: 700,
                channel: "TED".into(),
            },
            fetch,
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let videos = vec![
            sample("a1", TranscriptFetch::Found { language: "en".into(), text: "words".into() }),
            sample("b2", TranscriptFetch::MemberOnly),
            sample("c3", TranscriptFetch::NoCaptions),
            sample("d4", TranscriptFetch::Found { language: "es".into(), text: "hola".into() }),
        ];
        for v in &videos {
            FixtureSource::write(dir.path(), v).unwrap();
        }
        let src = FixtureSource::open(dir.path()).unwrap();
        assert_eq!(src.len(), 4);
        for v in &videos {
            assert_eq!(src.transcript(&v.meta.video_id).unwrap(), v.fetch);
        }
        let listed = src
            .list_videos("TED", &CorpusWindow::preliminary(), 0)
            .unwrap();
        assert_eq!(listed.len(), 4);
        assert_eq!(listed[0], videos[0].meta);
    }

    #[test]
    fn mismatched_file_name_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        FixtureSource::write(dir.path(), &sample("x", TranscriptFetch::NoCaptions)).unwrap();
        std::fs::rename(dir.path().join("x.json"), dir.path().join("y.json")).unwrap();
        assert!(matches!(
            FixtureSource::open(dir.path()),
            Err(IngestError::Fixture { .. })
        ));
    }

    #[test]
    fn unsafe_ids_are_not_written() {
        let dir = tempfile::tempdir().unwrap();
        assert!(FixtureSource::write(dir.path(), &sample("../x", TranscriptFetch::NoCaptions)).is_err());
    }

    #[test]
    fn page_limit_truncates() {
        let videos: Vec<_> = (0..120)
            .map(|i| sample(&format!("v{i:03}"), TranscriptFetch::NoCaptions))
            .collect();
        let src = MemorySource::new(videos);
        let w = CorpusWindow::preliminary();
        assert_eq!(src.list_videos("TED", &w, 1).unwrap().len(), 50);
        assert_eq!(src.list_videos("TED", &w, 0).unwrap().len(), 120);
    }
}
