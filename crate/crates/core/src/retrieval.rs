//! Embedding index over annotations and roundtable participant selection.
//!
//! Selection filters by goal tag first and ranks the survivors by cosine
//! similarity to the goal profile (title, targets and keywords). The index
//! is an exact scan; corpora here are a few thousand talks at most.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::TalkAnnotation;
use crate::llm::{cosine, Gateway, GatewayError};
use crate::Catalog;

pub const DEFAULT_CAP: usize = 25;
const EMBED_BATCH: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("dataset has no annotations")]
    EmptyDataset,
    #[error("no talk is tagged with goal {0}")]
    NoCandidates(u8),
    #[error("goal {0} is not in 1..17")]
    InvalidGoal(u8),
    #[error("embedding the goal profiles failed: {0}")]
    Profile(GatewayError),
    #[error("index file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub sdg_types: BTreeSet<u8>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub dimension: usize,
    pub model: String,
    pub provider: String,
    pub seed: Option<u64>,
    /// Sorted by video id.
    pub entries: Vec<IndexEntry>,
    /// Goal profile vectors, one per goal.
    pub profiles: BTreeMap<u8, Vec<f64>>,
}

/// A talk that could not be embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSkip {
    pub video_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSet {
    pub goal: u8,
    pub members: Vec<String>,
    pub scores: Vec<f64>,
}

impl ParticipantSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Embeds every annotation and every goal profile. Talks whose embedding
/// fails are logged and returned as skips.
pub fn build_index(
    annotations: &[TalkAnnotation],
    catalog: &Catalog,
    gateway: &Gateway,
) -> Result<(EmbeddingIndex, Vec<EmbedSkip>), RetrievalError> {
    if annotations.is_empty() {
        return Err(RetrievalError::EmptyDataset);
    }
    let mut sorted: Vec<&TalkAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let chunks: Vec<Vec<Result<IndexEntry, EmbedSkip>>> = sorted
        .par_chunks(EMBED_BATCH)
        .map(|chunk| {
            let texts: Vec<String> = chunk.iter().map(|a| a.embedding_text()).collect();
            match gateway.embed(&texts) {
                Ok(vectors) => chunk
                    .iter()
                    .zip(vectors)
                    .map(|(a, vector)| Ok(entry(a, vector)))
                    .collect(),
                // Retry one by one so a single bad talk does not sink the batch.
                Err(_) => chunk
                    .iter()
                    .map(|a| match gateway.embed(&[a.embedding_text()]) {
                        Ok(mut v) => Ok(entry(a, v.remove(0))),
                        Err(e) => {
                            log::warn!("skipping {} in index: {e}", a.video_id);
                            Err(EmbedSkip {
                                video_id: a.video_id.clone(),
                                error: e.to_string(),
                            })
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    let mut entries = Vec::with_capacity(sorted.len());
    let mut skips = Vec::new();
    for r in chunks.into_iter().flatten() {
        match r {
            Ok(e) => entries.push(e),
            Err(s) => skips.push(s),
        }
    }

    let backgrounds: Vec<String> = catalog.goals().iter().map(|g| g.background()).collect();
    let profile_vectors = gateway.embed(&backgrounds).map_err(RetrievalError::Profile)?;
    let profiles = catalog
        .goals()
        .iter()
        .map(|g| g.number)
        .zip(profile_vectors)
        .collect::<BTreeMap<_, _>>();
    let dimension = profiles.values().next().map_or(0, Vec::len);
    let config = gateway.config();
    Ok((
        EmbeddingIndex {
            dimension,
            model: config.embedding_model.clone(),
            provider: gateway.provider_id().to_string(),
            seed: config.seed,
            entries,
            profiles,
        },
        skips,
    ))
}

fn entry(a: &TalkAnnotation, vector: Vec<f64>) -> IndexEntry {
    IndexEntry {
        video_id: a.video_id.clone(),
        sdg_types: a.sdg_types.clone(),
        vector,
    }
}

/// Tag filter, then cosine ranking against the goal profile, then the cap.
/// Equal scores are ordered by video id.
pub fn select_participants(
    goal: u8,
    index: &EmbeddingIndex,
    cap: usize,
) -> Result<ParticipantSet, RetrievalError> {
    let profile = index
        .profiles
        .get(&goal)
        .ok_or(RetrievalError::InvalidGoal(goal))?;
    let mut ranked: Vec<(&str, f64)> = index
        .entries
        .iter()
        .filter(|e| e.sdg_types.contains(&goal))
        .map(|e| (e.video_id.as_str(), cosine(&e.vector, profile)))
        .collect();
    if ranked.is_empty() {
        return Err(RetrievalError::NoCandidates(goal));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Ok(ParticipantSet {
        goal,
        members: ranked.iter().map(|(id, _)| id.to_string()).collect(),
        scores: ranked.iter().map(|(_, s)| *s).collect(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    dimension: usize,
    model: String,
    provider: String,
    seed: Option<u64>,
    entries: Vec<ManifestEntry>,
    profile_goals: Vec<u8>,
    vectors_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    video_id: String,
    sdg_types: BTreeSet<u8>,
}

/// Paths of the vector file and its manifest for a store and dataset.
pub fn index_paths(store_path: &Path, dataset: &crate::Dataset) -> (PathBuf, PathBuf) {
    let stem = store_path
        .file_stem()
        .map_or_else(|| "store".to_string(), |s| s.to_string_lossy().into_owned());
    let dir = store_path.parent().unwrap_or_else(|| Path::new("."));
    let base = format!("{stem}.{}.index", dataset.label());
    (
        dir.join(format!("{base}.vectors")),
        dir.join(format!("{base}.json")),
    )
}

fn io_err(path: &Path, e: impl ToString) -> RetrievalError {
    RetrievalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.video_id.as_str().cmp(video_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Writes little-endian f64 vectors (entries, then profiles) and a JSON
    /// manifest carrying dimension, model, seed and a checksum.
    pub fn save(&self, vectors_path: &Path, manifest_path: &Path) -> Result<(), RetrievalError> {
        let mut bytes = Vec::with_capacity((self.entries.len() + self.profiles.len()) * self.dimension * 8);
        for v in self.entries.iter().map(|e| &e.vector).chain(self.profiles.values()) {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: 1,
            dimension: self.dimension,
            model: self.model.clone(),
            provider: self.provider.clone(),
            seed: self.seed,
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    video_id: e.video_id.clone(),
                    sdg_types: e.sdg_types.clone(),
                })
                .collect(),
            profile_goals: self.profiles.keys().copied().collect(),
            vectors_sha256: hex(&Sha256::digest(&bytes)),
        };
        if let Some(dir) = vectors_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        std::fs::File::create(vectors_path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| io_err(vectors_path, e))?;
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(manifest_path, body).map_err(|e| io_err(manifest_path, e))?;
        Ok(())
    }

    pub fn load(vectors_path: &Path, manifest_path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(manifest_path, e))?;
        let mut bytes = Vec::new();
        std::fs::File::open(vectors_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| io_err(vectors_path, e))?;
        if hex(&Sha256::digest(&bytes)) != manifest.vectors_sha256 {
            return Err(io_err(vectors_path, "checksum does not match manifest"));
        }
        let dim = manifest.dimension;
        let rows = manifest.entries.len() + manifest.profile_goals.len();
        if bytes.len() != rows * dim * 8 {
            return Err(io_err(vectors_path, "length does not match manifest"));
        }
        let mut vectors = bytes.chunks_exact(8).map(|c| {
            f64::from_le_bytes(c.try_into().expect("chunks are 8 bytes"))
        });
        let mut take = || (&mut vectors).take(dim).collect::<Vec<f64>>();
        let entries = manifest
            .entries
            .into_iter()
            .map(|e| IndexEntry {
                video_id: e.video_id,
                sdg_types: e.sdg_types,
                vector: take(),
            })
            .collect();
        let profiles = manifest.profile_goals.into_iter().map(|g| (g, take())).collect();
        Ok(EmbeddingIndex {
            dimension: dim,
            model: manifest.model,
            provider: manifest.provider,
            seed: manifest.seed,
            entries,
            profiles,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockProvider, ProviderConfig};
    use std::sync::Arc;

    fn ann(id: &str, tags: &[u8], words: &str) -> TalkAnnotation {
        TalkAnnotation {
            video_id: id.into(),
            title: words.into(),
            description: words.into(),
            core_value: words.into(),
            key_words: vec![words.into()],
            qa: vec![],
            sdg_types: tags.iter().copied().collect(),
        }
    }

    fn gw(seed: u64) -> Gateway {
        Gateway::new(
            Arc::new(MockProvider::new(seed)),
            ProviderConfig { seed: Some(seed), ..ProviderConfig::default() },
        )
    }

    #[test]
    fn index_shape_and_determinism() {
        let anns = vec![ann("a", &[6], "water"), ann("b", &[6, 3], "health"), ann("c", &[1], "poverty")];
        let (i1, skips) = build_index(&anns, &Catalog::bundled(), &gw(1)).unwrap();
        assert!(skips.is_empty());
        assert_eq!(i1.len(), 3);
        assert!(i1.entries.iter().all(|e| e.vector.len() == i1.dimension));
        assert_eq!(i1.profiles.len(), 17);
        let (i2, _) = build_index(&anns, &Catalog::bundled(), &gw(1)).unwrap();
        assert_eq!(i1, i2);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            build_index(&[], &Catalog::bundled(), &gw(1)),
            Err(RetrievalError::EmptyDataset)
        ));
    }

    #[test]
    fn selection_filters_ranks_and_caps() {
        let mut anns: Vec<_> = (0..40).map(|i| ann(&format!("t{i:02}"), &[6], &format!("water topic {i}"))).collect();
        anns.push(ann("other", &[1], "water"));
        let (index, _) = build_index(&anns, &Catalog::bundled(), &gw(2)).unwrap();
        let set = select_participants(6, &index, 25).unwrap();
        assert_eq!(set.len(), 25);
        assert!(!set.members.contains(&"other".to_string()));
        assert!(set.scores.windows(2).all(|w| w[0] >= w[1]));
        let small = select_participants(1, &index, 25).unwrap();
        assert_eq!(small.members, ["other"]);
        assert!(matches!(select_participants(14, &index, 25), Err(RetrievalError::NoCandidates(14))));
    }

    #[test]
    fn ties_are_broken_by_video_id() {
        // Identical text gives identical vectors and identical scores.
        let anns = vec![ann("zeta", &[6], "same text"), ann("alpha", &[6], "same text"), ann("mid", &[6], "same text")];
        let (index, _) = build_index(&anns, &Catalog::bundled(), &gw(3)).unwrap();
        let set = select_participants(6, &index, 25).unwrap();
        assert_eq!(set.scores[0], set.scores[2]);
        assert_eq!(set.members, ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn save_and_load_round_trip() {
        let anns = vec![ann("a", &[6], "water"), ann("b", &[3], "health")];
        let (index, _) = build_index(&anns, &Catalog::bundled(), &gw(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (v, m) = (dir.path().join("x.vectors"), dir.path().join("x.json"));
        index.save(&v, &m).unwrap();
        assert_eq!(EmbeddingIndex::load(&v, &m).unwrap(), index);
        let mut bytes = std::fs::read(&v).unwrap();
        bytes[0] ^= 1;
        std::fs::write(&v, bytes).unwrap();
        assert!(EmbeddingIndex::load(&v, &m).is_err());
    }
}
