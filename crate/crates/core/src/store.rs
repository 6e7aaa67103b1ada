//! Single-file SQLite persistence for every pipeline artifact.
//!
//! Per-dataset tables keep their historical names: `trans`/`trans2` hold
//! annotations, `forum`/`forum2` hold roundtable transcripts and their
//! graphs, `new_goal`/`new_goal2` hold proposals. Custom datasets get
//! `_label` suffixed tables. Shared tables: `talks`, `analysis`,
//! `failures` and `datasets`.
//!
//! One [`Store`] is the single writer. [`Snapshot`]s are separate read
//! connections pinned to a point in time by an open read transaction.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotate::TalkAnnotation;
use crate::ingest::{SkipReason, TalkRecord};
use crate::kg::{KnowledgeGraph, RepairReport};
use crate::llm::RunMetadata;
use crate::roundtable::RoundtableTranscript;
use crate::synthesis::NewGoalProposal;
use crate::Dataset;

pub const SCHEMA_VERSION: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store schema version {found} is newer than supported version {supported}")]
    IncompatibleVersion { found: i32, supported: i32 },
    #[error("database error: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("corrupt column {column}: {message}")]
    Corrupt { column: String, message: String },
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetHandle {
    pub label: Dataset,
    pub path: PathBuf,
    pub schema_version: i32,
}

/// Artifact counts for one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub talks: usize,
    pub usable_talks: usize,
    pub annotations: usize,
    pub transcripts: usize,
    pub graphs: usize,
    pub proposals: usize,
}

/// Annotation row with the run that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub annotation: TalkAnnotation,
    pub run: RunMetadata,
}

/// Graph row with its repair log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredGraph {
    pub graph: KnowledgeGraph,
    pub repair: RepairReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub item: String,
    pub reason: String,
}

const SHARED_SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS datasets (
    label TEXT PRIMARY KEY
);
CREATE TABLE IF NOT EXISTS talks (
    dataset TEXT NOT NULL,
    video_id TEXT NOT NULL,
    title TEXT NOT NULL,
    published_at TEXT NOT NULL,
    duration_secs INTEGER NOT NULL,
    transcript TEXT,
    channel TEXT NOT NULL,
    usable INTEGER NOT NULL,
    skip_reason TEXT,
    PRIMARY KEY (dataset, video_id)
);
CREATE TABLE IF NOT EXISTS analysis (
    dataset TEXT NOT NULL,
    name TEXT NOT NULL,
    body TEXT NOT NULL,
    PRIMARY KEY (dataset, name)
);
CREATE TABLE IF NOT EXISTS failures (
    dataset TEXT NOT NULL,
    stage TEXT NOT NULL,
    item TEXT NOT NULL,
    reason TEXT NOT NULL,
    PRIMARY KEY (dataset, stage, item)
);
";

fn dataset_schema(d: &Dataset) -> String {
    format!(
        "
CREATE TABLE IF NOT EXISTS {trans} (
    video_id TEXT PRIMARY KEY,
    title TEXT NOT NULL,
    description TEXT NOT NULL,
    core_value TEXT NOT NULL,
    key_words TEXT NOT NULL,
    qa TEXT NOT NULL,
    sdg_types TEXT NOT NULL,
    run TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS {forum} (
    goal INTEGER PRIMARY KEY,
    participant_ids TEXT NOT NULL,
    transcript TEXT NOT NULL,
    word_count INTEGER NOT NULL,
    run TEXT NOT NULL,
    kg_nodes TEXT,
    kg_links TEXT,
    kg_repair TEXT,
    kg_run TEXT
);
CREATE TABLE IF NOT EXISTS {new_goal} (
    number INTEGER PRIMARY KEY,
    title TEXT NOT NULL,
    sub_goals TEXT NOT NULL,
    source_goals TEXT NOT NULL,
    source TEXT NOT NULL,
    rationale TEXT NOT NULL,
    run TEXT
);
INSERT OR IGNORE INTO datasets (label) VALUES ('{label}');
",
        trans = d.annotation_table(),
        forum = d.forum_table(),
        new_goal = d.new_goal_table(),
        label = d.label(),
    )
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("artifact serialises")
}

fn from_json<T: DeserializeOwned>(column: &str, s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| StoreError::Corrupt {
        column: column.to_string(),
        message: e.to_string(),
    })
}

fn open_connection(path: &Path) -> Result<Connection> {
    let conn = Connection::open(path)?;
    conn.busy_timeout(std::time::Duration::from_secs(30))?;
    conn.pragma_update(None, "journal_mode", "WAL")?;
    conn.pragma_update(None, "synchronous", "NORMAL")?;
    Ok(conn)
}

/// Creates or upgrades the schema at `path` and registers `dataset`.
pub fn migrate(path: &Path, dataset: &Dataset) -> Result<DatasetHandle> {
    let store = Store::open(path)?;
    store.ensure_dataset(dataset)?;
    Ok(store.handle(dataset))
}

/// The single writer.
pub struct Store {
    conn: Connection,
    path: PathBuf,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.path).finish()
    }
}

impl Store {
    /// Opens or creates the store, migrating it to [`SCHEMA_VERSION`]. The
    /// built-in datasets are always present.
    pub fn open(path: impl AsRef<Path>) -> Result<Store> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let conn = open_connection(&path)?;
        let version: i32 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        if version > SCHEMA_VERSION {
            return Err(StoreError::IncompatibleVersion {
                found: version,
                supported: SCHEMA_VERSION,
            });
        }
        let store = Store { conn, path };
        if version < SCHEMA_VERSION {
            let tx = store.conn.unchecked_transaction()?;
            tx.execute_batch(SHARED_SCHEMA)?;
            tx.pragma_update(None, "user_version", SCHEMA_VERSION)?;
            tx.commit()?;
        }
        store.ensure_dataset(&Dataset::Preliminary)?;
        store.ensure_dataset(&Dataset::Formal)?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn schema_version(&self) -> Result<i32> {
        Ok(self
            .conn
            .pragma_query_value(None, "user_version", |r| r.get(0))?)
    }

    /// Creates the per-dataset tables if missing.
    pub fn ensure_dataset(&self, dataset: &Dataset) -> Result<()> {
        self.conn.execute_batch(&dataset_schema(dataset))?;
        self.conn.execute(
            "INSERT OR IGNORE INTO datasets (label) VALUES (?1)",
            params![dataset.label()],
        )?;
        Ok(())
    }

    pub fn handle(&self, dataset: &Dataset) -> DatasetHandle {
        DatasetHandle {
            label: dataset.clone(),
            path: self.path.clone(),
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn datasets(&self) -> Result<Vec<Dataset>> {
        let mut stmt = self.conn.prepare("SELECT label FROM datasets ORDER BY label")?;
        let labels = stmt
            .query_map([], |r| r.get::<_, String>(0))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        labels
            .into_iter()
            .map(|l| {
                l.parse().map_err(|e: crate::dataset::InvalidDataset| StoreError::Corrupt {
                    column: "datasets.label".into(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Runs `f` inside one write transaction; rolls back on error.
    pub fn batch<T, E>(&self, f: impl FnOnce(&Store) -> std::result::Result<T, E>) -> std::result::Result<T, E>
    where
        E: From<StoreError>,
    {
        let tx = self.conn.unchecked_transaction().map_err(StoreError::from)?;
        let out = f(self)?;
        tx.commit().map_err(StoreError::from)?;
        Ok(out)
    }

    /// Read view pinned to the current committed state.
    pub fn snapshot(&self, dataset: &Dataset) -> Result<Snapshot> {
        self.ensure_dataset(dataset)?;
        Snapshot::open(&self.path, dataset.clone())
    }

    pub fn put_talk(&self, dataset: &Dataset, r: &TalkRecord) -> Result<()> {
        r.check().map_err(StoreError::Integrity)?;
        self.conn.execute(
            "INSERT INTO talks (dataset, video_id, title, published_at, duration_secs, transcript, channel, usable, skip_reason)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)
             ON CONFLICT (dataset, video_id) DO UPDATE SET
               title = excluded.title, published_at = excluded.published_at,
               duration_secs = excluded.duration_secs, transcript = excluded.transcript,
               channel = excluded.channel, usable = excluded.usable, skip_reason = excluded.skip_reason",
            params![
                dataset.label(),
                r.video_id,
                r.title,
                r.published_at.to_rfc3339(),
                r.duration_secs,
                r.transcript,
                r.channel,
                r.usable,
                r.skip_reason.map(|s| s.as_str()),
            ],
        )?;
        Ok(())
    }

    /// Marks a talk unusable. Its annotation, if any, is removed.
    pub fn demote_talk(&self, dataset: &Dataset, video_id: &str, reason: SkipReason) -> Result<()> {
        let n = self.conn.execute(
            "UPDATE talks SET usable = 0, skip_reason = ?3 WHERE dataset = ?1 AND video_id = ?2",
            params![dataset.label(), video_id, reason.as_str()],
        )?;
        if n == 0 {
            return Err(StoreError::Integrity(format!("no talk {video_id} in {dataset}")));
        }
        self.conn.execute(
            &format!("DELETE FROM {} WHERE video_id = ?1", dataset.annotation_table()),
            params![video_id],
        )?;
        Ok(())
    }

    pub fn put_annotation(&self, dataset: &Dataset, a: &TalkAnnotation, run: &RunMetadata) -> Result<()> {
        a.check().map_err(|e| StoreError::Integrity(e.to_string()))?;
        let usable: Option<bool> = self
            .conn
            .query_row(
                "SELECT usable FROM talks WHERE dataset = ?1 AND video_id = ?2",
                params![dataset.label(), a.video_id],
                |r| r.get(0),
            )
            .optional()?;
        match usable {
            None => {
                return Err(StoreError::Integrity(format!(
                    "annotation for unknown talk {} in {dataset}",
                    a.video_id
                )))
            }
            Some(false) => {
                return Err(StoreError::Integrity(format!(
                    "annotation for unusable talk {} in {dataset}",
                    a.video_id
                )))
            }
            Some(true) => {}
        }
        self.conn.execute(
            &format!(
                "INSERT OR REPLACE INTO {} (video_id, title, description, core_value, key_words, qa, sdg_types, run)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                dataset.annotation_table()
            ),
            params![
                a.video_id,
                a.title,
                a.description,
                a.core_value,
                to_json(&a.key_words),
                to_json(&a.qa),
                to_json(&a.sdg_types),
                to_json(run),
            ],
        )?;
        Ok(())
    }

    pub fn put_transcript(&self, t: &RoundtableTranscript) -> Result<()> {
        if t.text.trim().is_empty() {
            return Err(StoreError::Integrity(format!("empty transcript for goal {}", t.goal)));
        }
        let table = t.dataset.annotation_table();
        for id in &t.participant_ids {
            let found: Option<i64> = self
                .conn
                .query_row(
                    &format!("SELECT 1 FROM {table} WHERE video_id = ?1"),
                    params![id],
                    |r| r.get(0),
                )
                .optional()?;
            if found.is_none() {
                return Err(StoreError::Integrity(format!(
                    "participant {id} of goal {} has no annotation",
                    t.goal
                )));
            }
        }
        // Replacing a transcript invalidates any graph extracted from it.
        self.conn.execute(
            &format!(
                "INSERT OR REPLACE INTO {} (goal, participant_ids, transcript, word_count, run)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                t.dataset.forum_table()
            ),
            params![
                t.goal,
                to_json(&t.participant_ids),
                t.text,
                t.word_count as i64,
                to_json(&t.run),
            ],
        )?;
        Ok(())
    }

    pub fn put_graph(&self, g: &KnowledgeGraph, repair: &RepairReport) -> Result<()> {
        g.check().map_err(|e| StoreError::Integrity(e.to_string()))?;
        let n = self.conn.execute(
            &format!(
                "UPDATE {} SET kg_nodes = ?2, kg_links = ?3, kg_repair = ?4, kg_run = ?5 WHERE goal = ?1",
                g.dataset.forum_table()
            ),
            params![
                g.goal,
                to_json(&g.nodes),
                to_json(&g.links),
                to_json(repair),
                g.provenance.as_ref().map(to_json),
            ],
        )?;
        if n == 0 {
            return Err(StoreError::Integrity(format!(
                "graph for goal {} has no transcript in {}",
                g.goal, g.dataset
            )));
        }
        Ok(())
    }

    /// Replaces the dataset's proposals.
    pub fn put_proposals(
        &self,
        dataset: &Dataset,
        proposals: &[NewGoalProposal],
        run: Option<&RunMetadata>,
    ) -> Result<()> {
        let graphs: Vec<u8> = read_graph_goals(&self.conn, dataset)?;
        for p in proposals {
            if let Some(g) = p.source_goals.iter().find(|g| !graphs.contains(g)) {
                return Err(StoreError::Integrity(format!(
                    "proposal {} cites goal {g}, which has no graph in {dataset}",
                    p.number
                )));
            }
        }
        let table = dataset.new_goal_table();
        self.conn.execute(&format!("DELETE FROM {table}"), [])?;
        for p in proposals {
            self.conn.execute(
                &format!(
                    "INSERT INTO {table} (number, title, sub_goals, source_goals, source, rationale, run)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)"
                ),
                params![
                    p.number,
                    p.title,
                    to_json(&p.sub_goals),
                    to_json(&p.source_goals),
                    p.source,
                    p.rationale,
                    run.map(to_json),
                ],
            )?;
        }
        Ok(())
    }

    pub fn put_analysis<T: Serialize>(&self, dataset: &Dataset, name: &str, body: &T) -> Result<()> {
        self.conn.execute(
            "INSERT OR REPLACE INTO analysis (dataset, name, body) VALUES (?1, ?2, ?3)",
            params![dataset.label(), name, to_json(body)],
        )?;
        Ok(())
    }

    pub fn record_failure(&self, dataset: &Dataset, stage: &str, item: &str, reason: &str) -> Result<()> {
        self.conn.execute(
            "INSERT OR REPLACE INTO failures (dataset, stage, item, reason) VALUES (?1, ?2, ?3, ?4)",
            params![dataset.label(), stage, item, reason],
        )?;
        Ok(())
    }

    pub fn clear_failures(&self, dataset: &Dataset, stage: &str) -> Result<()> {
        self.conn.execute(
            "DELETE FROM failures WHERE dataset = ?1 AND stage = ?2",
            params![dataset.label(), stage],
        )?;
        Ok(())
    }

    pub fn clear_failure(&self, dataset: &Dataset, stage: &str, item: &str) -> Result<()> {
        self.conn.execute(
            "DELETE FROM failures WHERE dataset = ?1 AND stage = ?2 AND item = ?3",
            params![dataset.label(), stage, item],
        )?;
        Ok(())
    }

    pub fn talks(&self, dataset: &Dataset) -> Result<Vec<TalkRecord>> {
        read_talks(&self.conn, dataset)
    }

    pub fn annotations(&self, dataset: &Dataset) -> Result<Vec<StoredAnnotation>> {
        read_annotations(&self.conn, dataset)
    }

    pub fn transcripts(&self, dataset: &Dataset) -> Result<Vec<RoundtableTranscript>> {
        read_transcripts(&self.conn, dataset)
    }

    pub fn graphs(&self, dataset: &Dataset) -> Result<Vec<StoredGraph>> {
        read_graphs(&self.conn, dataset)
    }

    pub fn proposals(&self, dataset: &Dataset) -> Result<Vec<NewGoalProposal>> {
        read_proposals(&self.conn, dataset)
    }

    pub fn analysis<T: DeserializeOwned>(&self, dataset: &Dataset, name: &str) -> Result<Option<T>> {
        read_analysis(&self.conn, dataset, name)
    }

    pub fn failures(&self, dataset: &Dataset, stage: &str) -> Result<Vec<Failure>> {
        read_failures(&self.conn, dataset, stage)
    }

    pub fn counts(&self, dataset: &Dataset) -> Result<DatasetCounts> {
        read_counts(&self.conn, dataset)
    }
}

/// Consistent read-only view of one dataset.
pub struct Snapshot {
    conn: Connection,
    dataset: Dataset,
}

impl Snapshot {
    fn open(path: &Path, dataset: Dataset) -> Result<Snapshot> {
        let conn = open_connection(path)?;
        conn.execute_batch("BEGIN DEFERRED")?;
        // The first read fixes the snapshot for the rest of the transaction.
        conn.query_row("SELECT count(*) FROM talks", [], |r| r.get::<_, i64>(0))?;
        Ok(Snapshot { conn, dataset })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn talks(&self) -> Result<Vec<TalkRecord>> {
        read_talks(&self.conn, &self.dataset)
    }

    pub fn annotations(&self) -> Result<Vec<StoredAnnotation>> {
        read_annotations(&self.conn, &self.dataset)
    }

    pub fn transcripts(&self) -> Result<Vec<RoundtableTranscript>> {
        read_transcripts(&self.conn, &self.dataset)
    }

    pub fn graphs(&self) -> Result<Vec<StoredGraph>> {
        read_graphs(&self.conn, &self.dataset)
    }

    pub fn proposals(&self) -> Result<Vec<NewGoalProposal>> {
        read_proposals(&self.conn, &self.dataset)
    }

    pub fn analysis<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        read_analysis(&self.conn, &self.dataset, name)
    }

    pub fn counts(&self) -> Result<DatasetCounts> {
        read_counts(&self.conn, &self.dataset)
    }
}

fn read_talks(conn: &Connection, d: &Dataset) -> Result<Vec<TalkRecord>> {
    let mut stmt = conn.prepare(
        "SELECT video_id, title, published_at, duration_secs, transcript, channel, usable, skip_reason
         FROM talks WHERE dataset = ?1 ORDER BY video_id",
    )?;
    let rows = stmt.query_map(params![d.label()], |r| {
        Ok((
            r.get::<_, String>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, String>(2)?,
            r.get::<_, u32>(3)?,
            r.get::<_, Option<String>>(4)?,
            r.get::<_, String>(5)?,
            r.get::<_, bool>(6)?,
            r.get::<_, Option<String>>(7)?,
        ))
    })?;
    let mut out = Vec::new();
    for row in rows {
        let (video_id, title, published, duration_secs, transcript, channel, usable, skip) = row?;
        let published_at = DateTime::parse_from_rfc3339(&published)
            .map_err(|e| StoreError::Corrupt {
                column: "talks.published_at".into(),
                message: e.to_string(),
            })?
            .with_timezone(&Utc);
        let skip_reason = skip
            .map(|s| {
                s.parse::<SkipReason>().map_err(|message| StoreError::Corrupt {
                    column: "talks.skip_reason".into(),
                    message,
                })
            })
            .transpose()?;
        out.push(TalkRecord {
            video_id,
            title,
            published_at,
            duration_secs,
            transcript,
            channel,
            usable,
            skip_reason,
        });
    }
    Ok(out)
}

fn read_annotations(conn: &Connection, d: &Dataset) -> Result<Vec<StoredAnnotation>> {
    let mut stmt = conn.prepare(&format!(
        "SELECT video_id, title, description, core_value, key_words, qa, sdg_types, run
         FROM {} ORDER BY video_id",
        d.annotation_table()
    ))?;
    let rows = stmt.query_map([], |r| {
        Ok((
            r.get::<_, String>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, String>(2)?,
            r.get::<_, String>(3)?,
            r.get::<_, String>(4)?,
            r.get::<_, String>(5)?,
            r.get::<_, String>(6)?,
            r.get::<_, String>(7)?,
        ))
    })?;
    let mut out = Vec::new();
    for row in rows {
        let (video_id, title, description, core_value, kw, qa, tags, run) = row?;
        out.push(StoredAnnotation {
            annotation: TalkAnnotation {
                video_id,
                title,
                description,
                core_value,
                key_words: from_json("key_words", &kw)?,
                qa: from_json("qa", &qa)?,
                sdg_types: from_json("sdg_types", &tags)?,
            },
            run: from_json("run", &run)?,
        });
    }
    Ok(out)
}

fn read_transcripts(conn: &Connection, d: &Dataset) -> Result<Vec<RoundtableTranscript>> {
    let mut stmt = conn.prepare(&format!(
        "SELECT goal, participant_ids, transcript, word_count, run FROM {} ORDER BY goal",
        d.forum_table()
    ))?;
    let rows = stmt.query_map([], |r| {
        Ok((
            r.get::<_, u8>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, String>(2)?,
            r.get::<_, i64>(3)?,
            r.get::<_, String>(4)?,
        ))
    })?;
    let mut out = Vec::new();
    for row in rows {
        let (goal, ids, text, word_count, run) = row?;
        out.push(RoundtableTranscript {
            goal,
            dataset: d.clone(),
            participant_ids: from_json("participant_ids", &ids)?,
            text,
            word_count: word_count as usize,
            run: from_json("run", &run)?,
        });
    }
    Ok(out)
}

fn read_graph_goals(conn: &Connection, d: &Dataset) -> Result<Vec<u8>> {
    let mut stmt = conn.prepare(&format!(
        "SELECT goal FROM {} WHERE kg_nodes IS NOT NULL ORDER BY goal",
        d.forum_table()
    ))?;
    let goals = stmt
        .query_map([], |r| r.get::<_, u8>(0))?
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(goals)
}

fn read_graphs(conn: &Connection, d: &Dataset) -> Result<Vec<StoredGraph>> {
    let mut stmt = conn.prepare(&format!(
        "SELECT goal, kg_nodes, kg_links, kg_repair, kg_run FROM {} WHERE kg_nodes IS NOT NULL ORDER BY goal",
        d.forum_table()
    ))?;
    let rows = stmt.query_map([], |r| {
        Ok((
            r.get::<_, u8>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, Option<String>>(2)?,
            r.get::<_, Option<String>>(3)?,
            r.get::<_, Option<String>>(4)?,
        ))
    })?;
    let mut out = Vec::new();
    for row in rows {
        let (goal, nodes, links, repair, run) = row?;
        out.push(StoredGraph {
            graph: KnowledgeGraph {
                goal,
                dataset: d.clone(),
                nodes: from_json("kg_nodes", &nodes)?,
                links: from_json("kg_links", links.as_deref().unwrap_or("[]"))?,
                provenance: run.map(|r| from_json("kg_run", &r)).transpose()?,
            },
            repair: match repair {
                Some(r) => from_json("kg_repair", &r)?,
                None => RepairReport::default(),
            },
        });
    }
    Ok(out)
}

fn read_proposals(conn: &Connection, d: &Dataset) -> Result<Vec<NewGoalProposal>> {
    let mut stmt = conn.prepare(&format!(
        "SELECT number, title, sub_goals, source_goals, source, rationale FROM {} ORDER BY number",
        d.new_goal_table()
    ))?;
    let rows = stmt.query_map([], |r| {
        Ok((
            r.get::<_, u32>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, String>(2)?,
            r.get::<_, String>(3)?,
            r.get::<_, String>(4)?,
            r.get::<_, String>(5)?,
        ))
    })?;
    let mut out = Vec::new();
    for row in rows {
        let (number, title, subs, sources, source, rationale) = row?;
        out.push(NewGoalProposal {
            number,
            title,
            sub_goals: from_json("sub_goals", &subs)?,
            source_goals: from_json("source_goals", &sources)?,
            source,
            rationale,
        });
    }
    Ok(out)
}

fn read_analysis<T: DeserializeOwned>(conn: &Connection, d: &Dataset, name: &str) -> Result<Option<T>> {
    let body: Option<String> = conn
        .query_row(
            "SELECT body FROM analysis WHERE dataset = ?1 AND name = ?2",
            params![d.label(), name],
            |r| r.get(0),
        )
        .optional()?;
    body.map(|b| from_json(name, &b)).transpose()
}

fn read_failures(conn: &Connection, d: &Dataset, stage: &str) -> Result<Vec<Failure>> {
    let mut stmt = conn.prepare(
        "SELECT stage, item, reason FROM failures WHERE dataset = ?1 AND stage = ?2 ORDER BY item",
    )?;
    let rows = stmt.query_map(params![d.label(), stage], |r| {
        Ok(Failure {
            stage: r.get(0)?,
            item: r.get(1)?,
            reason: r.get(2)?,
        })
    })?;
    Ok(rows.collect::<std::result::Result<Vec<_>, _>>()?)
}

fn read_counts(conn: &Connection, d: &Dataset) -> Result<DatasetCounts> {
    let count = |sql: String| -> Result<usize> {
        Ok(conn.query_row(&sql, params![d.label()], |r| r.get::<_, i64>(0))? as usize)
    };
    let count_table = |sql: String| -> Result<usize> {
        Ok(conn.query_row(&sql, [], |r| r.get::<_, i64>(0))? as usize)
    };
    Ok(DatasetCounts {
        talks: count("SELECT count(*) FROM talks WHERE dataset = ?1".into())?,
        usable_talks: count("SELECT count(*) FROM talks WHERE dataset = ?1 AND usable = 1".into())?,
        annotations: count_table(format!("SELECT count(*) FROM {}", d.annotation_table()))?,
        transcripts: count_table(format!("SELECT count(*) FROM {}", d.forum_table()))?,
        graphs: count_table(format!(
            "SELECT count(*) FROM {} WHERE kg_nodes IS NOT NULL",
            d.forum_table()
        ))?,
        proposals: count_table(format!("SELECT count(*) FROM {}", d.new_goal_table()))?,
    })
}
