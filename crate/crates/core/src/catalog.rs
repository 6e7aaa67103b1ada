//! The 17-goal catalog: goals, targets and indicators from the official
//! indicator list, merged with per-goal search keywords and the historical
//! count of indicator revisions.
//!
//! Sources are delimited tables with a header row. See `docs/data-formats.md`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::GOAL_COUNT;

const BUNDLED_INDICATORS: &str = include_str!("../data/catalog/sdg_indicators.csv");
const BUNDLED_KEYWORDS: &str = include_str!("../data/catalog/sdg_keywords.csv");
const BUNDLED_CHANGES: &str = include_str!("../data/catalog/indicator_changes.csv");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("goal {0} is missing from the goal source")]
    MissingGoal(u8),
    #[error("{source_name} line {line}, field `{field}`: {message}")]
    Parse {
        source_name: &'static str,
        line: u64,
        field: String,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdgIndicator {
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdgTarget {
    pub code: String,
    pub description: String,
    pub indicators: Vec<SdgIndicator>,
}

impl SdgTarget {
    /// Goal number encoded in the target code ("17.17" -> 17).
    pub fn goal_number(&self) -> Option<u8> {
        goal_of_code(&self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdgGoal {
    pub number: u8,
    pub title: String,
    pub targets: Vec<SdgTarget>,
    pub keywords: Vec<String>,
    pub indicator_change_count: u32,
}

impl SdgGoal {
    /// "Goal 6: Clean Water and Sanitation"
    pub fn label(&self) -> String {
        format!("Goal {}: {}", self.number, self.title)
    }

    /// Goal background used for roundtable topics and retrieval profiles:
    /// title, target texts and keywords.
    pub fn background(&self) -> String {
        let mut out = format!("SDGs Goal {}: {}\n", self.number, self.title);
        for target in &self.targets {
            out.push_str(&format!("Target {}: {}\n", target.code, target.description));
        }
        if !self.keywords.is_empty() {
            out.push_str("Keywords: ");
            out.push_str(&self.keywords.join(", "));
            out.push('\n');
        }
        out
    }
}

/// Parses the goal number out of a target or indicator code.
pub fn goal_of_code(code: &str) -> Option<u8> {
    let (head, rest) = code.split_once('.')?;
    if rest.is_empty() {
        return None;
    }
    let n: u8 = head.trim().parse().ok()?;
    (1..=GOAL_COUNT as u8).contains(&n).then_some(n)
}

/// Immutable after load; share it freely across threads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    goals: Vec<SdgGoal>,
    has_change_table: bool,
}

#[derive(Debug, Deserialize)]
struct IndicatorRow {
    goal: String,
    goal_title: String,
    target: String,
    target_text: String,
    indicator: String,
    indicator_text: String,
}

#[derive(Debug, Deserialize)]
struct KeywordRow {
    goal: String,
    keyword: String,
}

#[derive(Debug, Deserialize)]
struct ChangeRow {
    goal: String,
    changes: String,
}

fn csv_error(source_name: &'static str, err: csv::Error) -> CatalogError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let field = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err
            .field()
            .map(|f| format!("column {}", f + 1))
            .unwrap_or_else(|| "row".to_string()),
        _ => "row".to_string(),
    };
    CatalogError::Parse {
        source_name,
        line,
        field,
        message: err.to_string(),
    }
}

fn parse_goal(source_name: &'static str, line: u64, raw: &str) -> Result<u8, CatalogError> {
    raw.trim()
        .parse::<u8>()
        .ok()
        .filter(|n| (1..=GOAL_COUNT as u8).contains(n))
        .ok_or_else(|| CatalogError::Parse {
            source_name,
            line,
            field: "goal".into(),
            message: format!("{raw:?} is not a goal number between 1 and 17"),
        })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Lowercase, trim, drop empties, deduplicate keeping first occurrence.
pub fn normalize_keywords<I, S>(raw: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|k| k.as_ref().trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

/// Builds the catalog from the indicator table and the keyword table.
pub fn load_catalog(goal_source: &str, keyword_source: &str) -> Result<Catalog, CatalogError> {
    const SRC: &str = "goal source";
    let mut titles: BTreeMap<u8, String> = BTreeMap::new();
    let mut targets: BTreeMap<u8, Vec<SdgTarget>> = BTreeMap::new();

    let mut rdr = reader(goal_source);
    for row in rdr.deserialize::<IndicatorRow>() {
        let row = row.map_err(|e| csv_error(SRC, e))?;
        let line = 0;
        let goal = parse_goal(SRC, line, &row.goal)?;
        let fail = |field: &str, message: String| CatalogError::Parse {
            source_name: SRC,
            line,
            field: field.to_string(),
            message: format!("goal {goal}: {message}"),
        };
        if row.goal_title.is_empty() {
            return Err(fail("goal_title", "empty title".into()));
        }
        match titles.get(&goal) {
            Some(t) if *t != row.goal_title => {
                return Err(fail(
                    "goal_title",
                    format!("conflicting titles {t:?} and {:?}", row.goal_title),
                ))
            }
            Some(_) => {}
            None => {
                titles.insert(goal, row.goal_title.clone());
            }
        }
        if goal_of_code(&row.target) != Some(goal) {
            return Err(fail(
                "target",
                format!("target code {:?} does not start with \"{goal}.\"", row.target),
            ));
        }
        let list = targets.entry(goal).or_default();
        let target = match list.iter_mut().find(|t| t.code == row.target) {
            Some(t) => t,
            None => {
                list.push(SdgTarget {
                    code: row.target.clone(),
                    description: row.target_text.clone(),
                    indicators: Vec::new(),
                });
                list.last_mut().expect("just pushed")
            }
        };
        if !row.indicator.is_empty() {
            if !row.indicator.starts_with(&format!("{}.", target.code)) {
                return Err(fail(
                    "indicator",
                    format!(
                        "indicator code {:?} does not start with target code {:?}",
                        row.indicator, target.code
                    ),
                ));
            }
            target.indicators.push(SdgIndicator {
                code: row.indicator,
                description: row.indicator_text,
            });
        }
    }

    let mut keywords: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    if !keyword_source.trim().is_empty() {
        let mut rdr = reader(keyword_source);
        for row in rdr.deserialize::<KeywordRow>() {
            let row = row.map_err(|e| csv_error("keyword source", e))?;
            let goal = parse_goal("keyword source", 0, &row.goal)?;
            keywords.entry(goal).or_default().push(row.keyword);
        }
    }

    let mut goals = Vec::with_capacity(GOAL_COUNT);
    for number in crate::goal_numbers() {
        let title = titles.remove(&number).ok_or(CatalogError::MissingGoal(number))?;
        let targets = targets.remove(&number).unwrap_or_default();
        if targets.is_empty() {
            return Err(CatalogError::MissingGoal(number));
        }
        goals.push(SdgGoal {
            number,
            title,
            targets,
            keywords: normalize_keywords(keywords.remove(&number).unwrap_or_default()),
            indicator_change_count: 0,
        });
    }
    Ok(Catalog {
        goals,
        has_change_table: false,
    })
}

impl Catalog {
    /// The catalog shipped with the crate, including the change-count table.
    pub fn bundled() -> Catalog {
        load_catalog(BUNDLED_INDICATORS, BUNDLED_KEYWORDS)
            .and_then(|c| c.with_change_counts(BUNDLED_CHANGES))
            .expect("bundled catalog is valid")
    }

    pub fn from_paths(
        goals: &Path,
        keywords: &Path,
        changes: Option<&Path>,
    ) -> Result<Catalog, CatalogError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| CatalogError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let catalog = load_catalog(&read(goals)?, &read(keywords)?)?;
        match changes {
            Some(path) => catalog.with_change_counts(&read(path)?),
            None => Ok(catalog),
        }
    }

    /// Attaches the indicator-change reference table (goal, changes).
    pub fn with_change_counts(mut self, table: &str) -> Result<Catalog, CatalogError> {
        const SRC: &str = "change table";
        let mut counts = BTreeMap::new();
        for row in reader(table).deserialize::<ChangeRow>() {
            let row = row.map_err(|e| csv_error(SRC, e))?;
            let goal = parse_goal(SRC, 0, &row.goal)?;
            let n: u32 = row.changes.parse().map_err(|_| CatalogError::Parse {
                source_name: SRC,
                line: 0,
                field: "changes".into(),
                message: format!("goal {goal}: {:?} is not a non-negative integer", row.changes),
            })?;
            counts.insert(goal, n);
        }
        for goal in &mut self.goals {
            goal.indicator_change_count = *counts
                .get(&goal.number)
                .ok_or(CatalogError::MissingGoal(goal.number))?;
        }
        self.has_change_table = true;
        Ok(self)
    }

    pub fn goals(&self) -> &[SdgGoal] {
        &self.goals
    }

    pub fn goal(&self, number: u8) -> Option<&SdgGoal> {
        number
            .checked_sub(1)
            .and_then(|i| self.goals.get(usize::from(i)))
    }

    pub fn contains(&self, number: u8) -> bool {
        self.goal(number).is_some()
    }

    /// Indicator-change counts per goal, when the reference table was loaded.
    pub fn change_counts(&self) -> Option<BTreeMap<u8, u32>> {
        self.has_change_table.then(|| {
            self.goals
                .iter()
                .map(|g| (g.number, g.indicator_change_count))
                .collect()
        })
    }
}
