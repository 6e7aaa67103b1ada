use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A labelled dataset. The two built-in labels keep their historical table
/// names (`trans`/`trans2`, `forum`/`forum2`, `new_goal`/`new_goal2`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Dataset {
    Preliminary,
    Formal,
    Custom(String),
}

#[derive(Debug, thiserror::Error)]
#[error("invalid dataset label {0:?}: use lowercase letters, digits and underscores")]
pub struct InvalidDataset(pub String);

impl Dataset {
    pub fn label(&self) -> &str {
        match self {
            Dataset::Preliminary => "preliminary",
            Dataset::Formal => "formal",
            Dataset::Custom(label) => label,
        }
    }

    /// Suffix appended to every per-dataset table name.
    pub fn table_suffix(&self) -> String {
        match self {
            Dataset::Preliminary => String::new(),
            Dataset::Formal => "2".to_string(),
            Dataset::Custom(label) => format!("_{label}"),
        }
    }

    pub fn annotation_table(&self) -> String {
        format!("trans{}", self.table_suffix())
    }

    pub fn forum_table(&self) -> String {
        format!("forum{}", self.table_suffix())
    }

    pub fn new_goal_table(&self) -> String {
        format!("new_goal{}", self.table_suffix())
    }
}

impl FromStr for Dataset {
    type Err = InvalidDataset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "preliminary" => Ok(Dataset::Preliminary),
            "formal" => Ok(Dataset::Formal),
            other => {
                let valid = !other.is_empty()
                    && other.len() <= 48
                    && other
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
                if valid {
                    Ok(Dataset::Custom(other.to_string()))
                } else {
                    Err(InvalidDataset(other.to_string()))
                }
            }
        }
    }
}

impl TryFrom<String> for Dataset {
    type Error = InvalidDataset;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Dataset> for String {
    fn from(value: Dataset) -> Self {
        value.label().to_string()
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_labels_keep_historical_tables() {
        assert_eq!(Dataset::Preliminary.annotation_table(), "trans");
        assert_eq!(Dataset::Formal.annotation_table(), "trans2");
        assert_eq!(Dataset::Formal.forum_table(), "forum2");
        assert_eq!(Dataset::Preliminary.new_goal_table(), "new_goal");
    }

    #[test]
    fn custom_labels_are_sanitised() {
        let d: Dataset = "pilot_2025".parse().unwrap();
        assert_eq!(d.annotation_table(), "trans_pilot_2025");
        assert!("Bad Label".parse::<Dataset>().is_err());
        assert!("x; drop table".parse::<Dataset>().is_err());
        assert!("".parse::<Dataset>().is_err());
    }
}
