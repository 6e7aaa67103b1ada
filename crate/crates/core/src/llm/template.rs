use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("slot `{0}` has no value")]
    MissingSlot(String),
    #[error("slot `{0}` is not used by the template")]
    UnknownSlot(String),
    #[error("unterminated slot marker at byte {0}")]
    Unterminated(usize),
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateName {
    Annotate,
    Roundtable,
    KgExtract,
    NewGoals,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] = [
        TemplateName::Annotate,
        TemplateName::Roundtable,
        TemplateName::KgExtract,
        TemplateName::NewGoals,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::Annotate => "annotate.txt",
            TemplateName::Roundtable => "roundtable.txt",
            TemplateName::KgExtract => "kg_extract.txt",
            TemplateName::NewGoals => "new_goals.txt",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateName::Annotate => include_str!("../../prompts/annotate.txt"),
            TemplateName::Roundtable => include_str!("../../prompts/roundtable.txt"),
            TemplateName::KgExtract => include_str!("../../prompts/kg_extract.txt"),
            TemplateName::NewGoals => include_str!("../../prompts/new_goals.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Text(usize, usize),
    Slot(usize, usize),
}

/// A prompt body with `{{name}}` slots.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    name: TemplateName,
    body: String,
    slots: BTreeSet<String>,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn parse(name: TemplateName, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let mut pieces = Vec::new();
        let mut slots = BTreeSet::new();
        let mut pos = 0;
        while let Some(rel) = body[pos..].find("{{") {
            let open = pos + rel;
            let close = body[open + 2..]
                .find("}}")
                .map(|c| open + 2 + c)
                .ok_or(TemplateError::Unterminated(open))?;
            let slot = &body[open + 2..close];
            let valid = !slot.is_empty()
                && slot
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if !valid {
                return Err(TemplateError::Unterminated(open));
            }
            if open > pos {
                pieces.push(Piece::Text(pos, open));
            }
            pieces.push(Piece::Slot(open + 2, close));
            slots.insert(slot.to_string());
            pos = close + 2;
        }
        if pos < body.len() {
            pieces.push(Piece::Text(pos, body.len()));
        }
        Ok(PromptTemplate {
            name,
            body,
            slots,
            pieces,
        })
    }

    /// The template shipped with the crate.
    pub fn builtin(name: TemplateName) -> Self {
        Self::parse(name, name.builtin_body()).expect("bundled template is well formed")
    }

    pub fn name(&self) -> TemplateName {
        self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn slots(&self) -> &BTreeSet<String> {
        &self.slots
    }

    /// First paragraph of the body: the instruction text without the format
    /// note and data sections.
    pub fn instruction(&self) -> &str {
        self.body.split("\n\n").next().unwrap_or("")
    }

    /// Substitutes every slot in one pass. Slot values are inserted verbatim,
    /// so a value containing `{{x}}` is never expanded again.
    pub fn render<K, V>(&self, values: &BTreeMap<K, V>) -> Result<String, TemplateError>
    where
        K: AsRef<str> + Ord,
        V: AsRef<str>,
    {
        let lookup: BTreeMap<&str, &str> = values
            .iter()
            .map(|(k, v)| (k.as_ref(), v.as_ref()))
            .collect();
        if let Some(unknown) = lookup.keys().find(|k| !self.slots.contains(**k)) {
            return Err(TemplateError::UnknownSlot(unknown.to_string()));
        }
        if let Some(missing) = self.slots.iter().find(|s| !lookup.contains_key(s.as_str())) {
            return Err(TemplateError::MissingSlot(missing.clone()));
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match *piece {
                Piece::Text(a, b) => out.push_str(&self.body[a..b]),
                Piece::Slot(a, b) => out.push_str(lookup[&self.body[a..b]]),
            }
        }
        Ok(out)
    }

    /// Convenience wrapper for literal slot lists.
    pub fn render_pairs(&self, pairs: &[(&str, &str)]) -> Result<String, TemplateError> {
        let map: BTreeMap<&str, &str> = pairs.iter().copied().collect();
        self.render(&map)
    }
}

/// The four templates used by the pipeline.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub annotate: PromptTemplate,
    pub roundtable: PromptTemplate,
    pub kg_extract: PromptTemplate,
    pub new_goals: PromptTemplate,
}

impl PromptSet {
    pub fn builtin() -> Self {
        PromptSet {
            annotate: PromptTemplate::builtin(TemplateName::Annotate),
            roundtable: PromptTemplate::builtin(TemplateName::Roundtable),
            kg_extract: PromptTemplate::builtin(TemplateName::KgExtract),
            new_goals: PromptTemplate::builtin(TemplateName::NewGoals),
        }
    }

    /// Loads templates from `dir`, falling back to the built-in copy for any
    /// file that is absent. Files are read as exact bytes.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let load = |name: TemplateName| -> Result<PromptTemplate, TemplateError> {
            let path = dir.join(name.file_name());
            if !path.exists() {
                return Ok(PromptTemplate::builtin(name));
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            PromptTemplate::parse(name, body)
        };
        Ok(PromptSet {
            annotate: load(TemplateName::Annotate)?,
            roundtable: load(TemplateName::Roundtable)?,
            kg_extract: load(TemplateName::KgExtract)?,
            new_goals: load(TemplateName::NewGoals)?,
        })
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        match name {
            TemplateName::Annotate => &self.annotate,
            TemplateName::Roundtable => &self.roundtable,
            TemplateName::KgExtract => &self.kg_extract,
            TemplateName::NewGoals => &self.new_goals,
        }
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Hex SHA-256 of a rendered prompt, stored with every generated artifact.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_slots() {
        let set = PromptSet::builtin();
        let names = |t: &PromptTemplate| t.slots().iter().cloned().collect::<Vec<_>>();
        assert_eq!(names(&set.annotate), ["tedtalk_data"]);
        assert_eq!(names(&set.roundtable), ["bg_box", "kg_box", "n", "type"]);
        assert_eq!(names(&set.kg_extract), ["conversation_script", "kg_guide"]);
        assert_eq!(names(&set.new_goals), ["kg_data"]);
    }

    #[test]
    fn roundtable_render_contains_goal_and_count() {
        let t = PromptTemplate::builtin(TemplateName::Roundtable);
        let out = t
            .render_pairs(&[("type", "1"), ("n", "5"), ("kg_box", ""), ("bg_box", "")])
            .unwrap();
        assert!(out.contains("【SDGs Goal 1】"));
        assert!(out.contains("totaling 5 participants"));
        assert!(!out.contains("{{"));
    }

    #[test]
    fn kg_extract_with_empty_script_keeps_static_text() {
        let t = PromptTemplate::builtin(TemplateName::KgExtract);
        let out = t
            .render_pairs(&[("kg_guide", "g"), ("conversation_script", "")])
            .unwrap();
        assert!(out.contains("must definitively exist within the nodes"));
    }

    #[test]
    fn empty_slot_values_only_remove_markers() {
        let t = PromptTemplate::builtin(TemplateName::Annotate);
        let out = t.render_pairs(&[("tedtalk_data", "")]).unwrap();
        assert_eq!(out, t.body().replace("{{tedtalk_data}}", ""));
    }

    #[test]
    fn missing_and_unknown_slots() {
        let t = PromptTemplate::parse(TemplateName::NewGoals, "a {{x}} b {{y}}").unwrap();
        assert_eq!(
            t.render_pairs(&[("x", "1")]),
            Err(TemplateError::MissingSlot("y".into()))
        );
        assert_eq!(
            t.render_pairs(&[("x", "1"), ("y", "2"), ("z", "3")]),
            Err(TemplateError::UnknownSlot("z".into()))
        );
    }

    #[test]
    fn values_are_not_re_expanded() {
        let t = PromptTemplate::parse(TemplateName::NewGoals, "<{{x}}|{{y}}>").unwrap();
        let out = t.render_pairs(&[("x", "{{y}}"), ("y", "2")]).unwrap();
        assert_eq!(out, "<{{y}}|2>");
    }

    #[test]
    fn unterminated_marker_is_rejected() {
        assert!(PromptTemplate::parse(TemplateName::Annotate, "a {{x b").is_err());
    }

    #[test]
    fn from_dir_overrides_and_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("annotate.txt"), "Custom {{tedtalk_data}}").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.annotate.body(), "Custom {{tedtalk_data}}");
        assert_eq!(
            set.roundtable.body(),
            PromptTemplate::builtin(TemplateName::Roundtable).body()
        );
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
