//! Decoding of model output into typed documents.
//!
//! Models are asked for a fenced JSON block. The decoder accepts the block
//! with or without surrounding prose, falls back to the first balanced
//! object, and is strict about field names.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum StructuredError {
    #[error("no structured document found: {0}")]
    Unparseable(String),
    #[error("schema violation at `{path}`: {reason}")]
    SchemaViolation { path: String, reason: String },
}

impl StructuredError {
    pub fn violation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        StructuredError::SchemaViolation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Talk summary as returned by the annotation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    pub title: String,
    pub description: String,
    pub core_value: String,
    pub key_words: Vec<String>,
    pub qa: Vec<QaPair>,
    /// Kept signed so out-of-range tags reach validation instead of failing
    /// at the decoder.
    pub sdg_types: Vec<i64>,
}

impl AnnotationDoc {
    /// Field rules that serde cannot express.
    pub fn validate(&self) -> Result<(), StructuredError> {
        if self.qa.len() != 5 {
            return Err(StructuredError::violation(
                "qa",
                format!("expected exactly 5 question/answer pairs, found {}", self.qa.len()),
            ));
        }
        if self.sdg_types.is_empty() {
            return Err(StructuredError::violation("sdg_types", "no goal tags"));
        }
        if let Some((i, t)) = self
            .sdg_types
            .iter()
            .enumerate()
            .find(|(_, t)| !(1..=17).contains(*t))
        {
            return Err(StructuredError::violation(
                format!("sdg_types[{i}]"),
                format!("{t} is outside 1..17"),
            ));
        }
        if self.key_words.iter().all(|k| k.trim().is_empty()) {
            return Err(StructuredError::violation("key_words", "no keywords"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: String,
    pub order: i64,
    #[serde(default)]
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub relation: String,
}

/// Graph document as returned by the extraction prompt. Referential checks
/// happen later, in the graph builder.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgDoc {
    pub nodes: Vec<RawNode>,
    #[serde(default)]
    pub links: Vec<RawLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relationship {
    pub goals: Vec<i64>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIndicator {
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSubGoal {
    pub code: String,
    pub description: String,
    pub indicators: Vec<RawIndicator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProposal {
    /// "Goal 18: Title"
    pub goal: String,
    pub sub_goals: Vec<RawSubGoal>,
    pub source: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewGoalsDoc {
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    pub results: Vec<RawProposal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocKind {
    AnnotationDoc,
    KgDoc,
    NewGoalsDoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedDoc {
    Annotation(AnnotationDoc),
    Kg(KgDoc),
    NewGoals(NewGoalsDoc),
}

/// Parses `raw` as the requested document kind.
pub fn parse_structured(raw: &str, kind: DocKind) -> Result<ParsedDoc, StructuredError> {
    Ok(match kind {
        DocKind::AnnotationDoc => ParsedDoc::Annotation(parse_as(raw)?),
        DocKind::KgDoc => ParsedDoc::Kg(parse_as(raw)?),
        DocKind::NewGoalsDoc => ParsedDoc::NewGoals(parse_as(raw)?),
    })
}

/// Typed variant of [`parse_structured`].
pub fn parse_as<T: DeserializeOwned>(raw: &str) -> Result<T, StructuredError> {
    let json = extract_json(raw)?;
    let mut de = serde_json::Deserializer::from_str(json);
    match serde_path_to_error::deserialize::<_, T>(&mut de) {
        Ok(v) => {
            de.end()
                .map_err(|e| StructuredError::Unparseable(e.to_string()))?;
            Ok(v)
        }
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            if inner.classify() == serde_json::error::Category::Data {
                Err(StructuredError::SchemaViolation {
                    path,
                    reason: inner.to_string(),
                })
            } else {
                Err(StructuredError::Unparseable(inner.to_string()))
            }
        }
    }
}

/// Locates the JSON object inside model output: a ```json fence first, then
/// any fence holding an object, then the first balanced `{...}` span.
pub fn extract_json(raw: &str) -> Result<&str, StructuredError> {
    if raw.trim().is_empty() {
        return Err(StructuredError::Unparseable("empty response".into()));
    }
    let mut fallback_fence = None;
    let mut rest = raw;
    let mut offset = 0;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let line_end = after.find('\n').unwrap_or(after.len());
        let lang = after[..line_end].trim();
        let body_start = (line_end + 1).min(after.len());
        // Closing fences sit on their own line; prefer that so backticks
        // inside string values do not end the block early.
        let tail = &after[body_start..];
        let Some(close) = tail.find("\n```").map(|c| c + 1).or_else(|| tail.find("```")) else {
            break;
        };
        let body = after[body_start..body_start + close].trim();
        if lang.eq_ignore_ascii_case("json") && body.starts_with('{') {
            return Ok(body);
        }
        if fallback_fence.is_none() && body.starts_with('{') {
            fallback_fence = Some(body);
        }
        let consumed = open + 3 + body_start + close + 3;
        offset += consumed;
        rest = &raw[offset..];
    }
    if let Some(body) = fallback_fence {
        return Ok(body);
    }
    balanced_object(raw)
        .ok_or_else(|| StructuredError::Unparseable("no JSON object in response".into()))
}

fn balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Serialises a document the way providers are asked to return it.
pub fn to_fenced<T: Serialize>(doc: &T) -> String {
    let body = serde_json::to_string_pretty(doc).expect("documents always serialise");
    format!("```json\n{body}\n```\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn annotation() -> AnnotationDoc {
        AnnotationDoc {
            title: "Water for all".into(),
            description: "d".into(),
            core_value: "c".into(),
            key_words: vec!["water".into()],
            qa: (0..5)
                .map(|i| QaPair {
                    question: format!("q{i}"),
                    answer: format!("a{i}"),
                })
                .collect(),
            sdg_types: vec![6, 3],
        }
    }

    #[test]
    fn kg_doc_parses() {
        let raw = r#"{"nodes":[{"id":"A","order":1,"details":"x"}],"links":[{"source":"A","target":"A","relation":"r"}]}"#;
        let doc: KgDoc = parse_as(raw).unwrap();
        assert_eq!(doc.nodes.len(), 1);
        assert_eq!(doc.links.len(), 1);
    }

    #[test]
    fn dangling_link_still_parses() {
        let raw = r#"{"nodes":[{"id":"A","order":1,"details":""}],"links":[{"source":"A","target":"Z","relation":"r"}]}"#;
        let doc: KgDoc = parse_as(raw).unwrap();
        assert_eq!(doc.links[0].target, "Z");
    }

    #[test]
    fn prose_wrapped_fence_equals_bare() {
        let bare = serde_json::to_string(&annotation()).unwrap();
        let wrapped = format!("Sure! Here is the summary.\n\n```json\n{bare}\n```\nLet me know.");
        assert_eq!(
            parse_as::<AnnotationDoc>(&bare).unwrap(),
            parse_as::<AnnotationDoc>(&wrapped).unwrap()
        );
    }

    #[test]
    fn unlabeled_fence_and_bare_braces() {
        let bare = serde_json::to_string(&annotation()).unwrap();
        let fenced = format!("```\n{bare}\n```");
        let prose = format!("The answer is {bare} as requested.");
        assert_eq!(parse_as::<AnnotationDoc>(&fenced).unwrap(), annotation());
        assert_eq!(parse_as::<AnnotationDoc>(&prose).unwrap(), annotation());
    }

    #[test]
    fn unknown_field_is_a_schema_violation_with_path() {
        let raw = r#"{"nodes":[{"id":"A","order":1,"detail":"typo"}],"links":[]}"#;
        match parse_as::<KgDoc>(raw).unwrap_err() {
            StructuredError::SchemaViolation { path, .. } => assert_eq!(path, "nodes[0].detail"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let raw = r#"{"nodes":[{"id":"A","order":"first"}]}"#;
        match parse_as::<KgDoc>(raw).unwrap_err() {
            StructuredError::SchemaViolation { path, .. } => assert_eq!(path, "nodes[0].order"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn garbage_is_unparseable() {
        assert!(matches!(
            parse_as::<KgDoc>("I cannot help with that."),
            Err(StructuredError::Unparseable(_))
        ));
        assert!(matches!(
            parse_as::<KgDoc>("{\"nodes\": [ "),
            Err(StructuredError::Unparseable(_))
        ));
        assert!(matches!(
            parse_as::<KgDoc>("   "),
            Err(StructuredError::Unparseable(_))
        ));
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_scan() {
        let raw = r#"note {"nodes":[{"id":"a } b","order":1,"details":"{"}],"links":[]} tail }"#;
        let doc: KgDoc = parse_as(raw).unwrap();
        assert_eq!(doc.nodes[0].id, "a } b");
    }

    #[test]
    fn annotation_validation_rules() {
        let mut doc = annotation();
        assert!(doc.validate().is_ok());
        doc.qa.pop();
        assert_eq!(
            doc.validate().unwrap_err(),
            StructuredError::violation("qa", "expected exactly 5 question/answer pairs, found 4")
        );
        let mut doc = annotation();
        doc.sdg_types = vec![6, 18];
        match doc.validate().unwrap_err() {
            StructuredError::SchemaViolation { path, .. } => assert_eq!(path, "sdg_types[1]"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn parse_structured_dispatches() {
        let raw = to_fenced(&KgDoc::default());
        assert!(matches!(
            parse_structured(&raw, DocKind::KgDoc),
            Ok(ParsedDoc::Kg(_))
        ));
        assert!(parse_structured(&raw, DocKind::NewGoalsDoc).is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        "[ -~\\n\u{3010}\u{3011}]{0,24}"
    }

    prop_compose! {
        fn kg_doc()(
            nodes in prop::collection::vec((text(), -3i64..40, text()), 0..8),
            links in prop::collection::vec((text(), text(), text()), 0..8),
        ) -> KgDoc {
            KgDoc {
                nodes: nodes.into_iter().map(|(id, order, details)| RawNode { id, order, details }).collect(),
                links: links.into_iter().map(|(source, target, relation)| RawLink { source, target, relation }).collect(),
            }
        }
    }

    prop_compose! {
        fn new_goals_doc()(
            rel in prop::collection::vec((prop::collection::vec(1i64..18, 0..4), text()), 0..3),
            props in prop::collection::vec((text(), text(), text(), text(), text()), 0..3),
        ) -> NewGoalsDoc {
            NewGoalsDoc {
                relationships: rel.into_iter().map(|(goals, explanation)| Relationship { goals, explanation }).collect(),
                results: props.into_iter().map(|(goal, code, desc, source, description)| RawProposal {
                    goal,
                    sub_goals: vec![RawSubGoal {
                        code: code.clone(),
                        description: desc.clone(),
                        indicators: vec![RawIndicator { code, description: desc }],
                    }],
                    source,
                    description,
                }).collect(),
            }
        }
    }

    proptest! {
        #[test]
        fn kg_round_trip(doc in kg_doc()) {
            prop_assert_eq!(parse_as::<KgDoc>(&to_fenced(&doc)).unwrap(), doc);
        }

        #[test]
        fn new_goals_round_trip(doc in new_goals_doc()) {
            prop_assert_eq!(parse_as::<NewGoalsDoc>(&to_fenced(&doc)).unwrap(), doc);
        }

        #[test]
        fn annotation_round_trip(title in text(), kw in prop::collection::vec(text(), 1..4), tags in prop::collection::vec(-2i64..20, 0..6)) {
            let mut doc = annotation();
            doc.title = title;
            doc.key_words = kw;
            doc.sdg_types = tags;
            prop_assert_eq!(parse_as::<AnnotationDoc>(&to_fenced(&doc)).unwrap(), doc);
        }
    }
}
