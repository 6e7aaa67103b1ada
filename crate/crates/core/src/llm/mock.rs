//! Seeded offline provider.
//!
//! Output is a pure function of (seed, model, prompt). The mock recognises
//! the four pipeline prompts by their data-section headers and assembles a
//! well-formed answer from phrase tables, so every downstream parser sees a
//! realistic shape. Anything else gets a short seeded echo.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::provider::{Provider, ProviderError};
use super::CORRECTION_MARKER;
use super::structured::{
    to_fenced, AnnotationDoc, KgDoc, NewGoalsDoc, QaPair, RawIndicator, RawLink, RawNode,
    RawProposal, RawSubGoal, Relationship,
};

pub const MOCK_EMBEDDING_DIM: usize = 256;


#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Fail(ProviderError),
}

/// Canned reply for any prompt containing `needle`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRule {
    pub needle: String,
    pub reply: MockReply,
}

impl MockRule {
    pub fn text(needle: impl Into<String>, reply: impl Into<String>) -> Self {
        MockRule {
            needle: needle.into(),
            reply: MockReply::Text(reply.into()),
        }
    }

    pub fn fail(needle: impl Into<String>, err: ProviderError) -> Self {
        MockRule {
            needle: needle.into(),
            reply: MockReply::Fail(err),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    rules: Vec<MockRule>,
}

const LEXICON: [&[&str]; 17] = [
    &["poverty", "poor", "income", "welfare", "cash"],
    &["hunger", "food", "farming", "agriculture", "nutrition", "crops"],
    &["health", "disease", "medical", "hospital", "mental", "wellbeing"],
    &["education", "school", "learning", "teacher", "students", "literacy"],
    &["gender", "women", "girls", "feminism", "mothers"],
    &["water", "sanitation", "drinking", "rivers", "toilets"],
    &["energy", "solar", "electricity", "renewable", "batteries"],
    &["jobs", "economy", "employment", "workers", "wages"],
    &["innovation", "infrastructure", "industry", "engineering", "technology"],
    &["inequality", "discrimination", "inclusion", "migrants", "marginalized"],
    &["cities", "urban", "housing", "transport", "neighborhoods"],
    &["consumption", "waste", "recycling", "plastic", "fashion"],
    &["climate", "carbon", "emissions", "warming", "heatwaves"],
    &["ocean", "marine", "fish", "coral", "seas"],
    &["forest", "biodiversity", "species", "wildlife", "soil"],
    &["justice", "peace", "institutions", "democracy", "violence"],
    &["partnership", "cooperation", "collaboration", "alliances", "diplomacy"],
];

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "because", "been", "being", "between", "could", "every", "from",
    "have", "into", "just", "like", "more", "most", "much", "only", "other", "over", "really",
    "said", "same", "should", "some", "such", "than", "that", "their", "them", "then", "there",
    "these", "they", "thing", "things", "this", "those", "through", "very", "want", "what", "when",
    "where", "which", "while", "will", "with", "would", "your", "we're", "it's", "talk", "title",
    "video", "channel", "transcript", "published",
];

const RELATIONS: &[&str] = &[
    "drives", "depends on", "enables", "challenges", "supports", "requires", "informs",
    "strengthens", "is threatened by", "reframes",
];

const OPENERS: &[&str] = &[
    "I want to start with",
    "From my talk, the key point is",
    "Let me push back and bring in",
    "Building on that, consider",
    "My evidence points to",
    "We cannot ignore",
];

const FACILITATOR: &[&str] = &[
    "What can individuals do tomorrow morning?",
    "How should governments cooperate on this?",
    "Which solution is concrete enough to pilot within a year?",
    "What role should international bodies play?",
    "Where do these proposals conflict?",
];

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider {
            seed,
            rules: Vec::new(),
        }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, model: &str, prompt: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([0]);
        h.update(model.as_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Seeded feature-hashing embedding. Identical text gives an identical
    /// vector; shared vocabulary gives positive similarity.
    pub fn embed_one(&self, model: &str, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; MOCK_EMBEDDING_DIM];
        let salt = fnv1a(model.as_bytes(), self.seed);
        let mut hashed = false;
        for tok in tokens(text) {
            let h = fnv1a(tok.as_bytes(), salt);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % MOCK_EMBEDDING_DIM as u64) as usize] += sign;
            hashed = true;
        }
        if !hashed {
            let h = fnv1a(text.as_bytes(), salt);
            v[(h % MOCK_EMBEDDING_DIM as u64) as usize] = 1.0;
        }
        if !super::normalize(&mut v) {
            v[0] = 1.0;
        }
        v
    }
}

fn fnv1a(bytes: &[u8], salt: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
}

fn title_case(word: &str) -> String {
    word.split_whitespace()
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Text after a `header` line, to the end of the prompt.
fn section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let marker = format!("\n{header}\n");
    let start = prompt.find(&marker)? + marker.len();
    Some(&prompt[start..])
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or_default()
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn generate(&self, model: &str, prompt: &str) -> Result<String, ProviderError> {
        if let Some(rule) = self.rules.iter().find(|r| prompt.contains(&r.needle)) {
            return match &rule.reply {
                MockReply::Text(t) => Ok(t.clone()),
                MockReply::Fail(e) => Err(e.clone()),
            };
        }
        let mut rng = self.rng(model, prompt);
        let corrected = prompt.contains(CORRECTION_MARKER);
        let prompt = prompt.split(CORRECTION_MARKER).next().unwrap_or(prompt);
        let body = if let Some(data) = section(prompt, "kg_data:") {
            {
            let doc = to_fenced(&new_goals(&mut rng, data));
            wrap(&mut rng, doc)
        }
        } else if let Some(script) = section(prompt, "conversation_script:") {
            {
            let doc = to_fenced(&graph(&mut rng, script, corrected));
            wrap(&mut rng, doc)
        }
        } else if let Some(kg_box) = section(prompt, "kg_box:") {
            roundtable(&mut rng, prompt, kg_box)
        } else if let Some(data) = section(prompt, "tedtalk_data:") {
            {
            let doc = to_fenced(&annotation(&mut rng, data));
            wrap(&mut rng, doc)
        }
        } else {
            let words: Vec<String> = tokens(prompt).take(12).collect();
            format!("Mock reply {}: {}", rng.gen::<u32>(), words.join(" "))
        };
        Ok(body)
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(model, t)).collect())
    }
}

fn wrap<R: Rng>(rng: &mut R, fenced: String) -> String {
    match rng.gen_range(0..3) {
        0 => fenced,
        1 => format!("Here is the requested document.\n\n{fenced}"),
        _ => format!("{fenced}\nAll fields follow the requested format."),
    }
}

/// Goals whose cue words occur in `text`, strongest first.
fn lexicon_goals(text: &str) -> Vec<(u8, usize)> {
    let mut hits = [0usize; 17];
    for tok in tokens(text) {
        for (g, cues) in LEXICON.iter().enumerate() {
            if cues.contains(&tok.as_str()) {
                hits[g] += 1;
            }
        }
    }
    let mut out: Vec<(u8, usize)> = hits
        .iter()
        .enumerate()
        .filter(|(_, h)| **h > 0)
        .map(|(g, h)| (g as u8 + 1, *h))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn top_terms(text: &str, k: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut first: HashMap<String, usize> = HashMap::new();
    for (i, tok) in tokens(text).enumerate() {
        if tok.len() < 4 || STOPWORDS.contains(&tok.as_str()) || tok.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        *counts.entry(tok.clone()).or_default() += 1;
        first.entry(tok).or_insert(i);
    }
    let mut terms: Vec<(String, usize)> = counts.into_iter().collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then(first[&a.0].cmp(&first[&b.0])));
    terms.into_iter().take(k).map(|(t, _)| t).collect()
}

fn field<'a>(data: &'a str, name: &str) -> Option<&'a str> {
    let prefix = format!("{name}: ");
    data.lines()
        .find_map(|l| l.strip_prefix(prefix.as_str()))
        .map(str::trim)
}

fn annotation<R: Rng>(rng: &mut R, data: &str) -> AnnotationDoc {
    let transcript = data
        .split_once("\ntranscript:\n")
        .map(|(_, t)| t)
        .unwrap_or(data);
    let title = field(data, "title")
        .map(str::to_string)
        .unwrap_or_else(|| title_case(&top_terms(transcript, 3).join(" ")));
    let mut key_words = top_terms(transcript, 5);
    if key_words.is_empty() {
        key_words.push("ideas".into());
    }
    let description = transcript
        .split_terminator(['.', '!', '?'])
        .next()
        .unwrap_or("")
        .trim()
        .chars()
        .take(240)
        .collect::<String>();
    let lead = &key_words[0];
    let core_value = format!(
        "{} {} as a shared responsibility.",
        pick(rng, &["The talk argues for", "The speaker champions", "At its heart is"]),
        lead
    );
    let qa = (0..5)
        .map(|i| {
            let kw = &key_words[i % key_words.len()];
            QaPair {
                question: format!(
                    "{} {kw}?",
                    pick(rng, &[
                        "How does society address",
                        "Who is most affected by",
                        "What policy would improve",
                        "Why does the talk emphasise",
                    ])
                ),
                answer: format!(
                    "The talk links {kw} to {} and calls for {}.",
                    key_words[(i + 1) % key_words.len()],
                    pick(rng, &["local action", "public investment", "shared standards", "better data"])
                ),
            }
        })
        .collect();

    let hits = lexicon_goals(transcript);
    let mut tags: BTreeSet<u8> = hits
        .iter()
        .filter(|(_, h)| *h >= 2)
        .map(|(g, _)| *g)
        .take(6)
        .collect();
    if tags.is_empty() {
        match hits.first() {
            Some((g, _)) => {
                tags.insert(*g);
            }
            None => {
                tags.insert(rng.gen_range(1..=17));
            }
        }
    }
    AnnotationDoc {
        title,
        description: if description.is_empty() { "A talk.".into() } else { description },
        core_value,
        key_words,
        qa,
        sdg_types: tags.into_iter().map(i64::from).collect(),
    }
}

struct Participant {
    title: String,
    key_words: Vec<String>,
}

fn participants(kg_box: &str) -> Vec<Participant> {
    let mut out: Vec<Participant> = Vec::new();
    for line in kg_box.lines() {
        if line.starts_with('[') && line.contains("] ") {
            out.push(Participant {
                title: String::new(),
                key_words: Vec::new(),
            });
        }
        let Some(p) = out.last_mut() else { continue };
        if let Some(t) = line.strip_prefix("title: ") {
            p.title = t.trim().to_string();
        } else if let Some(k) = line.strip_prefix("key_words: ") {
            p.key_words = k
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
        }
    }
    out
}

fn host(prompt: &str, bg_box: Option<&str>) -> String {
    let number = prompt
        .split("【SDGs Goal ")
        .nth(1)
        .and_then(|s| s.split('】').next())
        .unwrap_or("?")
        .trim()
        .to_string();
    let title = bg_box
        .and_then(|b| b.lines().next())
        .and_then(|l| l.split_once(": "))
        .map(|(_, t)| t.trim().to_string());
    match title {
        Some(t) => format!("Goal {number}: {t}"),
        None => format!("Goal {number}"),
    }
}

fn roundtable<R: Rng>(rng: &mut R, prompt: &str, kg_box: &str) -> String {
    let bg = section(prompt, "bg_box (forum_background):");
    let kg_box = kg_box
        .split("\nbg_box (forum_background):\n")
        .next()
        .unwrap_or(kg_box);
    let host = host(prompt, bg);
    let people = participants(kg_box);
    let mut out = String::new();
    out.push_str(&format!(
        "Facilitator: Welcome. Our host today is **{host}**, and we are drafting a white paper on implementation.\n\n"
    ));
    out.push_str(&format!(
        "{host} (Host): Thank you. Each of you brings a talk; let us connect your ideas to **{host}**.\n\n"
    ));
    let rounds = 2;
    let mut concepts: Vec<String> = Vec::new();
    for round in 0..rounds {
        for (i, p) in people.iter().enumerate() {
            let kws: Vec<String> = p.key_words.iter().map(|k| title_case(k)).collect();
            let a = kws
                .get(round % kws.len().max(1))
                .cloned()
                .unwrap_or_else(|| title_case(&p.title));
            let previous = concepts.choose(rng).cloned().unwrap_or_else(|| host.clone());
            let name = if p.title.is_empty() {
                format!("Participant {}", i + 1)
            } else {
                format!("Participant {} ({})", i + 1, p.title)
            };
            let line = if rng.gen_bool(0.5) {
                format!(
                    "{name}: {} **{a}**. In my view **{a}** {} **{previous}**.",
                    pick(rng, OPENERS),
                    pick(rng, RELATIONS)
                )
            } else {
                format!(
                    "{name}: {} **{a}**. Progress on **{previous}** {} **{a}**.",
                    pick(rng, OPENERS),
                    pick(rng, RELATIONS)
                )
            };
            out.push_str(&line);
            out.push_str("\n\n");
            concepts.push(a);
        }
        out.push_str(&format!("Facilitator: {}\n\n", pick(rng, FACILITATOR)));
    }
    let closing = pick(rng, &[
        "Shared Action Plan",
        "Local Pilot Programs",
        "Open Data Commitments",
        "Cross-Sector Coalitions",
    ]);
    let anchor = concepts.last().cloned().unwrap_or_else(|| host.clone());
    out.push_str(&format!(
        "{host} (Host): Our conclusion is **{closing}**, which **{anchor}** {} directly.\n",
        pick(rng, RELATIONS)
    ));
    out
}

fn bold_spans(line: &str) -> Vec<String> {
    line.split("**")
        .skip(1)
        .step_by(2)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn graph<R: Rng>(rng: &mut R, script: &str, corrected: bool) -> KgDoc {
    let mut order: Vec<String> = Vec::new();
    let mut links: Vec<RawLink> = Vec::new();
    let mut seen_links = BTreeSet::new();
    for sentence in script.split_terminator(['.', '\n']) {
        let spans = bold_spans(sentence);
        for s in &spans {
            if !order.contains(s) {
                order.push(s.clone());
            }
        }
        for w in spans.windows(2) {
            if w[0] != w[1] && seen_links.insert((w[0].clone(), w[1].clone())) {
                let relation = RELATIONS
                    .iter()
                    .find(|r| sentence.contains(&format!("** {r} **")))
                    .copied()
                    .unwrap_or_else(|| pick(rng, RELATIONS));
                links.push(RawLink {
                    source: w[0].clone(),
                    target: w[1].clone(),
                    relation: relation.to_string(),
                });
            }
        }
    }
    if order.is_empty() {
        order = top_terms(script, 6).iter().map(|t| title_case(t)).collect();
        for w in order.windows(2) {
            links.push(RawLink {
                source: w[0].clone(),
                target: w[1].clone(),
                relation: pick(rng, RELATIONS).to_string(),
            });
        }
    }
    if order.is_empty() {
        order.push("Discussion".into());
    }
    let mut nodes: Vec<RawNode> = order
        .iter()
        .enumerate()
        .map(|(i, id)| RawNode {
            id: id.clone(),
            order: i as i64 + 1,
            details: format!("{id} as raised during the roundtable."),
        })
        .collect();
    if !corrected {
        if rng.gen_bool(0.25) {
            links.push(RawLink {
                source: order[0].clone(),
                target: "Unstated Assumption".into(),
                relation: "implies".into(),
            });
        }
        if nodes.len() > 1 && rng.gen_bool(0.2) {
            let dup = nodes[rng.gen_range(0..nodes.len())].clone();
            nodes.push(RawNode {
                order: nodes.len() as i64 + 1,
                details: "Mentioned again later.".into(),
                ..dup
            });
        }
    }
    KgDoc { nodes, links }
}

struct GoalSection {
    number: u8,
    label: String,
    nodes: BTreeSet<String>,
}

fn goal_sections(data: &str) -> Vec<GoalSection> {
    let mut out: Vec<GoalSection> = Vec::new();
    let mut in_nodes = false;
    for line in data.lines() {
        if let Some(head) = line.strip_prefix("## ") {
            let number = head
                .strip_prefix("Goal ")
                .and_then(|r| r.split(':').next())
                .and_then(|n| n.trim().parse().ok());
            if let Some(number) = number {
                out.push(GoalSection {
                    number,
                    label: head.trim().to_string(),
                    nodes: BTreeSet::new(),
                });
            }
            in_nodes = false;
        } else if line.trim() == "nodes:" {
            in_nodes = true;
        } else if line.trim() == "links:" {
            in_nodes = false;
        } else if in_nodes {
            if let (Some(s), Some(last)) = (line.split_once(". "), out.last_mut()) {
                let id = s.1.split(" | ").next().unwrap_or("").trim().to_lowercase();
                if !id.is_empty() {
                    last.nodes.insert(id);
                }
            }
        }
    }
    out
}

fn short(label: &str) -> &str {
    label.split_once(": ").map(|(_, t)| t).unwrap_or(label)
}

fn new_goals<R: Rng>(rng: &mut R, data: &str) -> NewGoalsDoc {
    let sections = goal_sections(data);
    let mut pairs: Vec<(usize, u32, usize, usize)> = Vec::new();
    for i in 0..sections.len() {
        for j in i + 1..sections.len() {
            let shared = sections[i].nodes.intersection(&sections[j].nodes).count();
            pairs.push((shared, rng.gen(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let count = rng.gen_range(1..=5).min(pairs.len());
    let mut relationships = Vec::new();
    let mut results = Vec::new();
    let mut by_goal: BTreeMap<u8, usize> = BTreeMap::new();
    for (k, (shared, _, i, j)) in pairs.into_iter().take(count).enumerate() {
        let (a, b) = (&sections[i], &sections[j]);
        *by_goal.entry(a.number).or_default() += 1;
        *by_goal.entry(b.number).or_default() += 1;
        let common: Vec<&String> = a.nodes.intersection(&b.nodes).take(3).collect();
        let explanation = if common.is_empty() {
            format!(
                "The graphs for {} and {} raise complementary concerns that point to one agenda.",
                a.label, b.label
            )
        } else {
            format!(
                "The graphs for {} and {} share {shared} concepts, including {}.",
                a.label,
                b.label,
                common.iter().map(|s| title_case(s)).collect::<Vec<_>>().join(", ")
            )
        };
        relationships.push(Relationship {
            goals: vec![i64::from(a.number), i64::from(b.number)],
            explanation: explanation.clone(),
        });
        let n = 18 + k;
        let title = format!(
            "{} {} and {}",
            pick(rng, &["Integrated", "Resilient", "Inclusive", "Sustainable"]),
            short(&a.label),
            short(&b.label)
        );
        results.push(RawProposal {
            goal: format!("Goal {n}: {title}"),
            sub_goals: vec![RawSubGoal {
                code: format!("{n}.1"),
                description: format!(
                    "By 2035, align action on {} with {} in national plans.",
                    short(&a.label).to_lowercase(),
                    short(&b.label).to_lowercase()
                ),
                indicators: vec![
                    RawIndicator {
                        code: format!("{n}.1.1"),
                        description: format!(
                            "Number of countries with joint programmes covering goals {} and {}.",
                            a.number, b.number
                        ),
                    },
                    RawIndicator {
                        code: format!("{n}.1.2"),
                        description: "Proportion of funding allocated to cross-goal initiatives."
                            .into(),
                    },
                ],
            }],
            source: format!("{}, {}", a.label, b.label),
            description: explanation,
        });
    }
    NewGoalsDoc {
        relationships,
        results,
    }
}
