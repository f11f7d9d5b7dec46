// SPDX-License-Identifier: MIT OR Apache-2.0

//! Conversation data model and the line-oriented transcript corpus format.
//!
//! Each line of a corpus is one JSON object:
//!
//! ```text
//! {"id": "c1", "outcome": "persuaded", "ee_big5": {"openness": 3.5, ...},
//!  "turns": [{"role": "persuader", "text": "Hello", "strategy_label": "logical"}]}
//! ```
//!
//! Turn indices are global: persuader and persuadee turns share one index
//! space, and roles are not required to alternate.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Persuader,
    Persuadee,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Persuader => "persuader",
            Role::Persuadee => "persuadee",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persuader" => Ok(Role::Persuader),
            "persuadee" => Ok(Role::Persuadee),
            other => Err(Error::InvalidValue(format!("unknown role `{other}`"))),
        }
    }
}

/// Rhetorical strategy classes, in probe class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Logical,
    Emotional,
    Credibility,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Logical,
        Strategy::Emotional,
        Strategy::Credibility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Logical => "logical",
            Strategy::Emotional => "emotional",
            Strategy::Credibility => "credibility",
        }
    }

    pub fn class_index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown strategy `{s}`")))
    }
}

/// The five Big-5 personality traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BigFive {
    Openness,
    Extraversion,
    Conscientiousness,
    Agreeableness,
    Neuroticism,
}

impl BigFive {
    pub const ALL: [BigFive; 5] = [
        BigFive::Openness,
        BigFive::Extraversion,
        BigFive::Conscientiousness,
        BigFive::Agreeableness,
        BigFive::Neuroticism,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BigFive::Openness => "openness",
            BigFive::Extraversion => "extraversion",
            BigFive::Conscientiousness => "conscientiousness",
            BigFive::Agreeableness => "agreeableness",
            BigFive::Neuroticism => "neuroticism",
        }
    }
}

impl fmt::Display for BigFive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BigFive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BigFive::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown trait `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Outcome {
    Persuaded,
    Unpersuaded,
    #[default]
    Unknown,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Persuaded => "persuaded",
            Outcome::Unpersuaded => "unpersuaded",
            Outcome::Unknown => "unknown",
        }
    }

    /// Binary label with persuaded as the positive class; `None` for unknown.
    pub fn label(self) -> Option<usize> {
        match self {
            Outcome::Persuaded => Some(1),
            Outcome::Unpersuaded => Some(0),
            Outcome::Unknown => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persuaded" => Ok(Outcome::Persuaded),
            "unpersuaded" => Ok(Outcome::Unpersuaded),
            "unknown" => Ok(Outcome::Unknown),
            other => Err(Error::InvalidValue(format!("unknown outcome `{other}`"))),
        }
    }
}

/// Scores on the 1..=5 scale keyed by trait. Only canonical traits can be keys.
pub type Big5Scores = BTreeMap<BigFive, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub text: String,
    pub semantic_label: Option<String>,
    pub strategy_label: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConversationLabels {
    pub outcome: Outcome,
    pub ee_big5: Option<Big5Scores>,
    pub er_big5: Option<Big5Scores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    pub labels: ConversationLabels,
}

impl Conversation {
    /// Builds a conversation from `(role, text)` pairs, assigning indices.
    pub fn new(
        id: impl Into<String>,
        turns: impl IntoIterator<Item = (Role, String)>,
        labels: ConversationLabels,
    ) -> Result<Self> {
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(index, (role, text))| Turn {
                index,
                role,
                text,
                semantic_label: None,
                strategy_label: None,
            })
            .collect();
        let conv = Conversation {
            id: id.into(),
            turns,
            labels,
        };
        conv.validate()?;
        Ok(conv)
    }

    /// Turn count.
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::InvalidValue(format!(
                "conversation `{}` has no turns",
                self.id
            )));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i {
                return Err(Error::InvalidValue(format!(
                    "conversation `{}`: turn at position {i} has index {}",
                    self.id, turn.index
                )));
            }
            if turn.text.trim().is_empty() {
                return Err(Error::InvalidValue(format!(
                    "conversation `{}`: turn {i} has empty text",
                    self.id
                )));
            }
        }
        for scores in [&self.labels.ee_big5, &self.labels.er_big5]
            .into_iter()
            .flatten()
        {
            for (t, &s) in scores {
                check_score(s).map_err(|_| {
                    Error::InvalidValue(format!(
                        "conversation `{}`: {t} score {s} outside [1, 5]",
                        self.id
                    ))
                })?;
            }
        }
        Ok(())
    }

    /// Whitespace-delimited words across all turns, in order.
    pub fn words(&self) -> Vec<&str> {
        self.turns
            .iter()
            .flat_map(|t| t.text.split_whitespace())
            .collect()
    }
}

/// Role selector for [`select_turns`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleFilter {
    All,
    Only(Role),
}

/// Indices of the turns matching `filter`, ascending.
pub fn select_turns(conv: &Conversation, filter: RoleFilter) -> Vec<usize> {
    conv.turns
        .iter()
        .filter(|t| match filter {
            RoleFilter::All => true,
            RoleFilter::Only(role) => t.role == role,
        })
        .map(|t| t.index)
        .collect()
}

fn check_score(score: f64) -> Result<()> {
    if (1.0..=5.0).contains(&score) {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "trait score {score} outside [1, 5]"
        )))
    }
}

/// Binarizes a 1..=5 trait score at the scale midpoint; 3.0 maps to high (1).
pub fn binarize_trait(score: f64) -> Result<usize> {
    check_score(score)?;
    Ok(usize::from(score >= 3.0))
}

/// Parses a transcript corpus, one conversation per non-blank line.
pub fn parse_transcripts<R: BufRead>(reader: R) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let conv = parse_record(&line, i + 1)?;
        if !seen.insert(conv.id.clone()) {
            return Err(Error::DuplicateId(conv.id));
        }
        out.push(conv);
    }
    Ok(out)
}

/// Parses a corpus held in memory.
pub fn parse_transcripts_str(s: &str) -> Result<Vec<Conversation>> {
    parse_transcripts(s.as_bytes())
}

fn schema(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_record(text: &str, line: usize) -> Result<Conversation> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| schema(line, "<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line, "<record>", "expected a JSON object"))?;

    let id = obj
        .get("id")
        .ok_or_else(|| schema(line, "id", "missing"))?
        .as_str()
        .ok_or_else(|| schema(line, "id", "expected a string"))?
        .to_owned();

    let outcome = match obj.get("outcome") {
        None | Some(Value::Null) => Outcome::Unknown,
        Some(Value::String(s)) => s
            .parse()
            .map_err(|e: Error| schema(line, "outcome", e.to_string()))?,
        Some(_) => return Err(schema(line, "outcome", "expected a string")),
    };
    let ee_big5 = parse_big5(obj, "ee_big5", line)?;
    let er_big5 = parse_big5(obj, "er_big5", line)?;

    let turns_val = obj
        .get("turns")
        .ok_or_else(|| schema(line, "turns", "missing"))?
        .as_array()
        .ok_or_else(|| schema(line, "turns", "expected an array"))?;
    if turns_val.is_empty() {
        return Err(schema(line, "turns", "conversation has no turns"));
    }
    let mut turns = Vec::with_capacity(turns_val.len());
    for (index, t) in turns_val.iter().enumerate() {
        let field = |name: &str| format!("turns[{index}].{name}");
        let t = t
            .as_object()
            .ok_or_else(|| schema(line, format!("turns[{index}]"), "expected an object"))?;
        let role = t
            .get("role")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(line, field("role"), "missing or not a string"))?
            .parse::<Role>()
            .map_err(|e| schema(line, field("role"), e.to_string()))?;
        let text = t
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(line, field("text"), "missing or not a string"))?;
        if text.trim().is_empty() {
            return Err(schema(line, field("text"), "empty after trimming"));
        }
        let semantic_label = match t.get("semantic_label") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(schema(line, field("semantic_label"), "expected a string")),
        };
        let strategy_label = match t.get("strategy_label") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(
                s.parse::<Strategy>()
                    .map_err(|e| schema(line, field("strategy_label"), e.to_string()))?,
            ),
            Some(_) => return Err(schema(line, field("strategy_label"), "expected a string")),
        };
        turns.push(Turn {
            index,
            role,
            text: text.to_owned(),
            semantic_label,
            strategy_label,
        });
    }

    Ok(Conversation {
        id,
        turns,
        labels: ConversationLabels {
            outcome,
            ee_big5,
            er_big5,
        },
    })
}

fn parse_big5(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Option<Big5Scores>> {
    let map = match obj.get(key) {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(schema(line, key, "expected an object")),
    };
    let mut scores = Big5Scores::new();
    for (name, v) in map {
        let field = format!("{key}.{name}");
        let t: BigFive = name
            .parse()
            .map_err(|e: Error| schema(line, field.clone(), e.to_string()))?;
        let s = v
            .as_f64()
            .ok_or_else(|| schema(line, field.clone(), "expected a number"))?;
        check_score(s).map_err(|e| schema(line, field.clone(), e.to_string()))?;
        scores.insert(t, s);
    }
    Ok(Some(scores))
}

/// Serializes one conversation as a single corpus line (no trailing newline).
pub fn to_record(conv: &Conversation) -> String {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::from(conv.id.clone()));
    obj.insert("outcome".into(), Value::from(conv.labels.outcome.as_str()));
    for (key, scores) in [
        ("ee_big5", &conv.labels.ee_big5),
        ("er_big5", &conv.labels.er_big5),
    ] {
        if let Some(scores) = scores {
            let m: Map<String, Value> = scores
                .iter()
                .map(|(t, &s)| (t.as_str().to_owned(), Value::from(s)))
                .collect();
            obj.insert(key.into(), Value::Object(m));
        }
    }
    let turns = conv
        .turns
        .iter()
        .map(|t| {
            let mut m = Map::new();
            m.insert("role".into(), Value::from(t.role.as_str()));
            m.insert("text".into(), Value::from(t.text.clone()));
            if let Some(s) = &t.semantic_label {
                m.insert("semantic_label".into(), Value::from(s.clone()));
            }
            if let Some(s) = t.strategy_label {
                m.insert("strategy_label".into(), Value::from(s.as_str()));
            }
            Value::Object(m)
        })
        .collect();
    obj.insert("turns".into(), Value::Array(turns));
    Value::Object(obj).to_string()
}

/// Serializes a corpus, LF-terminating every record.
pub fn write_transcripts(convs: &[Conversation]) -> String {
    let mut s = String::new();
    for c in convs {
        s.push_str(&to_record(c));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize) -> Conversation {
        Conversation::new(
            "alt",
            (0..n).map(|i| {
                let role = if i % 2 == 0 {
                    Role::Persuader
                } else {
                    Role::Persuadee
                };
                (role, format!("turn {i}"))
            }),
            ConversationLabels {
                outcome: Outcome::Persuaded,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn minimal_record() {
        let convs =
            parse_transcripts_str(r#"{"id":"a","turns":[{"role":"persuader","text":"Hello"}]}"#)
                .unwrap();
        assert_eq!(convs.len(), 1);
        assert_eq!(convs[0].len(), 1);
        assert_eq!(convs[0].labels.outcome, Outcome::Unknown);
    }

    #[test]
    fn rejects_unknown_role_naming_field() {
        let err = parse_transcripts_str(
            r#"{"id":"a","turns":[{"role":"persuader","text":"x"},{"role":"narrator","text":"Hello"}]}"#,
        )
        .unwrap_err();
        match err {
            Error::Schema { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "turns[1].role");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn twenty_turn_fixture() {
        let line = to_record(&alternating(20));
        let convs = parse_transcripts_str(&line).unwrap();
        assert_eq!(convs[0].len(), 20);
        assert_eq!(
            select_turns(&convs[0], RoleFilter::Only(Role::Persuadee)).len(),
            10
        );
        assert_eq!(convs[0].labels.outcome, Outcome::Persuaded);
    }

    #[test]
    fn line_numbers_count_blank_lines() {
        let input = "\n{\"id\":\"a\",\"turns\":[{\"role\":\"persuader\",\"text\":\"x\"}]}\n{\"id\":\"b\"}\n";
        match parse_transcripts_str(input).unwrap_err() {
            Error::Schema { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "turns");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rec = r#"{"id":"a","turns":[{"role":"persuader","text":"x"}]}"#;
        let err = parse_transcripts_str(&format!("{rec}\n{rec}\n")).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn bad_trait_and_strategy_tokens() {
        let bad_trait =
            r#"{"id":"a","ee_big5":{"humor":3},"turns":[{"role":"persuader","text":"x"}]}"#;
        assert!(matches!(
            parse_transcripts_str(bad_trait).unwrap_err(),
            Error::Schema { field, .. } if field == "ee_big5.humor"
        ));
        let bad_score =
            r#"{"id":"a","ee_big5":{"openness":5.5},"turns":[{"role":"persuader","text":"x"}]}"#;
        assert!(parse_transcripts_str(bad_score).is_err());
        let bad_strategy =
            r#"{"id":"a","turns":[{"role":"persuader","text":"x","strategy_label":"ethos"}]}"#;
        assert!(matches!(
            parse_transcripts_str(bad_strategy).unwrap_err(),
            Error::Schema { field, .. } if field == "turns[0].strategy_label"
        ));
        let blank_text = r#"{"id":"a","turns":[{"role":"persuader","text":"   "}]}"#;
        assert!(parse_transcripts_str(blank_text).is_err());
    }

    #[test]
    fn unknown_fields_ignored() {
        let rec =
            r#"{"id":"a","source":"pfg","turns":[{"role":"persuadee","text":"x","speaker_id":7}]}"#;
        assert_eq!(
            parse_transcripts_str(rec).unwrap()[0].turns[0].role,
            Role::Persuadee
        );
    }

    #[test]
    fn select_turns_by_role() {
        let c = alternating(6);
        assert_eq!(
            select_turns(&c, RoleFilter::Only(Role::Persuadee)),
            vec![1, 3, 5]
        );
        assert_eq!(select_turns(&c, RoleFilter::All), vec![0, 1, 2, 3, 4, 5]);

        let c = Conversation::new(
            "c",
            [
                (Role::Persuader, "a".to_string()),
                (Role::Persuader, "b".to_string()),
                (Role::Persuadee, "c".to_string()),
            ],
            ConversationLabels::default(),
        )
        .unwrap();
        assert_eq!(
            select_turns(&c, RoleFilter::Only(Role::Persuader)),
            vec![0, 1]
        );
    }

    #[test]
    fn binarize_endpoints() {
        assert_eq!(binarize_trait(5.0).unwrap(), 1);
        assert_eq!(binarize_trait(1.0).unwrap(), 0);
        assert_eq!(binarize_trait(3.0).unwrap(), 1);
        assert_eq!(binarize_trait(2.999).unwrap(), 0);
        assert!(binarize_trait(0.5).is_err());
        assert!(binarize_trait(f64::NAN).is_err());
    }
}
