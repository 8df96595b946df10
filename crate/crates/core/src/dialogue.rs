//! Annotated dialogues, variable identification and de-/re-lexicalization.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{normalize_value, Value, VarId, VarKind, NUMBER_WORDS};

/// Slot name marking a span as an amount of instances.
pub const COUNT_MARKER: &str = "__count__";
/// Rendering of an unfilled variable.
pub const MASK: &str = "[MASK]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    #[serde(alias = "User", alias = "USER")]
    User,
    #[serde(alias = "System", alias = "SYSTEM")]
    System,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::System => "System",
        }
    }
}

/// Kind of knowledge-base claim made around a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    /// "There are no ... restaurants": nothing matches.
    NoneCue,
    /// "We have many ...": at least one instance matches.
    ExistsCue,
    /// "There are three ...": exactly that many match.
    ExactCue,
}

/// An annotated mention inside a turn. Offsets count characters, not bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    /// A slot name, or [`COUNT_MARKER`] for instance amounts.
    pub slot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<Cue>,
    /// Canonical value overriding the surface text (used when a corpus spells a
    /// value differently from its ontology, e.g. "center" for "centre").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl Span {
    pub fn kind(&self) -> VarKind {
        if self.slot == COUNT_MARKER {
            VarKind::Count
        } else {
            VarKind::Value
        }
    }

    pub fn surface<'a>(&self, text: &'a str) -> &'a str {
        let (a, b) = char_range_to_bytes(text, self.start, self.end);
        &text[a..b]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub spans: Vec<Span>,
}

/// A dialogue with slot-value and instance-count annotations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Sorts spans and rejects overlapping or out-of-bounds ones.
    pub fn validate(&mut self) -> Result<()> {
        for (t, turn) in self.turns.iter_mut().enumerate() {
            let len = turn.text.chars().count();
            turn.spans.sort_by_key(|s| (s.start, s.end));
            let mut prev_end = 0;
            for span in &turn.spans {
                if span.start >= span.end || span.end > len {
                    return Err(Error::validation(format!(
                        "{} turn {t}: span {}..{} outside text of length {len}",
                        self.dialogue_id, span.start, span.end
                    )));
                }
                if span.start < prev_end {
                    return Err(Error::validation(format!(
                        "{} turn {t}: overlapping spans at offset {}",
                        self.dialogue_id, span.start
                    )));
                }
                if span.slot.trim().is_empty() {
                    return Err(Error::validation(format!(
                        "{} turn {t}: span {}..{} has no slot",
                        self.dialogue_id, span.start, span.end
                    )));
                }
                prev_end = span.end;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub kind: VarKind,
    /// Slot name; `None` for count variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    pub turn_index: usize,
    pub gold: Value,
    /// Original surface text, used to restore spelling and capitalization.
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<Cue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelexTurn {
    pub speaker: Speaker,
    /// Turn text with `<Vk>` placeholders at variable positions.
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelexDialogue {
    pub dialogue_id: String,
    pub turns: Vec<DelexTurn>,
    pub variables: Vec<Variable>,
}

impl DelexDialogue {
    pub fn variable(&self, id: VarId) -> Option<&Variable> {
        self.variables.iter().find(|v| v.id == id)
    }

    pub fn turn_variables(&self, turn: usize) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(move |v| v.turn_index == turn)
    }

    /// The assignment reproducing the original dialogue.
    pub fn gold_assignment(&self) -> Assignment {
        Assignment {
            values: self
                .variables
                .iter()
                .map(|v| (v.id, Some(v.gold.clone())))
                .collect(),
        }
    }
}

/// Variable values; `None` marks an unfilled variable (`null` in JSON).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: BTreeMap<VarId, Option<Value>>,
}

impl Assignment {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.values.get(&id).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: VarId, value: Option<Value>) {
        self.values.insert(id, value);
    }

    /// An assignment leaving every variable of `delex` unfilled.
    pub fn unfilled(delex: &DelexDialogue) -> Self {
        Assignment {
            values: delex.variables.iter().map(|v| (v.id, None)).collect(),
        }
    }
}

/// A re-lexicalized dialogue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelexDialogue {
    pub dialogue_id: String,
    pub turns: Vec<DelexTurn>,
}

impl RelexDialogue {
    /// One `Speaker: text` line per turn.
    pub fn to_text(&self) -> String {
        self.turns
            .iter()
            .map(|t| format!("{}: {}\n", t.speaker.label(), t.text))
            .collect()
    }
}

pub(crate) fn char_range_to_bytes(text: &str, start: usize, end: usize) -> (usize, usize) {
    let mut a = text.len();
    let mut b = text.len();
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        if ci == start {
            a = bi;
        }
        if ci == end {
            b = bi;
            break;
        }
    }
    (a, b)
}

pub(crate) fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<V(\d+)>").expect("valid regex"))
}

/// Replaces every annotated span by a `<Vk>` placeholder, numbering variables
/// in document order.
pub fn delexicalize(dialogue: &Dialogue) -> Result<DelexDialogue> {
    let mut dialogue = dialogue.clone();
    dialogue.validate()?;
    let mut variables = Vec::new();
    let mut turns = Vec::with_capacity(dialogue.turns.len());
    for (t, turn) in dialogue.turns.iter().enumerate() {
        let mut out = String::with_capacity(turn.text.len());
        let mut cursor = 0;
        for span in &turn.spans {
            let (a, b) = char_range_to_bytes(&turn.text, span.start, span.end);
            out.push_str(&turn.text[cursor..a]);
            let surface = &turn.text[a..b];
            let kind = span.kind();
            let source = span.value.as_deref().unwrap_or(surface);
            let gold = normalize_value(source, kind).map_err(|e| {
                Error::validation(format!("{} turn {t}: {e}", dialogue.dialogue_id))
            })?;
            let id = VarId(variables.len() as u32 + 1);
            out.push_str(&format!("<{id}>"));
            cursor = b;
            variables.push(Variable {
                id,
                kind,
                slot: (kind == VarKind::Value).then(|| span.slot.trim().to_string()),
                turn_index: t,
                gold,
                surface: surface.to_string(),
                cue: span.cue,
            });
        }
        out.push_str(&turn.text[cursor..]);
        turns.push(DelexTurn {
            speaker: turn.speaker,
            text: out,
        });
    }
    Ok(DelexDialogue {
        dialogue_id: dialogue.dialogue_id.clone(),
        turns,
        variables,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Casing {
    AsIs,
    Capitalized,
    Title,
    Upper,
}

fn casing_of(surface: &str) -> Casing {
    let letters: Vec<char> = surface.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return Casing::Upper;
    }
    let words: Vec<&str> = surface.split_whitespace().collect();
    let starts_upper = |w: &str| w.chars().next().is_some_and(char::is_uppercase);
    if words.len() > 1 && words.iter().all(|w| starts_upper(w)) {
        Casing::Title
    } else if words.first().is_some_and(|w| starts_upper(w)) {
        Casing::Capitalized
    } else {
        Casing::AsIs
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn apply_casing(text: &str, casing: Casing) -> String {
    match casing {
        Casing::AsIs => text.to_string(),
        Casing::Upper => text.to_uppercase(),
        Casing::Capitalized => capitalize(text),
        Casing::Title => text.split(' ').map(capitalize).collect::<Vec<_>>().join(" "),
    }
}

/// Surface form of `value` at the position of `var`.
pub fn render_value(var: &Variable, value: Option<&Value>) -> String {
    let Some(value) = value else {
        return MASK.to_string();
    };
    if *value == var.gold {
        return var.surface.clone();
    }
    let casing = casing_of(&var.surface);
    match value {
        Value::Text(s) => apply_casing(s, casing),
        Value::Count(n) => {
            let gold_is_digits = var.surface.trim().chars().all(|c| c.is_ascii_digit());
            let gold_lower = var.surface.trim().to_lowercase();
            let word = if gold_is_digits {
                n.to_string()
            } else if *n == 0 && (gold_lower == "no" || gold_lower == "none") {
                gold_lower
            } else if let Some(w) = NUMBER_WORDS.get(*n as usize) {
                (*w).to_string()
            } else {
                n.to_string()
            };
            apply_casing(&word, casing)
        }
    }
}

/// Fills each placeholder with the surface of its assigned value; unfilled
/// variables become `[MASK]`.
pub fn relexicalize(delex: &DelexDialogue, assignment: &Assignment) -> RelexDialogue {
    let by_id: BTreeMap<VarId, &Variable> = delex.variables.iter().map(|v| (v.id, v)).collect();
    let turns = delex
        .turns
        .iter()
        .enumerate()
        .map(|(t, turn)| {
            let text = placeholder_re().replace_all(&turn.text, |caps: &regex::Captures<'_>| {
                let id = caps[1].parse::<u32>().ok().map(VarId);
                match id.and_then(|id| by_id.get(&id)) {
                    Some(var) if var.turn_index == t => render_value(var, assignment.get(var.id)),
                    _ => caps[0].to_string(),
                }
            });
            DelexTurn {
                speaker: turn.speaker,
                text: text.into_owned(),
            }
        })
        .collect();
    RelexDialogue {
        dialogue_id: delex.dialogue_id.clone(),
        turns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(text: &str, needle: &str, slot: &str) -> Span {
        let byte = text.find(needle).unwrap();
        let start = text[..byte].chars().count();
        Span {
            start,
            end: start + needle.chars().count(),
            slot: slot.into(),
            cue: None,
            value: None,
        }
    }

    fn food_and_price_opening() -> Dialogue {
        let u1 = "I am looking for a restaurant serving Spanish food.";
        let s1 = "There are three restaurants serving Spanish food.";
        Dialogue {
            dialogue_id: "food_and_price".into(),
            turns: vec![
                Turn { speaker: Speaker::User, text: u1.into(), spans: vec![span(u1, "Spanish", "food")] },
                Turn {
                    speaker: Speaker::System,
                    text: s1.into(),
                    spans: vec![span(s1, "three", COUNT_MARKER), span(s1, "Spanish", "food")],
                },
                Turn { speaker: Speaker::User, text: "Thanks!".into(), spans: vec![] },
            ],
        }
    }

    #[test]
    fn placeholders_and_variables() {
        let d = delexicalize(&food_and_price_opening()).unwrap();
        assert_eq!(d.turns[0].text, "I am looking for a restaurant serving <V1> food.");
        assert_eq!(d.turns[1].text, "There are <V2> restaurants serving <V3> food.");
        assert_eq!(d.turns[2].text, "Thanks!");
        let v1 = &d.variables[0];
        assert_eq!((v1.kind, v1.slot.as_deref(), &v1.gold), (VarKind::Value, Some("food"), &Value::text("spanish")));
        let v2 = &d.variables[1];
        assert_eq!((v2.kind, v2.slot.as_deref(), &v2.gold), (VarKind::Count, None, &Value::Count(3)));
        assert_eq!(d.variables.len(), 3);
    }

    #[test]
    fn gold_round_trip() {
        let orig = food_and_price_opening();
        let d = delexicalize(&orig).unwrap();
        let r = relexicalize(&d, &d.gold_assignment());
        for (a, b) in r.turns.iter().zip(&orig.turns) {
            assert_eq!(a.text, b.text);
        }
    }

    #[test]
    fn styles_and_masks() {
        let d = delexicalize(&food_and_price_opening()).unwrap();
        let mut a = d.gold_assignment();
        a.set(VarId(1), None);
        a.set(VarId(2), Some(Value::Count(2)));
        a.set(VarId(3), Some(Value::text("lebanese")));
        let r = relexicalize(&d, &a);
        assert_eq!(r.turns[0].text, "I am looking for a restaurant serving [MASK] food.");
        assert_eq!(r.turns[1].text, "There are two restaurants serving Lebanese food.");
    }

    #[test]
    fn overlapping_spans_rejected() {
        let mut d = food_and_price_opening();
        d.turns[0].spans.push(Span { start: 40, end: 44, slot: "food".into(), cue: None, value: None });
        assert!(matches!(delexicalize(&d), Err(Error::Validation(_))));
    }

    #[test]
    fn unmappable_count_is_a_validation_error() {
        let text = "We have several places.";
        let d = Dialogue {
            dialogue_id: "x".into(),
            turns: vec![Turn { speaker: Speaker::System, text: text.into(), spans: vec![span(text, "several", COUNT_MARKER)] }],
        };
        assert!(delexicalize(&d).is_err());
    }

    #[test]
    fn casing_rules() {
        assert_eq!(casing_of("Spanish"), Casing::Capitalized);
        assert_eq!(casing_of("Pizza Hut"), Casing::Title);
        assert_eq!(casing_of("NANDOS"), Casing::Upper);
        assert_eq!(casing_of("cheap"), Casing::AsIs);
        assert_eq!(apply_casing("pizza hut city", Casing::Title), "Pizza Hut City");
    }

    #[test]
    fn multibyte_offsets() {
        let text = "Café Uno serves Italian food";
        let d = Dialogue {
            dialogue_id: "mb".into(),
            turns: vec![Turn { speaker: Speaker::System, text: text.into(), spans: vec![span(text, "Café Uno", "name"), span(text, "Italian", "food")] }],
        };
        let delex = delexicalize(&d).unwrap();
        assert_eq!(delex.turns[0].text, "<V1> serves <V2> food");
        assert_eq!(delex.variables[0].gold, Value::text("café uno"));
        assert_eq!(relexicalize(&delex, &delex.gold_assignment()).turns[0].text, text);
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_exact(
            words in prop::collection::vec("[A-Za-z0-9éü,.?']{1,8}", 1..12),
            marks in prop::collection::vec(any::<bool>(), 12),
        ) {
            let mut text = String::new();
            let mut spans = Vec::new();
            for (i, w) in words.iter().enumerate() {
                if i > 0 { text.push(' '); }
                let start = text.chars().count();
                text.push_str(w);
                if marks[i] {
                    spans.push(Span { start, end: start + w.chars().count(), slot: "food".into(), cue: None, value: None });
                }
            }
            let d = Dialogue { dialogue_id: "p".into(), turns: vec![Turn { speaker: Speaker::User, text: text.clone(), spans: spans.clone() }] };
            let delex = delexicalize(&d).unwrap();
            prop_assert_eq!(delex.variables.len(), spans.len());
            prop_assert!(delex.variables.windows(2).all(|w| w[0].id < w[1].id));
            let relex = relexicalize(&delex, &delex.gold_assignment());
            prop_assert_eq!(&relex.turns[0].text, &text);
        }
    }
}
