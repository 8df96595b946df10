//! Conversion of MultiWOZ restaurant dialogues and database into the annotated
//! dialogue, kb and ontology formats.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value as Json;

use crate::dialogue::{Dialogue, Span, Speaker, Turn, COUNT_MARKER};
use crate::domain::{Instance, KnowledgeBase, Ontology, SlotType};
use crate::error::{Error, Result};
use crate::value::{canonical_text, parse_count};

/// Dialogue-act slot names kept, with their slot in the converted data.
const SLOT_MAP: [(&str, &str); 5] = [
    ("Food", "food"),
    ("Area", "area"),
    ("Price", "price"),
    ("Name", "name"),
    ("Choice", COUNT_MARKER),
];

/// Database fields kept, with their slot.
const DB_FIELDS: [(&str, &str); 4] = [("name", "name"), ("area", "area"), ("food", "food"), ("pricerange", "price")];

#[derive(Clone, Debug)]
pub struct ConvertOptions {
    /// Keep only dialogues whose goal involves the restaurant domain alone.
    pub restaurant_only: bool,
    pub limit: Option<usize>,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            restaurant_only: true,
            limit: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Converted {
    pub dialogues: Vec<Dialogue>,
    pub global_kb: KnowledgeBase,
    pub ontology: Ontology,
    pub warnings: Vec<String>,
}

/// Builds the global kb from the restaurant database (a JSON array).
pub fn convert_db(db: &Json) -> Result<KnowledgeBase> {
    let rows = db
        .as_array()
        .ok_or_else(|| Error::validation("restaurant database must be a JSON array"))?;
    let mut instances = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        let id = match row.get("id") {
            Some(Json::String(s)) => s.clone(),
            Some(Json::Number(n)) => n.to_string(),
            _ => format!("R{}", k + 1),
        };
        let attrs: Vec<(&str, String)> = DB_FIELDS
            .iter()
            .filter_map(|(field, slot)| {
                let v = row.get(*field)?.as_str()?;
                let c = canonical_text(v);
                (!c.is_empty() && c != "?").then_some((*slot, c))
            })
            .collect();
        instances.push(Instance::new(id, attrs));
    }
    KnowledgeBase::new(instances)
}

fn restaurant_only(goal: Option<&Json>) -> bool {
    let Some(goal) = goal.and_then(Json::as_object) else {
        return false;
    };
    let non_empty = |v: &Json| v.as_object().is_some_and(|o| !o.is_empty());
    goal.get("restaurant").is_some_and(non_empty)
        && goal
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "restaurant" | "message" | "topic"))
            .all(|(_, v)| !non_empty(v))
}

/// Byte ranges of whitespace-separated words.
fn words(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

fn locate(text: &str, value: &str, start_word: Option<usize>, end_word: Option<usize>) -> Option<(usize, usize)> {
    let ws = words(text);
    if let (Some(a), Some(b)) = (start_word, end_word) {
        if a <= b && b < ws.len() {
            let range = (ws[a].0, ws[b].1);
            let surface = canonical_text(&text[range.0..range.1]);
            let surface = surface.trim_matches(|c: char| !c.is_alphanumeric());
            if surface == canonical_text(value) || !value.chars().any(char::is_alphanumeric) {
                return Some(range);
            }
            // indices may be right while the act value is spelled differently
            if b - a + 1 == value.split_whitespace().count() {
                return Some(range);
            }
        }
    }
    let lower = text.to_lowercase();
    let needle = canonical_text(value);
    if needle.is_empty() || lower.len() != text.len() {
        return None;
    }
    let at = lower.find(&needle)?;
    Some((at, at + needle.len()))
}

fn convert_turn(id: &str, index: usize, entry: &Json, warnings: &mut Vec<String>) -> Turn {
    let text = entry.get("text").and_then(Json::as_str).unwrap_or_default().to_string();
    let speaker = if index.is_multiple_of(2) { Speaker::User } else { Speaker::System };
    let mut spans: Vec<Span> = Vec::new();
    let infos = entry.get("span_info").and_then(Json::as_array).cloned().unwrap_or_default();
    for info in &infos {
        let Some(parts) = info.as_array() else { continue };
        let act = parts.first().and_then(Json::as_str).unwrap_or_default();
        let slot = parts.get(1).and_then(Json::as_str).unwrap_or_default();
        let value = parts.get(2).map(|v| match v {
            Json::String(s) => s.clone(),
            other => other.to_string(),
        });
        let Some(value) = value else { continue };
        if !act.starts_with("Restaurant-") {
            continue;
        }
        let Some((_, target)) = SLOT_MAP.iter().find(|(s, _)| *s == slot) else {
            continue;
        };
        let idx = |k: usize| parts.get(k).and_then(Json::as_u64).map(|n| n as usize);
        let Some((a, b)) = locate(&text, &value, idx(3), idx(4)) else {
            warnings.push(format!("{id} turn {index}: cannot locate {slot}={value:?}"));
            continue;
        };
        let surface = &text[a..b];
        let override_value = if *target == COUNT_MARKER {
            if parse_count(surface).is_ok() {
                None
            } else if parse_count(&value).is_ok() {
                Some(value.clone())
            } else {
                warnings.push(format!("{id} turn {index}: amount {value:?} is not a number, dropped"));
                continue;
            }
        } else {
            (canonical_text(surface) != canonical_text(&value)).then(|| canonical_text(&value))
        };
        let span = Span {
            start: char_offset(&text, a),
            end: char_offset(&text, b),
            slot: target.to_string(),
            cue: None,
            value: override_value,
        };
        if spans.iter().any(|s| s.start < span.end && span.start < s.end) {
            continue;
        }
        spans.push(span);
    }
    spans.sort_by_key(|s| s.start);
    Turn { speaker, text, spans }
}

/// Converts the dialogues of a MultiWOZ `data.json` object and the restaurant
/// database into annotated dialogues, a global kb and an ontology covering
/// both.
pub fn convert(data: &Json, db: &Json, options: &ConvertOptions) -> Result<Converted> {
    let global_kb = convert_db(db)?;
    let dialogues_json = data
        .as_object()
        .ok_or_else(|| Error::validation("dialogue data must be a JSON object keyed by dialogue id"))?;
    let mut warnings = Vec::new();
    let mut dialogues = Vec::new();
    for (key, dialogue) in dialogues_json {
        if options.limit.is_some_and(|n| dialogues.len() >= n) {
            break;
        }
        if options.restaurant_only && !restaurant_only(dialogue.get("goal")) {
            continue;
        }
        let id = key.trim_end_matches(".json").to_string();
        let log = dialogue.get("log").and_then(Json::as_array).cloned().unwrap_or_default();
        let turns = log
            .iter()
            .enumerate()
            .map(|(i, entry)| convert_turn(&id, i, entry, &mut warnings))
            .collect();
        dialogues.push(Dialogue { dialogue_id: id, turns });
    }

    let mut values: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for inst in global_kb.instances() {
        for (slot, v) in &inst.attributes {
            values.entry(slot.clone()).or_default().insert(v.clone());
        }
    }
    for d in &dialogues {
        for t in &d.turns {
            for s in t.spans.iter().filter(|s| s.slot != COUNT_MARKER) {
                let (a, b) = crate::dialogue::char_range_to_bytes(&t.text, s.start, s.end);
                let v = s.value.clone().unwrap_or_else(|| canonical_text(&t.text[a..b]));
                values.entry(s.slot.clone()).or_default().insert(canonical_text(&v));
            }
        }
    }
    let ontology = Ontology::new(
        values
            .into_iter()
            .map(|(name, vs)| SlotType {
                name,
                values: vs.into_iter().collect(),
            })
            .collect(),
    )?;
    Ok(Converted {
        dialogues,
        global_kb,
        ontology,
        warnings,
    })
}
