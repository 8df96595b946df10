//! Assignment producers: the two kb baselines, the prompt sent to a language
//! model and the parser that maps its answer back onto variables.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::{placeholder_re, Assignment, DelexDialogue, Speaker, MASK};
use crate::domain::KnowledgeBase;
use crate::rng::seeded_rng;
use crate::value::{normalize_value, Value, VarId, VarKind};

/// Random baseline. Every value variable draws uniformly from all values present
/// in the kb, regardless of slot; with `type_restricted` it draws from the
/// values of its own slot instead. Count variables draw from `0..=|kb|`.
pub fn relex_random(delex: &DelexDialogue, kb: &KnowledgeBase, seed: u64, type_restricted: bool) -> Assignment {
    let mut out = Assignment::unfilled(delex);
    if kb.is_empty() {
        return out;
    }
    let mut rng = seeded_rng(seed, &format!("relex-random/{}", delex.dialogue_id));
    let pool: Vec<&str> = kb
        .instances()
        .iter()
        .flat_map(|i| i.attributes.values().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for var in &delex.variables {
        let value = match var.kind {
            VarKind::Count => Some(Value::Count(rng.gen_range(0..=kb.len() as u32))),
            VarKind::Value if type_restricted => {
                let slot = var.slot.as_deref().unwrap_or_default();
                let own: Vec<&str> = kb
                    .instances()
                    .iter()
                    .filter_map(|i| i.get(slot))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                own.choose(&mut rng).map(|v| Value::text(*v))
            }
            VarKind::Value => pool.choose(&mut rng).map(|v| Value::text(*v)),
        };
        out.set(var.id, value);
    }
    out
}

/// Most-frequent baseline: each value variable gets the most frequent kb value
/// of its slot (ties to the lexicographically smallest), each count variable
/// the kb size.
pub fn relex_most_frequent(delex: &DelexDialogue, kb: &KnowledgeBase) -> Assignment {
    let mut out = Assignment::unfilled(delex);
    if kb.is_empty() {
        return out;
    }
    for var in &delex.variables {
        let value = match var.kind {
            VarKind::Count => Some(Value::Count(kb.len() as u32)),
            VarKind::Value => {
                let slot = var.slot.as_deref().unwrap_or_default();
                let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
                for v in kb.instances().iter().filter_map(|i| i.get(slot)) {
                    *freq.entry(v).or_default() += 1;
                }
                // BTreeMap iteration is ascending, so the first maximum wins ties
                let mut best: Option<(&str, usize)> = None;
                for (v, n) in freq {
                    if best.is_none_or(|(_, m)| n > m) {
                        best = Some((v, n));
                    }
                }
                best.map(|(v, _)| Value::text(v))
            }
        };
        out.set(var.id, value);
    }
    out
}

const INTRO: &str = "Below is an instruction that outlines a task, along with a Knowledge Base containing domain-specific information to be utilized, and a dialogue for you to work on. Return a response that effectively fulfills the task.";

const INSTRUCTION: &str = "Fill in the [MASK] placeholders in the dialogue based on the information provided in the Knowledge Base. Provide the updated dialogue exactly as it was given, but with the placeholders replaced by the appropriate values for each turn in the dialogue. If a turn does not contain any placeholders, leave the sentence unchanged. Turns should start with either User or System. Be aware of leaving blank spaces before punctuation as in the original (e.g. Hi , instead of Hi,)";

/// Slots printed first on every kb line, in this order.
const KB_LEAD_SLOTS: [&str; 3] = ["area", "food", "price"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub prompt: String,
    /// Variable ids in the order their `[MASK]` appears in the prompt.
    pub manifest: Vec<VarId>,
}

fn slot_label(slot: &str) -> String {
    let mut chars = slot.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// One "Restaurant #k - Area: .., Food: .., Price: .." line per instance.
pub fn render_kb(kb: &KnowledgeBase) -> Vec<String> {
    kb.instances()
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            let lead = KB_LEAD_SLOTS.iter().filter_map(|s| inst.get(s).map(|v| (*s, v)));
            let rest = inst
                .attributes
                .iter()
                .filter(|(s, _)| !KB_LEAD_SLOTS.contains(&s.as_str()))
                .map(|(s, v)| (s.as_str(), v.as_str()));
            let fields: Vec<String> = lead.chain(rest).map(|(s, v)| format!("{}: {v}", slot_label(s))).collect();
            format!("Restaurant #{} - {}", k + 1, fields.join(", "))
        })
        .collect()
}

pub fn build_prompt(delex: &DelexDialogue, kb: &KnowledgeBase) -> PromptBundle {
    let mut manifest = Vec::new();
    let mut prompt = format!("{INTRO}\n\n### Instruction:\n{INSTRUCTION}\n\n### Knowledge Base:\n");
    for line in render_kb(kb) {
        prompt.push_str(&line);
        prompt.push('\n');
    }
    prompt.push_str("\n### Dialogue:\n");
    for turn in &delex.turns {
        let text = placeholder_re().replace_all(&turn.text, |caps: &regex::Captures<'_>| {
            if let Ok(n) = caps[1].parse() {
                manifest.push(VarId(n));
            }
            MASK
        });
        prompt.push_str(&format!("{}: {text}\n", turn.speaker.label()));
    }
    prompt.push_str("### Response:\n");
    PromptBundle { prompt, manifest }
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<V\d+>|'?[\p{L}\p{N}]+|[^\s\p{L}\p{N}]").expect("valid regex"))
}

struct Token<'a> {
    text: &'a str,
    start: usize,
    end: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    token_re()
        .find_iter(text)
        .map(|m| Token {
            text: m.as_str(),
            start: m.start(),
            end: m.end(),
        })
        .collect()
}

/// Longest common subsequence of two token lists; returns matched index pairs.
fn lcs(a: &[String], b: &[String]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if a[i] == b[j] {
                dp[i + 1][j + 1] + 1
            } else {
                dp[i + 1][j].max(dp[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < n && j < m {
        if a[i] == b[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if dp[i + 1][j] >= dp[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

fn strip_speaker(line: &str) -> Option<(Speaker, &str)> {
    let line = line.trim_start();
    let (speaker, rest) = if let Some(rest) = line.strip_prefix("User") {
        (Speaker::User, rest)
    } else {
        let rest = line.strip_prefix("System")?;
        (Speaker::System, rest)
    };
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':').unwrap_or(rest);
    Some((speaker, rest.trim()))
}

/// Maps a free-text answer back onto the variables of `delex`.
///
/// Only lines starting with `User` or `System` are kept and paired with the
/// dialogue turns by position. Within a turn, the literal tokens of the
/// delexicalized text are aligned to the answer (longest common subsequence,
/// case-insensitive); the answer text lying between the anchors around a
/// placeholder becomes its value. Anything that cannot be aligned stays
/// unfilled and produces a warning.
pub fn parse_llm_response(response: &str, delex: &DelexDialogue) -> (Assignment, Vec<String>) {
    let mut out = Assignment::unfilled(delex);
    let mut warnings = Vec::new();
    let lines: Vec<(Speaker, &str)> = response.lines().filter_map(strip_speaker).collect();
    if lines.len() != delex.turns.len() {
        warnings.push(format!(
            "{}: response has {} turns, dialogue has {}",
            delex.dialogue_id,
            lines.len(),
            delex.turns.len()
        ));
    }
    for (t, turn) in delex.turns.iter().enumerate() {
        let vars: Vec<VarId> = placeholder_re()
            .captures_iter(&turn.text)
            .filter_map(|c| c[1].parse().ok().map(VarId))
            .collect();
        if vars.is_empty() {
            continue;
        }
        let Some((speaker, text)) = lines.get(t) else {
            warnings.push(format!("{}: turn {t} missing from response", delex.dialogue_id));
            continue;
        };
        if *speaker != turn.speaker {
            warnings.push(format!("{}: turn {t} speaker differs in response", delex.dialogue_id));
        }
        let src = tokenize(&turn.text);
        let dst = tokenize(text);
        let anchor_idx: Vec<usize> = (0..src.len()).filter(|&i| !placeholder_re().is_match(src[i].text)).collect();
        let anchors: Vec<String> = anchor_idx.iter().map(|&i| src[i].text.to_lowercase()).collect();
        let dst_lower: Vec<String> = dst.iter().map(|t| t.text.to_lowercase()).collect();
        // source token index -> response token index
        let matched: BTreeMap<usize, usize> = lcs(&anchors, &dst_lower)
            .into_iter()
            .map(|(a, d)| (anchor_idx[a], d))
            .collect();
        for (i, tok) in src.iter().enumerate() {
            let Some(caps) = placeholder_re().captures(tok.text) else {
                continue;
            };
            let Some(id) = caps[1].parse().ok().map(VarId) else {
                continue;
            };
            let Some(var) = delex.variable(id) else {
                continue;
            };
            let prev = matched.range(..i).next_back();
            let next = matched.range(i + 1..).next();
            let lo_src = prev.map_or(0, |(s, _)| *s);
            let hi_src = next.map_or(src.len(), |(s, _)| *s);
            let shared = src[lo_src..hi_src].iter().filter(|t| placeholder_re().is_match(t.text)).count();
            if shared > 1 {
                warnings.push(format!("{}: {id} cannot be separated from a neighbouring variable", delex.dialogue_id));
                continue;
            }
            let lo = prev.map_or(0, |(_, d)| dst[*d].end);
            let hi = next.map_or(text.len(), |(_, d)| dst[*d].start);
            let region = if lo <= hi { text[lo..hi].trim() } else { "" };
            if region.is_empty() || region == MASK {
                warnings.push(format!("{}: no value found for {id}", delex.dialogue_id));
                continue;
            }
            match normalize_value(region, var.kind) {
                Ok(v) => out.set(id, Some(v)),
                Err(e) => warnings.push(format!("{}: {id}: {e}", delex.dialogue_id)),
            }
        }
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{delexicalize, Dialogue, Span, Turn};
    use crate::domain::Instance;

    fn food_and_price_kb() -> KnowledgeBase {
        KnowledgeBase::new(vec![
            Instance::new("R1", [("name", "taberna"), ("area", "centre"), ("food", "spanish"), ("price", "cheap")]),
            Instance::new("R2", [("name", "espana"), ("area", "centre"), ("food", "spanish"), ("price", "moderate")]),
            Instance::new("R3", [("name", "beirut"), ("area", "centre"), ("food", "lebanese"), ("price", "cheap")]),
        ])
        .unwrap()
    }

    fn span(text: &str, needle: &str, slot: &str) -> Span {
        let b = text.find(needle).unwrap();
        let start = text[..b].chars().count();
        Span { start, end: start + needle.chars().count(), slot: slot.into(), cue: None, value: None }
    }

    fn small() -> DelexDialogue {
        let u = "I want Spanish food in the centre .";
        let s = "There are two restaurants serving Spanish food , one is cheap .";
        delexicalize(&Dialogue {
            dialogue_id: "d".into(),
            turns: vec![
                Turn { speaker: Speaker::User, text: u.into(), spans: vec![span(u, "Spanish", "food"), span(u, "centre", "area")] },
                Turn {
                    speaker: Speaker::System,
                    text: s.into(),
                    spans: vec![span(s, "two", "__count__"), span(s, "Spanish", "food"), span(s, "cheap", "price")],
                },
            ],
        })
        .unwrap()
    }

    #[test]
    fn most_frequent_values() {
        let a = relex_most_frequent(&small(), &food_and_price_kb());
        assert_eq!(a.get(VarId(1)), Some(&Value::text("spanish")));
        assert_eq!(a.get(VarId(2)), Some(&Value::text("centre")));
        assert_eq!(a.get(VarId(3)), Some(&Value::Count(3)));
        // cheap 2, moderate 1
        assert_eq!(a.get(VarId(5)), Some(&Value::text("cheap")));
    }

    #[test]
    fn most_frequent_tie_is_lexicographic() {
        let kb = KnowledgeBase::new(vec![
            Instance::new("A", [("food", "thai")]),
            Instance::new("B", [("food", "indian")]),
        ])
        .unwrap();
        let a = relex_most_frequent(&small(), &kb);
        assert_eq!(a.get(VarId(1)), Some(&Value::text("indian")));
        // no area in this kb
        assert_eq!(a.get(VarId(2)), None);
    }

    #[test]
    fn random_is_seeded_and_kb_grounded() {
        let kb = food_and_price_kb();
        let d = small();
        let a = relex_random(&d, &kb, 7, false);
        assert_eq!(a, relex_random(&d, &kb, 7, false));
        let values: BTreeSet<&str> = kb.instances().iter().flat_map(|i| i.attributes.values().map(String::as_str)).collect();
        for var in &d.variables {
            match a.get(var.id).unwrap() {
                Value::Text(t) => assert!(values.contains(t.as_str())),
                Value::Count(n) => assert!(*n <= 3),
            }
        }
        let typed = relex_random(&d, &kb, 7, true);
        assert!(kb.instances().iter().any(|i| Some(i.get("price").unwrap()) == typed.get(VarId(5)).and_then(Value::as_text)));
        assert_eq!(relex_random(&d, &KnowledgeBase::empty(), 7, false), Assignment::unfilled(&d));
    }

    #[test]
    fn prompt_lists_kb_and_masks() {
        let b = build_prompt(&small(), &food_and_price_kb());
        assert!(b.prompt.contains("Restaurant #1 - Area: centre, Food: spanish, Price: cheap, Name: taberna\n"));
        assert!(b.prompt.contains("System: There are [MASK] restaurants serving [MASK] food , one is [MASK] .\n"));
        assert!(b.prompt.contains("Turns should start with either User or System"));
        assert_eq!(b.manifest, (1..=5).map(VarId).collect::<Vec<_>>());
        let empty = build_prompt(&small(), &KnowledgeBase::empty());
        assert!(empty.prompt.contains("### Knowledge Base:\n\n### Dialogue:\n"));
    }

    #[test]
    fn parse_aligned_response() {
        let resp = "Sure, here it is:\nUser: I want Italian food in the north .\nSystem: There are three restaurants serving Italian food , one is expensive .\n";
        let (a, w) = parse_llm_response(resp, &small());
        assert!(w.is_empty(), "{w:?}");
        assert_eq!(a.get(VarId(1)), Some(&Value::text("italian")));
        assert_eq!(a.get(VarId(2)), Some(&Value::text("north")));
        assert_eq!(a.get(VarId(3)), Some(&Value::Count(3)));
        assert_eq!(a.get(VarId(4)), Some(&Value::text("italian")));
        assert_eq!(a.get(VarId(5)), Some(&Value::text("expensive")));
    }

    #[test]
    fn adjacent_placeholders_are_not_guessed() {
        // rewording leaves no anchor between V3 and V4
        let squashed = "User: I want Italian food in the north .\nSystem: There are lots of places , one is expensive .";
        let (a, w) = parse_llm_response(squashed, &small());
        assert_eq!(a.get(VarId(3)), None);
        assert_eq!(a.get(VarId(4)), None);
        assert_eq!(a.get(VarId(5)), Some(&Value::text("expensive")));
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn missing_turn_and_garbage() {
        let (a, w) = parse_llm_response("User: I want Thai food in the east .", &small());
        assert_eq!(a.get(VarId(1)), Some(&Value::text("thai")));
        assert_eq!((a.get(VarId(3)), a.get(VarId(5))), (None, None));
        assert_eq!(w.len(), 2);
        let (a, w) = parse_llm_response("<html>502</html>", &small());
        assert_eq!(a, Assignment::unfilled(&small()));
        assert!(!w.is_empty());
    }
}
