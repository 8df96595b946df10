//! Extraction of variable domains and of the six constraint families.
//!
//! * C1 restricts a variable to the values of its slot type.
//! * C2 ties together variables that mention the same slot value.
//! * C3 keeps same-typed variables of one utterance distinct.
//! * C4, C5 and C6 ground no-result, existence and exact-count claims in the kb.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::{placeholder_re, Cue, DelexDialogue, Speaker, Variable};
use crate::domain::{KnowledgeBase, Ontology};
use crate::error::{Error, Result};
use crate::value::{Value, VarId, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::C1, Family::C2, Family::C3, Family::C4, Family::C5, Family::C6];
    pub const DIALOGIC: [Family; 2] = [Family::C2, Family::C3];
    pub const DOMAIN: [Family; 3] = [Family::C4, Family::C5, Family::C6];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Usage(format!("unknown constraint family {s:?}")))
    }
}

/// A filter variable of a kb query: the instance must carry the variable's
/// value for `slot`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Filter {
    pub var: VarId,
    pub slot: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    /// Scope variable takes a value from its domain.
    Membership,
    /// All scope variables take the same value.
    Equality,
    /// Scope variables take pairwise distinct values.
    AllDifferent,
    /// No instance matches the filters.
    NoMatch { filters: Vec<Filter> },
    /// Some instance matches the filters.
    SomeMatch { filters: Vec<Filter> },
    /// Exactly `count` instances match the filters.
    ExactCount { count: VarId, filters: Vec<Filter> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub family: Family,
    pub scope: Vec<VarId>,
    pub payload: Payload,
}

impl Constraint {
    pub fn membership(var: VarId) -> Self {
        Constraint {
            family: Family::C1,
            scope: vec![var],
            payload: Payload::Membership,
        }
    }

    pub fn equality(class: Vec<VarId>) -> Self {
        Constraint {
            family: Family::C2,
            scope: class,
            payload: Payload::Equality,
        }
    }

    pub fn all_different(vars: Vec<VarId>) -> Self {
        Constraint {
            family: Family::C3,
            scope: vars,
            payload: Payload::AllDifferent,
        }
    }

    pub fn no_match(filters: Vec<Filter>) -> Self {
        Constraint {
            family: Family::C4,
            scope: filters.iter().map(|f| f.var).collect(),
            payload: Payload::NoMatch { filters },
        }
    }

    pub fn some_match(filters: Vec<Filter>) -> Self {
        Constraint {
            family: Family::C5,
            scope: filters.iter().map(|f| f.var).collect(),
            payload: Payload::SomeMatch { filters },
        }
    }

    pub fn exact_count(count: VarId, filters: Vec<Filter>) -> Self {
        let mut scope = vec![count];
        scope.extend(filters.iter().map(|f| f.var));
        Constraint {
            family: Family::C6,
            scope,
            payload: Payload::ExactCount { count, filters },
        }
    }

    /// Filters of a kb query, empty for the other families.
    pub fn filters(&self) -> &[Filter] {
        match &self.payload {
            Payload::NoMatch { filters } | Payload::SomeMatch { filters } => filters,
            Payload::ExactCount { filters, .. } => filters,
            _ => &[],
        }
    }

    /// Checks the family/payload pairing and the scope shape.
    pub fn validate(&self) -> Result<()> {
        let expected = match &self.payload {
            Payload::Membership => Family::C1,
            Payload::Equality => Family::C2,
            Payload::AllDifferent => Family::C3,
            Payload::NoMatch { .. } => Family::C4,
            Payload::SomeMatch { .. } => Family::C5,
            Payload::ExactCount { .. } => Family::C6,
        };
        if expected != self.family {
            return Err(Error::validation(format!(
                "{} constraint carries a {expected} payload",
                self.family
            )));
        }
        if self.scope.is_empty() {
            return Err(Error::validation(format!("{} constraint with empty scope", self.family)));
        }
        let distinct: BTreeSet<_> = self.scope.iter().collect();
        if distinct.len() != self.scope.len() {
            return Err(Error::validation(format!("{} constraint repeats a variable", self.family)));
        }
        let from_payload: Option<Vec<VarId>> = match &self.payload {
            Payload::NoMatch { filters } | Payload::SomeMatch { filters } => {
                Some(filters.iter().map(|f| f.var).collect())
            }
            Payload::ExactCount { count, filters } => {
                Some(std::iter::once(*count).chain(filters.iter().map(|f| f.var)).collect())
            }
            _ => None,
        };
        if from_payload.is_some_and(|p| p != self.scope) {
            return Err(Error::validation(format!(
                "{} constraint scope disagrees with its payload",
                self.family
            )));
        }
        if self.family == Family::C1 && self.scope.len() != 1 {
            return Err(Error::validation("C1 constraint must have a single variable"));
        }
        Ok(())
    }
}

/// Finite set of admissible values per variable, each sorted ascending.
pub type DomainMap = BTreeMap<VarId, Vec<Value>>;

/// The model file: domains plus constraints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub domains: DomainMap,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn of_family(&self, family: Family) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(move |c| c.family == family)
    }

    /// Returns the first variable pair that shares a C2 class and a C3 scope.
    pub fn equality_distinct_overlap(&self) -> Option<(VarId, VarId)> {
        let mut class_of = BTreeMap::new();
        for (k, c) in self.of_family(Family::C2).enumerate() {
            for v in &c.scope {
                class_of.insert(*v, k);
            }
        }
        for c in self.of_family(Family::C3) {
            for (i, a) in c.scope.iter().enumerate() {
                for b in &c.scope[i + 1..] {
                    if class_of.contains_key(a) && class_of.get(a) == class_of.get(b) {
                        return Some((*a, *b));
                    }
                }
            }
        }
        None
    }
}

/// Families removed from a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationConfig {
    pub removed: BTreeSet<Family>,
}

impl AblationConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn without(families: impl IntoIterator<Item = Family>) -> Self {
        AblationConfig {
            removed: families.into_iter().collect(),
        }
    }

    pub fn removes(&self, family: Family) -> bool {
        self.removed.contains(&family)
    }

    /// The eight configurations of the ablation table: each family alone, then
    /// the dialogic and domain groups.
    pub fn standard_table() -> Vec<AblationConfig> {
        let mut out: Vec<_> = Family::ALL.iter().map(|f| Self::without([*f])).collect();
        out.push(Self::without(Family::DIALOGIC));
        out.push(Self::without(Family::DOMAIN));
        out
    }

    pub fn label(&self) -> String {
        if self.removed.is_empty() {
            return "all".to_string();
        }
        let group = |fs: &[Family]| self.removed.len() == fs.len() && fs.iter().all(|f| self.removes(*f));
        let what = if group(&Family::DIALOGIC) {
            "dialogic".to_string()
        } else if group(&Family::DOMAIN) {
            "domain".to_string()
        } else {
            self.removed.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("+")
        };
        format!("all except {what}")
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    /// Parses `C1,C3`, `dialogic` or `domain` (comma separated, combinable).
    fn from_str(s: &str) -> Result<Self> {
        let mut removed = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "dialogic" => removed.extend(Family::DIALOGIC),
                "domain" => removed.extend(Family::DOMAIN),
                _ => {
                    removed.insert(part.parse::<Family>()?);
                }
            }
        }
        Ok(AblationConfig { removed })
    }
}

/// Word lists driving cue detection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub none_cues: Vec<String>,
    pub exists_cues: Vec<String>,
    /// Slots whose mention in a system clause presupposes a matching instance.
    #[serde(default = "default_entity_slots")]
    pub entity_slots: Vec<String>,
}

fn default_entity_slots() -> Vec<String> {
    vec!["name".to_string()]
}

impl Default for CueLexicon {
    fn default() -> Self {
        serde_json::from_str(include_str!("../data/cue_lexicon.json")).expect("bundled lexicon parses")
    }
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:'[\p{L}]+)?|'[\p{L}]+").expect("valid regex"))
}

fn words(text: &str) -> Vec<String> {
    word_re().find_iter(&text.to_lowercase()).map(|m| m.as_str().to_string()).collect()
}

fn phrase_present(tokens: &[String], phrase: &str) -> bool {
    let needle = words(phrase);
    if needle.is_empty() {
        return false;
    }
    if needle.len() == 1 && needle[0] == "n't" {
        return tokens.iter().any(|t| t.ends_with("n't"));
    }
    tokens.windows(needle.len()).any(|w| w == needle.as_slice())
}

impl CueLexicon {
    /// Lexical classification of a clause with placeholders removed.
    pub fn classify(&self, clause: &str) -> Option<Cue> {
        let stripped = placeholder_re().replace_all(clause, " ");
        let tokens = words(&stripped);
        if self.none_cues.iter().any(|p| phrase_present(&tokens, p)) {
            Some(Cue::NoneCue)
        } else if self.exists_cues.iter().any(|p| phrase_present(&tokens, p)) {
            Some(Cue::ExistsCue)
        } else {
            None
        }
    }
}

/// A clause carrying a kb claim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSite {
    pub turn_index: usize,
    pub cue: Cue,
    /// Count variable for exact claims.
    pub count_var: Option<VarId>,
    /// Value-kind variables of the clause, in document order.
    pub clause_vars: Vec<VarId>,
    /// Whether the cue came from a span annotation rather than the heuristics.
    pub annotated: bool,
}

/// Splits text into clauses at `, ; . ? !`, returning byte ranges.
fn clauses(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, ',' | ';' | '.' | '?' | '!') {
            out.push((start, i));
            start = i + c.len_utf8();
        }
    }
    out.push((start, text.len()));
    out.retain(|(a, b)| !text[*a..*b].trim().is_empty());
    out
}

/// Finds the kb claims of one turn.
///
/// Clause by clause: an annotated cue wins; otherwise a count variable makes an
/// exact claim, a negation lexeme a no-result claim, a vague quantifier an
/// existence claim, and (system turns only) an entity mention such as a
/// restaurant name an existence claim. Lexical heuristics apply to system turns.
pub fn detect_cues(delex: &DelexDialogue, turn_index: usize, lexicon: &CueLexicon) -> Vec<CueSite> {
    let Some(turn) = delex.turns.get(turn_index) else {
        return Vec::new();
    };
    let vars: BTreeMap<VarId, &Variable> = delex
        .turn_variables(turn_index)
        .map(|v| (v.id, v))
        .collect();
    let system = turn.speaker == Speaker::System;
    let mut sites = Vec::new();
    for (a, b) in clauses(&turn.text) {
        let clause = &turn.text[a..b];
        let in_clause: Vec<&Variable> = placeholder_re()
            .captures_iter(clause)
            .filter_map(|c| c[1].parse::<u32>().ok())
            .filter_map(|n| vars.get(&VarId(n)).copied())
            .collect();
        let value_vars: Vec<VarId> = in_clause
            .iter()
            .filter(|v| v.kind == VarKind::Value)
            .map(|v| v.id)
            .collect();
        let count_vars: Vec<VarId> = in_clause
            .iter()
            .filter(|v| v.kind == VarKind::Count)
            .map(|v| v.id)
            .collect();
        let site = |cue, count_var, annotated| CueSite {
            turn_index,
            cue,
            count_var,
            clause_vars: value_vars.clone(),
            annotated,
        };
        if let Some(cue) = in_clause.iter().find_map(|v| v.cue) {
            if cue == Cue::ExactCue && !count_vars.is_empty() {
                sites.extend(count_vars.iter().map(|c| site(cue, Some(*c), true)));
            } else {
                sites.push(site(cue, None, true));
            }
            continue;
        }
        if !count_vars.is_empty() {
            sites.extend(count_vars.iter().map(|c| site(Cue::ExactCue, Some(*c), false)));
            continue;
        }
        if !system {
            continue;
        }
        if let Some(cue) = lexicon.classify(clause) {
            sites.push(site(cue, None, false));
        } else if in_clause.iter().any(|v| {
            v.slot
                .as_ref()
                .is_some_and(|s| lexicon.entity_slots.iter().any(|e| e == s))
        }) {
            sites.push(site(Cue::ExistsCue, None, false));
        }
    }
    sites
}

/// C1 domains: the slot's ontology values (all ontology values when C1 is
/// ablated) for value variables, `0..=|kb|` for count variables.
pub fn build_domains(
    variables: &[Variable],
    ontology: &Ontology,
    kb: &KnowledgeBase,
    ablate_c1: bool,
) -> Result<DomainMap> {
    let union: Vec<Value> = ontology.all_values().into_iter().map(Value::Text).collect();
    let counts: Vec<Value> = (0..=kb.len() as u32).map(Value::Count).collect();
    let mut out = DomainMap::new();
    for var in variables {
        let domain = match var.kind {
            VarKind::Count => counts.clone(),
            VarKind::Value => {
                let slot = var.slot.as_deref().unwrap_or_default();
                let st = ontology.slot(slot).ok_or_else(|| {
                    Error::validation(format!("{}: slot {slot:?} is not in the ontology", var.id))
                })?;
                if ablate_c1 {
                    union.clone()
                } else {
                    st.values.iter().cloned().map(Value::Text).collect()
                }
            }
        };
        out.insert(var.id, domain);
    }
    Ok(out)
}

/// Groups value variables by (slot, gold value); classes of two or more become C2.
pub fn extract_equalities(variables: &[Variable]) -> Vec<Constraint> {
    let mut classes: BTreeMap<(&str, &Value), Vec<VarId>> = BTreeMap::new();
    for v in variables.iter().filter(|v| v.kind == VarKind::Value) {
        if let Some(slot) = v.slot.as_deref() {
            classes.entry((slot, &v.gold)).or_default().push(v.id);
        }
    }
    let mut out: Vec<Constraint> = classes
        .into_values()
        .filter(|c| c.len() >= 2)
        .map(Constraint::equality)
        .collect();
    out.sort_by_key(|c| c.scope[0]);
    out
}

/// Pairwise distinctness of same-slot variables within one utterance, skipping
/// pairs that share an equality class.
pub fn extract_alldiff(variables: &[Variable], equalities: &[Constraint]) -> Vec<Constraint> {
    let mut class_of = BTreeMap::new();
    for (k, c) in equalities.iter().enumerate() {
        for v in &c.scope {
            class_of.insert(*v, k);
        }
    }
    let linked = |a: &VarId, b: &VarId| class_of.contains_key(a) && class_of.get(a) == class_of.get(b);
    let mut groups: BTreeMap<(usize, &str), Vec<VarId>> = BTreeMap::new();
    for v in variables.iter().filter(|v| v.kind == VarKind::Value) {
        if let Some(slot) = v.slot.as_deref() {
            groups.entry((v.turn_index, slot)).or_default().push(v.id);
        }
    }
    let mut out = Vec::new();
    for group in groups.into_values().filter(|g| g.len() >= 2) {
        let pairs: Vec<(VarId, VarId)> = group
            .iter()
            .enumerate()
            .flat_map(|(i, a)| group[i + 1..].iter().map(move |b| (*a, *b)))
            .collect();
        if pairs.iter().all(|(a, b)| !linked(a, b)) {
            out.push(Constraint::all_different(group));
        } else {
            out.extend(
                pairs
                    .into_iter()
                    .filter(|(a, b)| !linked(a, b))
                    .map(|(a, b)| Constraint::all_different(vec![a, b])),
            );
        }
    }
    out.sort_by_key(|c| c.scope[0]);
    out
}

/// Turns cue sites into C4/C5/C6 constraints.
///
/// Filters are the value variables of the cue's clause; a clause without any
/// borrows those of the latest preceding user turn that has some.
pub fn extract_domain_constraints(
    delex: &DelexDialogue,
    sites: &[CueSite],
) -> (Vec<Constraint>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let filter_of = |id: VarId| {
        delex.variable(id).and_then(|v| {
            v.slot.clone().map(|slot| Filter { var: id, slot })
        })
    };
    for site in sites {
        let mut filter_vars = site.clause_vars.clone();
        if filter_vars.is_empty() {
            filter_vars = (0..site.turn_index)
                .rev()
                .filter(|t| delex.turns[*t].speaker == Speaker::User)
                .map(|t| {
                    delex
                        .turn_variables(t)
                        .filter(|v| v.kind == VarKind::Value)
                        .map(|v| v.id)
                        .collect::<Vec<_>>()
                })
                .find(|vs| !vs.is_empty())
                .unwrap_or_default();
        }
        let filters: Vec<Filter> = filter_vars.into_iter().filter_map(filter_of).collect();
        match site.cue {
            Cue::ExactCue => match site.count_var {
                Some(count) => out.push(Constraint::exact_count(count, filters)),
                None => warnings.push(format!(
                    "{} turn {}: exact-count cue without a count variable, skipped",
                    delex.dialogue_id, site.turn_index
                )),
            },
            Cue::NoneCue | Cue::ExistsCue if filters.is_empty() => warnings.push(format!(
                "{} turn {}: {:?} without filter variables, skipped",
                delex.dialogue_id, site.turn_index, site.cue
            )),
            Cue::NoneCue => out.push(Constraint::no_match(filters)),
            Cue::ExistsCue => out.push(Constraint::some_match(filters)),
        }
    }
    (out, warnings)
}

/// Extraction output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub set: ConstraintSet,
    pub warnings: Vec<String>,
}

/// Builds the full constraint set of a (dialogue, kb) pair, leaving out the
/// families removed by `ablation`.
pub fn build_constraint_set(
    delex: &DelexDialogue,
    ontology: &Ontology,
    kb: &KnowledgeBase,
    lexicon: &CueLexicon,
    ablation: &AblationConfig,
) -> Result<Extraction> {
    let vars = &delex.variables;
    let domains = build_domains(vars, ontology, kb, ablation.removes(Family::C1))?;
    let mut constraints: Vec<Constraint> = vars.iter().map(|v| Constraint::membership(v.id)).collect();
    // C3 exemptions follow the gold equality classes even when C2 itself is ablated.
    let equalities = extract_equalities(vars);
    let alldiff = extract_alldiff(vars, &equalities);
    constraints.extend(equalities);
    constraints.extend(alldiff);
    let sites: Vec<CueSite> = (0..delex.turns.len())
        .flat_map(|t| detect_cues(delex, t, lexicon))
        .collect();
    let (domain_constraints, warnings) = extract_domain_constraints(delex, &sites);
    constraints.extend(domain_constraints);
    constraints.retain(|c| !ablation.removes(c.family));
    Ok(Extraction {
        set: ConstraintSet {
            domains,
            constraints,
        },
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub family: Family,
    pub variables: usize,
    pub proportion: f64,
}

/// Per family, how many variables appear in at least one of its constraints.
pub fn coverage_stats(sets: &[ConstraintSet]) -> Vec<CoverageRow> {
    let total: usize = sets.iter().map(|s| s.domains.len()).sum();
    Family::ALL
        .iter()
        .map(|&family| {
            let variables: usize = sets
                .iter()
                .map(|s| {
                    s.of_family(family)
                        .flat_map(|c| c.scope.iter())
                        .collect::<BTreeSet<_>>()
                        .len()
                })
                .sum();
            CoverageRow {
                family,
                variables,
                proportion: if total == 0 { 0.0 } else { variables as f64 / total as f64 },
            }
        })
        .collect()
}
