//! Ontology, knowledge base, instance index and per-dialogue KB sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::DelexDialogue;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::value::{canonical_text, Value, VarKind};

/// Largest knowledge base `sample_kb` produces.
pub const MAX_SAMPLED_KB: usize = 9;
/// Upper bound (inclusive) on the number of padding instances.
pub const MAX_PADDING: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotType {
    pub name: String,
    /// Canonical values, sorted and unique.
    pub values: Vec<String>,
}

impl SlotType {
    pub fn contains(&self, value: &str) -> bool {
        self.values.binary_search_by(|v| v.as_str().cmp(value)).is_ok()
    }
}

#[derive(Deserialize)]
struct RawOntology {
    slots: Vec<SlotType>,
}

/// The slots of a single concept and the values each slot admits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOntology")]
pub struct Ontology {
    slots: Vec<SlotType>,
}

impl TryFrom<RawOntology> for Ontology {
    type Error = Error;

    fn try_from(raw: RawOntology) -> Result<Self> {
        Ontology::new(raw.slots)
    }
}

impl Ontology {
    /// Canonicalizes every value and checks the ontology invariants.
    pub fn new(slots: Vec<SlotType>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut out = Vec::with_capacity(slots.len());
        for slot in slots {
            let name = slot.name.trim().to_string();
            if name.is_empty() {
                return Err(Error::validation("slot with an empty name"));
            }
            if !names.insert(name.clone()) {
                return Err(Error::validation(format!("duplicate slot {name:?}")));
            }
            let mut seen = BTreeSet::new();
            for v in &slot.values {
                let c = canonical_text(v);
                if c.is_empty() {
                    return Err(Error::validation(format!("slot {name:?} has an empty value")));
                }
                if !seen.insert(c.clone()) {
                    return Err(Error::validation(format!(
                        "slot {name:?} lists {c:?} more than once"
                    )));
                }
            }
            if seen.is_empty() {
                return Err(Error::validation(format!("slot {name:?} has no values")));
            }
            out.push(SlotType {
                name,
                values: seen.into_iter().collect(),
            });
        }
        Ok(Ontology { slots: out })
    }

    pub fn slots(&self) -> &[SlotType] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&SlotType> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Union of all slot value sets, sorted.
    pub fn all_values(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.slots.iter().flat_map(|s| &s.values).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
}

impl Instance {
    pub fn new<I, K, V>(id: impl Into<String>, attributes: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: AsRef<str>,
    {
        Instance {
            id: id.into(),
            attributes: attributes
                .into_iter()
                .map(|(k, v)| (k.into(), canonical_text(v.as_ref())))
                .collect(),
        }
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.attributes.get(slot).map(String::as_str)
    }
}

#[derive(Deserialize)]
struct RawKnowledgeBase {
    instances: Vec<Instance>,
}

/// An ordered collection of instances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawKnowledgeBase")]
pub struct KnowledgeBase {
    instances: Vec<Instance>,
}

impl TryFrom<RawKnowledgeBase> for KnowledgeBase {
    type Error = Error;

    fn try_from(raw: RawKnowledgeBase) -> Result<Self> {
        KnowledgeBase::new(raw.instances)
    }
}

impl KnowledgeBase {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let mut ids = HashSet::new();
        let instances: Vec<Instance> = instances
            .into_iter()
            .map(|i| Instance::new(i.id, i.attributes))
            .collect();
        for inst in &instances {
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::validation(format!("duplicate instance id {:?}", inst.id)));
            }
        }
        Ok(KnowledgeBase { instances })
    }

    pub fn empty() -> Self {
        KnowledgeBase::default()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        for inst in &self.instances {
            for (slot, value) in &inst.attributes {
                let Some(st) = ontology.slot(slot) else {
                    return Err(Error::validation(format!(
                        "instance {:?}: unknown slot {slot:?}",
                        inst.id
                    )));
                };
                if !st.contains(value) {
                    return Err(Error::validation(format!(
                        "instance {:?}: value {value:?} is not in slot {slot:?}",
                        inst.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Inverted index from `(slot, value)` to the positions of matching instances.
#[derive(Clone, Debug, Default)]
pub struct KbIndex {
    postings: HashMap<String, BTreeMap<String, Vec<usize>>>,
    ids: Vec<String>,
}

impl KbIndex {
    pub fn build(kb: &KnowledgeBase) -> Self {
        let mut postings: HashMap<String, BTreeMap<String, Vec<usize>>> = HashMap::new();
        for (pos, inst) in kb.instances().iter().enumerate() {
            for (slot, value) in &inst.attributes {
                postings
                    .entry(slot.clone())
                    .or_default()
                    .entry(value.clone())
                    .or_default()
                    .push(pos);
            }
        }
        KbIndex {
            postings,
            ids: kb.instances().iter().map(|i| i.id.clone()).collect(),
        }
    }

    /// Validates `kb` against `ontology` before indexing.
    pub fn build_checked(kb: &KnowledgeBase, ontology: &Ontology) -> Result<Self> {
        kb.validate(ontology)?;
        Ok(Self::build(kb))
    }

    pub fn total(&self) -> usize {
        self.ids.len()
    }

    /// Ids of the instances carrying `value` for `slot`, in kb order.
    pub fn postings(&self, slot: &str, value: &str) -> Vec<&str> {
        self.positions(slot, value)
            .iter()
            .map(|&p| self.ids[p].as_str())
            .collect()
    }

    fn positions(&self, slot: &str, value: &str) -> &[usize] {
        self.postings
            .get(slot)
            .and_then(|m| m.get(value))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Distinct values observed for `slot`, sorted.
    pub fn values_of(&self, slot: &str) -> impl Iterator<Item = &str> {
        self.postings
            .get(slot)
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    /// Whether any instance carries `value` for `slot`.
    pub fn has_value(&self, slot: &str, value: &str) -> bool {
        !self.positions(slot, value).is_empty()
    }

    /// Number of instances matching every `(slot, value)` filter.
    pub fn count_matching(&self, filters: &[(&str, &str)]) -> usize {
        let mut iter = filters.iter();
        let Some(&(slot, value)) = iter.next() else {
            return self.total();
        };
        let mut current: Vec<usize> = self.positions(slot, value).to_vec();
        for &(slot, value) in iter {
            if current.is_empty() {
                break;
            }
            let other = self.positions(slot, value);
            current.retain(|p| other.binary_search(p).is_ok());
        }
        current.len()
    }

    pub fn exists_matching(&self, filters: &[(&str, &str)]) -> bool {
        self.count_matching(filters) > 0
    }
}

/// Builds a dialogue KB from every pertinent instance plus a random number
/// (uniform in `0..=8`) of other distinct instances of `global`.
///
/// The result keeps the global kb order.
pub fn sample_kb(
    global: &KnowledgeBase,
    pertinent_ids: &BTreeSet<String>,
    seed: u64,
) -> Result<KnowledgeBase> {
    let mut rng = seeded_rng(seed, "sample-kb");
    let padding = rng.gen_range(0..=MAX_PADDING);
    sample_kb_with_padding(global, pertinent_ids, padding, &mut rng)
}

pub fn sample_kb_with_padding<R: Rng>(
    global: &KnowledgeBase,
    pertinent_ids: &BTreeSet<String>,
    padding: usize,
    rng: &mut R,
) -> Result<KnowledgeBase> {
    if pertinent_ids.len() > MAX_SAMPLED_KB {
        return Err(Error::validation(format!(
            "{} pertinent instances exceed the sampled kb limit of {MAX_SAMPLED_KB}",
            pertinent_ids.len()
        )));
    }
    for id in pertinent_ids {
        if global.get(id).is_none() {
            return Err(Error::validation(format!(
                "pertinent instance {id:?} is not in the global kb"
            )));
        }
    }
    let pool: Vec<usize> = global
        .instances()
        .iter()
        .enumerate()
        .filter(|(_, i)| !pertinent_ids.contains(&i.id))
        .map(|(p, _)| p)
        .collect();
    let room = MAX_SAMPLED_KB - pertinent_ids.len();
    let take = padding.min(pool.len()).min(room);
    let mut chosen: BTreeSet<usize> = index::sample(rng, pool.len(), take)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    for (p, inst) in global.instances().iter().enumerate() {
        if pertinent_ids.contains(&inst.id) {
            chosen.insert(p);
        }
    }
    KnowledgeBase::new(
        chosen
            .into_iter()
            .map(|p| global.instances()[p].clone())
            .collect(),
    )
}

/// The kb of one dialogue: its pertinent instances plus random padding drawn
/// from a stream keyed by the dialogue id, so each dialogue's kb depends only
/// on the seed and that id.
pub fn sample_dialogue_kb(global: &KnowledgeBase, dialogue: &DelexDialogue, seed: u64) -> Result<KnowledgeBase> {
    let pertinent = select_pertinent(global, dialogue, "name");
    let mut rng = seeded_rng(seed, &format!("sample-kb/{}", dialogue.dialogue_id));
    let padding = rng.gen_range(0..=MAX_PADDING);
    sample_kb_with_padding(global, &pertinent, padding, &mut rng)
}

/// Picks the instance(s) a gold dialogue is about.
///
/// Every instance whose name is mentioned as a gold value is pertinent. Without a
/// name mention, the instance agreeing with the most of the dialogue's final
/// per-slot gold values is chosen (ties by instance id).
pub fn select_pertinent(
    global: &KnowledgeBase,
    dialogue: &DelexDialogue,
    name_slot: &str,
) -> BTreeSet<String> {
    let mut last_mention: BTreeMap<&str, &str> = BTreeMap::new();
    let mut names = BTreeSet::new();
    for var in dialogue.variables.iter().filter(|v| v.kind == VarKind::Value) {
        let (Some(slot), Value::Text(gold)) = (var.slot.as_deref(), &var.gold) else {
            continue;
        };
        if slot == name_slot {
            names.insert(gold.as_str());
        }
        last_mention.insert(slot, gold.as_str());
    }
    let named: BTreeSet<String> = global
        .instances()
        .iter()
        .filter(|i| i.get(name_slot).is_some_and(|n| names.contains(n)))
        .map(|i| i.id.clone())
        .collect();
    if !named.is_empty() {
        return named;
    }
    global
        .instances()
        .iter()
        .map(|i| {
            let score = last_mention
                .iter()
                .filter(|(slot, value)| i.get(slot) == Some(**value))
                .count();
            (score, &i.id)
        })
        // highest score, then smallest id
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, id)| BTreeSet::from([id.clone()]))
        .unwrap_or_default()
}
