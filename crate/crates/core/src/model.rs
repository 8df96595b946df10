//! A closed CSP model: variables, domains, constraints and the kb they query.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraints::{
    build_constraint_set, AblationConfig, Constraint, ConstraintSet, CueLexicon, Payload,
};
use crate::dialogue::DelexDialogue;
use crate::domain::{KbIndex, KnowledgeBase, Ontology};
use crate::error::{Error, Result};
use crate::value::{Value, VarId, VarKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub id: VarId,
    pub kind: VarKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
}

/// On-disk model: the constraint set plus the context needed to solve it alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<VariableInfo>>,
    #[serde(flatten)]
    pub set: ConstraintSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb: Option<KnowledgeBase>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct CspModel {
    dialogue_id: Option<String>,
    variables: Vec<VariableInfo>,
    set: ConstraintSet,
    kb: KnowledgeBase,
    index: KbIndex,
}

impl CspModel {
    pub fn new(
        dialogue_id: Option<String>,
        mut variables: Vec<VariableInfo>,
        mut set: ConstraintSet,
        kb: KnowledgeBase,
    ) -> Result<Self> {
        variables.sort_by_key(|v| v.id);
        for domain in set.domains.values_mut() {
            domain.sort();
            domain.dedup();
        }
        let model = CspModel {
            dialogue_id,
            variables,
            index: KbIndex::build(&kb),
            set,
            kb,
        };
        model.check_closed()?;
        Ok(model)
    }

    /// Extracts the model of a (dialogue, kb) pair.
    pub fn from_dialogue(
        delex: &DelexDialogue,
        ontology: &Ontology,
        kb: &KnowledgeBase,
        lexicon: &CueLexicon,
        ablation: &AblationConfig,
    ) -> Result<(Self, Vec<String>)> {
        let extraction = build_constraint_set(delex, ontology, kb, lexicon, ablation)?;
        let variables = delex
            .variables
            .iter()
            .map(|v| VariableInfo {
                id: v.id,
                kind: v.kind,
                slot: v.slot.clone(),
            })
            .collect();
        let model = CspModel::new(
            Some(delex.dialogue_id.clone()),
            variables,
            extraction.set,
            kb.clone(),
        )?;
        Ok((model, extraction.warnings))
    }

    /// Rebuilds a model from its file form. `kb` overrides an embedded kb.
    pub fn from_file(file: ModelFile, kb: Option<KnowledgeBase>) -> Result<Self> {
        let kb = kb
            .or(file.kb)
            .ok_or_else(|| Error::validation("model file has no kb and none was supplied"))?;
        let variables = match file.variables {
            Some(v) => v,
            None => infer_variables(&file.set),
        };
        CspModel::new(file.dialogue_id, variables, file.set, kb)
    }

    pub fn to_file(&self, warnings: Vec<String>) -> ModelFile {
        ModelFile {
            dialogue_id: self.dialogue_id.clone(),
            variables: Some(self.variables.clone()),
            set: self.set.clone(),
            kb: Some(self.kb.clone()),
            warnings,
        }
    }

    pub fn dialogue_id(&self) -> Option<&str> {
        self.dialogue_id.as_deref()
    }

    pub fn variables(&self) -> &[VariableInfo] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> Option<&VariableInfo> {
        self.variables
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &self.variables[i])
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.set.constraints
    }

    pub fn constraint_set(&self) -> &ConstraintSet {
        &self.set
    }

    pub fn domain(&self, id: VarId) -> &[Value] {
        self.set.domains.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn in_domain(&self, id: VarId, value: &Value) -> bool {
        self.domain(id).binary_search(value).is_ok()
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn index(&self) -> &KbIndex {
        &self.index
    }

    /// The same model without the constraints of the removed families. Domains
    /// are left untouched; re-extract to switch C1 into union-domain mode.
    pub fn without(&self, removed: &AblationConfig) -> Self {
        let mut set = self.set.clone();
        set.constraints.retain(|c| !removed.removes(c.family));
        CspModel {
            set,
            ..self.clone()
        }
    }

    fn check_closed(&self) -> Result<()> {
        let kinds: BTreeMap<VarId, VarKind> = self.variables.iter().map(|v| (v.id, v.kind)).collect();
        if kinds.len() != self.variables.len() {
            return Err(Error::validation("duplicate variable id in model"));
        }
        for (id, kind) in &kinds {
            let domain = self
                .set
                .domains
                .get(id)
                .ok_or_else(|| Error::validation(format!("{id} has no domain")))?;
            if let Some(v) = domain.iter().find(|v| v.kind() != *kind) {
                return Err(Error::validation(format!("{id}: domain value {v} has the wrong kind")));
            }
        }
        if let Some(id) = self.set.domains.keys().find(|id| !kinds.contains_key(id)) {
            return Err(Error::validation(format!("domain given for unknown variable {id}")));
        }
        for c in &self.set.constraints {
            c.validate()?;
            for v in &c.scope {
                if !kinds.contains_key(v) {
                    return Err(Error::validation(format!("{} constraint references unknown {v}", c.family)));
                }
            }
            if let Payload::ExactCount { count, .. } = &c.payload {
                if kinds[count] != VarKind::Count {
                    return Err(Error::validation(format!("C6 count variable {count} is not a count")));
                }
            }
            if let Some(f) = c.filters().iter().find(|f| kinds[&f.var] != VarKind::Value) {
                return Err(Error::validation(format!("filter variable {} is not a slot value", f.var)));
            }
        }
        Ok(())
    }
}

fn infer_variables(set: &ConstraintSet) -> Vec<VariableInfo> {
    let mut slots = BTreeMap::new();
    for c in &set.constraints {
        for f in c.filters() {
            slots.insert(f.var, f.slot.clone());
        }
    }
    set.domains
        .iter()
        .map(|(id, domain)| VariableInfo {
            id: *id,
            kind: domain.first().map_or(VarKind::Value, Value::kind),
            slot: slots.get(id).cloned(),
        })
        .collect()
}
