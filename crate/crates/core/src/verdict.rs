//! Consistency of a (possibly partial) assignment with a model.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::constraints::{Constraint, Family, Payload};
use crate::dialogue::Assignment;
use crate::error::{Error, Result};
use crate::model::CspModel;
use crate::solver::{count_solutions, Solution};
use crate::value::{Value, VarId, VarKind};

/// Anything that maps variables to (optional) values.
pub trait Valuation {
    fn value(&self, id: VarId) -> Option<&Value>;
}

impl Valuation for Assignment {
    fn value(&self, id: VarId) -> Option<&Value> {
        self.get(id)
    }
}

impl Valuation for Solution {
    fn value(&self, id: VarId) -> Option<&Value> {
        self.get(id)
    }
}

fn scope_values<'a, V: Valuation>(valuation: &'a V, scope: &[VarId]) -> Result<Vec<&'a Value>> {
    scope
        .iter()
        .map(|id| valuation.value(*id).ok_or(Error::Unassigned(*id)))
        .collect()
}

fn matching<V: Valuation>(valuation: &V, c: &Constraint, model: &CspModel) -> Result<usize> {
    let mut filters = Vec::new();
    for f in c.filters() {
        let value = valuation.value(f.var).ok_or(Error::Unassigned(f.var))?;
        match value.as_text() {
            Some(text) => filters.push((f.slot.as_str(), text)),
            None => return Ok(0),
        }
    }
    Ok(model.index().count_matching(&filters))
}

/// Evaluates one constraint; every scope variable must be assigned.
pub fn satisfies<V: Valuation>(valuation: &V, c: &Constraint, model: &CspModel) -> Result<bool> {
    let values = scope_values(valuation, &c.scope)?;
    Ok(match &c.payload {
        Payload::Membership => model.in_domain(c.scope[0], values[0]),
        Payload::Equality => values.windows(2).all(|w| w[0] == w[1]),
        Payload::AllDifferent => {
            let distinct: BTreeSet<&Value> = values.iter().copied().collect();
            distinct.len() == values.len()
        }
        Payload::NoMatch { .. } => matching(valuation, c, model)? == 0,
        Payload::SomeMatch { .. } => matching(valuation, c, model)? > 0,
        Payload::ExactCount { count, .. } => {
            let want = valuation.value(*count).and_then(Value::as_count);
            want.is_some_and(|n| n as usize == matching(valuation, c, model).unwrap_or(usize::MAX))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Constraint,
    Unfilled,
    OutOfDomain,
    /// Zero-solution case: a value the kb actually contains.
    ValueInKb,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// Index into the model's constraint list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<usize>,
    pub variables: Vec<VarId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub violations: Vec<Violation>,
    /// The model has no solution, so values were judged against the kb instead.
    pub zero_solution_rule_applied: bool,
}

/// Variables held responsible for a violated constraint.
fn offending<V: Valuation>(valuation: &V, c: &Constraint) -> Vec<VarId> {
    match &c.payload {
        Payload::Membership => c.scope.clone(),
        Payload::Equality => {
            let values: Vec<Option<&Value>> = c.scope.iter().map(|id| valuation.value(*id)).collect();
            let freq = |v: Option<&Value>| values.iter().filter(|w| **w == v).count();
            let top = values.iter().map(|v| freq(*v)).max().unwrap_or(0);
            let plurality = values.iter().copied().find(|v| freq(*v) == top).flatten();
            c.scope
                .iter()
                .zip(&values)
                .filter(|(_, v)| **v != plurality)
                .map(|(id, _)| *id)
                .collect()
        }
        Payload::AllDifferent => {
            let values: Vec<Option<&Value>> = c.scope.iter().map(|id| valuation.value(*id)).collect();
            c.scope
                .iter()
                .zip(&values)
                .filter(|(_, v)| values.iter().filter(|w| *w == *v).count() > 1)
                .map(|(id, _)| *id)
                .collect()
        }
        Payload::NoMatch { filters } | Payload::SomeMatch { filters } => filters.iter().map(|f| f.var).collect(),
        Payload::ExactCount { count, .. } => vec![*count],
    }
}

/// Judges `assignment` against `model`, solving the model to decide which
/// rule applies.
pub fn check_consistency(model: &CspModel, assignment: &Assignment) -> Result<ConsistencyVerdict> {
    let satisfiable = count_solutions(model, 1).count > 0;
    check_consistency_with(model, assignment, satisfiable)
}

/// Same as [`check_consistency`] with satisfiability already known.
///
/// A satisfiable model requires every variable filled and every constraint
/// met. An unsatisfiable one accepts unfilled variables, count variables and
/// values the kb does not contain for the variable's slot.
pub fn check_consistency_with(
    model: &CspModel,
    assignment: &Assignment,
    satisfiable: bool,
) -> Result<ConsistencyVerdict> {
    if let Some(id) = assignment.values.keys().find(|id| model.variable(**id).is_none()) {
        return Err(Error::UnknownVariable(*id));
    }
    let mut violations = Vec::new();
    if satisfiable {
        let has_c1: BTreeSet<VarId> = model
            .constraints()
            .iter()
            .filter(|c| c.family == Family::C1)
            .map(|c| c.scope[0])
            .collect();
        for var in model.variables() {
            match assignment.get(var.id) {
                None => violations.push(Violation {
                    kind: ViolationKind::Unfilled,
                    family: None,
                    constraint: None,
                    variables: vec![var.id],
                }),
                Some(v) if !has_c1.contains(&var.id) && !model.in_domain(var.id, v) => violations.push(Violation {
                    kind: ViolationKind::OutOfDomain,
                    family: None,
                    constraint: None,
                    variables: vec![var.id],
                }),
                Some(_) => {}
            }
        }
        for (k, c) in model.constraints().iter().enumerate() {
            if let Ok(false) = satisfies(assignment, c, model) {
                violations.push(Violation {
                    kind: ViolationKind::Constraint,
                    family: Some(c.family),
                    constraint: Some(k),
                    variables: offending(assignment, c),
                });
            }
        }
    } else {
        for var in model.variables() {
            if var.kind == VarKind::Count {
                continue;
            }
            let Some(text) = assignment.get(var.id).and_then(Value::as_text) else {
                continue;
            };
            if value_in_kb(model, var.slot.as_deref(), text) {
                violations.push(Violation {
                    kind: ViolationKind::ValueInKb,
                    family: None,
                    constraint: None,
                    variables: vec![var.id],
                });
            }
        }
    }
    Ok(ConsistencyVerdict {
        consistent: violations.is_empty(),
        violations,
        zero_solution_rule_applied: !satisfiable,
    })
}

fn value_in_kb(model: &CspModel, slot: Option<&str>, text: &str) -> bool {
    match slot {
        Some(slot) => model.index().has_value(slot, text),
        None => model
            .kb()
            .instances()
            .iter()
            .any(|inst| inst.attributes.values().any(|v| v == text)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{ConstraintSet, Filter};
    use crate::domain::{Instance, KnowledgeBase};
    use crate::model::VariableInfo;

    fn model(constraints: Vec<Constraint>) -> CspModel {
        let kb = KnowledgeBase::new(vec![
            Instance::new("R1", [("food", "spanish"), ("price", "cheap")]),
            Instance::new("R2", [("food", "spanish"), ("price", "moderate")]),
        ])
        .unwrap();
        let mut set = ConstraintSet::default();
        let foods: Vec<Value> = ["italian", "spanish"].into_iter().map(Value::text).collect();
        for n in 1..=3 {
            set.domains.insert(VarId(n), foods.clone());
        }
        set.domains.insert(VarId(4), (0..=3).map(Value::Count).collect());
        set.constraints = constraints;
        let mut vars: Vec<VariableInfo> = (1..=3)
            .map(|n| VariableInfo { id: VarId(n), kind: VarKind::Value, slot: Some("food".into()) })
            .collect();
        vars.push(VariableInfo { id: VarId(4), kind: VarKind::Count, slot: None });
        CspModel::new(None, vars, set, kb).unwrap()
    }

    fn assign(values: &[(u32, Option<Value>)]) -> Assignment {
        let mut a = Assignment::default();
        for (n, v) in values {
            a.set(VarId(*n), v.clone());
        }
        a
    }

    fn t(s: &str) -> Option<Value> {
        Some(Value::text(s))
    }

    #[test]
    fn equality_blames_minority() {
        let m = model(vec![Constraint::equality(vec![VarId(1), VarId(2), VarId(3)])]);
        let a = assign(&[(1, t("italian")), (2, t("spanish")), (3, t("spanish")), (4, Some(Value::Count(0)))]);
        let v = check_consistency(&m, &a).unwrap();
        assert!(!v.consistent);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].variables, vec![VarId(1)]);
        assert_eq!(v.violations[0].family, Some(Family::C2));
    }

    #[test]
    fn equality_tie_keeps_first_value() {
        let m = model(vec![Constraint::equality(vec![VarId(1), VarId(2)])]);
        let a = assign(&[(1, t("italian")), (2, t("spanish")), (3, t("spanish")), (4, Some(Value::Count(0)))]);
        let v = check_consistency(&m, &a).unwrap();
        assert_eq!(v.violations[0].variables, vec![VarId(2)]);
    }

    #[test]
    fn unfilled_is_a_violation_when_satisfiable() {
        let m = model(vec![]);
        let a = assign(&[(1, t("italian")), (2, None), (3, t("spanish")), (4, Some(Value::Count(0)))]);
        let v = check_consistency(&m, &a).unwrap();
        assert!(!v.consistent);
        assert_eq!(v.violations[0].kind, ViolationKind::Unfilled);
        assert!(!v.zero_solution_rule_applied);
    }

    #[test]
    fn count_checks_kb() {
        let filters = vec![Filter { var: VarId(1), slot: "food".into() }];
        let m = model(vec![Constraint::exact_count(VarId(4), filters)]);
        let good = assign(&[(1, t("spanish")), (2, t("x")), (3, t("x")), (4, Some(Value::Count(2)))]);
        let c = &m.constraints()[0];
        assert!(satisfies(&good, c, &m).unwrap());
        let bad = assign(&[(1, t("spanish")), (4, Some(Value::Count(1)))]);
        assert!(!satisfies(&bad, c, &m).unwrap());
        let v = check_consistency(&m, &bad).unwrap();
        let blamed: Vec<_> = v.violations.iter().filter(|x| x.kind == ViolationKind::Constraint).collect();
        assert_eq!(blamed[0].variables, vec![VarId(4)]);
        assert!(matches!(satisfies(&Assignment::default(), c, &m), Err(Error::Unassigned(_))));
        let stray = assign(&[(9, t("spanish"))]);
        assert!(matches!(check_consistency(&m, &stray), Err(Error::UnknownVariable(VarId(9)))));
    }

    #[test]
    fn zero_solution_rule() {
        let f = || vec![Filter { var: VarId(1), slot: "food".into() }];
        let m = model(vec![Constraint::no_match(f()), Constraint::some_match(f())]);
        let a = assign(&[(1, t("spanish")), (2, t("italian")), (3, None), (4, Some(Value::Count(3)))]);
        let v = check_consistency(&m, &a).unwrap();
        assert!(v.zero_solution_rule_applied);
        assert!(!v.consistent);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].variables, vec![VarId(1)]);
        assert_eq!(v.violations[0].kind, ViolationKind::ValueInKb);
        let ok = assign(&[(1, t("italian")), (2, None), (3, t("polish")), (4, Some(Value::Count(3)))]);
        assert!(check_consistency(&m, &ok).unwrap().consistent);
    }
}
