//! Per-dialogue scoring, corpus metrics, solution-group stratification and
//! constraint ablation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{AblationConfig, CueLexicon};
use crate::dialogue::{Assignment, DelexDialogue};
use crate::domain::{KnowledgeBase, Ontology};
use crate::error::{Error, Result};
use crate::model::CspModel;
use crate::solver::{Bucket, Solution, Solver};
use crate::verdict::{check_consistency_with, ConsistencyVerdict, ViolationKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueResult {
    pub dialogue_id: String,
    pub verdict: ConsistencyVerdict,
    /// `None` when a cap below 101 was reached.
    pub bucket: Option<Bucket>,
    pub solution_count: u64,
    pub exact: bool,
    pub variable_total: usize,
    pub correct_variables: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_solution: Option<Solution>,
}

/// Solves `model`, judges `assignment` and scores its variables.
///
/// On a satisfiable model the correct variables are those agreeing with the
/// closest solution. Without solutions, a variable counts as correct when it
/// is unfilled, is a count, or holds a value the kb lacks for its slot.
pub fn evaluate_dialogue(model: &CspModel, assignment: &Assignment, cap: u64) -> Result<DialogueResult> {
    let solver = Solver::new(model);
    let summary = solver.count(cap);
    let satisfiable = summary.count > 0;
    let verdict = check_consistency_with(model, assignment, satisfiable)?;
    let variable_total = model.variables().len();
    let (correct_variables, matched_solution) = if satisfiable {
        let best = solver.best_match(assignment).expect("satisfiable model has a best match");
        (best.agreement, Some(best.solution))
    } else {
        let wrong = verdict
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::ValueInKb)
            .count();
        (variable_total - wrong, None)
    };
    Ok(DialogueResult {
        dialogue_id: model.dialogue_id().unwrap_or_default().to_string(),
        verdict,
        bucket: summary.bucket,
        solution_count: summary.count,
        exact: summary.exact,
        variable_total,
        correct_variables,
        matched_solution,
    })
}

/// Fraction of dialogues judged consistent.
pub fn aggregate_gca(results: &[DialogueResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let ok = results.iter().filter(|r| r.verdict.consistent).count();
    Ok(ok as f64 / results.len() as f64)
}

/// Correct variables over all variables (micro average).
pub fn aggregate_vca(results: &[DialogueResult]) -> Result<f64> {
    let total: usize = results.iter().map(|r| r.variable_total).sum();
    if total == 0 {
        return Err(Error::EmptyResults);
    }
    let correct: usize = results.iter().map(|r| r.correct_variables).sum();
    Ok(correct as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: Bucket,
    pub dialogues: usize,
    pub variables: usize,
    /// `None` for an empty group.
    pub gca: Option<f64>,
    pub vca: Option<f64>,
}

/// One row per solution group, in group order. Dialogues without a bucket are
/// left out.
pub fn stratify_by_bucket(results: &[DialogueResult]) -> Vec<BucketRow> {
    Bucket::ALL
        .iter()
        .map(|&bucket| {
            let group: Vec<DialogueResult> = results.iter().filter(|r| r.bucket == Some(bucket)).cloned().collect();
            BucketRow {
                bucket,
                dialogues: group.len(),
                variables: group.iter().map(|r| r.variable_total).sum(),
                gca: aggregate_gca(&group).ok(),
                vca: aggregate_vca(&group).ok(),
            }
        })
        .collect()
}

/// One dialogue to score: its delexicalized form, kb and candidate assignment.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub delex: DelexDialogue,
    pub kb: KnowledgeBase,
    pub assignment: Assignment,
}

/// Settings shared by every dialogue of a run.
#[derive(Clone, Debug)]
pub struct EvalSettings<'a> {
    pub ontology: &'a Ontology,
    pub lexicon: &'a CueLexicon,
    pub cap: u64,
}

/// Extracts, solves and scores every item under `ablation`; results are
/// ordered by dialogue id.
pub fn evaluate_corpus(
    items: &[EvalItem],
    settings: &EvalSettings<'_>,
    ablation: &AblationConfig,
) -> Result<Vec<DialogueResult>> {
    let mut results = items
        .par_iter()
        .map(|item| {
            let (model, _) = CspModel::from_dialogue(&item.delex, settings.ontology, &item.kb, settings.lexicon, ablation)?;
            evaluate_dialogue(&model, &item.assignment, settings.cap)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub removed: AblationConfig,
    pub gca: f64,
    pub vca: f64,
}

/// Re-extracts, re-solves and re-scores the corpus once per configuration.
pub fn run_ablation(
    items: &[EvalItem],
    settings: &EvalSettings<'_>,
    configs: &[AblationConfig],
) -> Result<Vec<AblationRow>> {
    configs
        .iter()
        .map(|config| {
            let results = evaluate_corpus(items, settings, config)?;
            Ok(AblationRow {
                label: config.label(),
                removed: config.clone(),
                gca: aggregate_gca(&results)?,
                vca: aggregate_vca(&results)?,
            })
        })
        .collect()
}
