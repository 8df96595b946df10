//! Run reports and their JSON, CSV and Markdown renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::CoverageRow;
use crate::error::{Error, Result};
use crate::eval::{aggregate_gca, aggregate_vca, stratify_by_bucket, AblationRow, BucketRow, DialogueResult};
use crate::verdict::{Violation, ViolationKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub seed: u64,
    pub cap: u64,
    /// sha256 of the canonical JSON of the run configuration.
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

impl RunMetadata {
    pub fn new<C: Serialize>(seed: u64, cap: u64, strategy: Option<String>, config: &C) -> Self {
        RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            cap,
            config_hash: config_hash(config),
            strategy,
        }
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("run configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub dialogues: usize,
    pub variables: usize,
    pub gca: f64,
    pub vca: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: RunMetadata,
    pub aggregates: Aggregates,
    pub buckets: Vec<BucketRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coverage: Vec<CoverageRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationRow>,
    pub results: Vec<DialogueResult>,
}

impl Report {
    pub fn new(
        metadata: RunMetadata,
        results: Vec<DialogueResult>,
        coverage: Vec<CoverageRow>,
        ablation: Vec<AblationRow>,
    ) -> Result<Self> {
        let aggregates = Aggregates {
            dialogues: results.len(),
            variables: results.iter().map(|r| r.variable_total).sum(),
            gca: aggregate_gca(&results)?,
            vca: aggregate_vca(&results)?,
        };
        Ok(Report {
            metadata,
            aggregates,
            buckets: stratify_by_bucket(&results),
            coverage,
            ablation,
            results,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Usage(format!("unknown report format {other:?}"))),
        }
    }
}

/// Short label such as `C6@V2` or `unfilled@V3`.
pub fn violation_label(v: &Violation) -> String {
    let head = match (v.kind, v.family) {
        (ViolationKind::Constraint, Some(f)) => f.to_string(),
        (ViolationKind::Constraint, None) => "constraint".to_string(),
        (ViolationKind::Unfilled, _) => "unfilled".to_string(),
        (ViolationKind::OutOfDomain, _) => "out_of_domain".to_string(),
        (ViolationKind::ValueInKb, _) => "value_in_kb".to_string(),
    };
    let vars: Vec<String> = v.variables.iter().map(ToString::to_string).collect();
    format!("{head}@{}", vars.join(","))
}

fn metric(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

pub fn render_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report).expect("report serializes") + "\n"),
        Format::Csv => render_csv(report),
        Format::Markdown => Ok(render_markdown(report)),
    }
}

fn render_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record([
        "dialogue_id",
        "consistent",
        "zero_solution_rule",
        "solutions",
        "exact",
        "bucket",
        "variable_total",
        "correct_variables",
        "violations",
    ])
    .map_err(io)?;
    for r in &report.results {
        let violations: Vec<String> = r.verdict.violations.iter().map(violation_label).collect();
        w.write_record([
            r.dialogue_id.clone(),
            r.verdict.consistent.to_string(),
            r.verdict.zero_solution_rule_applied.to_string(),
            r.solution_count.to_string(),
            r.exact.to_string(),
            r.bucket.map(|b| b.label().to_string()).unwrap_or_default(),
            r.variable_total.to_string(),
            r.correct_variables.to_string(),
            violations.join(" "),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn render_markdown(report: &Report) -> String {
    let m = &report.metadata;
    let a = &report.aggregates;
    let mut s = String::new();
    let _ = writeln!(s, "# Consistency report\n");
    let _ = writeln!(s, "- version: {}", m.tool_version);
    let _ = writeln!(s, "- seed: {}", m.seed);
    let _ = writeln!(s, "- cap: {}", m.cap);
    let _ = writeln!(s, "- config hash: {}", m.config_hash);
    if let Some(strategy) = &m.strategy {
        let _ = writeln!(s, "- strategy: {strategy}");
    }
    let _ = writeln!(s, "\n## Accuracy\n");
    let _ = writeln!(s, "| Dialogues | Variables | GCA | VCA |");
    let _ = writeln!(s, "|---|---|---|---|");
    let _ = writeln!(s, "| {} | {} | {} | {} |", a.dialogues, a.variables, a.gca, a.vca);

    let _ = writeln!(s, "\n## Solution groups\n");
    let _ = writeln!(s, "| Group | Dialogues | Variables | GCA | VCA |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for b in &report.buckets {
        let _ = writeln!(s, "| {} | {} | {} | {} | {} |", b.bucket, b.dialogues, b.variables, metric(b.gca), metric(b.vca));
    }

    if !report.coverage.is_empty() {
        let _ = writeln!(s, "\n## Constraint coverage\n");
        let _ = writeln!(s, "| Constraint | #Variables | %Coverage |");
        let _ = writeln!(s, "|---|---|---|");
        for c in &report.coverage {
            let _ = writeln!(s, "| {} | {} | {} |", c.family, c.variables, c.proportion);
        }
    }

    if !report.ablation.is_empty() {
        let _ = writeln!(s, "\n## Ablation\n");
        let _ = writeln!(s, "| Constraints | GCA | VCA |");
        let _ = writeln!(s, "|---|---|---|");
        for r in &report.ablation {
            let _ = writeln!(s, "| {} | {} | {} |", r.label, r.gca, r.vca);
        }
    }

    let _ = writeln!(s, "\n## Dialogues\n");
    let _ = writeln!(s, "| Dialogue | Consistent | Solutions | Group | Correct | Violations |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for r in &report.results {
        let count = if r.exact { r.solution_count.to_string() } else { format!("≥{}", r.solution_count) };
        let violations: Vec<String> = r.verdict.violations.iter().map(violation_label).collect();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {}/{} | {} |",
            r.dialogue_id,
            if r.verdict.consistent { "yes" } else { "no" },
            count,
            r.bucket.map_or("n/a", |b| b.label()),
            r.correct_variables,
            r.variable_total,
            violations.join(" ")
        );
    }
    s
}
