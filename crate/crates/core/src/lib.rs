//! Constraint-satisfaction modelling of knowledge-grounded task-oriented
//! dialogues: extraction of a CSP from an annotated dialogue and its knowledge
//! base, exact solving, consistency checking of re-lexicalized dialogues and
//! corpus-level evaluation.

pub mod constraints;
pub mod corpus;
pub mod dialogue;
pub mod domain;
pub mod error;
pub mod eval;
pub mod llm;
pub mod model;
pub mod multiwoz;
pub mod relex;
pub mod report;
pub mod rng;
pub mod solver;
pub mod value;
pub mod verdict;

pub use constraints::{AblationConfig, Constraint, ConstraintSet, CueLexicon, Family, Filter, Payload};
pub use dialogue::{delexicalize, relexicalize, Assignment, DelexDialogue, Dialogue, RelexDialogue, Speaker, Turn};
pub use domain::{KbIndex, KnowledgeBase, Ontology};
pub use error::{Error, Result};
pub use model::{CspModel, ModelFile};
pub use solver::{best_match, count_bucket, count_solutions, enumerate_solutions, BestMatch, Bucket, Solution, SolveResult, Solver};
pub use value::{Value, VarId, VarKind};
pub use verdict::{check_consistency, ConsistencyVerdict, Violation, ViolationKind};
