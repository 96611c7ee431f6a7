//! Hiding classification rules in binary datasets.
//!
//! A decision tree is induced from a labeled dataset; selected
//! leaf-level rules are then suppressed by swapping the labels of the
//! instances they cover and appending a minimal number of synthetic
//! instances that restore the class ratios along the affected paths.
//! Ratio restoration reduces to linear Diophantine equations
//! ([`diophantine`]); the pipeline itself lives in [`hiding`].

pub mod cli;
pub mod dataset;
pub mod diophantine;
pub mod evaluation;
pub mod fixtures;
pub mod hiding;
pub mod tree;

pub use dataset::{AttributeSchema, CsvExport, Dataset, DatasetError, Instance, Label, Provenance};
pub use diophantine::{DiophantineEq, GeneralSolution, Natural, Ratio, RelaxMode, RelaxSearch, ShiftSpace, SolveError};
pub use evaluation::{evaluate, EvaluationReport};
pub use hiding::{
    allocate_and_set, build_skeleton, hide, serial_hide, swap_and_add, CompletionStrategy, HideOptions, HidingError,
    HidingPlan, HidingRequest, RelaxBudget, SanitizationResult,
};
pub use tree::{induce, DecisionTree, InductionConfig, NodeId, NodeStats, RulePath};
