//! Command implementations behind the `rulehide` binary.
//!
//! Every command writes to caller-supplied sinks and returns a process
//! exit code, so the binary is a thin argument parser and the commands are
//! testable in-process.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | any other failure (I/O, infeasible request, ...) |
//! | 2 | malformed input: CSV, rule syntax, config, equation |
//! | 3 | an equation has no solution |
//! | 4 | a requested rule is not a leaf of the induced tree |

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CsvExport, Dataset, DatasetError};
use crate::diophantine::{minimal_natural, solve_general, DiophantineEq, RelaxMode, RelaxSearch, SolveError};
use crate::evaluation::{evaluate_with_probe, EvaluationReport};
use crate::hiding::{hide_with_tree, CompletionStrategy, HideOptions, HidingError, HidingPlan, HidingRequest, RelaxBudget, SanitizationResult};
use crate::tree::{induce, InductionConfig, NodeId, RulePath, TreeError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_UNSOLVABLE: i32 = 3;
pub const EXIT_RULE_NOT_FOUND: i32 = 4;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    RuleNotFound(String),
    #[error("{message}")]
    Unsolvable { message: String, node: Option<NodeId> },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Parse(_) => EXIT_PARSE,
            CommandError::RuleNotFound(_) => EXIT_RULE_NOT_FOUND,
            CommandError::Unsolvable { .. } => EXIT_UNSOLVABLE,
            CommandError::Io(_) | CommandError::Failed(_) => EXIT_FAILURE,
        }
    }

    /// Stable machine-readable name, used in JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            CommandError::Parse(_) => "parse_error",
            CommandError::RuleNotFound(_) => "rule_not_found",
            CommandError::Unsolvable { .. } => "unsolvable",
            CommandError::Io(_) => "io_error",
            CommandError::Failed(_) => "failed",
        }
    }

    pub fn node_id(&self) -> Option<NodeId> {
        match self {
            CommandError::Unsolvable { node, .. } => *node,
            _ => None,
        }
    }
}

impl From<DatasetError> for CommandError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => CommandError::Io(e.to_string()),
            other => CommandError::Parse(other.to_string()),
        }
    }
}

impl From<TreeError> for CommandError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::RuleNotFound(_) | TreeError::UnknownNode(_) => CommandError::RuleNotFound(e.to_string()),
            TreeError::RuleSyntax(_) | TreeError::PartialInstance { .. } | TreeError::EmptyDataset => {
                CommandError::Parse(e.to_string())
            }
            other => CommandError::Failed(other.to_string()),
        }
    }
}

impl From<HidingError> for CommandError {
    fn from(e: HidingError) -> Self {
        match e {
            HidingError::Tree(t) => t.into(),
            HidingError::Dataset(d) => d.into(),
            HidingError::InternalNode(_) => CommandError::RuleNotFound(e.to_string()),
            HidingError::Unsolvable { node, .. } => CommandError::Unsolvable {
                message: format!("{e}; raise the relaxation budget at {node}"),
                node: Some(node),
            },
            other => CommandError::Failed(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CommandError {
    CommandError::Io(format!("{}: {e}", path.display()))
}

/// Relaxation budget for one node: `root:<d>`, `<node id>:<d>`, or a bare
/// `<d>` meaning the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RelaxSpec {
    pub node: Option<NodeId>,
    pub max_shift: u64,
}

impl FromStr for RelaxSpec {
    type Err = CommandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CommandError::Parse(format!("bad relax spec {s:?}; expected root:<d> or <node>:<d>"));
        let (node, shift) = match s.trim().split_once(':') {
            None => (None, s.trim()),
            Some(("root", d)) => (None, d),
            Some((id, d)) => (Some(NodeId(id.trim().trim_start_matches('#').parse().map_err(|_| bad())?)), d),
        };
        Ok(RelaxSpec { node, max_shift: shift.trim().parse().map_err(|_| bad())? })
    }
}

impl TryFrom<String> for RelaxSpec {
    type Error = CommandError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for RelaxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            None => write!(f, "root:{}", self.max_shift),
            Some(id) => write!(f, "{}:{}", id.0, self.max_shift),
        }
    }
}

impl From<RelaxSpec> for String {
    fn from(r: RelaxSpec) -> String {
        r.to_string()
    }
}

pub fn relax_budget(specs: &[RelaxSpec], mode: RelaxMode) -> RelaxBudget {
    let mut budget = RelaxBudget::none();
    for spec in specs.iter().filter(|s| s.max_shift > 0) {
        let search = RelaxSearch { mode, ..RelaxSearch::cost(spec.max_shift) };
        match spec.node {
            None => budget.root = Some(search),
            Some(id) => {
                budget.nodes.insert(id, search);
            }
        }
    }
    budget
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    #[default]
    Holdback,
    Evensplit,
}

impl FromStr for StrategyName {
    type Err = CommandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "holdback" => Ok(StrategyName::Holdback),
            "evensplit" => Ok(StrategyName::Evensplit),
            _ => Err(CommandError::Parse(format!("unknown strategy {s:?}; expected holdback or evensplit"))),
        }
    }
}

impl From<StrategyName> for CompletionStrategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Holdback => CompletionStrategy::TwoLevelHoldback,
            StrategyName::Evensplit => CompletionStrategy::EvenSplit,
        }
    }
}

/// Settings of a `hide` run. The JSON form is the `--config` file format.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Rules as `attr=value` chains joined by `,`.
    pub requests: Vec<String>,
    /// Leaves addressed by node id in the input's tree.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub request_nodes: Vec<usize>,
    pub relax: Vec<RelaxSpec>,
    pub relax_mode: RelaxMode,
    pub strategy: StrategyName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_tree: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_plan: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_report: Option<PathBuf>,
    /// Keep the `_prov` column in the sanitized CSV. Off by default since it
    /// marks exactly which rows were changed.
    pub with_provenance: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CommandError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CommandError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hide_options(&self) -> HideOptions {
        HideOptions {
            relax: relax_budget(&self.relax, self.relax_mode),
            strategy: self.strategy.into(),
            induction: InductionConfig { max_depth: self.max_depth },
        }
    }

    pub fn export_options(&self) -> CsvExport {
        CsvExport { include_provenance: self.with_provenance, allow_partial: false }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CommandError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    Ok(Dataset::load_csv(std::io::BufReader::new(file))?)
}

/// Runs the pipeline for a config whose requests are still text.
pub fn sanitize(ds: &Dataset, config: &RunConfig) -> Result<SanitizationResult, CommandError> {
    let options = config.hide_options();
    let tree = induce(ds, &options.induction)?;
    let mut requests = config
        .requests
        .iter()
        .map(|r| HidingRequest::parse(r, ds.schema()))
        .collect::<Result<Vec<_>, _>>()?;
    for &id in &config.request_nodes {
        let path = tree.path(NodeId(id))?;
        requests.push(HidingRequest::new(RulePath::new(path)));
    }
    Ok(hide_with_tree(ds, tree, &requests, &options)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CommandError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    writeln!(out, "{text}").map_err(|e| CommandError::Io(e.to_string()))
}

fn finish(result: Result<(), CommandError>, err: &mut dyn Write) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Induces a tree and writes its JSON to `emit_tree`, or to `out`.
pub fn cmd_build(input: &Path, emit_tree: Option<&Path>, max_depth: Option<usize>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<(), CommandError> {
        let tree = induce(&load_dataset(input)?, &InductionConfig { max_depth })?;
        match emit_tree {
            Some(path) => write_json(path, &tree.to_json()),
            None => print_json(out, &tree.to_json()),
        }
    };
    finish(run(), err)
}

/// Prints one rule per line, `x=1,y=0 => p`.
pub fn cmd_rules(input: &Path, max_depth: Option<usize>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<(), CommandError> {
        let tree = induce(&load_dataset(input)?, &InductionConfig { max_depth })?;
        for rule in tree.extract_rules() {
            writeln!(out, "{}", rule.render(tree.schema())).map_err(|e| CommandError::Io(e.to_string()))?;
        }
        Ok(())
    };
    finish(run(), err)
}

/// Sanitizes `config.input` and writes the CSV to `config.output`, or to
/// `out`. Plan, report and retrained tree are emitted where requested.
pub fn cmd_hide(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<(), CommandError> {
        let input = config.input.as_deref().ok_or_else(|| CommandError::Parse("no input dataset".into()))?;
        let ds = load_dataset(input)?;
        let result = sanitize(&ds, config)?;
        let csv = result.sanitized.to_csv_bytes(config.export_options())?;
        match &config.output {
            Some(path) => fs::write(path, &csv).map_err(|e| io_error(path, e))?,
            None => out.write_all(&csv).map_err(|e| CommandError::Io(e.to_string()))?,
        }
        if let Some(path) = &config.emit_plan {
            write_json(path, &result.plan)?;
        }
        if let Some(path) = &config.emit_report {
            write_json(path, &evaluate_with_probe(&result, &ds))?;
        }
        if let Some(path) = &config.emit_tree {
            write_json(path, &result.retrained_tree.to_json())?;
        }
        for warning in &result.plan.warnings {
            let _ = writeln!(err, "warning: {}", serde_json::to_string(warning).expect("serializable"));
        }
        Ok(())
    };
    finish(run(), err)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SolveReport {
    Solved {
        equation: DiophantineEq,
        family: crate::diophantine::GeneralSolution,
        minimal: crate::diophantine::Natural,
    },
    Unsolvable {
        equation: DiophantineEq,
    },
}

pub fn solve_report(a: i128, b: i128, c: i128, lb_x: u64, lb_y: u64) -> Result<SolveReport, SolveError> {
    let equation = DiophantineEq::new(a, b, c)?;
    Ok(match solve_general(equation)? {
        Some(family) => SolveReport::Solved { equation, minimal: minimal_natural(&family, lb_x, lb_y)?, family },
        None => SolveReport::Unsolvable { equation },
    })
}

/// Solves `a·x − b·y = c` and prints the family and the minimal solution
/// with `x ≥ lb_x`, `y ≥ lb_y` as JSON. Unsolvable equations print
/// `"status": "unsolvable"` and exit 3.
pub fn cmd_solve_eq(a: i128, b: i128, c: i128, lb_x: u64, lb_y: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<i32, CommandError> {
        let report = solve_report(a, b, c, lb_x, lb_y).map_err(|e| CommandError::Parse(e.to_string()))?;
        print_json(out, &report)?;
        Ok(match report {
            SolveReport::Solved { .. } => EXIT_OK,
            SolveReport::Unsolvable { .. } => EXIT_UNSOLVABLE,
        })
    };
    match run() {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Rebuilds a sanitization from its artifacts and reports on it. The
/// original dataset doubles as the semantic probe.
pub fn evaluate_artifacts(original: &Path, sanitized: &Path, plan: &Path) -> Result<EvaluationReport, CommandError> {
    let ds = load_dataset(original)?;
    let sanitized = load_dataset(sanitized)?;
    let text = fs::read_to_string(plan).map_err(|e| io_error(plan, e))?;
    let plan: HidingPlan = serde_json::from_str(&text).map_err(|e| CommandError::Parse(format!("{}: {e}", plan.display())))?;
    if sanitized.schema() != ds.schema() {
        return Err(CommandError::Parse("sanitized dataset has a different schema".into()));
    }
    let config = InductionConfig::default();
    let result = SanitizationResult {
        original_tree: induce(&ds, &config)?,
        retrained_tree: induce(&sanitized, &config)?,
        sanitized,
        plan,
    };
    Ok(evaluate_with_probe(&result, &ds))
}

pub fn cmd_evaluate(original: &Path, sanitized: &Path, plan: &Path, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<(), CommandError> {
        let report = evaluate_artifacts(original, sanitized, plan)?;
        if json {
            print_json(out, &report)
        } else {
            write!(out, "{report}").map_err(|e| CommandError::Io(e.to_string()))
        }
    };
    finish(run(), err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_solve(a: i128, b: i128, c: i128, lx: u64, ly: u64) -> (i32, serde_json::Value) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cmd_solve_eq(a, b, c, lx, ly, &mut out, &mut err);
        (code, serde_json::from_slice(&out).unwrap_or(serde_json::Value::Null))
    }

    #[test]
    fn solve_eq_examples() {
        let (code, v) = run_solve(37, 58, 855, 0, 0);
        assert_eq!(code, EXIT_OK);
        assert_eq!(v["minimal"], serde_json::json!({"x": 67, "y": 28}));
        let (code, v) = run_solve(2, 2, 1, 0, 0);
        assert_eq!(code, EXIT_UNSOLVABLE);
        assert_eq!(v["status"], "unsolvable");
        let (code, v) = run_solve(459, 541, 9000, 361, 128);
        assert_eq!(code, EXIT_OK);
        assert_eq!(v["minimal"], serde_json::json!({"x": 550, "y": 450}));
        let (code, _) = run_solve(0, 5, 1, 0, 0);
        assert_eq!(code, EXIT_PARSE);
    }

    #[test]
    fn relax_specs() {
        assert_eq!("root:1".parse::<RelaxSpec>().unwrap(), RelaxSpec { node: None, max_shift: 1 });
        assert_eq!("3".parse::<RelaxSpec>().unwrap(), RelaxSpec { node: None, max_shift: 3 });
        assert_eq!("#6:2".parse::<RelaxSpec>().unwrap(), RelaxSpec { node: Some(NodeId(6)), max_shift: 2 });
        assert!("root:x".parse::<RelaxSpec>().is_err());
        assert!("a:1".parse::<RelaxSpec>().is_err());
        let budget = relax_budget(&["root:0".parse().unwrap(), "6:2".parse().unwrap()], RelaxMode::Cost);
        assert_eq!(budget.root, None);
        assert_eq!(budget.nodes[&NodeId(6)].max_shift, 2);
    }

    #[test]
    fn config_round_trips() {
        let config = RunConfig {
            input: Some("in.csv".into()),
            output: Some("out.csv".into()),
            requests: vec!["a=1,b=0".into()],
            relax: vec!["root:1".parse().unwrap(), "4:2".parse().unwrap()],
            strategy: StrategyName::Evensplit,
            emit_plan: Some("plan.json".into()),
            ..RunConfig::default()
        };
        let text = config.to_json();
        assert!(text.contains("\"root:1\"") && text.contains("\"evensplit\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), config);
        assert!(serde_json::from_str::<RunConfig>(r#"{"relax": ["what"]}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
