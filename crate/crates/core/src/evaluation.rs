//! Checking a sanitization: were the rules hidden, how far did the ratios
//! move, and how similar are the trees before and after.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance};
use crate::diophantine::Ratio;
use crate::hiding::{PlanWarning, SanitizationResult};
use crate::tree::{attribute_gain, entropy, split_gain, DecisionTree, NodeId, NodeKind, NodeStats, RulePath, TreeError};

/// For each rule, `true` when `tree` has no leaf with exactly those steps.
pub fn rules_hidden(tree: &DecisionTree, rules: &[RulePath]) -> Vec<bool> {
    let present = tree.extract_rules();
    rules
        .iter()
        .map(|rule| !present.iter().any(|r| r.same_steps(rule)))
        .collect()
}

/// One entry per request of the plan, in request order.
pub fn verify_hidden(result: &SanitizationResult) -> Vec<bool> {
    let rules: Vec<RulePath> = result.plan.requests.iter().map(|r| RulePath::new(r.steps.clone())).collect();
    rules_hidden(&result.retrained_tree, &rules)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: NodeId,
    /// Ratio of the node in the original tree.
    pub target: Ratio,
    /// Ratio the plan solved for; differs from `target` only when relaxed.
    pub planned: Ratio,
    /// Counts in the sanitized dataset within the node's original region.
    pub achieved: NodeStats,
    pub exact: bool,
    /// Difference of positive fractions, achieved minus target.
    pub ratio_deviation: f64,
    pub entropy_delta: f64,
    /// Gain of the node's original split attribute, sanitized minus original.
    pub gain_delta: f64,
    pub added: NodeStats,
}

/// Per-skeleton-node comparison of the sanitized dataset against the
/// original tree.
pub fn ratio_report(result: &SanitizationResult) -> Vec<NodeReport> {
    let tree = &result.original_tree;
    result
        .plan
        .nodes
        .iter()
        .map(|n| {
            let region: Vec<_> = result.sanitized.instances().iter().filter(|i| i.matches(&n.path)).collect();
            let achieved = region.iter().fold(NodeStats::default(), |acc, i| acc + NodeStats::of(i.label));
            let original_node = &tree.nodes()[n.node.0];
            let gain_delta = match original_node.kind {
                NodeKind::Split { attribute, left, right } => {
                    let before = split_gain(tree.nodes()[left.0].stats, tree.nodes()[right.0].stats);
                    attribute_gain(region.iter().copied(), attribute) - before
                }
                NodeKind::Leaf { .. } => 0.0,
            };
            let fraction = |s: NodeStats| s.p as f64 / s.total() as f64;
            NodeReport {
                node: n.node,
                target: Ratio::of(n.original).expect("skeleton nodes are mixed"),
                planned: n.target,
                achieved,
                exact: achieved.same_ratio(n.original),
                ratio_deviation: fraction(achieved) - fraction(n.original),
                entropy_delta: entropy(achieved) - entropy(n.original),
                gain_delta,
                added: n.local,
            }
        })
        .collect()
}

/// Shared nodes over the size of the larger tree. Two nodes are shared when
/// they sit at the same root path and either split on the same attribute or
/// are leaves of the same class.
pub fn syntactic_similarity(a: &DecisionTree, b: &DecisionTree) -> Result<f64, TreeError> {
    if a.schema() != b.schema() {
        return Err(TreeError::SchemaMismatch);
    }
    let mut shared = 0usize;
    let mut stack = vec![(a.root().id, b.root().id)];
    while let Some((x, y)) = stack.pop() {
        match (&a.nodes()[x.0].kind, &b.nodes()[y.0].kind) {
            (NodeKind::Leaf { class: c1 }, NodeKind::Leaf { class: c2 }) if c1 == c2 => shared += 1,
            (
                NodeKind::Split { attribute: a1, left: l1, right: r1 },
                NodeKind::Split { attribute: a2, left: l2, right: r2 },
            ) if a1 == a2 => {
                shared += 1;
                stack.push((*l1, *l2));
                stack.push((*r1, *r2));
            }
            _ => {}
        }
    }
    Ok(shared as f64 / a.len().max(b.len()) as f64)
}

/// Fraction of fully specified probe rows both trees classify the same way.
/// An empty probe counts as full agreement.
pub fn semantic_agreement(a: &DecisionTree, b: &DecisionTree, probe: &Dataset) -> f64 {
    let rows: Vec<_> = probe.instances().iter().filter(|i| i.is_fully_specified()).collect();
    if rows.is_empty() {
        return 1.0;
    }
    let same = rows.iter().filter(|i| a.classify(&i.values) == b.classify(&i.values)).count();
    same as f64 / rows.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestReport {
    pub rule: String,
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub requests: Vec<RequestReport>,
    /// Sibling rules the collapses were expected to hide as well.
    pub side_effects: Vec<RequestReport>,
    pub nodes: Vec<NodeReport>,
    pub total_added: u64,
    pub syntactic_similarity: f64,
    pub semantic_agreement: f64,
    pub warnings: Vec<PlanWarning>,
}

impl EvaluationReport {
    pub fn all_hidden(&self) -> bool {
        self.requests.iter().chain(&self.side_effects).all(|r| r.hidden)
    }

    pub fn all_exact(&self) -> bool {
        self.nodes.iter().all(|n| n.exact)
    }
}

/// Full report. The semantic probe is the sanitized dataset without its
/// synthetic rows, which is the original training data up to the swaps.
pub fn evaluate(result: &SanitizationResult) -> EvaluationReport {
    let probe_rows = result
        .sanitized
        .instances()
        .iter()
        .filter(|i| i.provenance != Provenance::Synthetic)
        .cloned()
        .collect();
    let probe = Dataset::new(result.sanitized.schema().clone(), probe_rows).expect("same schema");
    evaluate_with_probe(result, &probe)
}

pub fn evaluate_with_probe(result: &SanitizationResult, probe: &Dataset) -> EvaluationReport {
    let hidden = verify_hidden(result);
    EvaluationReport {
        requests: result
            .plan
            .requests
            .iter()
            .zip(hidden)
            .map(|(r, hidden)| RequestReport { rule: r.rule.clone(), hidden })
            .collect(),
        side_effects: result
            .plan
            .side_effects
            .iter()
            .map(|rule| {
                let parsed = RulePath::parse(rule, result.original_tree.schema()).expect("rendered by the plan");
                let hidden = rules_hidden(&result.retrained_tree, &[parsed])[0];
                RequestReport { rule: rule.clone(), hidden }
            })
            .collect(),
        nodes: ratio_report(result),
        total_added: result.plan.total_added,
        syntactic_similarity: syntactic_similarity(&result.original_tree, &result.retrained_tree)
            .expect("retrained on the same schema"),
        semantic_agreement: semantic_agreement(&result.original_tree, &result.retrained_tree, probe),
        warnings: result.plan.warnings.clone(),
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "requests")?;
        for r in &self.requests {
            writeln!(f, "  {:<7} {}", if r.hidden { "hidden" } else { "PRESENT" }, r.rule)?;
        }
        for s in &self.side_effects {
            writeln!(f, "  {:<7} {} (side effect)", if s.hidden { "hidden" } else { "PRESENT" }, s.rule)?;
        }
        writeln!(f, "nodes")?;
        writeln!(
            f,
            "  {:>5}  {:>9}  {:>9}  {:>11}  {:>5}  {:>12}  {:>12}  {:>11}",
            "node", "target", "planned", "achieved", "exact", "d_entropy", "d_gain", "added"
        )?;
        for n in &self.nodes {
            writeln!(
                f,
                "  {:>5}  {:>9}  {:>9}  {:>11}  {:>5}  {:>12.3e}  {:>12.3e}  {:>11}",
                n.node.to_string(),
                n.target.to_string(),
                n.planned.to_string(),
                n.achieved.to_string(),
                if n.exact { "yes" } else { "no" },
                n.entropy_delta,
                n.gain_delta,
                n.added.to_string(),
            )?;
        }
        writeln!(f, "total added          {}", self.total_added)?;
        writeln!(f, "syntactic similarity {:.4}", self.syntactic_similarity)?;
        writeln!(f, "semantic agreement   {:.4}", self.semantic_agreement)?;
        for w in &self.warnings {
            writeln!(f, "warning: {}", serde_json::to_string(w).expect("plain enum"))?;
        }
        Ok(())
    }
}
