//! Deterministic binary decision-tree induction.
//!
//! Induction is the classic greedy top-down scheme driven by information
//! gain. Ties between attributes go to the lower schema index, ties in a
//! leaf's majority go to `P`, and gains are compared with an absolute
//! tolerance of [`GAIN_TOLERANCE`]. There is no pruning.
//!
//! Nodes live in an arena indexed by preorder position, so a [`NodeId`] is
//! stable for a given tree and can be written into plans.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeSchema, Dataset, Instance, Label};

/// Absolute tolerance used whenever two gains are compared.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("cannot induce a tree from an empty dataset")]
    EmptyDataset,
    #[error("instance {index} is not fully specified")]
    PartialInstance { index: usize },
    #[error("parent stats {parent} do not equal left {left} + right {right}")]
    StatsMismatch { parent: NodeStats, left: NodeStats, right: NodeStats },
    #[error("rule not found: {0}")]
    RuleNotFound(String),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("invalid rule syntax: {0}")]
    RuleSyntax(String),
    #[error("trees use different attribute schemas")]
    SchemaMismatch,
}

/// Positive/negative instance counts at a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeStats {
    pub p: u64,
    pub n: u64,
}

impl NodeStats {
    pub const fn new(p: u64, n: u64) -> Self {
        NodeStats { p, n }
    }

    pub fn of(label: Label) -> Self {
        match label {
            Label::P => NodeStats::new(1, 0),
            Label::N => NodeStats::new(0, 1),
        }
    }

    pub fn total(self) -> u64 {
        self.p + self.n
    }

    pub fn is_pure(self) -> bool {
        self.p == 0 || self.n == 0
    }

    /// Majority class; a tie resolves to `P`.
    pub fn majority(self) -> Label {
        if self.p >= self.n {
            Label::P
        } else {
            Label::N
        }
    }

    pub fn entropy(self) -> f64 {
        entropy(self)
    }

    /// Exact ratio comparison, `p:n == other.p:other.n`.
    pub fn same_ratio(self, other: NodeStats) -> bool {
        u128::from(self.p) * u128::from(other.n) == u128::from(self.n) * u128::from(other.p)
    }
}

impl Add for NodeStats {
    type Output = NodeStats;

    fn add(self, rhs: NodeStats) -> NodeStats {
        NodeStats::new(self.p + rhs.p, self.n + rhs.n)
    }
}

impl Sub for NodeStats {
    type Output = NodeStats;

    fn sub(self, rhs: NodeStats) -> NodeStats {
        NodeStats::new(self.p - rhs.p, self.n - rhs.n)
    }
}

impl fmt::Display for NodeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p/{}n", self.p, self.n)
    }
}

/// Binary entropy in bits. Depends only on the ratio `p:n`.
pub fn entropy(s: NodeStats) -> f64 {
    if s.p == 0 || s.n == 0 {
        return 0.0;
    }
    let t = s.total() as f64;
    let fp = s.p as f64 / t;
    let fn_ = s.n as f64 / t;
    -(fp * fp.log2()) - fn_ * fn_.log2()
}

/// Information gain of splitting `parent` into `left` and `right`.
pub fn information_gain(
    parent: NodeStats,
    left: NodeStats,
    right: NodeStats,
) -> Result<f64, TreeError> {
    if left + right != parent {
        return Err(TreeError::StatsMismatch { parent, left, right });
    }
    Ok(split_gain(left, right))
}

/// Gain of the split `left | right`, with the parent implied by their sum.
pub(crate) fn split_gain(left: NodeStats, right: NodeStats) -> f64 {
    let parent = left + right;
    let t = parent.total();
    if t == 0 {
        return 0.0;
    }
    let t = t as f64;
    entropy(parent)
        - (left.total() as f64 / t) * entropy(left)
        - (right.total() as f64 / t) * entropy(right)
}

/// `true` when attribute `a` with gain `gain_a` wins over `b` under the
/// induction rules (higher gain, ties to the lower index).
pub fn outranks(gain_a: f64, a: usize, gain_b: f64, b: usize) -> bool {
    gain_a > gain_b + GAIN_TOLERANCE || ((gain_a - gain_b).abs() <= GAIN_TOLERANCE && a < b)
}

/// Counts of the two branches of `attribute` among instances that have the
/// attribute specified.
pub fn branch_stats<'a, I>(instances: I, attribute: usize) -> (NodeStats, NodeStats)
where
    I: IntoIterator<Item = &'a Instance>,
{
    let mut left = NodeStats::default();
    let mut right = NodeStats::default();
    for instance in instances {
        match instance.value(attribute) {
            Some(false) => left = left + NodeStats::of(instance.label),
            Some(true) => right = right + NodeStats::of(instance.label),
            None => {}
        }
    }
    (left, right)
}

/// Gain of `attribute` over the instances that have it specified.
pub fn attribute_gain<'a, I>(instances: I, attribute: usize) -> f64
where
    I: IntoIterator<Item = &'a Instance>,
{
    let (left, right) = branch_stats(instances, attribute);
    split_gain(left, right)
}

/// Preorder index of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { class: Label },
    /// `left` holds the instances with `attribute = 0`, `right` those with 1.
    Split { attribute: usize, left: NodeId, right: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub id: NodeId,
    pub stats: NodeStats,
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn attribute(&self) -> Option<usize> {
        match self.kind {
            NodeKind::Split { attribute, .. } => Some(attribute),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn child(&self, value: bool) -> Option<NodeId> {
        match self.kind {
            NodeKind::Split { left, right, .. } => Some(if value { right } else { left }),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// A root-to-leaf rule: a chain of `(attribute, value)` tests and the class
/// predicted at its end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RulePath {
    pub steps: Vec<(usize, bool)>,
    pub class: Option<Label>,
}

impl RulePath {
    pub fn new(steps: Vec<(usize, bool)>) -> Self {
        RulePath { steps, class: None }
    }

    /// Parses `x=1,y=0` (optionally followed by `=> p`) against a schema.
    pub fn parse(text: &str, schema: &AttributeSchema) -> Result<RulePath, TreeError> {
        let (body, class) = match text.split_once("=>") {
            Some((body, class)) => {
                let class = class.trim();
                let label = Label::parse(class)
                    .ok_or_else(|| TreeError::RuleSyntax(format!("unknown class {class:?}")))?;
                (body, Some(label))
            }
            None => (text, None),
        };
        let mut steps = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| TreeError::RuleSyntax(format!("expected name=value in {part:?}")))?;
            let attribute = schema
                .index_of(name.trim())
                .ok_or_else(|| TreeError::RuleSyntax(format!("unknown attribute {name:?}")))?;
            let value = match value.trim() {
                "0" => false,
                "1" => true,
                other => return Err(TreeError::RuleSyntax(format!("non-binary value {other:?}"))),
            };
            if steps.iter().any(|&(a, _)| a == attribute) {
                return Err(TreeError::RuleSyntax(format!("attribute {name:?} repeated")));
            }
            steps.push((attribute, value));
        }
        Ok(RulePath { steps, class })
    }

    /// Renders the condition part, `x=1,y=0`.
    pub fn conditions(&self, schema: &AttributeSchema) -> String {
        self.steps
            .iter()
            .map(|&(a, v)| format!("{}={}", schema.name(a).unwrap_or("?"), u8::from(v)))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Renders `x=1,y=0 => p`.
    pub fn render(&self, schema: &AttributeSchema) -> String {
        match self.class {
            Some(class) => format!("{} => {}", self.conditions(schema), class),
            None => self.conditions(schema),
        }
    }

    pub fn same_steps(&self, other: &RulePath) -> bool {
        self.steps == other.steps
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InductionConfig {
    /// Depth limit; `None` grows until purity or exhaustion.
    pub max_depth: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    schema: AttributeSchema,
}

impl DecisionTree {
    /// Builds a tree from preorder nodes. Used by induction and by callers
    /// that derive one tree from another.
    pub(crate) fn from_nodes(nodes: Vec<TreeNode>, schema: AttributeSchema) -> Self {
        debug_assert!(nodes.iter().enumerate().all(|(i, n)| n.id.0 == i));
        DecisionTree { nodes, schema }
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::UnknownNode(id))
    }

    /// Proper ancestors of `id`, nearest first, ending at the root.
    pub fn ancestors(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut out = Vec::new();
        let mut current = self.node(id)?.parent;
        while let Some(parent) = current {
            out.push(parent);
            current = self.nodes[parent.0].parent;
        }
        Ok(out)
    }

    /// The `(attribute, value)` tests leading from the root to `id`.
    pub fn path(&self, id: NodeId) -> Result<Vec<(usize, bool)>, TreeError> {
        let mut steps = Vec::new();
        let mut child = self.node(id)?;
        while let Some(parent) = child.parent {
            let parent = &self.nodes[parent.0];
            if let NodeKind::Split { attribute, right, .. } = parent.kind {
                steps.push((attribute, right == child.id));
            }
            child = parent;
        }
        steps.reverse();
        Ok(steps)
    }

    pub fn locate_node(&self, rule: &RulePath) -> Result<NodeId, TreeError> {
        let not_found = || TreeError::RuleNotFound(rule.render(&self.schema));
        let mut node = self.root();
        for &(attribute, value) in &rule.steps {
            match node.kind {
                NodeKind::Split { attribute: a, left, right } if a == attribute => {
                    node = &self.nodes[if value { right.0 } else { left.0 }];
                }
                _ => return Err(not_found()),
            }
        }
        Ok(node.id)
    }

    /// One rule per leaf, left to right.
    pub fn extract_rules(&self) -> Vec<RulePath> {
        self.nodes
            .iter()
            .filter_map(|node| match node.kind {
                NodeKind::Leaf { class } => Some(RulePath {
                    steps: self.path(node.id).expect("node exists"),
                    class: Some(class),
                }),
                NodeKind::Split { .. } => None,
            })
            .collect()
    }

    /// Leaf reached by `values`, or `None` if an unspecified value is hit.
    pub fn leaf_for(&self, values: &[Option<bool>]) -> Option<NodeId> {
        let mut node = self.root();
        loop {
            match node.kind {
                NodeKind::Leaf { .. } => return Some(node.id),
                NodeKind::Split { attribute, left, right } => {
                    let next = if values.get(attribute).copied().flatten()? { right } else { left };
                    node = &self.nodes[next.0];
                }
            }
        }
    }

    pub fn classify(&self, values: &[Option<bool>]) -> Option<Label> {
        let leaf = self.leaf_for(values)?;
        match self.nodes[leaf.0].kind {
            NodeKind::Leaf { class } => Some(class),
            NodeKind::Split { .. } => None,
        }
    }

    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            attributes: self.schema.names().to_vec(),
            root: self.node_json(NodeId(0)),
        }
    }

    fn node_json(&self, id: NodeId) -> NodeJson {
        let node = &self.nodes[id.0];
        match node.kind {
            NodeKind::Leaf { class } => NodeJson {
                id,
                kind: "leaf".into(),
                attribute: None,
                attribute_index: None,
                class: Some(class),
                p: node.stats.p,
                n: node.stats.n,
                children: Vec::new(),
            },
            NodeKind::Split { attribute, left, right } => NodeJson {
                id,
                kind: "split".into(),
                attribute: self.schema.name(attribute).map(str::to_string),
                attribute_index: Some(attribute),
                class: None,
                p: node.stats.p,
                n: node.stats.n,
                children: vec![self.node_json(left), self.node_json(right)],
            },
        }
    }
}

/// JSON view of a tree: nested nodes with ids, kind, attribute and counts.
/// The first child of a split is the `attribute = 0` branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub attributes: Vec<String>,
    pub root: NodeJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attribute: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attribute_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<Label>,
    pub p: u64,
    pub n: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<NodeJson>,
}

pub fn induce(ds: &Dataset, config: &InductionConfig) -> Result<DecisionTree, TreeError> {
    if ds.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    if let Some(index) = ds.instances().iter().position(|i| !i.is_fully_specified()) {
        return Err(TreeError::PartialInstance { index });
    }
    let mut builder = Builder {
        instances: ds.instances(),
        width: ds.schema().len(),
        config,
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut used = vec![false; builder.width];
    builder.grow(&all, &mut used, None, 0);
    Ok(DecisionTree::from_nodes(builder.nodes, ds.schema().clone()))
}

struct Builder<'a> {
    instances: &'a [Instance],
    width: usize,
    config: &'a InductionConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &[usize], used: &mut [bool], parent: Option<NodeId>, depth: usize) -> NodeId {
        let stats = rows
            .iter()
            .fold(NodeStats::default(), |acc, &r| acc + NodeStats::of(self.instances[r].label));
        let id = NodeId(self.nodes.len());
        self.nodes.push(TreeNode {
            id,
            stats,
            kind: NodeKind::Leaf { class: stats.majority() },
            parent,
        });

        let depth_exhausted = self.config.max_depth.is_some_and(|d| depth >= d);
        if stats.is_pure() || depth_exhausted {
            return id;
        }
        let Some(attribute) = self.best_attribute(rows, used) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.instances[r].value(attribute) == Some(false));
        used[attribute] = true;
        let left = self.grow(&left_rows, used, Some(id), depth + 1);
        let right = self.grow(&right_rows, used, Some(id), depth + 1);
        used[attribute] = false;
        self.nodes[id.0].kind = NodeKind::Split { attribute, left, right };
        id
    }

    fn best_attribute(&self, rows: &[usize], used: &[bool]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for attribute in (0..self.width).filter(|&a| !used[a]) {
            let gain = attribute_gain(rows.iter().map(|&r| &self.instances[r]), attribute);
            match best {
                Some((b, g)) if !outranks(gain, attribute, g, b) => {}
                _ => best = Some((attribute, gain)),
            }
        }
        best.filter(|&(_, gain)| gain > GAIN_TOLERANCE).map(|(a, _)| a)
    }
}
