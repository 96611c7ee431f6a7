//! The sanitization pipeline.
//!
//! Hiding a sensitive leaf flips the labels of every instance routed to it,
//! which turns the leaf's parent into a pure node (the parent "collapses"
//! into a leaf and the rule disappears). Every ancestor of that parent then
//! carries a swap delta that shifts its class ratio. The pipeline repairs
//! those ratios in two passes:
//!
//! 1. [`swap_and_add`] (bottom-up) forms one ratio-restoring Diophantine
//!    equation per affected ancestor, solves the chain with monotone lower
//!    bounds, and appends partially specified synthetic instances: the
//!    ones added at node `v` fix exactly the tests on the root→`v` path.
//! 2. [`allocate_and_set`] (top-down) fills in the remaining values.
//!
//! All requests share one skeleton, so they are handled in parallel.
//!
//! Routing rules used by the completion pass, in priority order:
//!
//! * opposite-class instances never enter a collapsed parent's region, so
//!   the collapsed node stays pure and cannot split again;
//! * instances added at a skeleton node never enter a skeleton child,
//!   because that child's cumulative count already accounts for everything
//!   below it. At an intersection node (two skeleton children) one child
//!   has to take them and a [`PlanWarning::RatioDisturbed`] is recorded.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Instance, Label};
use crate::diophantine::{
    self, children_bound, minimal_natural, ratio_equation, relax_ratio, solve_general, DiophantineEq,
    Natural, NodeConstraint, Ratio, RelaxSearch, SolveError,
};
use crate::tree::{
    self, attribute_gain, branch_stats, outranks, split_gain, DecisionTree, InductionConfig, NodeId,
    NodeStats, RulePath, TreeError, GAIN_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum HidingError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("rule {0} resolves to an internal node, not a leaf")]
    InternalNode(String),
    #[error("rule {rule} cannot be hidden by a swap: {reason}")]
    NotCollapsible { rule: String, reason: String },
    #[error("node {node}: {eq} has no solution and no relaxation budget")]
    Unsolvable { node: NodeId, eq: DiophantineEq },
    #[error(transparent)]
    Solve(SolveError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl From<SolveError> for HidingError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Unsolvable { node, eq } => HidingError::Unsolvable { node, eq },
            other => HidingError::Solve(other),
        }
    }
}

impl HidingError {
    /// Node the error refers to, when there is one.
    pub fn node_id(&self) -> Option<NodeId> {
        match self {
            HidingError::Unsolvable { node, .. } => Some(*node),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HidingRequest {
    pub rule: RulePath,
}

impl HidingRequest {
    pub fn new(rule: RulePath) -> Self {
        HidingRequest { rule }
    }

    pub fn parse(text: &str, schema: &crate::dataset::AttributeSchema) -> Result<Self, TreeError> {
        Ok(HidingRequest { rule: RulePath::parse(text, schema)? })
    }
}

/// Signed class-count change caused by swaps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapDelta {
    pub dp: i64,
    pub dn: i64,
}

impl SwapDelta {
    fn apply(self, stats: NodeStats) -> NodeStats {
        let p = i64::try_from(stats.p).expect("count fits i64") + self.dp;
        let n = i64::try_from(stats.n).expect("count fits i64") + self.dn;
        NodeStats::new(p as u64, n as u64)
    }
}

impl std::ops::Add for SwapDelta {
    type Output = SwapDelta;

    fn add(self, rhs: SwapDelta) -> SwapDelta {
        SwapDelta { dp: self.dp + rhs.dp, dn: self.dn + rhs.dn }
    }
}

/// A request after resolution against the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitiveLeaf {
    pub request: usize,
    pub leaf: NodeId,
    /// The parent that becomes pure once the leaf is swapped.
    pub collapsed: NodeId,
    pub collapsed_class: Label,
    pub delta: SwapDelta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonNode {
    pub node: NodeId,
    pub parent: Option<NodeId>,
    /// Tree children that are themselves in the skeleton.
    pub children: Vec<NodeId>,
    pub delta: SwapDelta,
}

impl SkeletonNode {
    pub fn is_intersection(&self) -> bool {
        self.children.len() > 1
    }
}

/// Ancestors of every collapsed parent, with accumulated swap deltas.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AffectedSkeleton {
    pub nodes: BTreeMap<NodeId, SkeletonNode>,
    pub sensitive: Vec<SensitiveLeaf>,
    /// Requests dropped because their sibling was requested as well; the
    /// one collapse hides both. Pairs of (dropped request, kept request).
    pub absorbed: Vec<(usize, usize)>,
}

impl AffectedSkeleton {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains_key(&node)
    }

    /// Skeleton nodes, children before parents.
    pub fn bottom_up(&self) -> Vec<NodeId> {
        // preorder ids: every descendant has a larger id than its ancestor
        self.nodes.keys().rev().copied().collect()
    }
}

fn render(tree: &DecisionTree, rule: &RulePath) -> String {
    rule.conditions(tree.schema())
}

pub fn build_skeleton(tree: &DecisionTree, requests: &[HidingRequest]) -> Result<AffectedSkeleton, HidingError> {
    let mut by_leaf: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for (i, request) in requests.iter().enumerate() {
        let leaf = tree.locate_node(&request.rule)?;
        if !tree.node(leaf)?.is_leaf() {
            return Err(HidingError::InternalNode(render(tree, &request.rule)));
        }
        if let Some(&first) = by_leaf.get(&leaf) {
            duplicates.push((i, first));
        } else {
            by_leaf.insert(leaf, i);
        }
    }

    let mut skeleton = AffectedSkeleton { absorbed: duplicates, ..AffectedSkeleton::default() };
    let mut kept: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (&leaf, &request) in &by_leaf {
        let node = tree.node(leaf)?;
        let rule = || render(tree, &requests[request].rule);
        let Some(parent) = node.parent else {
            return Err(HidingError::NotCollapsible {
                rule: rule(),
                reason: "the tree is a single leaf".into(),
            });
        };
        let parent_node = tree.node(parent)?;
        let sibling = if parent_node.child(false) == Some(leaf) {
            parent_node.child(true)
        } else {
            parent_node.child(false)
        }
        .expect("parent is a split");
        // sibling pair: one collapse hides both, keep the smaller swap
        if let Some(&other) = kept.get(&parent) {
            let other_leaf = skeleton.sensitive.iter().find(|s| s.request == other).map(|s| s.leaf);
            let other_size = other_leaf.map_or(u64::MAX, |l| tree.nodes()[l.0].stats.total());
            if node.stats.total() < other_size {
                skeleton.sensitive.retain(|s| s.request != other);
                skeleton.absorbed.push((other, request));
            } else {
                skeleton.absorbed.push((request, other));
                continue;
            }
        }
        let sibling_node = tree.node(sibling)?;
        let flipped = NodeStats::new(node.stats.n, node.stats.p);
        let merged = flipped + sibling_node.stats;
        if !sibling_node.is_leaf() || !merged.is_pure() {
            return Err(HidingError::NotCollapsible {
                rule: rule(),
                reason: format!("its parent {parent} would not become pure after the swap"),
            });
        }
        let delta = SwapDelta {
            dp: node.stats.n as i64 - node.stats.p as i64,
            dn: node.stats.p as i64 - node.stats.n as i64,
        };
        kept.insert(parent, request);
        skeleton.sensitive.push(SensitiveLeaf {
            request,
            leaf,
            collapsed: parent,
            collapsed_class: merged.majority(),
            delta,
        });
    }
    skeleton.sensitive.sort_by_key(|s| s.request);
    skeleton.absorbed.sort();

    for sensitive in &skeleton.sensitive {
        let mut child = sensitive.collapsed;
        for ancestor in tree.ancestors(sensitive.collapsed)? {
            let entry = skeleton.nodes.entry(ancestor).or_insert_with(|| SkeletonNode {
                node: ancestor,
                parent: tree.nodes()[ancestor.0].parent,
                children: Vec::new(),
                delta: SwapDelta::default(),
            });
            entry.delta = entry.delta + sensitive.delta;
            if child != sensitive.collapsed && !entry.children.contains(&child) {
                entry.children.push(child);
                entry.children.sort();
            }
            child = ancestor;
        }
    }
    Ok(skeleton)
}

/// Relaxation budgets keyed by node. The root entry applies to whatever
/// node is the root of the tree being sanitized.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxBudget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<RelaxSearch>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nodes: BTreeMap<NodeId, RelaxSearch>,
}

impl RelaxBudget {
    pub fn none() -> Self {
        RelaxBudget::default()
    }

    /// Cost-mode relaxation at the root with the given maximum shift.
    pub fn root(max_shift: u64) -> Self {
        RelaxBudget { root: Some(RelaxSearch::cost(max_shift)), nodes: BTreeMap::new() }
    }

    pub fn for_node(&self, node: NodeId) -> Option<RelaxSearch> {
        self.nodes
            .get(&node)
            .copied()
            .or(if node == NodeId(0) { self.root } else { None })
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none() && self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRequest {
    pub rule: String,
    pub steps: Vec<(usize, bool)>,
    pub leaf: NodeId,
    /// Set when a sibling request's collapse hides this rule too.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbed_by: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapsed: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapsed_class: Option<Label>,
    pub delta: SwapDelta,
    /// Indices of the swapped instances.
    pub swapped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub node: NodeId,
    pub path: Vec<(usize, bool)>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub original: NodeStats,
    pub delta: SwapDelta,
    pub post_swap: NodeStats,
    pub target: Ratio,
    pub equation: DiophantineEq,
    pub cumulative: Natural,
    pub local: NodeStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxationRecord {
    pub node: NodeId,
    pub old: Ratio,
    pub new: Ratio,
    pub shift: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanWarning {
    /// No allocation keeps the node's attribute ahead of its competitors.
    NoFeasibleAllocation { node: NodeId },
    /// The hold-back walk had to stop to keep the attribute in place while
    /// it still outranks the parent's attribute at the parent.
    HoldbackConflict { node: NodeId },
    /// Instances added at an intersection node were routed into a skeleton
    /// child, shifting that child's ratio.
    RatioDisturbed { node: NodeId, child: NodeId },
    /// Opposite-class instances had to enter a collapsed region.
    CollapseBreached { node: NodeId, collapsed: NodeId },
}

/// Everything the two passes decided, in a serializable form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HidingPlan {
    pub requests: Vec<PlannedRequest>,
    /// Sibling rules hidden as a side effect of a collapse.
    pub side_effects: Vec<String>,
    /// Skeleton nodes in preorder.
    pub nodes: Vec<PlanNode>,
    pub total_added: u64,
    pub relaxations: Vec<RelaxationRecord>,
    pub warnings: Vec<PlanWarning>,
}

impl HidingPlan {
    pub fn node(&self, id: NodeId) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.node == id)
    }

    pub fn is_exact(&self) -> bool {
        self.relaxations.is_empty()
    }

    fn warn(&mut self, warning: PlanWarning) {
        if !self.warnings.contains(&warning) {
            self.warnings.push(warning);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapAndAdd {
    pub plan: HidingPlan,
    /// Input dataset with the swaps applied and the partial instances appended.
    pub dataset: Dataset,
}

/// Bottom-up pass: swaps the sensitive leaves and appends the minimal
/// ratio-restoring partial instances along the affected paths.
pub fn swap_and_add(
    tree: &DecisionTree,
    ds: &Dataset,
    requests: &[HidingRequest],
    relax: &RelaxBudget,
) -> Result<SwapAndAdd, HidingError> {
    let skeleton = build_skeleton(tree, requests)?;

    // route every instance once
    let leaves: Vec<Option<NodeId>> = ds.instances().iter().map(|i| tree.leaf_for(&i.values)).collect();
    let mut plan = HidingPlan::default();
    let mut all_swapped = Vec::new();
    for (i, request) in requests.iter().enumerate() {
        let leaf = tree.locate_node(&request.rule)?;
        let sensitive = skeleton.sensitive.iter().find(|s| s.request == i);
        let swapped: Vec<usize> = match sensitive {
            Some(s) => (0..ds.len()).filter(|&r| leaves[r] == Some(s.leaf)).collect(),
            None => Vec::new(),
        };
        all_swapped.extend_from_slice(&swapped);
        let absorbed_by = skeleton.absorbed.iter().find(|(d, _)| *d == i).map(|&(_, k)| k);
        plan.requests.push(PlannedRequest {
            rule: render(tree, &request.rule),
            steps: request.rule.steps.clone(),
            leaf,
            absorbed_by,
            collapsed: sensitive.map(|s| s.collapsed),
            collapsed_class: sensitive.map(|s| s.collapsed_class),
            delta: sensitive.map(|s| s.delta).unwrap_or_default(),
            swapped,
        });
    }
    for s in &skeleton.sensitive {
        let parent = tree.node(s.collapsed)?;
        for value in [false, true] {
            let child = parent.child(value).expect("collapsed parent is a split");
            if child != s.leaf {
                let path = tree.path(child)?;
                plan.side_effects.push(RulePath::new(path).conditions(tree.schema()));
            }
        }
    }
    all_swapped.sort_unstable();
    let swapped = ds.swap_class(&all_swapped)?;

    // bottom-up: decide each node's equation, relaxing where a budget is set
    let mut equations: BTreeMap<NodeId, (Ratio, DiophantineEq)> = BTreeMap::new();
    let mut provisional = diophantine::SystemSolution::default();
    for id in skeleton.bottom_up() {
        let node = &skeleton.nodes[&id];
        let original = tree.node(id)?.stats;
        let target = Ratio::of(original)?;
        let current = node.delta.apply(original);
        let bound = children_bound(&node.children, &provisional);
        let (ratio, eq, solution) = match relax.for_node(id) {
            Some(search) => {
                let r = relax_ratio(target, current, bound, search)?;
                if r.ratio != target {
                    plan.relaxations.push(RelaxationRecord { node: id, old: target, new: r.ratio, shift: r.shift });
                }
                (r.ratio, r.eq, r.solution)
            }
            None => {
                let eq = ratio_equation(target, current)?;
                let family = solve_general(eq)?.ok_or(HidingError::Unsolvable { node: id, eq })?;
                (target, eq, minimal_natural(&family, bound.x, bound.y)?)
            }
        };
        equations.insert(id, (ratio, eq));
        provisional.nodes.insert(id, solution);
    }
    plan.relaxations.sort_by_key(|r| r.node);

    let constraints: Vec<NodeConstraint> = skeleton
        .nodes
        .values()
        .map(|n| NodeConstraint { node: n.node, eq: equations[&n.node].1, children: n.children.clone() })
        .collect();
    let solved = diophantine::solve_system(&constraints)?;
    if solved != provisional {
        return Err(HidingError::Invariant("system solution differs from the per-node solution".into()));
    }

    let mut dataset = swapped;
    for node in skeleton.nodes.values() {
        let cumulative = solved.get(node.node).expect("solved");
        let below = children_bound(&node.children, &solved);
        let (Some(local_p), Some(local_n)) =
            (cumulative.x.checked_sub(below.x), cumulative.y.checked_sub(below.y))
        else {
            return Err(HidingError::Invariant(format!("negative local addition at {}", node.node)));
        };
        let path = tree.path(node.node)?;
        dataset = dataset.add_partial_instances(local_p, local_n, &path)?;
        let original = tree.node(node.node)?.stats;
        let (target, equation) = equations[&node.node];
        plan.nodes.push(PlanNode {
            node: node.node,
            path,
            parent: node.parent,
            children: node.children.clone(),
            original,
            delta: node.delta,
            post_swap: node.delta.apply(original),
            target,
            equation,
            cumulative,
            local: NodeStats::new(local_p, local_n),
        });
    }
    plan.total_added = plan.nodes.iter().map(|n| n.local.total()).sum();
    let root_total = skeleton
        .nodes
        .values()
        .filter(|n| n.parent.is_none_or(|p| !skeleton.contains(p)))
        .map(|n| solved.get(n.node).expect("solved").total())
        .sum::<u64>();
    if root_total != plan.total_added {
        return Err(HidingError::Invariant("local additions do not sum to the root solution".into()));
    }
    Ok(SwapAndAdd { plan, dataset })
}

/// How the completion pass distributes instances over a node's branches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStrategy {
    /// Best all-to-one-branch corner, then walk back until the node no
    /// longer threatens its parent's split.
    #[default]
    TwoLevelHoldback,
    /// Half of each class to each branch, odd remainder to the 0-branch.
    EvenSplit,
}

struct ParentContext {
    attribute: usize,
    region: Vec<usize>,
    gain: f64,
}

struct Completion<'a> {
    tree: &'a DecisionTree,
    instances: Vec<Instance>,
    skeleton: BTreeSet<NodeId>,
    collapsed: BTreeMap<NodeId, Label>,
    strategy: CompletionStrategy,
    open: Vec<bool>,
    warnings: Vec<PlanWarning>,
}

/// Routing permissions for one class at one node, per branch.
#[derive(Clone, Copy)]
struct Routes {
    allowed: [bool; 2],
    // what routing into each branch would cost, for warnings
    into_skeleton: [bool; 2],
    into_collapse: [bool; 2],
}

/// Allocation: how many open P and N instances go to the 1-branch.
type Split = (u64, u64);

impl Completion<'_> {
    fn routes(&self, node: NodeId, label: Label) -> Routes {
        let n = &self.tree.nodes()[node.0];
        let children = [n.child(false).expect("split"), n.child(true).expect("split")];
        let into_skeleton = children.map(|c| self.skeleton.contains(&c));
        let into_collapse = children.map(|c| self.collapsed.get(&c).is_some_and(|&class| class != label));
        let preferred = [0, 1].map(|b| !into_skeleton[b] && !into_collapse[b]);
        let fallback = [0, 1].map(|b| !into_collapse[b]);
        let allowed = if preferred.iter().any(|&x| x) {
            preferred
        } else if fallback.iter().any(|&x| x) {
            fallback
        } else {
            [true, true]
        };
        Routes { allowed, into_skeleton, into_collapse }
    }

    fn visit(&mut self, id: NodeId, region: Vec<usize>, parent: Option<ParentContext>) {
        let node = &self.tree.nodes()[id.0];
        let attribute = match node.attribute() {
            Some(a) if !self.collapsed.contains_key(&id) => a,
            _ => {
                self.fill_leaf(&region);
                return;
            }
        };
        let open: Vec<usize> = region
            .iter()
            .copied()
            .filter(|&i| self.instances[i].value(attribute).is_none())
            .collect();
        if !open.is_empty() {
            for &i in &open {
                self.open[i] = true;
            }
            let split = self.decide(id, attribute, &region, &open, parent.as_ref());
            self.assign(id, attribute, &open, split);
            for &i in &open {
                self.open[i] = false;
            }
        }
        let (left, right): (Vec<usize>, Vec<usize>) = region
            .iter()
            .partition(|&&i| self.instances[i].value(attribute) == Some(false));
        let gain = attribute_gain(region.iter().map(|&i| &self.instances[i]), attribute);
        let (l, r) = (node.child(false).expect("split"), node.child(true).expect("split"));
        self.visit(l, left, Some(ParentContext { attribute, region: region.clone(), gain }));
        self.visit(r, right, Some(ParentContext { attribute, region, gain }));
    }

    fn assign(&mut self, id: NodeId, attribute: usize, open: &[usize], split: Split) {
        for (label, to_right) in [(Label::P, split.0), (Label::N, split.1)] {
            let members: Vec<usize> = open.iter().copied().filter(|&i| self.instances[i].label == label).collect();
            let to_left = members.len() as u64 - to_right;
            let routes = self.routes(id, label);
            let node = &self.tree.nodes()[id.0];
            for (b, count) in [(0usize, to_left), (1, to_right)] {
                if count == 0 {
                    continue;
                }
                let child = node.child(b == 1).expect("split");
                if routes.into_collapse[b] {
                    self.warnings.push(PlanWarning::CollapseBreached { node: id, collapsed: child });
                } else if routes.into_skeleton[b] {
                    self.warnings.push(PlanWarning::RatioDisturbed { node: id, child });
                }
            }
            for (k, &i) in members.iter().enumerate() {
                self.instances[i].values[attribute] = Some(k as u64 >= to_left);
            }
        }
    }

    fn decide(
        &mut self,
        id: NodeId,
        attribute: usize,
        region: &[usize],
        open: &[usize],
        parent: Option<&ParentContext>,
    ) -> Split {
        let count = |label| open.iter().filter(|&&i| self.instances[i].label == label).count() as u64;
        let (u_p, u_n) = (count(Label::P), count(Label::N));
        let rp = self.routes(id, Label::P).allowed;
        let rn = self.routes(id, Label::N).allowed;
        // clamp one class's right-branch count to the allowed branches
        let clamp = |want: u64, total: u64, allowed: [bool; 2]| match allowed {
            [true, false] => 0,
            [false, true] => total,
            _ => want,
        };

        if self.strategy == CompletionStrategy::EvenSplit {
            return (clamp(u_p / 2, u_p, rp), clamp(u_n / 2, u_n, rn));
        }

        let closed = |i: &usize| !self.open[*i];
        let (l0, r0) = branch_stats(region.iter().filter(|i| closed(i)).map(|&i| &self.instances[i]), attribute);
        let gain_here = |(a_p, a_n): Split| {
            split_gain(l0 + NodeStats::new(u_p - a_p, u_n - a_n), r0 + NodeStats::new(a_p, a_n))
        };

        let on_path: BTreeSet<usize> = self.tree.path(id).expect("node exists").iter().map(|s| s.0).collect();
        let mut competitor: Option<(usize, f64)> = None;
        for b in (0..self.tree.schema().len()).filter(|b| *b != attribute && !on_path.contains(b)) {
            // gain over the known values, scaled by how much of the region is known
            let known = region.iter().filter(|&&i| self.instances[i].value(b).is_some()).count();
            let g = attribute_gain(region.iter().map(|&i| &self.instances[i]), b) * known as f64
                / region.len() as f64;
            if competitor.is_none_or(|(cb, cg)| outranks(g, b, cg, cb)) {
                competitor = Some((b, g));
            }
        }
        let keeps = |g: f64| g > GAIN_TOLERANCE && competitor.is_none_or(|(cb, cg)| outranks(g, attribute, cg, cb));

        let corner_values = |total: u64, allowed: [bool; 2]| -> Vec<u64> {
            let mut v = Vec::new();
            if allowed[0] || total == 0 {
                v.push(0);
            }
            if allowed[1] && total > 0 {
                v.push(total);
            }
            v
        };
        let mut best: Option<(Split, f64)> = None;
        for &cp in &corner_values(u_p, rp) {
            for &cn in &corner_values(u_n, rn) {
                let g = gain_here((cp, cn));
                if best.is_none_or(|(_, bg)| g > bg + GAIN_TOLERANCE) {
                    best = Some(((cp, cn), g));
                }
            }
        }
        let (corner, corner_gain) = best.expect("at least one corner");
        if !keeps(corner_gain) {
            self.warnings.push(PlanWarning::NoFeasibleAllocation { node: id });
            return corner;
        }
        let Some(parent) = parent else {
            return corner;
        };

        let (pl, pr) = branch_stats(
            parent.region.iter().filter(|i| closed(i)).map(|&i| &self.instances[i]),
            attribute,
        );
        let gain_at_parent = |(a_p, a_n): Split| {
            split_gain(pl + NodeStats::new(u_p - a_p, u_n - a_n), pr + NodeStats::new(a_p, a_n))
        };
        let threatens = |s: Split| !outranks(parent.gain, parent.attribute, gain_at_parent(s), attribute);

        // each class walks away from the side its corner put it on
        let step = |corner_side: u64, total: u64, allowed: [bool; 2], current: u64| -> Option<u64> {
            if total == 0 {
                return None;
            }
            if corner_side == total {
                (current > 0 && allowed[0]).then(|| current - 1)
            } else {
                (current < total && allowed[1]).then(|| current + 1)
            }
        };
        let mut current = corner;
        let mut current_gain = corner_gain;
        while threatens(current) {
            let mut options: Vec<(Split, f64)> = Vec::new();
            if let Some(p) = step(corner.0, u_p, rp, current.0) {
                options.push(((p, current.1), gain_here((p, current.1))));
            }
            if let Some(n) = step(corner.1, u_n, rn, current.1) {
                options.push(((current.0, n), gain_here((current.0, n))));
            }
            let next = options
                .into_iter()
                .filter(|&(_, g)| keeps(g) && g <= current_gain + GAIN_TOLERANCE)
                .fold(None::<(Split, f64)>, |acc, o| match acc {
                    Some(a) if a.1 <= o.1 => Some(a),
                    _ => Some(o),
                });
            match next {
                Some((s, g)) => {
                    current = s;
                    current_gain = g;
                }
                None => {
                    self.warnings.push(PlanWarning::HoldbackConflict { node: id });
                    break;
                }
            }
        }
        current
    }

    /// At a leaf, every still-unspecified value takes the majority value of
    /// that attribute in the leaf's region (ties and empty regions give 0).
    fn fill_leaf(&mut self, region: &[usize]) {
        let width = self.tree.schema().len();
        let mut ones = vec![0u64; width];
        let mut zeros = vec![0u64; width];
        for &i in region {
            for (a, v) in self.instances[i].values.iter().enumerate() {
                match v {
                    Some(true) => ones[a] += 1,
                    Some(false) => zeros[a] += 1,
                    None => {}
                }
            }
        }
        for &i in region {
            for (a, v) in self.instances[i].values.iter_mut().enumerate() {
                if v.is_none() {
                    *v = Some(ones[a] > zeros[a]);
                }
            }
        }
    }
}

/// Top-down pass: fully specifies every synthetic instance. Warnings are
/// appended to the plan.
pub fn allocate_and_set(
    tree: &DecisionTree,
    ds: &Dataset,
    plan: &mut HidingPlan,
    strategy: CompletionStrategy,
) -> Result<Dataset, HidingError> {
    if ds.is_fully_specified() {
        return Ok(ds.clone());
    }
    let mut completion = Completion {
        tree,
        instances: ds.instances().to_vec(),
        skeleton: plan.nodes.iter().map(|n| n.node).collect(),
        collapsed: plan
            .requests
            .iter()
            .filter_map(|r| Some((r.collapsed?, r.collapsed_class?)))
            .collect(),
        strategy,
        open: vec![false; ds.len()],
        warnings: Vec::new(),
    };
    completion.visit(tree.root().id, (0..ds.len()).collect(), None);
    for w in std::mem::take(&mut completion.warnings) {
        plan.warn(w);
    }
    plan.warnings.sort();
    let out = Dataset::new(ds.schema().clone(), completion.instances)?;
    if let Some(index) = out.instances().iter().position(|i| !i.is_fully_specified()) {
        return Err(HidingError::Invariant(format!("instance {index} left unspecified")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HideOptions {
    pub relax: RelaxBudget,
    pub strategy: CompletionStrategy,
    pub induction: InductionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizationResult {
    pub sanitized: Dataset,
    pub plan: HidingPlan,
    pub original_tree: DecisionTree,
    pub retrained_tree: DecisionTree,
}

impl SanitizationResult {
    pub fn added(&self) -> u64 {
        self.plan.total_added
    }
}

/// Induce, swap-and-add, allocate-and-set, re-induce. All requests are
/// handled together on one skeleton.
pub fn hide(ds: &Dataset, requests: &[HidingRequest], options: &HideOptions) -> Result<SanitizationResult, HidingError> {
    let original_tree = tree::induce(ds, &options.induction)?;
    hide_with_tree(ds, original_tree, requests, options)
}

/// Like [`hide`] but reuses an already induced tree for `ds`.
pub fn hide_with_tree(
    ds: &Dataset,
    original_tree: DecisionTree,
    requests: &[HidingRequest],
    options: &HideOptions,
) -> Result<SanitizationResult, HidingError> {
    if requests.is_empty() {
        return Ok(SanitizationResult {
            sanitized: ds.clone(),
            plan: HidingPlan::default(),
            retrained_tree: original_tree.clone(),
            original_tree,
        });
    }
    let SwapAndAdd { mut plan, dataset } = swap_and_add(&original_tree, ds, requests, &options.relax)?;
    let sanitized = allocate_and_set(&original_tree, &dataset, &mut plan, options.strategy)?;
    let retrained_tree = tree::induce(&sanitized, &options.induction)?;
    Ok(SanitizationResult { sanitized, plan, original_tree, retrained_tree })
}

/// Outcome of hiding requests one after another.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialHiding {
    pub steps: Vec<SanitizationResult>,
}

impl SerialHiding {
    pub fn total_added(&self) -> u64 {
        self.steps.iter().map(SanitizationResult::added).sum()
    }

    pub fn sanitized(&self) -> Option<&Dataset> {
        self.steps.last().map(|s| &s.sanitized)
    }
}

/// Hides `ordering[0]`, re-induces, then recurses on the rest.
pub fn serial_hide(ds: &Dataset, ordering: &[HidingRequest], options: &HideOptions) -> Result<SerialHiding, HidingError> {
    let mut steps: Vec<SanitizationResult> = Vec::with_capacity(ordering.len());
    for request in ordering {
        let current = steps.last().map_or(ds, |s| &s.sanitized);
        let result = hide(current, std::slice::from_ref(request), options)?;
        steps.push(result);
    }
    Ok(SerialHiding { steps })
}
