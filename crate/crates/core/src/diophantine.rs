//! Exact integer solver for ratio-preservation equations.
//!
//! Restoring a node whose target ratio is `P:N` from post-swap counts
//! `(p', n')` means finding naturals `(x, y)` with
//! `(p' + x) / (n' + y) = P / N`, i.e. the linear Diophantine equation
//!
//! ```text
//! N·x − P·y = P·n' − N·p'
//! ```
//!
//! Its integer solutions form the one-parameter family
//! `x = x0 + (P/g)·t`, `y = y0 + (N/g)·t` with `g = gcd(N, P)`. Both
//! coordinates grow with `t`, so "the smallest natural solution above given
//! lower bounds" is simply the member with the smallest admissible `t`.
//!
//! Chained nodes are solved bottom-up: a node's lower bounds are the sums of
//! its children's cumulative solutions. Because each node's minimal member
//! is monotone in its lower bounds, the bottom-up result is the
//! componentwise minimum over every assignment that satisfies the
//! monotonicity conditions.
//!
//! All arithmetic is checked `i128`; overflow is reported as an error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{NodeId, NodeStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("coefficients must be positive (got a={a}, b={b})")]
    InvalidCoefficients { a: i128, b: i128 },
    #[error("ratio parts must be positive (got {p}:{n})")]
    InvalidRatio { p: u64, n: u64 },
    #[error("integer overflow")]
    Overflow,
    #[error("equation {eq} at node {node} has no integer solution")]
    Unsolvable { node: NodeId, eq: DiophantineEq },
    #[error("no solvable ratio within a shift of {max_shift}")]
    NoSolvableCandidate { max_shift: u64 },
    #[error("constraint skeleton is not a tree: {0}")]
    InvalidSkeleton(String),
}

fn overflow<T>(v: Option<T>) -> Result<T, SolveError> {
    v.ok_or(SolveError::Overflow)
}

/// Target class ratio `p:n`, kept unreduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub p: u64,
    pub n: u64,
}

impl Ratio {
    pub fn new(p: u64, n: u64) -> Result<Ratio, SolveError> {
        if p == 0 || n == 0 {
            return Err(SolveError::InvalidRatio { p, n });
        }
        Ok(Ratio { p, n })
    }

    pub fn of(stats: NodeStats) -> Result<Ratio, SolveError> {
        Ratio::new(stats.p, stats.n)
    }

    /// Exact comparison of `stats` against this ratio.
    pub fn matches(self, stats: NodeStats) -> bool {
        stats.same_ratio(NodeStats::new(self.p, self.n))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.p, self.n)
    }
}

/// `a·x − b·y = c` with `a, b ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawEq")]
pub struct DiophantineEq {
    a: i128,
    b: i128,
    c: i128,
}

#[derive(Deserialize)]
struct RawEq {
    a: i128,
    b: i128,
    c: i128,
}

impl TryFrom<RawEq> for DiophantineEq {
    type Error = SolveError;

    fn try_from(raw: RawEq) -> Result<Self, Self::Error> {
        DiophantineEq::new(raw.a, raw.b, raw.c)
    }
}

impl DiophantineEq {
    pub fn new(a: i128, b: i128, c: i128) -> Result<Self, SolveError> {
        if a < 1 || b < 1 {
            return Err(SolveError::InvalidCoefficients { a, b });
        }
        Ok(DiophantineEq { a, b, c })
    }

    pub fn a(&self) -> i128 {
        self.a
    }

    pub fn b(&self) -> i128 {
        self.b
    }

    pub fn c(&self) -> i128 {
        self.c
    }

    /// Substitution check, overflow-safe.
    pub fn is_satisfied_by(&self, x: i128, y: i128) -> bool {
        let lhs = self.a.checked_mul(x).zip(self.b.checked_mul(y));
        matches!(lhs, Some((ax, by)) if ax.checked_sub(by) == Some(self.c))
    }
}

impl fmt::Display for DiophantineEq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x−{}y={}", self.a, self.b, self.c)
    }
}

/// All integer solutions of an equation:
/// `(x0 + step_x·t, y0 + step_y·t)` for every integer `t`.
///
/// `x0` is normalised into `[0, step_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralSolution {
    pub eq: DiophantineEq,
    pub x0: i128,
    pub y0: i128,
    pub step_x: i128,
    pub step_y: i128,
    pub g: i128,
}

impl GeneralSolution {
    pub fn member(&self, t: i128) -> Result<(i128, i128), SolveError> {
        let x = overflow(self.step_x.checked_mul(t).and_then(|d| self.x0.checked_add(d)))?;
        let y = overflow(self.step_y.checked_mul(t).and_then(|d| self.y0.checked_add(d)))?;
        Ok((x, y))
    }

    /// Whether `(x, y)` belongs to the family.
    pub fn contains(&self, x: i128, y: i128) -> bool {
        let dx = x - self.x0;
        if dx.rem_euclid(self.step_x) != 0 {
            return false;
        }
        self.member(dx / self.step_x).is_ok_and(|(_, my)| my == y)
    }
}

/// A natural (nonnegative) solution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Natural {
    pub x: u64,
    pub y: u64,
}

impl Natural {
    pub const fn new(x: u64, y: u64) -> Self {
        Natural { x, y }
    }

    pub fn total(self) -> u64 {
        self.x + self.y
    }
}

impl std::ops::Add for Natural {
    type Output = Natural;

    fn add(self, rhs: Natural) -> Natural {
        Natural::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl fmt::Display for Natural {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Returns `(g, s, t)` with `g = gcd(a, b) ≥ 0` and `a·s + b·t = g`.
pub fn extended_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

/// The full solution family, or `None` when `gcd(a, b)` does not divide `c`.
pub fn solve_general(eq: DiophantineEq) -> Result<Option<GeneralSolution>, SolveError> {
    let (g, s, t) = extended_gcd(eq.a, eq.b);
    if eq.c % g != 0 {
        return Ok(None);
    }
    let k = eq.c / g;
    // a·(s·k) + b·(t·k) = c, so (s·k, −t·k) solves a·x − b·y = c
    let x = overflow(s.checked_mul(k))?;
    let y = overflow(t.checked_mul(k).and_then(i128::checked_neg))?;
    let step_x = eq.b / g;
    let step_y = eq.a / g;
    let shift = x.div_euclid(step_x);
    let x0 = x - shift * step_x;
    let y0 = overflow(shift.checked_mul(step_y).and_then(|d| y.checked_sub(d)))?;
    debug_assert!(eq.is_satisfied_by(x0, y0));
    Ok(Some(GeneralSolution { eq, x0, y0, step_x, step_y, g }))
}

fn ceil_div(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    if num.rem_euclid(den) == 0 {
        q
    } else {
        q + 1
    }
}

/// The family member with the smallest parameter such that
/// `x ≥ max(0, lb_x)` and `y ≥ max(0, lb_y)`.
pub fn minimal_natural(sol: &GeneralSolution, lb_x: u64, lb_y: u64) -> Result<Natural, SolveError> {
    let lb_x = i128::from(lb_x);
    let lb_y = i128::from(lb_y);
    let t = ceil_div(lb_x - sol.x0, sol.step_x).max(ceil_div(lb_y - sol.y0, sol.step_y));
    let (x, y) = sol.member(t)?;
    let x = u64::try_from(x).map_err(|_| SolveError::Overflow)?;
    let y = u64::try_from(y).map_err(|_| SolveError::Overflow)?;
    Ok(Natural { x, y })
}

/// Equation restoring `target` from the post-swap counts `current`.
pub fn ratio_equation(target: Ratio, current: NodeStats) -> Result<DiophantineEq, SolveError> {
    let big_p = i128::from(target.p);
    let big_n = i128::from(target.n);
    let c = overflow(
        big_p
            .checked_mul(i128::from(current.n))
            .zip(big_n.checked_mul(i128::from(current.p)))
            .and_then(|(l, r)| l.checked_sub(r)),
    )?;
    DiophantineEq::new(big_n, big_p, c)
}

/// One node's equation plus the skeleton children whose cumulative
/// solutions bound it from below.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConstraint {
    pub node: NodeId,
    pub eq: DiophantineEq,
    pub children: Vec<NodeId>,
}

/// Cumulative solution per node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSolution {
    pub nodes: BTreeMap<NodeId, Natural>,
}

impl SystemSolution {
    pub fn get(&self, node: NodeId) -> Option<Natural> {
        self.nodes.get(&node).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Children-first ordering of a constraint forest. Fails on duplicates,
/// dangling child references, shared children and cycles.
fn bottom_up_order(constraints: &[NodeConstraint]) -> Result<Vec<usize>, SolveError> {
    let mut index = BTreeMap::new();
    for (i, c) in constraints.iter().enumerate() {
        if index.insert(c.node, i).is_some() {
            return Err(SolveError::InvalidSkeleton(format!("node {} listed twice", c.node)));
        }
    }
    let mut has_parent = BTreeSet::new();
    for c in constraints {
        for child in &c.children {
            if !index.contains_key(child) {
                return Err(SolveError::InvalidSkeleton(format!("unknown child {child}")));
            }
            if !has_parent.insert(*child) {
                return Err(SolveError::InvalidSkeleton(format!("node {child} has two parents")));
            }
        }
    }
    let mut order = Vec::with_capacity(constraints.len());
    for (i, c) in constraints.iter().enumerate() {
        if has_parent.contains(&c.node) {
            continue;
        }
        // iterative post-order from each root
        let mut stack = vec![(i, false)];
        while let Some((j, expanded)) = stack.pop() {
            if expanded {
                order.push(j);
                continue;
            }
            stack.push((j, true));
            for child in constraints[j].children.iter().rev() {
                stack.push((index[child], false));
            }
        }
    }
    if order.len() != constraints.len() {
        return Err(SolveError::InvalidSkeleton("cycle among constraints".into()));
    }
    Ok(order)
}

/// Sum of the children's cumulative solutions, the lower bound of a node.
pub fn children_bound(children: &[NodeId], solved: &SystemSolution) -> Natural {
    children
        .iter()
        .filter_map(|c| solved.get(*c))
        .fold(Natural::default(), |acc, s| acc + s)
}

/// Solves every node bottom-up with its children's sums as lower bounds.
///
/// The result is the componentwise minimum over all feasible assignments:
/// `minimal_natural` is monotone in its bounds, and by induction every
/// feasible child value dominates the one chosen here.
pub fn solve_system(constraints: &[NodeConstraint]) -> Result<SystemSolution, SolveError> {
    let mut solved = SystemSolution::default();
    for i in bottom_up_order(constraints)? {
        let constraint = &constraints[i];
        let bound = children_bound(&constraint.children, &solved);
        let family = solve_general(constraint.eq)?.ok_or(SolveError::Unsolvable {
            node: constraint.node,
            eq: constraint.eq,
        })?;
        let best = minimal_natural(&family, bound.x, bound.y)?;
        solved.nodes.insert(constraint.node, best);
    }
    Ok(solved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxMode {
    /// Smallest shift whose equation is solvable.
    Solvability,
    /// Cheapest solution (`x + y`) among all candidate shifts.
    #[default]
    Cost,
}

/// Which perturbed ratios are candidates for a shift `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSpace {
    /// `(P−d, N+d)` and `(P+d, N−d)`: the node size stays `P+N`.
    #[default]
    PreserveTotal,
    /// Every `(P+i, N+j)` with `max(|i|, |j|) = d`.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxSearch {
    pub max_shift: u64,
    #[serde(default)]
    pub mode: RelaxMode,
    #[serde(default)]
    pub space: ShiftSpace,
}

impl RelaxSearch {
    pub fn cost(max_shift: u64) -> Self {
        RelaxSearch { max_shift, mode: RelaxMode::Cost, space: ShiftSpace::PreserveTotal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relaxation {
    pub ratio: Ratio,
    pub shift: u64,
    pub eq: DiophantineEq,
    pub solution: Natural,
}

fn candidates(target: Ratio, d: u64, space: ShiftSpace) -> Vec<Ratio> {
    let (p, n) = (i128::from(target.p), i128::from(target.n));
    let d = i128::from(d);
    let mut offsets: Vec<(i128, i128)> = vec![(-d, d), (d, -d)];
    if space == ShiftSpace::Box {
        for i in -d..=d {
            for j in -d..=d {
                if i.abs().max(j.abs()) == d && i + j != 0 {
                    offsets.push((i, j));
                }
            }
        }
    }
    let mut out: Vec<Ratio> = Vec::new();
    for (i, j) in offsets {
        let (cp, cn) = (p + i, n + j);
        if cp >= 1 && cn >= 1 {
            let r = Ratio { p: cp as u64, n: cn as u64 };
            if !out.contains(&r) {
                out.push(r);
            }
        }
    }
    out
}

/// Searches perturbed target ratios for the node with post-swap counts
/// `current` and lower bounds `lb`.
///
/// Candidates are visited by increasing shift, `(P−d, N+d)` before
/// `(P+d, N−d)`. In `Cost` mode ties keep the earlier candidate.
pub fn relax_ratio(
    target: Ratio,
    current: NodeStats,
    lb: Natural,
    search: RelaxSearch,
) -> Result<Relaxation, SolveError> {
    let mut best: Option<Relaxation> = None;
    for d in 0..=search.max_shift {
        for ratio in candidates(target, d, search.space) {
            let eq = ratio_equation(ratio, current)?;
            let Some(family) = solve_general(eq)? else {
                continue;
            };
            let solution = minimal_natural(&family, lb.x, lb.y)?;
            let found = Relaxation { ratio, shift: d, eq, solution };
            match search.mode {
                RelaxMode::Solvability => return Ok(found),
                RelaxMode::Cost => {
                    if best.is_none_or(|b| found.solution.total() < b.solution.total()) {
                        best = Some(found);
                    }
                }
            }
        }
    }
    best.ok_or(SolveError::NoSolvableCandidate { max_shift: search.max_shift })
}
