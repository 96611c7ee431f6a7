//! Seeded random datasets for the property suites.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use rulehide::hiding::build_skeleton;
use rulehide::{AttributeSchema, Dataset, DecisionTree, HidingRequest, Instance, Label, NodeId, RulePath};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels follow a random conjunction-of-tests concept with some noise,
/// which gives trees with a mix of pure and impure leaves.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_attributes: usize, max_rows: usize) -> Dataset {
    let width = rng.gen_range(2..=max_attributes);
    let rows = rng.gen_range(8..=max_rows);
    let names: Vec<String> = (0..width).map(|i| format!("a{i}")).collect();
    let schema = AttributeSchema::new(names).unwrap();
    let terms: Vec<Vec<(usize, bool)>> = (0..rng.gen_range(1..=3))
        .map(|_| (0..rng.gen_range(1..=2)).map(|_| (rng.gen_range(0..width), rng.gen_bool(0.5))).collect())
        .collect();
    let noise = rng.gen_range(0.0..0.15);
    let instances = (0..rows)
        .map(|_| {
            let values: Vec<bool> = (0..width).map(|_| rng.gen_bool(0.5)).collect();
            let hit = terms.iter().any(|t| t.iter().all(|&(a, v)| values[a] == v));
            let label = if hit != rng.gen_bool(noise) { Label::P } else { Label::N };
            Instance::original(values, label)
        })
        .collect();
    Dataset::new(schema, instances).unwrap()
}

pub fn leaf_request(tree: &DecisionTree, leaf: NodeId) -> HidingRequest {
    HidingRequest::new(RulePath::new(tree.path(leaf).unwrap()))
}

/// Leaves whose swap collapses their parent.
pub fn feasible_leaves(tree: &DecisionTree) -> Vec<NodeId> {
    tree.nodes()
        .iter()
        .filter(|n| n.is_leaf())
        .map(|n| n.id)
        .filter(|&id| build_skeleton(tree, &[leaf_request(tree, id)]).is_ok())
        .collect()
}

/// Pairs of feasible leaves with different parents.
pub fn non_sibling_pairs(tree: &DecisionTree) -> Vec<(NodeId, NodeId)> {
    let leaves = feasible_leaves(tree);
    let mut pairs = Vec::new();
    for (i, &a) in leaves.iter().enumerate() {
        for &b in &leaves[i + 1..] {
            if tree.nodes()[a.0].parent != tree.nodes()[b.0].parent {
                pairs.push((a, b));
            }
        }
    }
    pairs
}
