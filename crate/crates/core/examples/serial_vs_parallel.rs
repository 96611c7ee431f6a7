//! Cost of hiding two rules together versus one after another, on
//! random data.

use rulehide::hiding::build_skeleton;
use rulehide::{hide, induce, serial_hide, AttributeSchema, Dataset, HideOptions, HidingRequest, InductionConfig, Instance, Label, RulePath};

fn dataset(seed: u64) -> Dataset {
    // small linear congruential generator, enough for a demo
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut bit = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        state >> 63 == 1
    };
    let schema = AttributeSchema::new(["a", "b", "c", "d", "e"]).unwrap();
    let rows = (0..200)
        .map(|_| {
            let v: Vec<bool> = (0..5).map(|_| bit()).collect();
            let label = if (v[0] && v[1]) || (v[2] && !v[3] && v[4]) { Label::P } else { Label::N };
            Instance::original(v, label)
        })
        .collect();
    Dataset::new(schema, rows).unwrap()
}

fn main() {
    let options = HideOptions::default();
    for seed in 0..10 {
        let ds = dataset(seed);
        let tree = induce(&ds, &InductionConfig::default()).unwrap();
        let leaves: Vec<HidingRequest> = tree
            .nodes()
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| HidingRequest::new(RulePath::new(tree.path(n.id).unwrap())))
            .filter(|r| build_skeleton(&tree, std::slice::from_ref(r)).is_ok())
            .collect();
        let pairs = (0..leaves.len()).flat_map(|i| (i + 1..leaves.len()).map(move |j| (i, j)));
        let Some(pair) = pairs
            .map(|(i, j)| [leaves[i].clone(), leaves[j].clone()])
            .find(|p| build_skeleton(&tree, p).is_ok_and(|s| s.absorbed.is_empty()))
        else {
            println!("seed {seed}: {} hideable leaves, no independent pair", leaves.len());
            continue;
        };
        let pair = &pair[..];
        let together = hide(&ds, pair, &options).unwrap().added();
        let serial = match serial_hide(&ds, pair, &options) {
            Ok(s) => s.total_added().to_string(),
            Err(e) => format!("n/a ({e})"),
        };
        println!("seed {seed}: parallel {together}, serial {serial}");
    }
}
